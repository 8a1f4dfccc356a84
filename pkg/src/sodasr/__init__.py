"""Source-free domain adaptation for image super-resolution."""
