"""A minutes-long walk through the whole pipeline on a tiny dataset and network.

Generates both domains, pre-trains a small ToySRNet on the source pairs,
adapts it to the unlabeled target images and reports target PSNR-Y before and
after.  The numbers are illustrative only: the budget here is far too small to
expect a reliable gain.

Run with ``python3 demos/tiny_adaptation.py [workdir]``.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from sodasr.backbone import ToySRNet
from sodasr.data import DatasetLayout, SRDataset, bicubic_resize, evaluate_model, generate_dataset, psnr_y, train_source
from sodasr.numerics import load_checkpoint
from sodasr.selftrain import AdaptHyperParams, TargetData, adapt_run

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="sodasr_demo_"))
layout = DatasetLayout(hr_size=128, source_train=16, target_train=16, target_val=4, target_test=4)
generate_dataset(work / "data", layout, seed=0)
ds = SRDataset(work / "data")
test = ds.pairs("target", "test")
print(f"bicubic on target test: PSNR-Y {np.mean([psnr_y(bicubic_resize(lr, 4), hr) for lr, hr in test]):.3f} dB")

net = ToySRNet(np.random.default_rng(0), channels=16, blocks=2)
losses = train_source(net, ds.pairs("source", "train"), 300, lr=1e-3, batch=4, patch=24,
                      rng=np.random.default_rng(1)).losses
print(f"source training L1: {np.mean(losses[:20]):.4f} -> {np.mean(losses[-20:]):.4f}")
before = evaluate_model(net, test)
print(f"source-only model on target test: PSNR-Y {before[0]:.3f} dB, SSIM {before[1]:.4f}")

hp = AdaptHyperParams(iterations=40, eval_interval=10, batch=4, patch=16, n_passes=3, wat_heads=4, wat_points=2)
res = adapt_run(net.state_dict("student."), TargetData.from_dataset(ds), hp, work / "adapt", seed=0,
                progress=lambda r: print(f"  iter {r['iteration']:>3}  val PSNR-Y {r['psnr_y_val']:.3f}"))
adapted = ToySRNet(np.random.default_rng(0), channels=16, blocks=2)
adapted.load_state_dict(load_checkpoint(res.checkpoint_path), prefix="student.")
after = evaluate_model(adapted, test)
print(f"adapted student on target test: PSNR-Y {after[0]:.3f} dB ({after[0] - before[0]:+.3f}), SSIM {after[1]:.4f}")
print(f"best val checkpoint at iteration {res.best_iteration} (0 means adaptation never beat the source model)")
print(f"log: {res.log_path}")
