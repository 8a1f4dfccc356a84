"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numerical_gradient(f: Callable[[], Tensor], x: Tensor, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data.sum())
            flat[i] = orig - h
            fm = float(f().data.sum())
            flat[i] = orig
            grad.reshape(-1)[i] = (fp - fm) / (2 * h)
    return grad


def finite_difference_check(f: Callable[[], Tensor], x: Tensor | Sequence[Tensor], h: float = 1e-6) -> float:
    """Largest relative error between autodiff and central-difference gradients.

    ``f`` takes no arguments and closes over the tensors in ``x`` (which must
    require grad).  Relative error per tensor is ``|a - n|_2 / max(|a|_2, |n|_2)``.
    """
    xs = [x] if isinstance(x, Tensor) else list(x)
    for t in xs:
        t.grad = None
    out = f()
    if out.size != 1:
        raise ValueError("finite_difference_check needs a scalar-valued function")
    out.backward()
    worst = 0.0
    for t in xs:
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64)
        numeric = numerical_gradient(f, t, h)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        if scale == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / scale))
    return worst
