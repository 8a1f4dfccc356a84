"""The eight flip/rotation transforms and the self-ensemble built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Tensor, no_grad


@dataclass(frozen=True)
class GeometricTransform:
    """Optional horizontal flip followed by ``rotations`` quarter turns, on ``[B, H, W, C]``."""

    rotations: int = 0
    flip: bool = False

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = x[:, :, ::-1] if self.flip else x
        return np.ascontiguousarray(np.rot90(y, self.rotations, axes=(1, 2)))

    def inverse(self, y: np.ndarray) -> np.ndarray:
        x = np.rot90(y, -self.rotations, axes=(1, 2))
        return np.ascontiguousarray(x[:, :, ::-1] if self.flip else x)


ALL_TRANSFORMS = tuple(GeometricTransform(k, f) for f in (False, True) for k in range(4))


def _pairwise_mean(arrays: list[np.ndarray]) -> np.ndarray:
    # tree summation keeps the mean of identical arrays exact
    while len(arrays) > 1:
        nxt = [arrays[i] + arrays[i + 1] for i in range(0, len(arrays) - 1, 2)]
        if len(arrays) % 2:
            nxt.append(arrays[-1])
        arrays = nxt
    return arrays[0]


def _run(model, x: np.ndarray) -> np.ndarray:
    y = model(Tensor(x) if not isinstance(x, Tensor) else x)
    return y.data if isinstance(y, Tensor) else np.asarray(y)


def geometric_ensemble(model, x_lr, transforms=ALL_TRANSFORMS) -> np.ndarray:
    """Mean of ``inverse(model(apply(x)))`` over the transforms, computed without a tape."""
    x = x_lr.data if isinstance(x_lr, Tensor) else np.asarray(x_lr)
    with no_grad():
        outs = [t.inverse(_run(model, t.apply(x))) for t in transforms]
    return _pairwise_mean(outs) / len(outs)
