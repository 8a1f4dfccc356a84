"""Parameter containers and the two basic layers (dense and convolutional)."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import CheckpointError, ShapeError
from .functional import conv2d, linear
from .tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor that an optimizer owns."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Minimal parameter tree.

    Parameters are discovered from instance attributes in assignment order:
    :class:`Parameter` objects, child modules, and lists of child modules.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool = True) -> Module:
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "", strict: bool = True) -> None:
        own = dict(self.named_parameters())
        wanted = {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}
        if strict:
            missing = sorted(set(own) - set(wanted))
            extra = sorted(set(wanted) - set(own))
            if missing or extra:
                raise CheckpointError(f"state mismatch (prefix {prefix!r}): missing {missing[:5]}, unexpected {extra[:5]}")
        for name, value in wanted.items():
            if name not in own:
                continue
            p = own[name]
            value = np.asarray(value)
            if value.shape != p.shape:
                raise CheckpointError(f"{prefix}{name}: shape {value.shape} != expected {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def astype(self, dtype) -> Module:
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


def _uniform(rng: np.random.Generator, bound: float, shape, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    """Dense layer acting on the last axis; ``weight`` is stored ``[in, out]``."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True,
                 zero_init: bool = False, dtype=np.float32):
        bound = 1.0 / np.sqrt(n_in)
        w = np.zeros((n_in, n_out), dtype) if zero_init else _uniform(rng, bound, (n_in, n_out), dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(n_out, dtype)) if bias else None

    def __call__(self, x) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"Linear expects last dim {self.weight.shape[0]}, got {x.shape}")
        return linear(x, self.weight, self.bias)


class Conv2d(Module):
    """Channels-last convolution with a ``[K, K, Cin, Cout]`` kernel."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 3, stride: int = 1,
                 bias: bool = True, zero_init: bool = False, dtype=np.float32):
        fan_in = kernel * kernel * c_in
        bound = np.sqrt(6.0 / fan_in)  # He-uniform, suits (leaky) ReLU stacks
        shape = (kernel, kernel, c_in, c_out)
        self.weight = Parameter(np.zeros(shape, dtype) if zero_init else _uniform(rng, bound, shape, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype)) if bias else None
        self.stride = stride

    def __call__(self, x) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride)
