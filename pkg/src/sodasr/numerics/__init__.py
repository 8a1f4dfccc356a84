"""Tensor library with reverse-mode autodiff, layers, Adam and checkpoint I/O."""

from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .functional import (
    bilinear_sample,
    conv2d,
    gumbel_noise,
    gumbel_softmax,
    gumbel_softmax_logits,
    layer_norm,
    linear,
    separable_resize,
    softmax,
    upsample_conv2d,
)
from .gradcheck import finite_difference_check, numerical_gradient
from .nn import Conv2d, Linear, Module, Parameter
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Tensor,
    abs_,
    add,
    clamp,
    concat,
    div,
    elementwise,
    exp,
    gelu,
    getitem,
    is_grad_enabled,
    leaky_relu,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    split,
    sqrt,
    stack,
    sub,
    sum_,
    swapaxes,
    tanh,
    transpose,
    upsample_nearest,
)

__all__ = [
    "Adam", "AdamState", "Conv2d", "Linear", "Module", "Parameter", "Tensor",
    "abs_", "adam_step", "add", "bilinear_sample", "clamp", "concat", "conv2d", "decode_checkpoint",
    "div", "elementwise", "encode_checkpoint", "exp", "finite_difference_check", "gelu", "getitem", "gumbel_noise", "gumbel_softmax", "gumbel_softmax_logits", "separable_resize",
    "is_grad_enabled", "layer_norm", "leaky_relu", "linear", "load_checkpoint", "log", "matmul", "mean",
    "mul", "neg", "no_grad", "numerical_gradient", "power", "relu", "reshape", "save_checkpoint",
    "sigmoid", "softmax", "split", "sqrt", "stack", "sub", "sum_", "swapaxes", "tanh", "transpose",
    "upsample_conv2d", "upsample_nearest",
]
