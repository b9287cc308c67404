"""Shared learned-parameter containers and grid/token plumbing.

Model blocks operate on [d,h,w] channel-first feature grids but most learned
maps act per token over channels; the helpers here move between the two
layouts.  Parameter containers are plain dataclasses of Tensors; named_tensors
walks any nesting of dataclasses/lists and yields stable hierarchical names
like "adapter.3.block.1.down.w" used by checkpoints and the optimizer.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class LinearParams:
    w: Tensor
    b: Tensor


@dataclass
class ConvParams:
    kernel: Tensor
    bias: Tensor


@dataclass
class NormParams:
    gamma: Tensor
    beta: Tensor


@dataclass
class StemParams:
    """Pointwise linear, depthwise 3x3 conv, SiLU."""

    proj: LinearParams
    dw: ConvParams


# -- initializers -----------------------------------------------------------


def init_linear(rng, d_out: int, d_in: int, zero: bool = False) -> LinearParams:
    if zero:
        w = np.zeros((d_out, d_in))
    else:
        w = rng.standard_normal((d_out, d_in)) / np.sqrt(d_in)
    return LinearParams(
        w=Tensor(w, requires_grad=True),
        b=Tensor(np.zeros(d_out), requires_grad=True),
    )


def init_conv(rng, c_out: int, c_in: int, k: int, identity: bool = False) -> ConvParams:
    if identity:
        kernel = np.zeros((c_out, c_in, k, k))
        for c in range(min(c_out, c_in)):
            kernel[c, c, k // 2, k // 2] = 1.0
    else:
        kernel = rng.standard_normal((c_out, c_in, k, k)) / np.sqrt(c_in * k * k)
    return ConvParams(
        kernel=Tensor(kernel, requires_grad=True),
        bias=Tensor(np.zeros(c_out), requires_grad=True),
    )


def init_dwconv(rng, channels: int, k: int = 3) -> ConvParams:
    kernel = rng.standard_normal((channels, 1, k, k)) / np.sqrt(k * k)
    return ConvParams(
        kernel=Tensor(kernel, requires_grad=True),
        bias=Tensor(np.zeros(channels), requires_grad=True),
    )


def init_norm(d: int) -> NormParams:
    return NormParams(
        gamma=Tensor(np.ones(d), requires_grad=True),
        beta=Tensor(np.zeros(d), requires_grad=True),
    )


def init_stem(rng, d: int) -> StemParams:
    return StemParams(proj=init_linear(rng, d, d), dw=init_dwconv(rng, d))


# -- grid/token application ---------------------------------------------------


def to_tokens(x: Tensor) -> Tensor:
    """[d,h,w] -> [h*w, d] in row-major token order."""
    d, h, w = x.shape
    return x.reshape(d, h * w).transpose(1, 0)


def to_grid(tokens: Tensor, hw) -> Tensor:
    """[h*w, d] -> [d,h,w]."""
    h, w = hw
    d = tokens.shape[-1]
    return tokens.transpose(1, 0).reshape(d, h, w)


def pointwise_linear(x: Tensor, lin: LinearParams) -> Tensor:
    """Apply a channel linear map at every spatial position of [d,h,w]."""
    d, h, w = x.shape
    return to_grid(T.linear(to_tokens(x), lin.w, lin.b), (h, w))


def layer_norm_grid(x: Tensor, norm: NormParams, eps: float = 1e-5) -> Tensor:
    """LayerNorm over channels at every spatial position of [d,h,w]."""
    d, h, w = x.shape
    return to_grid(T.layer_norm(to_tokens(x), norm.gamma, norm.beta, eps=eps), (h, w))


def apply_stem(x: Tensor, stem: StemParams) -> Tensor:
    """SiLU(DWConv(Linear(x))) on a [d,h,w] grid."""
    y = pointwise_linear(x, stem.proj)
    y = T.conv2d(y, stem.dw.kernel, stem.dw.bias, padding=1, depthwise=True)
    return T.silu(y)


# -- parameter traversal -------------------------------------------------------


def named_tensors(obj, prefix: str = ""):
    """Yield (hierarchical_name, Tensor) for every Tensor nested in obj."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for field in dataclasses.fields(obj):
            value = getattr(obj, field.name)
            name = f"{prefix}.{field.name}" if prefix else field.name
            yield from named_tensors(value, name)
    elif isinstance(obj, (list, tuple)):
        for i, value in enumerate(obj):
            name = f"{prefix}.{i}" if prefix else str(i)
            yield from named_tensors(value, name)
    # scalars/strings carry no tensors
