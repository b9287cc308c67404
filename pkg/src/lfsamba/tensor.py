"""Dense tensors with reverse-mode automatic differentiation.

Every learned operation in the model bottoms out in the primitives here:
linear maps, 2-d (depthwise) convolution, activations, layer norm, pooling,
concatenation/stacking and elementwise combination, plus the shape plumbing
(reshape/transpose/flip/slice) the scan orderings need.

Tensors wrap numpy arrays in the active build precision.  Differentiable
operations record themselves on an implicit tape: every graph participant
gets a monotonically increasing node id, so creation order *is* a valid
topological order and backward() just walks reachable nodes in decreasing
id.  Tensors are treated as immutable after creation; a tape is consumed
by a single backward pass and reusing it raises.

Elementwise arithmetic requires matching shapes (or a python scalar); the
only implicit broadcast is the bias over the last axis inside linear() and
conv2d().  All other shape mixing goes through explicit reshape/expand.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError
from .precision import active_dtype, active_precision

# When enabled, every tracked forward op asserts a finite result.
FINITE_CHECKS = False

_node_ids = itertools.count(1)

_ACTIVATIONS = ("silu", "relu", "sigmoid", "softplus")
_EXP_CLIP = 30.0  # overflow guard for sigmoid/softplus


class Tensor:
    """A dense n-d array, optionally participating in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "node", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=active_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = next(_node_ids) if requires_grad else None
        self._parents = ()
        self._grad_fn = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return _elementwise_add(self, other)

    def __radd__(self, other):
        return _elementwise_add(self, other)

    def __sub__(self, other):
        return _elementwise_add(self, _negate(other) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return _elementwise_add(_negate(self), other)

    def __mul__(self, other):
        return _elementwise_mul(self, other)

    def __rmul__(self, other):
        return _elementwise_mul(self, other)

    def __neg__(self):
        return _negate(self)

    def __truediv__(self, other):
        if not isinstance(other, Tensor):
            return _elementwise_mul(self, 1.0 / other)
        if self.shape != other.shape:
            raise ShapeError(f"div requires matching shapes, got {self.shape} and {other.shape}")
        out = self.data / other.data

        def grad_fn(g, ad=self.data, bd=other.data):
            return (g / bd, -g * ad / (bd * bd))

        return _from_op(out, (self, other), grad_fn)

    # -- shape plumbing -----------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        if int(np.prod(shape)) != self.size:
            raise ShapeError(f"cannot reshape {self.shape} to {shape}")
        out = self.data.reshape(shape)
        return _from_op(out, (self,), lambda g, s=self.shape: (g.reshape(s),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        out = np.transpose(self.data, axes)
        return _from_op(out, (self,), lambda g: (np.transpose(g, inv),))

    def flip(self, axis: int):
        out = np.flip(self.data, axis=axis)
        return _from_op(out, (self,), lambda g: (np.flip(g, axis=axis),))

    def expand(self, *shape):
        """Broadcast size-1 axes up to `shape` (rank must match)."""
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        if len(shape) != self.ndim:
            raise ShapeError(f"expand rank mismatch: {self.shape} to {shape}")
        for ax, (have, want) in enumerate(zip(self.shape, shape)):
            if have != want and have != 1:
                raise ShapeError(f"cannot expand axis {ax} from {have} to {want}")
        expanded_axes = tuple(
            ax for ax, (have, want) in enumerate(zip(self.shape, shape)) if have == 1 and want != 1
        )
        out = np.broadcast_to(self.data, shape)

        def grad_fn(g):
            return (g.sum(axis=expanded_axes, keepdims=True) if expanded_axes else g,)

        return _from_op(np.ascontiguousarray(out), (self,), grad_fn)

    def __getitem__(self, idx):
        out = self.data[idx]

        def grad_fn(g):
            full = np.zeros_like(self.data)
            full[idx] = g
            return (full,)

        return _from_op(out, (self,), grad_fn)

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None):
        out = self.data.sum(axis=axis)
        shape = self.shape

        def grad_fn(g):
            if axis is None:
                return (np.full(shape, g, dtype=g.dtype) if np.ndim(g) == 0 else np.broadcast_to(g, shape).copy(),)
            g_exp = np.expand_dims(g, axis)
            return (np.broadcast_to(g_exp, shape).copy(),)

        return _from_op(np.asarray(out), (self,), grad_fn)

    def mean(self, axis=None):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def backward(self):
        backward(self)


# -- constructors -------------------------------------------------------------


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=active_dtype()), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=active_dtype()), requires_grad=requires_grad)


def _from_op(data, parents, grad_fn) -> Tensor:
    data = np.asarray(data, dtype=active_dtype())
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise ContractError("non-finite value produced by a forward operation")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.node is not None for p in parents):
        out.requires_grad = True
        out.node = next(_node_ids)
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out.node = None
        out._parents = ()
        out._grad_fn = None
    return out


# -- elementwise core ----------------------------------------------------------


def _negate(x: Tensor) -> Tensor:
    return _from_op(-x.data, (x,), lambda g: (-g,))


def _elementwise_add(a: Tensor, b):
    if not isinstance(b, Tensor):
        return _from_op(a.data + b, (a,), lambda g: (g,))
    if a.shape != b.shape:
        raise ShapeError(f"add requires matching shapes, got {a.shape} and {b.shape}")
    return _from_op(a.data + b.data, (a, b), lambda g: (g, g))


def _elementwise_mul(a: Tensor, b):
    if not isinstance(b, Tensor):
        return _from_op(a.data * b, (a,), lambda g: (g * b,))
    if a.shape != b.shape:
        raise ShapeError(f"mul requires matching shapes, got {a.shape} and {b.shape}")
    return _from_op(a.data * b.data, (a, b), lambda g, ad=a.data, bd=b.data: (g * bd, g * ad))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _from_op(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _from_op(np.log(x.data), (x,), lambda g, d=x.data: (g / d,))


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _from_op(np.abs(x.data), (x,), lambda g: (g * sign,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    mask = (x.data >= lo) & (x.data <= hi)
    return _from_op(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


# -- activations ---------------------------------------------------------------


def _sigmoid_raw(t: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(t, -_EXP_CLIP, _EXP_CLIP)))


def _softplus_raw(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EXP_CLIP, t, np.log1p(np.exp(np.minimum(t, _EXP_CLIP))))


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity: one of silu | relu | sigmoid | softplus."""
    d = x.data
    if kind == "relu":
        mask = d > 0
        return _from_op(np.where(mask, d, 0.0), (x,), lambda g: (g * mask,))
    if kind == "sigmoid":
        s = _sigmoid_raw(d)
        return _from_op(s, (x,), lambda g: (g * s * (1.0 - s),))
    if kind == "silu":
        s = _sigmoid_raw(d)
        return _from_op(d * s, (x,), lambda g: (g * s * (1.0 + d * (1.0 - s)),))
    if kind == "softplus":
        s = _sigmoid_raw(d)
        return _from_op(_softplus_raw(d), (x,), lambda g: (g * s,))
    raise ContractError(f"unknown activation {kind!r}; expected one of {_ACTIVATIONS}")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def silu(x: Tensor) -> Tensor:
    return activation(x, "silu")


def softplus(x: Tensor) -> Tensor:
    return activation(x, "softplus")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _from_op(s, (x,), grad_fn)


# -- linear algebra ------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = W.x + b over the last axis of x; W is [d_out, d_in]."""
    d_in = x.shape[-1]
    if w.ndim != 2 or w.shape[1] != d_in:
        raise ShapeError(
            f"linear: weight {w.shape} incompatible with input last axis {d_in}"
        )
    d_out = w.shape[0]
    if b is not None and b.shape != (d_out,):
        raise ShapeError(f"linear: bias {b.shape} must be ({d_out},)")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, d_in)
    y2 = x2 @ w.data.T
    if b is not None:
        y2 = y2 + b.data
    parents = (x, w) if b is None else (x, w, b)

    def grad_fn(g):
        g2 = g.reshape(-1, d_out)
        dx = (g2 @ w.data).reshape(x.shape)
        dw = g2.T @ x2
        if b is None:
            return (dx, dw)
        return (dx, dw, g2.sum(axis=0))

    return _from_op(y2.reshape(*lead, d_out), parents, grad_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data
    return _from_op(out, (a, b), lambda g, ad=a.data, bd=b.data: (g @ bd.T, ad.T @ g))


# -- convolution ---------------------------------------------------------------


def _im2col(padded: np.ndarray, kh: int, kw: int):
    """[C,Hp,Wp] -> ([Ho*Wo, C*kh*kw] column matrix, Ho, Wo); stride 1."""
    win = sliding_window_view(padded, (kh, kw), axis=(1, 2))  # [C,Ho,Wo,kh,kw]
    c, ho, wo = win.shape[:3]
    return win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * kh * kw), ho, wo


def _dw_windows(padded: np.ndarray, kh: int, kw: int):
    """[C,Hp,Wp] -> [C, Ho*Wo, kh*kw] per-channel window matrix."""
    win = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    c, ho, wo = win.shape[:3]
    return win.reshape(c, ho * wo, kh * kw), ho, wo


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    padding: int = 0,
    depthwise: bool = False,
) -> Tensor:
    """Stride-1 cross-correlation of [C_in,H,W] with [C_out,C_in,kh,kw].

    Depthwise mode takes a [C,1,k,k] kernel and convolves each channel with
    its own filter.  Fixed im2col/matmul evaluation keeps the accumulation
    order, and therefore the result, bitwise reproducible.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv2d expects [C,H,W] input, got {x.shape}")
    c_in, h, w = x.shape
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be 4-d, got {kernel.shape}")
    c_out, kc, kh, kw = kernel.shape
    if depthwise:
        if kc != 1 or c_out != c_in:
            raise ShapeError(
                f"depthwise kernel must be [{c_in},1,k,k], got {kernel.shape}"
            )
    elif kc != c_in:
        raise ShapeError(
            f"conv2d: kernel input channels {kc} != input channels {c_in}"
        )
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input "
            f"{h + 2 * padding}x{w + 2 * padding}"
        )
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias {bias.shape} must be ({c_out},)")

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    if depthwise:
        win, ho, wo = _dw_windows(xp, kh, kw)  # [C, HoWo, khkw]
        kcol = kernel.data.reshape(c_in, kh * kw, 1)
        y = np.matmul(win, kcol)[:, :, 0].reshape(c_in, ho, wo)
    else:
        col, ho, wo = _im2col(xp, kh, kw)  # [HoWo, C*khkw]
        kmat = kernel.data.reshape(c_out, c_in * kh * kw)
        y = (col @ kmat.T).T.reshape(c_out, ho, wo)
    if bias is not None:
        y = y + bias.data[:, None, None]
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def grad_fn(g):
        kflip = kernel.data[:, :, ::-1, ::-1]
        gfull = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        if depthwise:
            g2 = g.reshape(c_in, 1, ho * wo)
            dk = np.matmul(g2, win).reshape(c_in, 1, kh, kw)
            gwin, hp, wp = _dw_windows(gfull, kh, kw)
            dxp = np.matmul(gwin, kflip.reshape(c_in, kh * kw, 1))[:, :, 0]
            dxp = dxp.reshape(c_in, hp, wp)
        else:
            g2 = g.reshape(c_out, ho * wo)
            dk = (g2 @ col).reshape(c_out, c_in, kh, kw)
            gcol, hp, wp = _im2col(gfull, kh, kw)  # [HpWp, Co*khkw]
            kfm = kflip.transpose(1, 0, 2, 3).reshape(c_in, c_out * kh * kw)
            dxp = (gcol @ kfm.T).T.reshape(c_in, hp, wp)
        dx = dxp[:, padding : padding + h, padding : padding + w]
        if bias is None:
            return (dx, dk)
        return (dx, dk, g.sum(axis=(1, 2)))

    return _from_op(y, parents, grad_fn)


# -- normalization -------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the affine (gamma, beta)."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: affine shapes {gamma.shape}/{beta.shape} must be ({d},)"
        )
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data

    def grad_fn(g):
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        lead = tuple(range(g.ndim - 1))
        return (dx, (g * xhat).sum(axis=lead), g.sum(axis=lead))

    return _from_op(y, (x, gamma, beta), grad_fn)


# -- pooling -------------------------------------------------------------------


def pool2d(x: Tensor, kind: str, window: int, stride: int | None = None) -> Tensor:
    """Per-window max or mean over [C,H,W]; pad-free, dims must divide."""
    if kind not in ("max", "avg"):
        raise ContractError(f"pool2d kind must be max|avg, got {kind!r}")
    if x.ndim != 3:
        raise ShapeError(f"pool2d expects [C,H,W] input, got {x.shape}")
    stride = window if stride is None else stride
    c, h, w = x.shape
    if h < window or w < window or (h - window) % stride or (w - window) % stride:
        raise ShapeError(
            f"pool2d: dims {h}x{w} not divisible for window {window} stride {stride}"
        )
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    win = sliding_window_view(x.data, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    flat = win.reshape(c, ho, wo, window * window)

    if kind == "max":
        idx = flat.argmax(axis=-1)  # first max in row-major order on ties
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    else:
        y = flat.mean(axis=-1)

    def grad_fn(g):
        dx = np.zeros_like(x.data)
        cs, hs, ws = np.meshgrid(
            np.arange(c), np.arange(ho), np.arange(wo), indexing="ij"
        )
        if kind == "max":
            rows = hs * stride + idx // window
            cols = ws * stride + idx % window
            np.add.at(dx, (cs, rows, cols), g)
        else:
            share = g / (window * window)
            for u in range(window):
                for v in range(window):
                    np.add.at(dx, (cs, hs * stride + u, ws * stride + v), share)
        return (dx,)

    return _from_op(y, (x,), grad_fn)


# -- combination ---------------------------------------------------------------


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat of an empty list")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            o != b for ax, (o, b) in enumerate(zip(other, base)) if ax != axis
        ):
            raise ShapeError(
                f"concat axis {axis}: incompatible shapes {tensors[0].shape} and {t.shape}"
            )
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def grad_fn(g):
        pieces = []
        sl = [slice(None)] * g.ndim
        for i in range(len(sizes)):
            sl[axis] = slice(bounds[i], bounds[i + 1])
            pieces.append(g[tuple(sl)])
        return tuple(pieces)

    return _from_op(out, tuple(tensors), grad_fn)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("stack of an empty list")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"stack: shapes {shape} and {t.shape} differ")
    out = np.stack([t.data for t in tensors], axis=axis)

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _from_op(out, tuple(tensors), grad_fn)


def combine(inputs, mode: str) -> Tensor:
    """Named n-ary combination: concat_channel | stack_new_axis | add | mul."""
    inputs = list(inputs)
    if not inputs:
        raise ContractError("combine of an empty list")
    if mode == "concat_channel":
        return concat(inputs, axis=0)
    if mode == "stack_new_axis":
        return stack(inputs, axis=0)
    if mode in ("add", "mul"):
        out = inputs[0]
        for t in inputs[1:]:
            out = out + t if mode == "add" else out * t
        return out
    raise ContractError(f"unknown combine mode {mode!r}")


# -- resampling ----------------------------------------------------------------


def _upsample_axis_weights(n: int):
    src = (np.arange(2 * n) + 0.5) / 2.0 - 0.5
    src = np.clip(src, 0.0, n - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    w1 = src - i0
    return i0, i1, 1.0 - w1, w1


def upsample2x(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling of [C,H,W] (half-pixel centres, edge clamp)."""
    if x.ndim != 3:
        raise ShapeError(f"upsample2x expects [C,H,W] input, got {x.shape}")
    c, h, w = x.shape
    ri0, ri1, rw0, rw1 = _upsample_axis_weights(h)
    ci0, ci1, cw0, cw1 = _upsample_axis_weights(w)

    def up(data):
        rows = data[:, ri0, :] * rw0[None, :, None] + data[:, ri1, :] * rw1[None, :, None]
        return rows[:, :, ci0] * cw0[None, None, :] + rows[:, :, ci1] * cw1[None, None, :]

    def grad_fn(g):
        drows = np.zeros((c, 2 * h, w), dtype=g.dtype)
        np.add.at(drows, (slice(None), slice(None), ci0), g * cw0[None, None, :])
        np.add.at(drows, (slice(None), slice(None), ci1), g * cw1[None, None, :])
        dx = np.zeros((c, h, w), dtype=g.dtype)
        np.add.at(dx, (slice(None), ri0, slice(None)), drows * rw0[None, :, None])
        np.add.at(dx, (slice(None), ri1, slice(None)), drows * rw1[None, :, None])
        return (dx,)

    return _from_op(up(x.data), (x,), grad_fn)


# -- backward pass -------------------------------------------------------------


def backward(loss: Tensor, params=None):
    """Accumulate gradients of `loss` into every reachable requires_grad leaf.

    Leaves listed in `params` that the loss does not reach get zero grads.
    The traversed tape is consumed; running backward over it again raises.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is not None:
        order = _reachable(loss)
        grads = {loss.node: np.ones_like(loss.data)}
        for t in order:
            g = grads.pop(t.node, None)
            if g is None:
                continue
            if t._grad_fn is None:
                if t._parents:
                    raise ContractError(
                        "backward ran twice over the same tape; re-run forward first"
                    )
                t.grad = g if t.grad is None else t.grad + g
            else:
                for p, pg in zip(t._parents, t._grad_fn(g)):
                    if p.node is None or pg is None:
                        continue
                    if p.node in grads:
                        grads[p.node] = grads[p.node] + pg
                    else:
                        grads[p.node] = np.asarray(pg)
                t._grad_fn = None  # mark consumed, release saved activations
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def _reachable(root: Tensor):
    seen = set()
    out = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node in seen:
            continue
        seen.add(t.node)
        out.append(t)
        for p in t._parents:
            if p.node is not None and p.node not in seen:
                stack.append(p)
    out.sort(key=lambda t: t.node, reverse=True)
    return out


# -- gradient checking -----------------------------------------------------------


@dataclass
class GradcheckReport:
    max_rel_err: float
    passed: bool


def gradcheck(f, x, tol: float = 1e-4, atol: float = 1e-7) -> GradcheckReport:
    """Compare tape gradients of scalar-valued f against central differences.

    `x` may be a single Tensor or a sequence of Tensors; every element of
    every input is perturbed with h = 1e-5 * max(1, |x_i|).  Requires the
    f64 build mode.  Passing means every element satisfies
    |analytic - numeric| <= tol * scale, with an absolute fallback near zero.
    """
    if active_precision() != "f64":
        raise ContractError("gradcheck requires the f64 build mode")
    xs = [x] if isinstance(x, Tensor) else list(x)
    probes = [Tensor(t.data.copy(), requires_grad=True) for t in xs]
    loss = f(*probes)
    if loss.size != 1:
        raise ContractError("gradcheck target must return a scalar")
    if not np.all(np.isfinite(loss.data)):
        raise ContractError("gradcheck: non-finite function value")
    backward(loss, params=probes)
    analytic = [p.grad.copy() for p in probes]

    def eval_at(arrays):
        frozen = [Tensor(a) for a in arrays]
        val = f(*frozen)
        if not np.all(np.isfinite(val.data)):
            raise ContractError("gradcheck: non-finite function value")
        return val.item()

    max_rel = 0.0
    passed = True
    base = [p.data.copy() for p in probes]
    for k, arr in enumerate(base):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            h = 1e-5 * max(1.0, abs(flat[i]))
            orig = flat[i]
            flat[i] = orig + h
            fp = eval_at(base)
            flat[i] = orig - h
            fm = eval_at(base)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            ana = analytic[k].reshape(-1)[i]
            diff = abs(ana - numeric)
            scale = max(abs(ana), abs(numeric))
            if scale > atol:
                max_rel = max(max_rel, diff / scale)
            if diff > tol * scale and diff > atol:
                passed = False
    return GradcheckReport(max_rel_err=max_rel, passed=passed)
