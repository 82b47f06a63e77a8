"""Differentiable primitives.

Every op takes and returns :class:`Tensor` objects and records a closure that
maps the output gradient to input gradients. Broadcasting is limited to what
the bundled architectures need (bias addition and scalar scaling).
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import ContractError, DimensionError, ValidationError
from .tensor import Tensor, as_tensor, record

BCE_EPS = 1e-7


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / structural
# ---------------------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return record("add", (a, b), a.data + b.data, backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return record("sub", (a, b), a.data - b.data, backward)


def mul(a, b) -> Tensor:
    """Elementwise product; either side may be a plain number."""
    if not isinstance(b, Tensor):
        c = float(b)
        return record("scale", (a,), a.data * c, lambda g: (g * c,))
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return record("mul", (a, b), ad * bd, backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return record("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(src),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (-1,))


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got rank {x.data.ndim}")
    return record("transpose", (x,), x.data.T, lambda g: (g.T,))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return record("sum", (x,), np.asarray(x.data.sum()), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape
    if axis is None:
        n = x.data.size
        return record("mean", (x,), np.asarray(x.data.mean()), lambda g: (np.full(shape, g / n),))
    axis = axis % x.data.ndim
    n = shape[axis]

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return record("mean", (x,), x.data.mean(axis=axis), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    ndim = tensors[0].data.ndim
    axis = axis % ndim
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", tensors, np.concatenate([t.data for t in tensors], axis=axis), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise DimensionError(f"matmul supports matrix @ matrix/vector, got ranks {a.data.ndim} and {b.data.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: axis 1 of left ({a.shape[1]}) != axis 0 of right ({b.shape[0]})")
    ad, bd = a.data, b.data

    def backward(g):
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g @ bd.T, ad.T @ g

    return record("matmul", (a, b), ad @ bd, backward)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------
def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # np.maximum keeps NaN, so a diverged run is reported instead of hidden
    return record("relu", (x,), np.maximum(x.data, 0.0), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    z = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return record("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return record("softmax", (x,), s, backward)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------
def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    if weight.data.ndim != 2:
        raise DimensionError(f"linear: weight must be a matrix, got shape {weight.shape}")
    m, n = weight.shape
    if x.shape[-1] != n:
        raise DimensionError(f"linear: input axis -1 has size {x.shape[-1]}, weight expects {n}")
    if bias is not None and bias.shape != (m,):
        raise DimensionError(f"linear: bias axis 0 has size {bias.shape}, expected ({m},)")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, m)
        x2 = xd.reshape(-1, n)
        gx = (g @ wd).reshape(xd.shape)
        gw = g2.T @ x2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("linear", inputs, out, backward)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, padding: str = "same") -> Tensor:
    """Multi-channel 2D cross-correlation with odd kernels.

    Accumulates in the order kernel-row, kernel-column, input-channel so that
    results match a plain nested-loop evaluation bit for bit.
    """
    if x.data.ndim != 3:
        raise DimensionError(f"conv2d: input must be [C,H,W], got shape {x.shape}")
    if kernel.data.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be [C_out,C_in,kH,kW], got shape {kernel.shape}")
    c_in, h, w = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise DimensionError(f"conv2d: input channel axis has {c_in}, kernel expects {k_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv2d: bias axis 0 has shape {bias.shape}, expected ({c_out},)")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d: kernel height/width must be odd, got {kh}x{kw}")
    if padding == "same":
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
        if h < kh:
            raise DimensionError(f"conv2d: input height {h} smaller than kernel height {kh}")
        if w < kw:
            raise DimensionError(f"conv2d: input width {w} smaller than kernel width {kw}")
    else:
        raise ValidationError(f"conv2d: unknown padding {padding!r}")

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    ho, wo = xp.shape[1] - kh + 1, xp.shape[2] - kw + 1
    k = kernel.data
    out = np.zeros((c_out, ho, wo))
    for m in range(kh):
        for n in range(kw):
            window = xp[:, m : m + ho, n : n + wo]
            for ci in range(c_in):
                out += k[:, ci, m, n, None, None] * window[ci]
    out += bias.data[:, None, None]

    def backward(g):
        gk = np.empty_like(k)
        gxp = np.zeros_like(xp)
        for m in range(kh):
            for n in range(kw):
                window = xp[:, m : m + ho, n : n + wo]
                gk[:, :, m, n] = np.tensordot(g, window, axes=([1, 2], [1, 2]))
                gxp[:, m : m + ho, n : n + wo] += np.tensordot(k[:, :, m, n], g, axes=(0, 0))
        gx = gxp[:, ph : ph + h, pw : pw + w]
        return gx, gk, g.sum(axis=(1, 2))

    return record("conv2d", (x, kernel, bias), out, backward)


def maxpool2d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties go to the first cell in row-major order."""
    if x.data.ndim != 3:
        raise DimensionError(f"maxpool2d: input must be [C,H,W], got shape {x.shape}")
    c, h, w = x.shape
    if h % window:
        raise DimensionError(f"maxpool2d: height {h} is not divisible by window {window}")
    if w % window:
        raise DimensionError(f"maxpool2d: width {w} is not divisible by window {window}")
    hh, ww = h // window, w // window
    blocks = (
        x.data.reshape(c, hh, window, ww, window)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, hh, ww, window * window)
    )
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx, g[..., None], axis=-1)
        return (gb.reshape(c, hh, ww, window, window).transpose(0, 1, 3, 2, 4).reshape(c, h, w),)

    return record("maxpool2d", (x,), out, backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: scale/shift must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        gxhat = g * gamma.data
        gx = inv_std * (gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record("layer_norm", (x, gamma, beta), out, backward)


def patchify(x: Tensor, patch: int) -> Tensor:
    """Split [C,H,W] into row-major non-overlapping patches, each flattened channel-major."""
    if x.data.ndim != 3:
        raise DimensionError(f"patchify: input must be [C,H,W], got shape {x.shape}")
    c, h, w = x.shape
    if h % patch:
        raise DimensionError(f"patchify: height {h} is not divisible by patch size {patch}")
    if w % patch:
        raise DimensionError(f"patchify: width {w} is not divisible by patch size {patch}")
    gh, gw = h // patch, w // patch
    out = x.data.reshape(c, gh, patch, gw, patch).transpose(1, 3, 0, 2, 4).reshape(gh * gw, c * patch * patch)

    def backward(g):
        return (g.reshape(gh, gw, c, patch, patch).transpose(2, 0, 3, 1, 4).reshape(c, h, w),)

    return record("patchify", (x,), out, backward)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------
def bce_loss(p: Tensor, y: int, eps: float = BCE_EPS) -> Tensor:
    """Binary cross-entropy of one probability against a 0/1 label.

    ``p`` is clamped to ``[eps, 1 - eps]``; the gradient is zero where the
    clamp is active.
    """
    if y not in (0, 1):
        raise ValidationError(f"bce_loss: label must be 0 or 1, got {y!r}")
    if p.data.size != 1:
        raise DimensionError(f"bce_loss: expected a single probability, got shape {p.shape}")
    pv = float(p.data.reshape(-1)[0])
    pc = min(max(pv, eps), 1.0 - eps)
    loss = -math.log(pc) if y == 1 else -math.log1p(-pc)
    inside = eps <= pv <= 1.0 - eps
    dp = (pc - y) / (pc * (1.0 - pc)) if inside else 0.0
    shape = p.shape

    return record("bce", (p,), np.asarray(loss), lambda g: (np.full(shape, float(g) * dp),))


def backward(loss: Tensor) -> None:
    """Run reverse accumulation from a scalar ``loss``."""
    if loss.graph is None:
        raise ContractError("loss has no computation graph; did any input require grad?")
    loss.graph.backward(loss)
