"""Differentiable layer operations on NCHW tensors.

Convolution forwards have two kernels. In deterministic mode (the default)
each output element is accumulated as ``bias`` followed by the products in
a fixed (row offset, column offset, input channel) order, one rounding per
step, so results are bitwise reproducible and match a scalar loop. With
:func:`fvkit.tensor.set_deterministic(False) <fvkit.tensor.set_deterministic>`
the channel contraction is handed to BLAS instead.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatchError, ParameterError, ShapeError
from .tensor import Tensor, is_deterministic, make_result


def _check_4d(x, name):
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (N, C, H, W), got shape {x.shape}")


def _bias_vector(bias, k, dtype):
    if bias is None:
        return None
    b = bias.data.reshape(-1)
    if b.shape[0] != k:
        raise ShapeError(f"bias has {b.shape[0]} entries, expected {k}")
    return b.astype(dtype, copy=False)


# -- 3x3 same-padded convolution ------------------------------------------

def conv2d(x, weight, bias=None):
    """3x3 convolution, stride 1, one pixel of zero padding on each side.

    ``weight`` is (K, C, 3, 3); output is (N, K, H, W).
    """
    _check_4d(x, "input")
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d weights must be (K, C, 3, 3), got {weight.shape}")
    n, c, h, w = x.shape
    k = weight.shape[0]
    if weight.shape[1] != c:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape} vs weights {weight.shape}"
        )
    dtype = x.data.dtype
    wt = weight.data.astype(dtype, copy=False)
    b = _bias_vector(bias, k, dtype)
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))

    out = np.zeros((n, k, h, w), dtype=dtype)
    if b is not None:
        out += b[None, :, None, None]
    if is_deterministic():
        for m in range(3):
            for q in range(3):
                for ch in range(c):
                    xs = xp[:, ch, m:m + h, q:q + w]
                    out += xs[:, None, :, :] * wt[None, :, ch, m, q, None, None]
    else:
        for m in range(3):
            for q in range(3):
                xs = xp[:, :, m:m + h, q:q + w]
                out += np.einsum("nchw,kc->nkhw", xs, wt[:, :, m, q], optimize=True)

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for m in range(3):
                for q in range(3):
                    contrib = np.tensordot(g, wt[:, :, m, q], axes=([1], [0]))
                    gxp[:, :, m:m + h, q:q + w] += contrib.transpose(0, 3, 1, 2)
            gx = gxp[:, :, 1:h + 1, 1:w + 1]
        if weight.requires_grad:
            gw = np.empty_like(wt)
            for m in range(3):
                for q in range(3):
                    xs = xp[:, :, m:m + h, q:q + w]
                    gw[:, :, m, q] = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3)).reshape(bias.shape)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, "conv2d", backward)


def conv1x1(x, weight, bias=None):
    """Per-pixel linear map over channels; ``weight`` is (K, C, 1, 1)."""
    _check_4d(x, "input")
    if weight.ndim != 4 or weight.shape[2:] != (1, 1):
        raise ShapeError(f"conv1x1 weights must be (K, C, 1, 1), got {weight.shape}")
    n, c, h, w = x.shape
    k = weight.shape[0]
    if weight.shape[1] != c:
        raise ShapeError(
            f"conv1x1 channel mismatch: input {x.shape} vs weights {weight.shape}"
        )
    dtype = x.data.dtype
    wm = weight.data.astype(dtype, copy=False)[:, :, 0, 0]
    b = _bias_vector(bias, k, dtype)

    out = np.zeros((n, k, h, w), dtype=dtype)
    if b is not None:
        out += b[None, :, None, None]
    if is_deterministic():
        for ch in range(c):
            out += x.data[:, ch, None, :, :] * wm[None, :, ch, None, None]
    else:
        out += np.einsum("nchw,kc->nkhw", x.data, wm, optimize=True)

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.tensordot(g, wm, axes=([1], [0])).transpose(0, 3, 1, 2)
        if weight.requires_grad:
            gw = np.tensordot(g, x.data, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3)).reshape(bias.shape)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, "conv1x1", backward)


def conv_transpose2d(x, weight, bias=None):
    """Stride-2 transposed convolution with a 2x2 kernel.

    Each input element is scattered through the (C, K, 2, 2) kernel into its
    own 2x2 output block, so the output is (N, K, 2H, 2W).
    """
    _check_4d(x, "input")
    if weight.ndim != 4 or weight.shape[2:] != (2, 2):
        raise ShapeError(
            f"conv_transpose2d weights must be (C, K, 2, 2), got {weight.shape}"
        )
    n, c, h, w = x.shape
    if weight.shape[0] != c:
        raise ShapeError(
            f"conv_transpose2d channel mismatch: input {x.shape} vs weights {weight.shape}"
        )
    k = weight.shape[1]
    dtype = x.data.dtype
    wt = weight.data.astype(dtype, copy=False)
    b = _bias_vector(bias, k, dtype)

    # blocked layout (N, K, H, 2, W, 2) reshapes to (N, K, 2H, 2W)
    out6 = np.zeros((n, k, h, 2, w, 2), dtype=dtype)
    if b is not None:
        out6 += b[None, :, None, None, None, None]
    if is_deterministic():
        for ch in range(c):
            xs = x.data[:, ch][:, None, :, None, :, None]
            out6 += xs * wt[ch][None, :, None, :, None, :]
    else:
        out6 += np.einsum("nchw,ckab->nkhawb", x.data, wt, optimize=True)
    out = out6.reshape(n, k, 2 * h, 2 * w)

    def backward(g):
        gx = gw = gb = None
        g6 = g.reshape(n, k, h, 2, w, 2)
        if x.requires_grad:
            gx = np.einsum("nkhawb,ckab->nchw", g6, wt, optimize=True)
        if weight.requires_grad:
            gw = np.einsum("nkhawb,nchw->ckab", g6, x.data, optimize=True)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3)).reshape(bias.shape)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, "conv_transpose2d", backward)


# -- pointwise -------------------------------------------------------------

def relu(x):
    out = np.maximum(x.data, 0).astype(x.data.dtype, copy=False)

    def backward(g):
        return (g * (x.data > 0),)

    return make_result(out, (x,), "relu", backward)


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    s = _stable_sigmoid(x.data)

    def backward(g):
        return (g * s * (1 - s),)

    return make_result(s, (x,), "sigmoid", backward)


# -- batch normalization ---------------------------------------------------

@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics.

    ``gamma``/``beta`` are trainable tensors; ``running_mean`` and
    ``running_var`` are tensors updated in place in train mode only.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    momentum: float = 0.1
    eps_bn: float = 1e-5

    @classmethod
    def fresh(cls, channels, momentum=0.1, eps_bn=1e-5, dtype=np.float32):
        return cls(
            gamma=Tensor(np.ones(channels, dtype), requires_grad=True),
            beta=Tensor(np.zeros(channels, dtype), requires_grad=True),
            running_mean=Tensor(np.zeros(channels, dtype)),
            running_var=Tensor(np.ones(channels, dtype)),
            momentum=momentum,
            eps_bn=eps_bn,
        )

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ParameterError(f"batch-norm momentum must be in (0, 1), got {self.momentum}")
        if self.eps_bn <= 0:
            raise ParameterError(f"eps_bn must be positive, got {self.eps_bn}")


def batchnorm2d(x, state, mode="train"):
    """Per-channel batch normalization over (N, H, W) with biased variance."""
    _check_4d(x, "input")
    n, c, h, w = x.shape
    if state.gamma.shape[0] != c:
        raise ShapeError(f"batch-norm state has {state.gamma.shape[0]} channels, input has {c}")
    dtype = x.data.dtype
    gamma = state.gamma.data.astype(dtype, copy=False)
    beta = state.beta.data.astype(dtype, copy=False)
    eps = state.eps_bn
    count = n * h * w

    if mode == "train":
        if count < 2:
            raise DegenerateBatchError(
                f"train-mode batch norm needs N*H*W >= 2 per channel, got {count}"
            )
        mean = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
        centered64 = x.data - mean[None, :, None, None]
        var = (centered64 * centered64).mean(axis=(0, 2, 3))
        mom = state.momentum
        rm, rv = state.running_mean.data, state.running_var.data
        rm[...] = ((1 - mom) * rm + mom * mean).astype(rm.dtype)
        rv[...] = ((1 - mom) * rv + mom * var).astype(rv.dtype)
        inv_std = (1.0 / np.sqrt(var + eps)).astype(dtype)
        xhat = (centered64.astype(dtype) * inv_std[None, :, None, None])
    elif mode == "eval":
        rm = state.running_mean.data.astype(np.float64)
        rv = state.running_var.data.astype(np.float64)
        inv_std = (1.0 / np.sqrt(rv + eps)).astype(dtype)
        xhat = ((x.data - rm[None, :, None, None]).astype(dtype)
                * inv_std[None, :, None, None])
    else:
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")

    out = (xhat * gamma[None, :, None, None] + beta[None, :, None, None]).astype(dtype)

    def backward(g):
        gx = gg = gbeta = None
        if state.gamma.requires_grad:
            gg = (g * xhat).sum(axis=(0, 2, 3)).astype(state.gamma.data.dtype)
        if state.beta.requires_grad:
            gbeta = g.sum(axis=(0, 2, 3)).astype(state.beta.data.dtype)
        if x.requires_grad:
            dxhat = g * gamma[None, :, None, None]
            if mode == "train":
                s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
                gx = (inv_std[None, :, None, None] / count) * (count * dxhat - s1 - xhat * s2)
            else:
                gx = dxhat * inv_std[None, :, None, None]
        return gx, gg, gbeta

    return make_result(out, (x, state.gamma, state.beta), "batchnorm2d", backward)


# -- pooling, concatenation, dropout ---------------------------------------

def maxpool2x2(x):
    """2x2 max pooling. Ties route the gradient to the first element in
    row-major order within the block."""
    _check_4d(x, "input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even H and W, got {h}x{w}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(n, c, h, w),)

    return make_result(np.ascontiguousarray(out), (x,), "maxpool2x2", backward)


def concat_channels(a, b):
    """Stack ``a``'s channels followed by ``b``'s."""
    _check_4d(a, "first input")
    _check_4d(b, "second input")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"cannot concatenate {a.shape} and {b.shape}: N, H, W must match")
    c1 = a.shape[1]
    out = np.concatenate([a.data, b.data.astype(a.data.dtype, copy=False)], axis=1)

    def backward(g):
        return g[:, :c1], g[:, c1:]

    return make_result(out, (a, b), "concat", backward)


def dropout2d(x, p, mode="train", rng=None):
    """Inverted channel dropout: whole channels are zeroed with probability p."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x
    _check_4d(x, "input")
    if rng is None:
        raise ParameterError("train-mode dropout needs a seeded generator")
    n, c = x.shape[:2]
    keep = rng.random((n, c)) >= p
    mask = (keep / (1.0 - p)).astype(x.data.dtype)[:, :, None, None]
    out = x.data * mask

    def backward(g):
        return (g * mask,)

    return make_result(out, (x,), "dropout2d", backward)


# -- reductions ------------------------------------------------------------

def tsum(x):
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype)

    def backward(g):
        return (np.broadcast_to(g, x.shape).astype(x.data.dtype),)

    return make_result(out, (x,), "sum", backward)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    out = a.data + b.data

    def backward(g):
        return g, g

    return make_result(out, (a, b), "add", backward)


__all__ = [
    "BatchNormState",
    "add",
    "batchnorm2d",
    "concat_channels",
    "conv1x1",
    "conv2d",
    "conv_transpose2d",
    "dropout2d",
    "maxpool2x2",
    "relu",
    "sigmoid",
    "tsum",
]
