# Network ops for the affectdan engine: convolution, affine maps, batch
# normalization, activations and pooling. Each op computes its forward result
# with numpy/scipy and registers a closed-form backward rule on the active tape.

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from einops import rearrange
from numpy.lib.stride_tricks import as_strided
from scipy import special

from ..errors import BatchSizeError, ConfigError, DimensionError, GeometryError
from .tensor import Tensor, _normalize_axes, make_result

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class RunningStats:
    """Per-feature running mean / variance, updated in place by train-mode batchnorm."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, features: int, dtype=np.float32) -> "RunningStats":
        return cls(mean=np.zeros(features, dtype=dtype), var=np.ones(features, dtype=dtype))

    def copy(self) -> "RunningStats":
        return RunningStats(self.mean.copy(), self.var.copy())


def _require_rank(op: str, name: str, t: Tensor, rank: int) -> None:
    if t.ndim != rank:
        raise DimensionError(f"{op}: {name} must have rank {rank}, got shape {t.shape}")


# --- convolution -------------------------------------------------------------

def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Read-only view [N, C, kh, kw, oh, ow] of every receptive field."""
    n, c = xp.shape[:2]
    s_n, s_c, s_h, s_w = xp.strides
    return as_strided(xp, shape=(n, c, kh, kw, oh, ow),
                      strides=(s_n, s_c, s_h, s_w, s_h * stride, s_w * stride),
                      writeable=False)


def conv_output_extent(extent: int, kernel: int, stride: int, padding: int, axis: str = "H") -> int:
    padded = extent + 2 * padding
    if kernel > padded:
        raise GeometryError(f"conv2d: kernel extent {kernel} exceeds padded input {axis} extent {padded}")
    if (padded - kernel) % stride:
        raise GeometryError(
            f"conv2d: output {axis} extent ({padded} - {kernel}) / {stride} + 1 is not integral")
    return (padded - kernel) // stride + 1


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over an N x C x H x W batch."""
    _require_rank("conv2d", "input", x, 4)
    _require_rank("conv2d", "kernel", kernel, 4)
    if stride < 1 or padding < 0:
        raise GeometryError(f"conv2d: stride must be >= 1 and padding >= 0 (got {stride}, {padding})")
    n, c, h, w = x.shape
    k_out, k_in, kh, kw = kernel.shape
    if k_in != c:
        raise DimensionError(f"conv2d: input channel axis (1) has {c} channels, kernel axis 1 expects {k_in}")
    if bias.shape != (k_out,):
        raise DimensionError(f"conv2d: bias axis 0 must have {k_out} entries, got shape {bias.shape}")
    oh = conv_output_extent(h, kh, stride, padding, "H")
    ow = conv_output_extent(w, kw, stride, padding, "W")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    xp = np.ascontiguousarray(xp)
    cols = _windows(xp, kh, kw, stride, oh, ow)
    out = np.tensordot(cols, kernel.data, axes=([1, 2, 3], [1, 2, 3]))
    out = rearrange(out, "n h w k -> n k h w") + bias.data[None, :, None, None]

    def _bw(g):
        g = np.ascontiguousarray(g)
        dk = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
        db = g.sum(axis=(0, 2, 3))
        dcols = np.tensordot(g, kernel.data, axes=([1], [0]))  # [N, oh, ow, C, kh, kw]
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                    rearrange(dcols[..., i, j], "n h w c -> n c h w")
        dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
        return dx, dk, db

    return make_result("conv2d", np.ascontiguousarray(out, dtype=x.dtype), (x, kernel, bias), _bw)


# --- affine ------------------------------------------------------------------

def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias for x [N,F], weight [F,G], bias [G]."""
    _require_rank("dense", "input", x, 2)
    _require_rank("dense", "weight", weight, 2)
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense: input has {x.shape[1]} features but weight expects {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"dense: bias must have shape ({weight.shape[1]},), got {bias.shape}")
    out = x.data @ weight.data + bias.data
    return make_result("dense", out, (x, weight, bias),
                       lambda g: (g @ weight.data.T, x.data.T @ g, g.sum(axis=0)))


# --- batch normalization -----------------------------------------------------

def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, mode: Mode | str, running: RunningStats | None,
              momentum: float = 0.1, epsilon: float = 1e-5) -> Tensor:
    """Normalize per feature ([N,F]) or per channel ([N,C,H,W]).

    Train mode uses biased batch statistics and, when ``running`` is given, folds
    the batch mean and unbiased batch variance into it by exponential moving
    average. Eval mode reads ``running`` and never modifies it.
    """
    mode = Mode(mode)
    if epsilon <= 0:
        raise ConfigError(f"batchnorm: epsilon must be > 0, got {epsilon}")
    if x.ndim == 2:
        axes, bshape = (0,), (1, x.shape[1])
    elif x.ndim == 4:
        axes, bshape = (0, 2, 3), (1, x.shape[1], 1, 1)
    else:
        raise DimensionError(f"batchnorm: input must be [N,F] or [N,C,H,W], got shape {x.shape}")
    features = x.shape[1]
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t.shape != (features,):
            raise DimensionError(f"batchnorm: {name} must have shape ({features},), got {t.shape}")
    gamma_b = gamma.data.reshape(bshape)
    beta_b = beta.data.reshape(bshape)

    if mode is Mode.TRAIN:
        if x.shape[0] < 2:
            raise BatchSizeError(f"batchnorm: train mode needs at least 2 samples, got {x.shape[0]}")
        count = int(np.prod([x.shape[a] for a in axes]))
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + epsilon)
        xhat = (x.data - mu) * inv_std
        if running is not None:
            unbiased = var.reshape(-1) * (count / (count - 1))
            running.mean[...] = (1.0 - momentum) * running.mean + momentum * mu.reshape(-1)
            running.var[...] = (1.0 - momentum) * running.var + momentum * unbiased

        def _bw(g):
            dxhat = g * gamma_b
            dx = (inv_std / count) * (count * dxhat
                                      - dxhat.sum(axis=axes, keepdims=True)
                                      - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
            return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        if running is None:
            raise ConfigError("batchnorm: eval mode needs running statistics")
        inv_std = 1.0 / np.sqrt(running.var.reshape(bshape).astype(x.dtype) + epsilon)
        xhat = (x.data - running.mean.reshape(bshape).astype(x.dtype)) * inv_std

        def _bw(g):
            return g * gamma_b * inv_std, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = (gamma_b * xhat + beta_b).astype(x.dtype, copy=False)
    return make_result("batchnorm", out, (x, gamma, beta), _bw)


# --- activations -------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result("relu", x.data * mask, (x,), lambda g: (g * mask,))


def _open_unit_bounds(dtype) -> tuple[float, float]:
    info = np.finfo(dtype)
    return float(info.tiny), float(1.0 - info.epsneg)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function; output kept strictly inside (0, 1) at the tensor's precision."""
    lo, hi = _open_unit_bounds(x.dtype)
    y = np.clip(special.expit(x.data), lo, hi).astype(x.dtype, copy=False)
    return make_result("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh_op(x: Tensor) -> Tensor:
    """tanh with output kept strictly inside (-1, 1)."""
    _, hi = _open_unit_bounds(x.dtype)
    y = np.clip(np.tanh(x.data), -hi, hi).astype(x.dtype, copy=False)
    return make_result("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _single_axis(op: str, axis: int, ndim: int) -> int:
    if not isinstance(axis, (int, np.integer)):
        raise DimensionError(f"{op}: axis must be a single integer, got {axis!r}")
    return _normalize_axes(int(axis), ndim)[0]


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    axis = _single_axis("softmax", axis, x.ndim)
    y = special.softmax(x.data, axis=axis).astype(x.dtype, copy=False)
    return make_result("softmax", y, (x,),
                       lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _single_axis("log_softmax", axis, x.ndim)
    y = special.log_softmax(x.data, axis=axis).astype(x.dtype, copy=False)
    return make_result("log_softmax", y, (x,),
                       lambda g: (g - np.exp(y) * g.sum(axis=axis, keepdims=True),))


# --- pooling -----------------------------------------------------------------

def max_pool(x: Tensor, window: int = 2, stride: int | None = None) -> Tensor:
    """Max over square windows. Gradient goes to the first maximum in row-major order."""
    _require_rank("max_pool", "input", x, 4)
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise GeometryError(f"max_pool: window and stride must be >= 1 (got {window}, {stride})")
    n, c, h, w = x.shape
    if window > h or window > w:
        raise GeometryError(f"max_pool: window {window} larger than input {h}x{w}")
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1

    src = np.ascontiguousarray(x.data)
    s_n, s_c, s_h, s_w = src.strides
    view = as_strided(src, shape=(n, c, oh, ow, window, window),
                      strides=(s_n, s_c, s_h * stride, s_w * stride, s_h, s_w), writeable=False)
    flat = view.reshape(n, c, oh, ow, window * window)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def _bw(g):
        dx = np.zeros_like(src)
        ni, ci, hi, wi = np.indices((n, c, oh, ow), sparse=True)
        rows = hi * stride + arg // window
        cols = wi * stride + arg % window
        np.add.at(dx, (ni, ci, rows, cols), g)
        return (dx,)

    return make_result("max_pool", out, (x,), _bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N,C] spatial mean."""
    _require_rank("global_avg_pool", "input", x, 4)
    h, w = x.shape[2:]
    scale = 1.0 / (h * w)

    def _bw(g):
        return (np.broadcast_to(g[:, :, None, None] * scale, x.shape).astype(x.dtype),)

    return make_result("global_avg_pool", x.data.mean(axis=(2, 3)).astype(x.dtype, copy=False), (x,), _bw)
