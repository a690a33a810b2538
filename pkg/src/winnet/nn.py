"""Layer forward/backward passes: convolution, ReLU, batch norm, skip.

All passes are hand-written. Convolution is cross-correlation with zero
padding; ``pad = (f - 1) // 2`` keeps the spatial size unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend, _pykernels
from .tensor import ShapeError, check

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class ConvParams:
    weights: np.ndarray  # (k, c_in, f, f)
    bias: np.ndarray  # (k,)

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ShapeError(f"conv weights must be (k, c_in, f, f), got {self.weights.shape}")
        if self.kernel % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.kernel}")
        if self.bias.shape != (self.filters,):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {self.filters} filters")

    @property
    def filters(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]


@dataclass
class BnParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM
    # number of batches folded into the running statistics
    tracked: int = 0

    @classmethod
    def init(cls, channels: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM) -> "BnParams":
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels),
                   eps=eps, momentum=momentum)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be non-negative")


@dataclass
class ConvGrads:
    weights: np.ndarray
    bias: np.ndarray
    input: np.ndarray


@dataclass
class BnGrads:
    gamma: np.ndarray
    beta: np.ndarray
    input: np.ndarray


@dataclass
class BnCache:
    x_hat: np.ndarray
    batch_mean: np.ndarray
    batch_var: np.ndarray
    inv_std: np.ndarray = field(repr=False)


def init_conv(filters: int, in_channels: int, kernel: int, normal) -> ConvParams:
    """He-style init: N(0, 2 / (c_in * f * f)) weights, zero bias.

    ``normal(shape)`` must return standard normal draws of that shape.
    """
    if kernel % 2 == 0 or kernel < 1:
        raise ValueError(f"kernel size must be odd and positive, got {kernel}")
    if filters < 1 or in_channels < 1:
        raise ValueError("filters and in_channels must be >= 1")
    std = np.sqrt(2.0 / (in_channels * kernel * kernel))
    w = np.asarray(normal((filters, in_channels, kernel, kernel)), dtype=np.float64) * std
    return ConvParams(w, np.zeros(filters))


# -- convolution --------------------------------------------------------------

def _check_conv(x: np.ndarray, p: ConvParams, pad: int) -> None:
    check(x, "conv input")
    if x.shape[1] != p.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {p.in_channels}")
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if p.kernel > x.shape[2] + 2 * pad or p.kernel > x.shape[3] + 2 * pad:
        raise ShapeError(f"kernel {p.kernel} larger than padded input {x.shape[2:]} + 2*{pad}")


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_naive(x: np.ndarray, p: ConvParams, pad: int) -> np.ndarray:
    """Direct loop over (n, k, y, x); the reference the fast paths are tested against."""
    _check_conv(x, p, pad)
    xp = _pad(x, pad)
    f = p.kernel
    n, _, hp, wp = xp.shape
    ho, wo = hp - f + 1, wp - f + 1
    out = np.empty((n, p.filters, ho, wo))
    for b in range(n):
        for k in range(p.filters):
            wk = p.weights[k]
            for i in range(ho):
                for j in range(wo):
                    out[b, k, i, j] = np.sum(xp[b, :, i:i + f, j:j + f] * wk) + p.bias[k]
    return out


def _kernels(method: str):
    if method == "auto":
        return _backend
    if method == "numpy":
        return _pykernels
    if method == "cython":
        if _backend.compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _backend.compiled
    raise ValueError(f"unknown conv method {method!r}")


def conv2d_forward(x: np.ndarray, p: ConvParams, pad: int | None = None,
                   method: str = "auto") -> np.ndarray:
    """Convolve ``x`` (n, c_in, h, w) with ``p``; ``pad`` defaults to same-size.

    ``method`` picks the execution path: ``"auto"`` (compiled kernels when
    built, numpy otherwise), ``"cython"``, ``"numpy"`` or ``"naive"``.
    """
    if pad is None:
        pad = (p.kernel - 1) // 2
    if method == "naive":
        return conv2d_naive(x, p, pad)
    _check_conv(x, p, pad)
    kern = _kernels(method)
    xp = _pad(x, pad)
    f = p.kernel
    n, _, hp, wp = xp.shape
    ho, wo = hp - f + 1, wp - f + 1
    cols = kern.im2col(xp, f)  # (n, c*f*f, ho*wo)
    # one GEMM per sample so a sample's output bits never depend on its batch mates
    out = np.matmul(p.weights.reshape(p.filters, -1), cols) + p.bias[:, None]
    return out.reshape(n, p.filters, ho, wo)


def conv2d_backward(x: np.ndarray, p: ConvParams, grad_out: np.ndarray, pad: int | None = None,
                    method: str = "auto") -> ConvGrads:
    if pad is None:
        pad = (p.kernel - 1) // 2
    _check_conv(x, p, pad)
    f = p.kernel
    n, c, h, w = x.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    ho, wo = hp - f + 1, wp - f + 1
    if grad_out.shape != (n, p.filters, ho, wo):
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {(n, p.filters, ho, wo)}")
    kern = _kernels("auto" if method == "naive" else method)
    cols = kern.im2col(_pad(x, pad), f)
    g = np.ascontiguousarray(grad_out).reshape(n, p.filters, ho * wo)
    dw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(p.weights.shape)
    db = g.sum(axis=(0, 2))
    dcols = np.matmul(np.ascontiguousarray(p.weights.reshape(p.filters, -1).T), g)
    dxp = kern.col2im(dcols, c, hp, wp, f)
    dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
    return ConvGrads(dw, db, np.ascontiguousarray(dx))


# -- ReLU ---------------------------------------------------------------------

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    if x.shape != grad_out.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {grad_out.shape}")
    return np.where(x > 0, grad_out, 0.0)


# -- batch normalization ------------------------------------------------------

def _check_bn(x: np.ndarray, p: BnParams) -> None:
    check(x, "bn input")
    if x.shape[1] != p.gamma.shape[0]:
        raise ShapeError(f"input has {x.shape[1]} channels, bn expects {p.gamma.shape[0]}")


def bn_forward_train(x: np.ndarray, p: BnParams, update: bool = True):
    """Normalize each channel over (n, h, w) with batch statistics.

    Returns ``(y, cache)``; the biased batch variance is used both for
    normalizing and for the running average, and ``p``'s running statistics
    are updated in place unless ``update`` is false.
    """
    _check_bn(x, p)
    n, _, h, w = x.shape
    if n * h * w < 2:
        raise ValueError("batch norm needs at least 2 values per channel")
    mean = x.mean(axis=(0, 2, 3))
    var = ((x - mean[None, :, None, None]) ** 2).mean(axis=(0, 2, 3))
    inv_std = 1.0 / np.sqrt(var + p.eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = p.gamma[None, :, None, None] * x_hat + p.beta[None, :, None, None]
    if update:
        p.running_mean = (1 - p.momentum) * p.running_mean + p.momentum * mean
        p.running_var = (1 - p.momentum) * p.running_var + p.momentum * var
        p.tracked += 1
    return y, BnCache(x_hat, mean, var, inv_std)


def bn_forward_infer(x: np.ndarray, p: BnParams) -> np.ndarray:
    """Apply the fixed per-channel affine map given by the running statistics."""
    _check_bn(x, p)
    if p.tracked == 0:
        raise ValueError("batch norm running statistics are uninitialized")
    inv_std = 1.0 / np.sqrt(p.running_var + p.eps)
    x_hat = (x - p.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    return p.gamma[None, :, None, None] * x_hat + p.beta[None, :, None, None]


def bn_backward(cache: BnCache, p: BnParams, grad_out: np.ndarray) -> BnGrads:
    if grad_out.shape != cache.x_hat.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != cached {cache.x_hat.shape}")
    n, _, h, w = grad_out.shape
    m = n * h * w
    dbeta = grad_out.sum(axis=(0, 2, 3))
    dgamma = (grad_out * cache.x_hat).sum(axis=(0, 2, 3))
    scale = (p.gamma * cache.inv_std / m)[None, :, None, None]
    dx = scale * (m * grad_out - dbeta[None, :, None, None]
                  - cache.x_hat * dgamma[None, :, None, None])
    return BnGrads(dgamma, dbeta, dx)


# -- input-to-output skip -----------------------------------------------------

def skip_add(image: np.ndarray, network_output: np.ndarray) -> np.ndarray:
    if image.shape != network_output.shape:
        raise ShapeError(f"shape mismatch: {image.shape} vs {network_output.shape}")
    return image + network_output


def skip_backward(grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The sum routes ``grad_out`` unchanged to both branches."""
    return grad_out, grad_out
