"""WIN network assembly, full forward/backward, loss, and inference.

A network is a stack of ``conv -> [bn] -> [relu]`` layers with every conv
keeping the spatial size. Three target modes decide what the stack learns:

``direct``
    the stack output is the clean estimate.
``residual_skip``
    the noisy input is added to the stack output (``x = y + R(y)``).
``residual_target``
    the stack predicts the noise itself and the estimate is ``y - T(y)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .noise import Rng
from .tensor import ShapeError, check

DIRECT = "direct"
RESIDUAL_SKIP = "residual_skip"
RESIDUAL_TARGET = "residual_target"
TARGET_MODES = (DIRECT, RESIDUAL_SKIP, RESIDUAL_TARGET)


class SpecError(ValueError):
    """Invalid network specification."""


@dataclass(frozen=True)
class LayerSpec:
    filters: int
    kernel: int
    bn: bool = False
    relu: bool = True

    def __post_init__(self):
        if self.filters < 1:
            raise SpecError(f"filters must be >= 1, got {self.filters}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise SpecError(f"kernel size must be odd, got {self.kernel}")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    skip: bool = False
    target_mode: str = DIRECT
    channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) < 2:
            raise SpecError("a network needs at least 2 layers")
        if self.target_mode not in TARGET_MODES:
            raise SpecError(f"unknown target mode {self.target_mode!r}")
        if self.layers[-1].filters != self.channels:
            raise SpecError(f"last layer must have {self.channels} filter(s), got {self.layers[-1].filters}")
        if self.layers[-1].relu:
            raise SpecError("the last layer must not be followed by ReLU")
        if (self.target_mode == RESIDUAL_SKIP) != self.skip:
            raise SpecError("skip=True goes with target_mode='residual_skip' and only with it")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def has_bn(self) -> bool:
        return any(l.bn for l in self.layers)

    def to_dict(self) -> dict:
        return {
            "layers": [[l.filters, l.kernel, int(l.bn), int(l.relu)] for l in self.layers],
            "skip": self.skip,
            "target_mode": self.target_mode,
            "channels": self.channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        layers = tuple(LayerSpec(int(k), int(f), bool(b), bool(r)) for k, f, b, r in d["layers"])
        return cls(layers, skip=bool(d["skip"]), target_mode=d["target_mode"], channels=int(d.get("channels", 1)))


def make_spec(depth: int, filters: int | list[int], kernel: int | list[int], bn: bool = False,
              skip: bool = False, target_mode: str | None = None, channels: int = 1) -> ModelSpec:
    """Plain stack of ``depth`` layers; the last one maps back to ``channels``.

    ``filters``/``kernel`` may be scalars or per-hidden-layer lists
    (``depth - 1`` entries for filters, ``depth`` for kernels).
    """
    if depth < 2:
        raise SpecError("depth must be >= 2")
    ks = [filters] * (depth - 1) if isinstance(filters, int) else list(filters)
    fs = [kernel] * depth if isinstance(kernel, int) else list(kernel)
    if len(ks) != depth - 1 or len(fs) != depth:
        raise SpecError("per-layer filter/kernel lists do not match depth")
    layers = [LayerSpec(k, f, bn, True) for k, f in zip(ks, fs)]
    layers.append(LayerSpec(channels, fs[-1], bn, False))
    if target_mode is None:
        target_mode = RESIDUAL_SKIP if skip else DIRECT
    return ModelSpec(tuple(layers), skip=skip, target_mode=target_mode, channels=channels)


PRESETS = {
    "win5": make_spec(5, 128, 7),
    "win5_r": make_spec(5, 128, 7, skip=True),
    "win5_rb": make_spec(5, 128, 7, bn=True, skip=True),
    # 2 x (128, 7x7) + 2 x (64, 7x7) + 1 x (1, 7x7)
    "win5_rb_taper": make_spec(5, [128, 128, 64, 64], 7, bn=True, skip=True),
}


def preset(name: str) -> ModelSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def param_count(spec: ModelSpec, include_bn: bool = True) -> int:
    """Learnable parameters (conv weights + biases, plus gamma/beta when BN)."""
    total, c_in = 0, spec.channels
    for l in spec.layers:
        total += l.filters * c_in * l.kernel * l.kernel + l.filters
        if l.bn and include_bn:
            total += 2 * l.filters
        c_in = l.filters
    return total


@dataclass
class Layer:
    spec: LayerSpec
    conv: nn.ConvParams
    bn: nn.BnParams | None = None


@dataclass
class Model:
    spec: ModelSpec
    layers: list[Layer]
    meta: dict = field(default_factory=dict)

    def params(self) -> list[dict[str, np.ndarray]]:
        """Learnable arrays per layer; the arrays are the live model storage."""
        out = []
        for layer in self.layers:
            d = {"weights": layer.conv.weights, "bias": layer.conv.bias}
            if layer.bn is not None:
                d["gamma"] = layer.bn.gamma
                d["beta"] = layer.bn.beta
            out.append(d)
        return out

    def num_params(self) -> int:
        return sum(a.size for d in self.params() for a in d.values())


def build(spec: ModelSpec, seed: int = 0) -> Model:
    if spec.has_bn and not spec.skip:
        warnings.warn("batch norm without the input-to-output skip tends to overfit", stacklevel=2)
    rng = Rng(seed)
    layers, c_in = [], spec.channels
    for ls in spec.layers:
        conv = nn.init_conv(ls.filters, c_in, ls.kernel, rng.normal)
        layers.append(Layer(ls, conv, nn.BnParams.init(ls.filters) if ls.bn else None))
        c_in = ls.filters
    return Model(spec, layers)


@dataclass
class _LayerCache:
    x: np.ndarray
    bn: nn.BnCache | None
    pre_relu: np.ndarray | None


def forward(model: Model, y: np.ndarray, mode: str = "infer", update_stats: bool = True):
    """Run the network on ``y``; returns ``(prediction, caches)``.

    In ``train`` mode BN uses batch statistics (updating running statistics
    unless ``update_stats`` is false) and caches are kept for backward.
    The prediction is ``y + R(y)`` for skip models and the raw stack output
    otherwise.
    """
    check(y, "input")
    if y.shape[1] != model.spec.channels:
        raise ShapeError(f"input has {y.shape[1]} channels, model expects {model.spec.channels}")
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    train = mode == "train"
    caches = []
    h = y
    for layer in model.layers:
        x_in = h
        h = nn.conv2d_forward(h, layer.conv)
        bn_cache = None
        if layer.bn is not None:
            if train:
                h, bn_cache = nn.bn_forward_train(h, layer.bn, update=update_stats)
            else:
                h = nn.bn_forward_infer(h, layer.bn)
        pre = None
        if layer.spec.relu:
            pre = h
            h = nn.relu_forward(h)
        if train:
            caches.append(_LayerCache(x_in, bn_cache, pre))
    if model.spec.skip:
        h = nn.skip_add(y, h)
    return h, caches


def backward(model: Model, caches: list[_LayerCache], grad_pred: np.ndarray):
    """Gradients of a scalar loss given d(loss)/d(prediction).

    Returns ``(grads, grad_input)`` where ``grads`` parallels ``model.params()``.
    """
    g = grad_pred
    grad_skip = None
    if model.spec.skip:
        g, grad_skip = nn.skip_backward(g)
    grads: list[dict[str, np.ndarray]] = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer, cache = model.layers[i], caches[i]
        d = {}
        if layer.spec.relu:
            g = nn.relu_backward(cache.pre_relu, g)
        if layer.bn is not None:
            bg = nn.bn_backward(cache.bn, layer.bn, g)
            d["gamma"], d["beta"], g = bg.gamma, bg.beta, bg.input
        cg = nn.conv2d_backward(cache.x, layer.conv, g)
        d["weights"], d["bias"], g = cg.weights, cg.bias, cg.input
        grads[i] = {k: d[k] for k in ("weights", "bias", "gamma", "beta") if k in d}
    if grad_skip is not None:
        g = g + grad_skip
    return grads, g


def training_target(model: Model, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """What the prediction is compared to: the noise for residual_target, else x."""
    return y - x if model.spec.target_mode == RESIDUAL_TARGET else x


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """``(1/2N) * sum_i mean_pixels (pred_i - target_i)^2`` and its gradient."""
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {target.shape}")
    n = pred.shape[0]
    per_image = pred[0].size
    diff = pred - target
    loss = float(np.sum(diff * diff)) / (2.0 * n * per_image)
    return loss, diff / (n * per_image)


def loss_and_grad(model: Model, y_batch: np.ndarray, x_batch: np.ndarray, update_stats: bool = True):
    if y_batch.shape != x_batch.shape:
        raise ShapeError(f"shape mismatch: {y_batch.shape} vs {x_batch.shape}")
    pred, caches = forward(model, y_batch, "train", update_stats=update_stats)
    loss, grad_pred = mse_loss(pred, training_target(model, y_batch, x_batch))
    grads, _ = backward(model, caches, grad_pred)
    return loss, grads


def denoise(model: Model, y: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Clean estimate of ``y`` in inference mode, clipped to [0, 1] by default."""
    pred, _ = forward(model, y, "infer")
    est = y - pred if model.spec.target_mode == RESIDUAL_TARGET else pred
    return np.clip(est, 0.0, 1.0) if clamp else est


def zero_weights(model: Model) -> Model:
    """Copy of ``model`` with every conv weight and bias set to zero."""
    layers = [replace(l, conv=nn.ConvParams(np.zeros_like(l.conv.weights), np.zeros_like(l.conv.bias)))
              for l in model.layers]
    return Model(model.spec, layers, dict(model.meta))
