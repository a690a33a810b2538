"""SGD with momentum, weight decay, global-norm clipping and a step schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# conv biases are excluded from weight decay
DECAYED = frozenset({"weights", "gamma", "beta"})


@dataclass(frozen=True)
class OptimConfig:
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    clip: float = 0.1
    step_size: int = 30
    gamma: float = 0.1
    batch_size: int = 64

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.clip <= 0:
            raise ValueError("clip must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.step_size < 1 or self.batch_size < 1:
            raise ValueError("step_size and batch_size must be >= 1")


@dataclass
class OptimState:
    velocity: list[dict[str, np.ndarray]] = field(default_factory=list)
    epoch: int = 0
    lr: float = 0.0
    steps: int = 0


def lr_at(epoch: int, cfg: OptimConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.base_lr * cfg.gamma ** (epoch // cfg.step_size)


def global_norm(grads: list[dict[str, np.ndarray]]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for d in grads for g in d.values()))


def clip_gradients(grads: list[dict[str, np.ndarray]], clip: float):
    """Rescale all gradients by ``clip / norm`` when the global L2 norm exceeds ``clip``."""
    if clip <= 0:
        raise ValueError("clip must be > 0")
    norm = global_norm(grads)
    if norm <= clip:
        return grads
    s = clip / norm
    return [{k: g * s for k, g in d.items()} for d in grads]


def init_state(params: list[dict[str, np.ndarray]], cfg: OptimConfig) -> OptimState:
    return OptimState([{k: np.zeros_like(v) for k, v in d.items()} for d in params], 0, lr_at(0, cfg))


def sgd_step(params: list[dict[str, np.ndarray]], grads: list[dict[str, np.ndarray]],
             state: OptimState, cfg: OptimConfig, lr: float | None = None) -> OptimState:
    """In-place update ``v = m*v + (g + wd*p); p -= lr*v``.

    ``lr`` overrides the scheduled rate for ``state.epoch``.
    """
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise ValueError("params, grads and velocity must have the same layer count")
    lr = lr_at(state.epoch, cfg) if lr is None else lr
    for p, g, v in zip(params, grads, state.velocity):
        if p.keys() != g.keys():
            raise ValueError(f"parameter/gradient keys differ: {sorted(p)} vs {sorted(g)}")
        for k, arr in p.items():
            if g[k].shape != arr.shape:
                raise ValueError(f"gradient shape {g[k].shape} != parameter shape {arr.shape} for {k}")
            step = g[k] + cfg.weight_decay * arr if (k in DECAYED and cfg.weight_decay) else g[k]
            v[k] *= cfg.momentum
            v[k] += step
            arr -= lr * v[k]
    state.lr = lr
    state.steps += 1
    return state
