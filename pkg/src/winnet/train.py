"""Minibatch training loop and evaluation helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import metrics
from .data import PatchSet, make_batches
from .model import Model, denoise, loss_and_grad
from .noise import NoiseConfig, NoiseSource, Rng
from .optim import OptimConfig, clip_gradients, init_state, lr_at, sgd_step


class NumericalError(ArithmeticError):
    """Training produced a non-finite loss."""


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_psnr: float

    def line(self) -> str:
        # repr keeps full float precision so reruns compare byte for byte
        return f"{self.epoch}\t{self.lr!r}\t{self.train_loss!r}\t{self.val_psnr!r}"


LOG_COLUMNS = "epoch\tlr\ttrain_loss\tval_psnr"


@dataclass
class ValidationSet:
    """Clean patches with one fixed noisy realization each."""

    clean: np.ndarray
    noisy: np.ndarray
    sigma: float

    @classmethod
    def make(cls, patches: np.ndarray, sigma: float, seed: int) -> "ValidationSet":
        src = NoiseSource(NoiseConfig(sigma=sigma, seed=seed), Rng(seed).derive(7))
        return cls(patches, patches + src.sample(patches.shape), sigma)


def mean_psnr(model: Model, clean: np.ndarray, noisy: np.ndarray, batch: int = 256) -> float:
    """Average per-patch PSNR of the clamped estimate against ``clean``."""
    vals = []
    for i in range(0, len(clean), batch):
        est = denoise(model, noisy[i:i + batch])
        vals += [metrics.psnr(c[0], e[0]) for c, e in zip(clean[i:i + batch], est)]
    return float(np.mean(vals))


@dataclass
class Trainer:
    model: Model
    optim: OptimConfig
    noise: NoiseSource
    state: object = None
    history: list[EpochRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.state is None:
            self.state = init_state(self.model.params(), self.optim)

    def step(self, y: np.ndarray, x: np.ndarray, lr: float | None = None) -> float:
        # overflow surfaces as a non-finite loss below, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_grad(self.model, y, x)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss {loss} at step {self.state.steps}")
            grads = clip_gradients(grads, self.optim.clip)
        sgd_step(self.model.params(), grads, self.state, self.optim, lr=lr)
        return loss

    def run_epoch(self, patches: PatchSet | np.ndarray, epoch: int, shuffle_seed: int,
                  val: ValidationSet | None = None) -> EpochRecord:
        self.state.epoch = epoch
        lr = lr_at(epoch, self.optim)
        losses, weights = [], []
        for y, x, _ in make_batches(patches, self.noise, self.optim.batch_size, shuffle_seed):
            losses.append(self.step(y, x))
            weights.append(len(x))
        train_loss = float(np.average(losses, weights=weights))
        val_psnr = mean_psnr(self.model, val.clean, val.noisy) if val is not None else math.nan
        rec = EpochRecord(epoch, lr, train_loss, val_psnr)
        self.history.append(rec)
        return rec


def fit(model: Model, patches: PatchSet | np.ndarray, noise: NoiseConfig | NoiseSource, optim: OptimConfig,
        epochs: int, seed: int, val: ValidationSet | None = None,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> Trainer:
    """Train for ``epochs`` passes; shuffling for epoch ``e`` is seeded by (seed, e)."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    source = noise if isinstance(noise, NoiseSource) else NoiseSource(noise, Rng(seed).derive(1))
    trainer = Trainer(model, optim, source)
    shuffle = Rng(seed).derive(2)
    for epoch in range(epochs):
        shuffle_seed = int(shuffle.words(1)[0] >> np.uint64(1))
        rec = trainer.run_epoch(patches, epoch, shuffle_seed, val)
        if on_epoch is not None:
            on_epoch(rec)
    return trainer
