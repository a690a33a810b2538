"""Additive white Gaussian noise with explicit sigma and seed policies.

Random numbers come from :class:`Rng`, a counter-based generator: the i-th
64-bit word of a stream is ``splitmix64(key + (i + 1) * GOLDEN)``, with
``key`` derived from the seed by one more splitmix64 round. Because each
word depends only on (key, i), a block of words is computed in one vectorized
numpy expression and the stream is identical on every platform. Standard
normals use the Box-Muller transform on pairs of 53-bit uniforms; the pair
(u1, u2) yields ``r*cos(t)`` then ``r*sin(t)``.

Two seed policies are supported:

``fresh``
    every patch receives a new noise draw from the running stream.
``frozen``
    one standard-normal matrix is generated from ``seed`` the first time
    noise is requested and then reused for every patch, scaled by sigma.
    This mimics re-seeding the generator before each draw.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .tensor import Shape, ShapeError, as_shape

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi

FRESH = "fresh"
FROZEN = "frozen"


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _key(seed: int, stream: int = 0) -> np.uint64:
    k = np.array([(seed * 0x9E3779B97F4A7C15 + stream * 0xD1B54A32D192ED03) & _MASK64], dtype=np.uint64)
    return _mix(k)[0]


class Rng:
    """Deterministic counter-based generator.

    >>> Rng(7).uniform(3).tolist() == Rng(7).uniform(3).tolist()
    True
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._key = _key(self.seed, self.stream)
        self.counter = 0

    def derive(self, stream: int) -> "Rng":
        """Independent stream for worker ``stream`` with the same seed."""
        return Rng(self.seed, self.stream * 1_000_003 + stream + 1)

    def words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix(self._key + idx * GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) with 53 random bits each."""
        return (self.words(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)

    def normal(self, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))  # 1 - u in (0, 1]
        t = _TWO_PI * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(t)
        z[1::2] = r * np.sin(t)
        return z[:n].reshape(shape)

    def gaussian(self) -> float:
        return float(self.normal(1)[0])

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.words(n), kind="stable")


@dataclass(frozen=True)
class NoiseConfig:
    """Sigma on the 0-255 scale, fixed (``sigma``) or a uniform range."""

    sigma: float = 50.0
    sigma_hi: float | None = None
    seed_policy: str = FRESH
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma_hi is not None and self.sigma_hi < self.sigma:
            raise ValueError("sigma range must satisfy lo <= hi")
        if self.seed_policy not in (FRESH, FROZEN):
            raise ValueError(f"seed_policy must be 'fresh' or 'frozen', got {self.seed_policy!r}")

    @classmethod
    def fixed(cls, sigma: float, **kw) -> "NoiseConfig":
        return cls(sigma=sigma, **kw)

    @classmethod
    def blind(cls, lo: float, hi: float, **kw) -> "NoiseConfig":
        return cls(sigma=lo, sigma_hi=hi, **kw)

    @property
    def is_range(self) -> bool:
        return self.sigma_hi is not None


class NoiseSource:
    """Draws noise for one configuration; owns the frozen-matrix cache."""

    def __init__(self, cfg: NoiseConfig, rng: Rng | None = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else Rng(cfg.seed)
        self._frozen: np.ndarray | None = None

    @property
    def frozen_matrix(self) -> np.ndarray | None:
        return self._frozen

    def draw_sigma(self) -> float:
        cfg = self.cfg
        if not cfg.is_range:
            return float(cfg.sigma)
        return float(cfg.sigma + (cfg.sigma_hi - cfg.sigma) * self.rng.uniform(1)[0])

    def unit_noise(self, shape: Shape) -> np.ndarray:
        if self.cfg.seed_policy == FRESH:
            return self.rng.normal(shape)
        if self._frozen is None:
            z = Rng(self.cfg.seed).normal(shape)
            z.setflags(write=False)
            self._frozen = z
        elif self._frozen.shape != tuple(shape):
            raise ShapeError(f"frozen noise matrix has shape {self._frozen.shape}, requested {tuple(shape)}")
        return self._frozen

    def sample(self, shape, sigma: float | None = None) -> np.ndarray:
        """Noise tensor of ``shape`` on the internal [0, 1] scale."""
        shape = as_shape(shape)
        s = self.draw_sigma() if sigma is None else sigma
        z = self.unit_noise(shape)
        if s == 0:
            return np.zeros(shape)
        return z * (s / 255.0)

    def corrupt(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        """Return ``(x + noise, sigma_used)``; the result is not clipped."""
        s = self.draw_sigma()
        return x + self.sample(x.shape, s), s


def sample_noise(shape, cfg: NoiseConfig, source: NoiseSource | None = None) -> np.ndarray:
    return (source or NoiseSource(cfg)).sample(shape)


def corrupt(x: np.ndarray, cfg: NoiseConfig, source: NoiseSource | None = None):
    return (source or NoiseSource(cfg)).corrupt(x)


def digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype=np.float64).tobytes()).hexdigest()
