"""PSNR, SSIM and 256-bin intensity histograms, plus report writers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pixels(img) -> np.ndarray:
    a = getattr(img, "pixels", img)
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(a.shape[-2:]) if a.ndim > 2 else a


def _same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dims differ: {a.shape} vs {b.shape}")


def psnr(a, b, data_range: float = 1.0) -> float:
    """10*log10(MAX^2 / MSE) in dB; identical images give ``inf``."""
    a, b = _pixels(a), _pixels(b)
    _same_dims(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(a: np.ndarray, window: np.ndarray) -> np.ndarray:
    return np.einsum("ijkl,kl->ij", sliding_window_view(a, window.shape), window)


def ssim_map(a, b, data_range: float = 1.0, window: np.ndarray | None = None) -> np.ndarray:
    """Local SSIM at every fully-inside window position."""
    a, b = _pixels(a), _pixels(b)
    _same_dims(a, b)
    win = gaussian_window() if window is None else window
    if a.shape[0] < win.shape[0] or a.shape[1] < win.shape[1]:
        raise ValueError(f"image {a.shape} is smaller than the {win.shape} SSIM window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a * mu_a
    var_b = _filter_valid(b * b, win) - mu_b * mu_b
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, data_range: float = 1.0) -> float:
    return float(np.mean(ssim_map(a, b, data_range)))


@dataclass
class Histogram:
    bins: np.ndarray
    total: int

    def normalized(self) -> np.ndarray:
        return self.bins / self.total


def histogram(img) -> Histogram:
    """256 bins; value v falls in bin floor(255*v + 0.5), clipped to [0, 255]."""
    a = _pixels(img).ravel()
    idx = np.clip(np.floor(a * 255.0 + 0.5), 0, 255).astype(np.int64)
    return Histogram(np.bincount(idx, minlength=256), int(a.size))


def histogram_distance(h1: Histogram, h2: Histogram) -> float:
    """L1 distance between normalized histograms, in [0, 2]."""
    return float(np.sum(np.abs(h1.normalized() - h2.normalized())))


@dataclass
class QualityRecord:
    path: str
    sigma: float
    psnr_db: float
    ssim: float


@dataclass
class QualityReport:
    records: list[QualityRecord] = field(default_factory=list)

    def add(self, path: str, sigma: float, clean, estimate) -> QualityRecord:
        rec = QualityRecord(path, float(sigma), psnr(clean, estimate), ssim(clean, estimate))
        self.records.append(rec)
        return rec

    def sigmas(self) -> list[float]:
        return sorted({r.sigma for r in self.records})

    def average(self, sigma: float | None = None) -> tuple[float, float]:
        """Mean of per-image PSNR and SSIM (optionally at one sigma)."""
        rs = [r for r in self.records if sigma is None or r.sigma == sigma]
        if not rs:
            return math.nan, math.nan
        return float(np.mean([r.psnr_db for r in rs])), float(np.mean([r.ssim for r in rs]))

    def lines(self) -> list[str]:
        """One record per image: ``path sigma psnr ssim``."""
        return [f"{r.path}\t{fmt_sigma(r.sigma)}\t{fmt_db(r.psnr_db)}\t{r.ssim:.6f}" for r in self.records]

    def table(self, title: str = "PSNR (dB) / SSIM") -> str:
        sigmas = self.sigmas()
        paths = list(dict.fromkeys(r.path for r in self.records))
        cells = {(r.path, r.sigma): f"{fmt_db(r.psnr_db, 2)}/{r.ssim:.4f}" for r in self.records}
        head = ["image"] + [f"sigma={fmt_sigma(s)}" for s in sigmas]
        rows = [[_basename(p)] + [cells.get((p, s), "-") for s in sigmas] for p in paths]
        avg = ["average"]
        for s in sigmas:
            p_, s_ = self.average(s)
            avg.append(f"{fmt_db(p_, 2)}/{s_:.4f}")
        rows.append(avg)
        return format_table(head, rows, title)


def _basename(p: str) -> str:
    return p.rsplit("/", 1)[-1]


def fmt_sigma(s: float) -> str:
    return f"{s:g}"


def fmt_db(v: float, digits: int = 4) -> str:
    return "inf" if math.isinf(v) else f"{v:.{digits}f}"


def format_table(head: list[str], rows: list[list[str]], title: str = "") -> str:
    widths = [max(len(str(r[i])) for r in [head] + rows) for i in range(len(head))]
    out = [title] if title else []
    out.append("  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip())
    out.append("  ".join("-" * w for w in widths))
    out += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(out) + "\n"
