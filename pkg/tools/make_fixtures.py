"""Regenerate the two 64x64 grayscale fixture images in src/winnet/fixtures."""
from pathlib import Path

import numpy as np

from winnet.data import save_image
from winnet.noise import Rng

N = 64
OUT = Path(__file__).resolve().parents[1] / "src" / "winnet" / "fixtures"


def smooth_texture(rng: Rng, passes: int) -> np.ndarray:
    t = rng.normal((N, N))
    k = np.array([1, 4, 6, 4, 1], dtype=float) / 16
    for _ in range(passes):
        t = np.apply_along_axis(lambda r: np.convolve(np.pad(r, 2, mode="wrap"), k, "valid"), 0, t)
        t = np.apply_along_axis(lambda r: np.convolve(np.pad(r, 2, mode="wrap"), k, "valid"), 1, t)
    return (t - t.mean()) / t.std()


def scene_a() -> np.ndarray:
    yy, xx = np.mgrid[0:N, 0:N] / (N - 1)
    img = 0.25 + 0.35 * xx + 0.05 * smooth_texture(Rng(11), 4)
    disc = (yy - 0.4) ** 2 + (xx - 0.6) ** 2 < 0.06
    img[disc] = 0.85 + 0.04 * smooth_texture(Rng(12), 2)[disc]
    img[40:52, 8:30] = 0.12
    return np.clip(img, 0, 1)


def scene_b() -> np.ndarray:
    yy, xx = np.mgrid[0:N, 0:N] / (N - 1)
    img = 0.55 - 0.2 * yy + 0.08 * np.sin(2 * np.pi * 5 * xx) + 0.06 * smooth_texture(Rng(21), 3)
    img[(np.abs(xx - yy) < 0.08)] = 0.3
    img[10:22, 40:58] = 0.95
    return np.clip(img, 0, 1)


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    save_image(scene_a(), OUT / "scene_a.pgm")
    save_image(scene_b(), OUT / "scene_b.pgm")
    print("wrote", sorted(p.name for p in OUT.iterdir()))
