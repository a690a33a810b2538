"""Grayscale image I/O, patch extraction, augmentation and batching.

Binary PGM (P5, maxval <= 255) is read and written by hand so fixtures stay
byte-stable; 8-bit PNG goes through Pillow. Pixels are float64 in [0, 1].
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .noise import NoiseConfig, NoiseSource, Rng

IMAGE_SUFFIXES = (".pgm", ".png")
LUMA = (0.299, 0.587, 0.114)


class ImageError(IOError):
    """Unreadable, truncated or unsupported image file."""


@dataclass
class Image:
    pixels: np.ndarray  # (h, w) float64 in [0, 1]
    source_path: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {self.pixels.shape}")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 1):
            raise ValueError("image pixels must lie in [0, 1]")

    @property
    def h(self) -> int:
        return self.pixels.shape[0]

    @property
    def w(self) -> int:
        return self.pixels.shape[1]

    def as_tensor(self) -> np.ndarray:
        return self.pixels[None, None].copy()


_PGM_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def _read_pgm(raw: bytes, path) -> np.ndarray:
    m = _PGM_HEADER.match(raw)
    if m is None:
        raise ImageError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval > 255 or maxval < 1:
        raise ImageError(f"{path}: unsupported PGM maxval {maxval} (8-bit only)")
    body = raw[m.end():]
    if len(body) < w * h:
        raise ImageError(f"{path}: truncated PGM, expected {w * h} bytes, got {len(body)}")
    return np.frombuffer(body[:w * h], dtype=np.uint8).reshape(h, w)


def _read_png(path) -> np.ndarray:
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I", "F"):
                raise ImageError(f"{path}: unsupported bit depth (mode {mode}); 8-bit images only")
            if mode == "L":
                return np.asarray(im, dtype=np.uint8)
            if mode == "LA":
                return np.asarray(im, dtype=np.uint8)[..., 0]
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    except ImageError:
        raise
    except (OSError, ValueError, SyntaxError) as e:
        raise ImageError(f"{path}: {e}") from e
    return rgb @ np.array(LUMA)


def load_image(path) -> Image:
    """Read an 8-bit grayscale PGM or PNG (color PNG is converted by luma)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ImageError(f"{path}: {e}") from e
    if raw[:2] == b"P5":
        data = _read_pgm(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        data = _read_png(path)
    else:
        raise ImageError(f"{path}: unrecognized image format")
    return Image(np.asarray(data, dtype=np.float64) / 255.0, str(path))


def to_bytes(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(np.asarray(pixels) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_image(img: Image | np.ndarray, path) -> None:
    """Write as PGM or PNG depending on the suffix; values are rounded to bytes."""
    pixels = img.pixels if isinstance(img, Image) else np.asarray(img)
    data = to_bytes(pixels)
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(data).save(path)
    else:
        h, w = data.shape
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + data.tobytes())


def list_images(folder) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise ImageError(f"{folder}: not a directory")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_dataset(source) -> list[Image]:
    """A folder (sorted file names) or a single image file."""
    source = Path(source)
    paths = list_images(source) if source.is_dir() else [source]
    return [load_image(p) for p in paths]


@dataclass
class PatchSet:
    patches: np.ndarray  # (count, 1, size, size)
    offsets: list[tuple[int, int, int]]  # (image index, row, col)
    size: int
    stride: int

    def __len__(self) -> int:
        return len(self.patches)


def patch_count(h: int, w: int, size: int, stride: int) -> int:
    return ((h - size) // stride + 1) * ((w - size) // stride + 1)


def extract_patches(img: Image | np.ndarray, size: int, stride: int, image_index: int = 0) -> PatchSet:
    """Crop ``size`` x ``size`` patches on a grid anchored at (0, 0)."""
    pixels = img.pixels if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    if size < 1 or stride < 1:
        raise ValueError("patch size and stride must be >= 1")
    h, w = pixels.shape
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} is smaller than the {size}x{size} patch")
    rows = range(0, h - size + 1, stride)
    cols = range(0, w - size + 1, stride)
    offsets = [(image_index, r, c) for r in rows for c in cols]
    patches = np.stack([pixels[r:r + size, c:c + size] for _, r, c in offsets])[:, None]
    return PatchSet(patches, offsets, size, stride)


def patches_from_images(images: list[Image], size: int, stride: int, augment_images: bool = False) -> PatchSet:
    sets = []
    idx = 0
    for img in images:
        for variant in (augment(img) if augment_images else [img]):
            if variant.h >= size and variant.w >= size:
                sets.append(extract_patches(variant, size, stride, idx))
            idx += 1
    if not sets:
        raise ValueError("no image is large enough for the requested patch size")
    return PatchSet(np.concatenate([s.patches for s in sets]), [o for s in sets for o in s.offsets], size, stride)


def augment(img: Image) -> list[Image]:
    """Four rotations, each with and without a horizontal flip (8 images)."""
    out = []
    for k in range(4):
        rot = np.rot90(img.pixels, k)
        out.append(Image(rot.copy(), img.source_path))
        out.append(Image(rot[:, ::-1].copy(), img.source_path))
    return out


def make_batches(patches: PatchSet | np.ndarray, cfg: NoiseConfig | NoiseSource, batch_size: int,
                 shuffle_seed: int | None) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(y_batch, x_batch, sigmas)`` over one shuffled pass.

    ``cfg`` may be a NoiseSource so noise streams (and the frozen matrix)
    persist across epochs. ``shuffle_seed=None`` keeps the original order.
    The last batch may be short.
    """
    data = patches.patches if isinstance(patches, PatchSet) else np.asarray(patches)
    if len(data) == 0:
        raise ValueError("empty patch set")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    source = cfg if isinstance(cfg, NoiseSource) else NoiseSource(cfg)
    order = np.arange(len(data)) if shuffle_seed is None else Rng(shuffle_seed).permutation(len(data))
    for start in range(0, len(data), batch_size):
        x = data[order[start:start + batch_size]]
        y = np.empty_like(x)
        sigmas = np.empty(len(x))
        for i in range(len(x)):
            y[i:i + 1], sigmas[i] = source.corrupt(x[i:i + 1])
        yield y, x, sigmas
