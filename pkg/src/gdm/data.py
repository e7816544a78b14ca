"""Desk-scale datasets and 8-bit image I/O."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")
FACTOR_NAMES = ("background", "blob_x", "blob_y", "blob_radius")


@dataclass(frozen=True, eq=False)
class Dataset:
    """``samples`` is (n, d) with values in [-1, 1]; ``dims`` is (h, w) or (2,)."""

    dims: tuple
    samples: np.ndarray
    factor_labels: np.ndarray | None = None
    skipped: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] != int(np.prod(self.dims)):
            raise ValueError(f"samples must be (n>=1, {int(np.prod(self.dims))}), got {s.shape}")
        if not np.all(np.isfinite(s)) or np.abs(s).max() > 1.5:
            raise ValueError("samples must be finite and within [-1.5, 1.5]")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


def gaussian_mixture_2d(modes: int = 8, radius: float = 0.8, sigma: float = 0.05, n: int = 10000, seed: int = 0) -> Dataset:
    """Isotropic Gaussians centred evenly on a circle; labels hold the mode index."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if modes < 1 or sigma <= 0:
        raise ValueError("need modes >= 1 and sigma > 0")
    rng = np.random.default_rng(seed)
    label = rng.integers(0, modes, size=n)
    pts = mixture_centers(modes, radius)[label] + sigma * rng.standard_normal((n, 2))
    return Dataset((2,), pts, factor_labels=label[:, None].astype(np.float64))


def mixture_centers(modes: int, radius: float) -> np.ndarray:
    ang = 2 * np.pi * np.arange(modes) / modes
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def render_factors(labels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Draw one soft-edged bright disc per row of factors in [0, 1].

    Factors are (background, blob x, blob y, blob radius). The background
    level runs from -1 (factor 0) to 0 (factor 1); the disc is +1 at its
    centre. Returns (n, height * width) row-major images.
    """
    f = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    bg = -1.0 + f[:, 0:1]
    cx = f[:, 1:2] * (width - 1)
    cy = f[:, 2:3] * (height - 1)
    r = (0.125 + 0.125 * f[:, 3:4]) * min(height, width)
    rows, cols = np.divmod(np.arange(height * width), width)
    dist = np.sqrt((cols[None, :] - cx) ** 2 + (rows[None, :] - cy) ** 2)
    disc = 0.5 * (1.0 + np.tanh((r - dist) / 0.75))
    return bg + (1.0 - bg) * disc


def synthetic_factors(height: int = 16, width: int = 16, n: int = 4096, seed: int = 0, fixed: dict | None = None) -> Dataset:
    """Images rendered from four uniform factors; ``fixed`` pins factors by name."""
    if height != width or height not in (8, 16, 32):
        raise ValueError("synthetic images must be square with side 8, 16 or 32")
    rng = np.random.default_rng(seed)
    labels = rng.random((n, len(FACTOR_NAMES)))
    for name, value in (fixed or {}).items():
        labels[:, FACTOR_NAMES.index(name)] = value
    return Dataset((height, width), render_factors(labels, height, width), factor_labels=labels)


def to_uint8(x) -> np.ndarray:
    return np.clip(np.rint((np.asarray(x) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_uint8(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64) / 127.5 - 1.0


def read_image(path) -> np.ndarray:
    """Luma (0.299, 0.587, 0.114) of a PGM/PPM file as floats in [0, 255]."""
    with Image.open(path) as im:
        im.load()
        if im.mode in ("RGB", "RGBA", "P"):
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            return rgb @ np.array([0.299, 0.587, 0.114])
        return np.asarray(im.convert("L"), dtype=np.float64)


def write_image(path, img: np.ndarray) -> None:
    """Write a [-1, 1] image as 8-bit PGM (2D array) or PPM (h, w, 3)."""
    Image.fromarray(to_uint8(img)).save(path, format="PPM")


def center_crop_downsample(img: np.ndarray, target) -> np.ndarray:
    th, tw = target
    h, w = img.shape
    side = min(h, w)
    if side < max(th, tw):
        raise ValueError(f"image {h}x{w} is smaller than target {th}x{tw}")
    top, left = (h - side) // 2, (w - side) // 2
    crop = img[top : top + side, left : left + side]
    if side % th == 0 and side % tw == 0:
        return crop.reshape(th, side // th, tw, side // tw).mean(axis=(1, 3))
    with Image.fromarray(crop.astype(np.float32), mode="F") as im:
        return np.asarray(im.resize((tw, th), Image.BOX), dtype=np.float64)


def load_image_dir(path, target=(16, 16)) -> Dataset:
    """Grayscale, square-cropped, box-downsampled images from a PGM/PPM directory."""
    root = Path(path)
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if root.is_dir() else []
    if not files:
        raise ValueError(f"{root}: no PGM/PPM images found")
    out, skipped = [], 0
    for p in files:
        try:
            img = read_image(p)
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", p, exc)
            skipped += 1
            continue
        out.append(center_crop_downsample(img, target).ravel())
    if not out:
        raise ValueError(f"{root}: none of {len(files)} images could be read")
    samples = from_uint8(np.stack(out))
    return Dataset(tuple(target), samples, skipped=skipped)


def save_dataset(path, ds: Dataset) -> None:
    """Raw float64 block at ``path`` with a ``.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ds.samples.astype("<f8").tobytes())
    meta = {"dims": list(ds.dims), "n": ds.n, "d": ds.d}
    if ds.factor_labels is not None:
        meta["factor_labels"] = ds.factor_labels.tolist()
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    samples = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(meta["n"], meta["d"])
    labels = meta.get("factor_labels")
    return Dataset(tuple(meta["dims"]), samples.copy(), None if labels is None else np.asarray(labels))


def dataset_from_dict(doc: dict) -> Dataset:
    """Build a dataset from a config block such as ``{"kind": "mixture2d", ...}``."""
    doc = dict(doc)
    kind = doc.pop("kind")
    if kind == "mixture2d":
        return gaussian_mixture_2d(**doc)
    if kind == "synthetic":
        return synthetic_factors(**doc)
    if kind == "image_dir":
        return load_image_dir(doc["path"], tuple(doc.get("target", (16, 16))))
    if kind == "cache":
        return load_dataset(doc["path"])
    raise ValueError(f"unknown dataset kind {kind!r}")
