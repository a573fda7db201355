"""Thin PNG helpers over Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def write_rgb8(pixels: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 uint8 array, got {arr.dtype} {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


def read_rgb8(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def to_unit_float(pixels8: np.ndarray) -> np.ndarray:
    return pixels8.astype(np.float64) / 255.0


def quantize_unit(pixels: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 with round-half-up."""
    return np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
