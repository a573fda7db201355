"""Emotion-intensity heatmaps.

Each face contributes an image-sized field per affect channel, centred on
its bounding box. Fields use one of three kernels:

* linear: ``I0 / d`` with ``d`` a city-block distance scaled by 0.1
  (``I0`` where ``d == 0``);
* gaussian: ``I0 * exp(-4 ln2 * 0.1 * dist^2 / r)`` with ``r`` the face
  radius. Note the exponent divides by ``r``, not ``r**2``; this is kept
  as-is even though it is not the textbook FWHM form;
* normalized: the gaussian divided by ``0.01 * |face_center - image_center|``,
  floored at ``NORMALIZED_EPS``.

Pixel ``(x, y)`` is the integer column/row index; the image centre is
``(W/2, H/2)`` and a face centre is the box centre, both in that frame.
Channels are R=negative, G=neutral, B=positive. Faces are summed in input
order and the result is left unclamped.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pngio
from .dataset import FaceObservation, ImageRecord
from .emotion import AffectTriple, to_affect_triple

LINEAR_SCALE = 0.1
GAUSS_SCALE = 0.1
CENTER_SCALE = 0.01
NORMALIZED_EPS = 0.01

HMAP_MAGIC = b"HMAP1"


class KernelKind(str, enum.Enum):
    LINEAR = "linear"
    GAUSSIAN = "gaussian"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class FaceGeometry:
    cx: float
    cy: float
    r: float

    def __post_init__(self) -> None:
        if not self.r > 0:
            raise ValueError(f"face radius must be positive, got {self.r}")

    @classmethod
    def from_face(cls, face: FaceObservation) -> "FaceGeometry":
        cx, cy = face.center
        return cls(cx, cy, face_radius(face.box_w, face.box_h))


def face_radius(box_w: float, box_h: float) -> float:
    """Half the bounding-box diagonal."""
    if box_w <= 0 or box_h <= 0:
        raise ValueError(f"box dimensions must be positive, got {box_w}x{box_h}")
    return math.hypot(box_w, box_h) / 2.0


# Scalar kernels. They also broadcast over numpy arrays for x/y, which is how
# render_face uses them.

def linear_intensity(i0, center, point):
    x0, y0 = center
    x, y = point
    d = LINEAR_SCALE * (np.abs(x - x0) + np.abs(y - y0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(d == 0, i0, i0 / np.where(d == 0, 1.0, d))
    return float(out) if np.ndim(out) == 0 else out


def gaussian_intensity(i0, center, r, point):
    x0, y0 = center
    x, y = point
    sq = (x - x0) ** 2 + (y - y0) ** 2
    out = i0 * np.exp(-4.0 * math.log(2.0) * GAUSS_SCALE * sq / r)
    return float(out) if np.ndim(out) == 0 else out


def center_distance(face_center, image_center):
    xf, yf = face_center
    xc, yc = image_center
    out = CENTER_SCALE * np.sqrt((xf - xc) ** 2 + (yf - yc) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def normalized_gaussian_intensity(i0, face_center, r, image_center, point):
    divisor = np.maximum(center_distance(face_center, image_center), NORMALIZED_EPS)
    out = gaussian_intensity(i0, face_center, r, point) / divisor
    return float(out) if np.ndim(out) == 0 else out


def image_center(image_size: tuple[int, int]) -> tuple[float, float]:
    h, w = image_size
    return (w / 2.0, h / 2.0)


def _unit_field(geom: FaceGeometry, kind: KernelKind, image_size, center) -> np.ndarray:
    h, w = image_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    kind = KernelKind(kind)
    if kind is KernelKind.LINEAR:
        return linear_intensity(1.0, (geom.cx, geom.cy), (xs, ys))
    if kind is KernelKind.GAUSSIAN:
        return gaussian_intensity(1.0, (geom.cx, geom.cy), geom.r, (xs, ys))
    return normalized_gaussian_intensity(1.0, (geom.cx, geom.cy), geom.r, center, (xs, ys))


def render_face(
    triple: AffectTriple,
    geom: FaceGeometry,
    kind: KernelKind,
    image_size: tuple[int, int],
    center: tuple[float, float] | None = None,
) -> np.ndarray:
    """HxWx3 field of one face, full-image support."""
    h, w = image_size
    if h < 1 or w < 1:
        raise ValueError(f"image size must be >= 1, got {image_size}")
    if center is None:
        center = image_center(image_size)
    # every kernel is linear in I0, so one unit field scales into all channels
    unit = _unit_field(geom, kind, image_size, center)
    return unit[:, :, None] * triple.as_rgb()[None, None, :]


def compose(
    faces: Sequence[tuple[AffectTriple, FaceGeometry]],
    kind: KernelKind,
    image_size: tuple[int, int],
    center: tuple[float, float] | None = None,
) -> np.ndarray:
    h, w = image_size
    out = np.zeros((h, w, 3), dtype=np.float64)
    for triple, geom in faces:
        out += render_face(triple, geom, kind, image_size, center)
    return out


def record_heatmap(record: ImageRecord, kind: KernelKind) -> np.ndarray:
    faces = [(to_affect_triple(f.scores7), FaceGeometry.from_face(f)) for f in record.faces]
    return compose(faces, kind, (record.height, record.width))


# -- export -----------------------------------------------------------------

def to_display(t: np.ndarray) -> np.ndarray:
    """Scale by 255 / global max, clamp to [0, 255]. Zero input stays zero."""
    t = np.asarray(t, dtype=np.float64)
    peak = float(t.max()) if t.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(t)
    return np.clip(t * (255.0 / peak), 0.0, 255.0)


def export_png(t: np.ndarray, path: str | Path) -> None:
    """8-bit PNG: global max-normalization, clamp, round half up."""
    scaled = to_display(t)
    pngio.write_rgb8(np.floor(scaled + 0.5).astype(np.uint8), path)


def write_tensor(t: np.ndarray, path: str | Path) -> None:
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[2] != 3:
        raise ValueError(f"expected HxWx3 tensor, got shape {t.shape}")
    h, w, _ = t.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(HMAP_MAGIC)
        f.write(struct.pack("<II", h, w))
        f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:5] != HMAP_MAGIC:
        raise ValueError(f"{path}: not a heatmap tensor file")
    h, w = struct.unpack("<II", data[5:13])
    body = data[13:]
    if len(body) != h * w * 3 * 4:
        raise ValueError(f"{path}: expected {h * w * 3 * 4} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, 3).astype(np.float64)
