"""Resizing and on-the-fly augmentation for HxWxC tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RESCALE = 0.01
ROTATION_RANGE = 40.0
SHIFT_RANGE = 0.2
SHEAR_RANGE = 0.2
ZOOM_RANGE = 0.2


def resize(t: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3 or t.shape[0] == 0 or t.shape[1] == 0:
        raise ValueError(f"expected non-empty HxWxC tensor, got shape {t.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be >= 1, got {out_h}x{out_w}")
    in_h, in_w = t.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return t.copy()

    def axis_weights(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis_weights(in_h, out_h)
    x0, x1, wx = axis_weights(in_w, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = t[y0][:, x0] * (1 - wx) + t[y0][:, x1] * wx
    bottom = t[y1][:, x0] * (1 - wx) + t[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float = 0.0
    shift_x_frac: float = 0.0
    shift_y_frac: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0
    hflip: bool = False
    rescale: float = RESCALE

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls()


def sample_augment(rng: np.random.Generator, rotation_range: float = ROTATION_RANGE) -> AugmentParams:
    # draw order is fixed; changing it changes every seeded run
    return AugmentParams(
        rotation_deg=float(rng.uniform(-rotation_range, rotation_range)),
        shift_x_frac=float(rng.uniform(-SHIFT_RANGE, SHIFT_RANGE)),
        shift_y_frac=float(rng.uniform(-SHIFT_RANGE, SHIFT_RANGE)),
        shear=float(rng.uniform(-SHEAR_RANGE, SHEAR_RANGE)),
        zoom=float(rng.uniform(1.0 - ZOOM_RANGE, 1.0 + ZOOM_RANGE)),
        hflip=bool(rng.random() < 0.5),
    )


def affine_matrix(p: AugmentParams, height: int, width: int) -> np.ndarray:
    """Forward 2x3 map from source (x, y) to output (x, y), in pixel indices.

    Applied about the pixel-grid centre in the order rotation, shear, zoom,
    then shift. Positive rotation is counter-clockwise as displayed.
    """
    theta = math.radians(p.rotation_deg)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, s], [-s, c]])
    shear = np.array([[1.0, -math.sin(p.shear)], [0.0, math.cos(p.shear)]])
    zoom = np.array([[p.zoom, 0.0], [0.0, p.zoom]])
    lin = zoom @ shear @ rot
    center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    shift = np.array([p.shift_x_frac * width, p.shift_y_frac * height])
    offset = center + shift - lin @ center
    return np.hstack([lin, offset[:, None]])


def apply_geometric(t: np.ndarray, p: AugmentParams) -> np.ndarray:
    """Affine warp with nearest sampling and edge-replicating fill, then flip."""
    t = np.asarray(t)
    h, w = t.shape[:2]
    fwd = affine_matrix(p, h, w)
    inv_lin = np.linalg.inv(fwd[:, :2])
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    qx = xs - fwd[0, 2]
    qy = ys - fwd[1, 2]
    sx = inv_lin[0, 0] * qx + inv_lin[0, 1] * qy
    sy = inv_lin[1, 0] * qx + inv_lin[1, 1] * qy
    # round before clipping so the 1e-16 residue of cos(90deg) cannot move an index
    ix = np.clip(np.rint(np.round(sx, 9)).astype(np.int64), 0, w - 1)
    iy = np.clip(np.rint(np.round(sy, 9)).astype(np.int64), 0, h - 1)
    out = t[iy, ix]
    if p.hflip:
        out = out[:, ::-1]
    return out


def apply_augment(t: np.ndarray, p: AugmentParams) -> np.ndarray:
    return apply_geometric(t, p) * p.rescale
