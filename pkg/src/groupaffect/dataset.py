"""Dataset manifests: line-delimited JSON records of images and their faces.

One record per line::

    {"id": "...", "width": 640, "height": 480, "label": "Positive",
     "faces": [{"x": 10, "y": 20, "w": 40, "h": 48, "scores7": [...]}],
     "pixels_path": "imgs/a.png", "split": "train"}

``pixels_path`` and ``split`` are optional. ``pixels_path`` is resolved
relative to the manifest's directory.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from . import pngio
from .emotion import LABELS, check_scores7

SPLIT_TAGS = ("train", "holdout")


class ManifestError(ValueError):
    """A manifest line failed validation."""


@dataclass(frozen=True)
class FaceObservation:
    box_x: int
    box_y: int
    box_w: int
    box_h: int
    scores7: tuple[float, ...]

    @property
    def center(self) -> tuple[float, float]:
        return (self.box_x + self.box_w / 2.0, self.box_y + self.box_h / 2.0)

    def validate(self, width: int, height: int) -> None:
        if self.box_w <= 0 or self.box_h <= 0:
            raise ValueError(f"box size must be positive, got {self.box_w}x{self.box_h}")
        if self.box_x < 0 or self.box_y < 0 or self.box_x + self.box_w > width or self.box_y + self.box_h > height:
            raise ValueError(
                f"box ({self.box_x},{self.box_y},{self.box_w},{self.box_h}) "
                f"leaves image bounds {width}x{height}"
            )
        check_scores7(self.scores7)


@dataclass
class ImageRecord:
    id: str
    width: int
    height: int
    label: str
    faces: list[FaceObservation] = field(default_factory=list)
    split: str | None = None
    pixels_path: str | None = field(default=None, compare=False)
    pixels: np.ndarray | None = field(default=None, compare=False, repr=False)
    root: Path | None = field(default=None, compare=False, repr=False)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.split is not None and self.split not in SPLIT_TAGS:
            raise ValueError(f"unknown split tag {self.split!r}")
        for face in self.faces:
            face.validate(self.width, self.height)
        if self.pixels is not None and self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(f"pixels shape {self.pixels.shape} does not match {self.height}x{self.width}x3")

    def image(self) -> np.ndarray:
        """Raw pixels as an HxWx3 float grid in [0, 1]."""
        if self.pixels is not None:
            return self.pixels
        if self.pixels_path is None:
            raise ValueError(f"record {self.id!r} has no pixels")
        path = Path(self.pixels_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return pngio.to_unit_float(pngio.read_rgb8(path))


@dataclass
class DatasetManifest:
    records: list[ImageRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate record ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in LABELS}
        for r in self.records:
            counts[r.label] += 1
        return counts


@dataclass(frozen=True)
class SplitSpec:
    holdout_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError(f"holdout_fraction must be in (0, 1), got {self.holdout_fraction}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


# -- serialization ----------------------------------------------------------

def _face_from_json(obj: dict) -> FaceObservation:
    for key in ("x", "y", "w", "h", "scores7"):
        if key not in obj:
            raise ValueError(f"face missing field {key!r}")
    for key in ("x", "y", "w", "h"):
        if not isinstance(obj[key], int) or isinstance(obj[key], bool):
            raise ValueError(f"face field {key!r} must be an integer")
    scores = obj["scores7"]
    if not isinstance(scores, list) or len(scores) != 7:
        raise ValueError("face field 'scores7' must be a list of 7 numbers")
    try:
        check_scores7(scores)
    except ValueError as exc:
        raise ValueError(f"face field 'scores7': {exc}") from None
    return FaceObservation(obj["x"], obj["y"], obj["w"], obj["h"], tuple(float(s) for s in scores))


def _record_from_json(obj: dict, root: Path | None) -> ImageRecord:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    for key in ("id", "width", "height", "label", "faces"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    if not isinstance(obj["id"], str):
        raise ValueError("field 'id' must be a string")
    if obj["label"] not in LABELS:
        raise ValueError(f"field 'label': unknown label {obj['label']!r}")
    faces = [_face_from_json(f) for f in obj["faces"]]
    record = ImageRecord(
        id=obj["id"],
        width=obj["width"],
        height=obj["height"],
        label=obj["label"],
        faces=faces,
        split=obj.get("split"),
        pixels_path=obj.get("pixels_path"),
        root=root,
    )
    record.validate()
    return record


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(_record_from_json(obj, path.parent.resolve()))
            except (ValueError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
    try:
        return DatasetManifest(records)
    except ValueError as exc:
        raise ManifestError(f"{path}: {exc}") from None


def record_to_json(record: ImageRecord, pixels_path: str | None = None) -> dict:
    obj = {
        "id": record.id,
        "width": record.width,
        "height": record.height,
        "label": record.label,
        "faces": [
            {"x": f.box_x, "y": f.box_y, "w": f.box_w, "h": f.box_h, "scores7": list(f.scores7)}
            for f in record.faces
        ],
    }
    if pixels_path is not None:
        obj["pixels_path"] = pixels_path
    if record.split is not None:
        obj["split"] = record.split
    return obj


def save_manifest(m: DatasetManifest, path: str | Path) -> None:
    """Write ``m`` as one JSON line per record.

    In-memory pixels are written as PNGs under ``<stem>_pixels/`` next to the
    manifest; pixels already on disk keep their file, re-expressed relative
    to the new manifest location.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out_dir = path.parent.resolve()
    pixel_dir = f"{path.stem}_pixels"
    lines = []
    for r in m.records:
        r.validate()
        rel = None
        if r.pixels is not None:
            rel = f"{pixel_dir}/{r.id}.png"
            pngio.write_rgb8(pngio.quantize_unit(r.pixels), out_dir / rel)
        elif r.pixels_path is not None:
            src = Path(r.pixels_path)
            if not src.is_absolute() and r.root is not None:
                src = r.root / src
            rel = os.path.relpath(src.resolve(), out_dir)
        lines.append(json.dumps(record_to_json(r, rel), separators=(",", ":")))
    with path.open("w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


# -- splitting --------------------------------------------------------------

def holdout_count(fraction: float, n: int) -> int:
    """Round-half-up of ``fraction * n``."""
    return int(math.floor(fraction * n + 0.5))


def stratified_split(m: DatasetManifest, spec: SplitSpec) -> tuple[DatasetManifest, DatasetManifest]:
    rng = np.random.default_rng(spec.seed)
    holdout_idx: set[int] = set()
    for label in LABELS:
        members = [i for i, r in enumerate(m.records) if r.label == label]
        if not members:
            raise ValueError(f"class {label!r} has no records; cannot stratify")
        k = holdout_count(spec.holdout_fraction, len(members))
        perm = rng.permutation(len(members))
        holdout_idx.update(members[j] for j in perm[:k])
    train, holdout = [], []
    for i, r in enumerate(m.records):
        if i in holdout_idx:
            holdout.append(replace(r, split="holdout"))
        else:
            train.append(replace(r, split="train"))
    return DatasetManifest(train), DatasetManifest(holdout)


# -- synthetic data ---------------------------------------------------------

_BOOST = {
    "Positive": ((3,), (0.45, 0.75)),        # happy
    "Neutral": ((4,), (0.45, 0.75)),         # neutral
    "Negative": ((0, 1, 2, 5), (0.35, 0.7)),  # anger, disgust, fear, sad
}


def _synth_scores(rng: np.random.Generator, label: str) -> tuple[float, ...]:
    scores = rng.uniform(0.0, 0.25, size=7)
    idx, (lo, hi) = _BOOST[label]
    for i in idx:
        scores[i] += rng.uniform(lo, hi)
    return tuple(float(v) for v in np.clip(scores, 0.0, 1.0))


def synth_generate(
    n_per_class: int,
    image_size: tuple[int, int],
    faces_range: tuple[int, int],
    seed: int,
    with_pixels: bool = True,
) -> DatasetManifest:
    """Generate a labelled dataset whose class lives only in the face scores.

    ``image_size`` is (width, height). Face scores are class-conditional
    (the class's emotions are boosted); pixels are uniform noise with no
    class signal.
    """
    width, height = image_size
    lo, hi = faces_range
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if width < 1 or height < 1:
        raise ValueError("image size must be positive")
    if lo < 0 or hi < lo or hi < 1:
        raise ValueError(f"invalid faces_range {faces_range}")
    short = min(width, height)
    min_side = max(2, short // 10)
    max_side = max(min_side, short // 4)
    if min_side > short or hi * min_side * min_side > width * height:
        raise ValueError(
            f"cannot place up to {hi} faces of side >= {min_side} inside a {width}x{height} image"
        )

    rng = np.random.default_rng(seed)
    records = []
    for label in LABELS:
        for i in range(n_per_class):
            n_faces = int(rng.integers(lo, hi + 1))
            faces = []
            for _ in range(n_faces):
                w = int(rng.integers(min_side, max_side + 1))
                h = min(height, int(round(w * rng.uniform(1.0, 1.25))))
                x = int(rng.integers(0, width - w + 1))
                y = int(rng.integers(0, height - h + 1))
                faces.append(FaceObservation(x, y, w, h, _synth_scores(rng, label)))
            pixels = None
            if with_pixels:
                pixels = rng.integers(0, 256, size=(height, width, 3)).astype(np.float64) / 255.0
            records.append(
                ImageRecord(
                    id=f"synth-{label.lower()}-{i:05d}",
                    width=width,
                    height=height,
                    label=label,
                    faces=faces,
                    pixels=pixels,
                )
            )
    return DatasetManifest(records)


def iter_labels(records: Iterable[ImageRecord]) -> np.ndarray:
    return np.array([LABELS.index(r.label) for r in records], dtype=np.int64)
