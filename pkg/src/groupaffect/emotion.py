"""Face-level emotion scores and their mapping onto the three group classes.

Two distinct 7 -> 3 mappings live here on purpose. ``to_affect_triple``
feeds the heatmaps and drops Surprise; ``baseline_categorize`` feeds the
averaging baseline and folds Surprise into Negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

EMOTIONS = ("anger", "disgust", "fear", "happy", "neutral", "sad", "surprise")
LABELS = ("Positive", "Neutral", "Negative")

ANGER, DISGUST, FEAR, HAPPY, NEUTRAL, SAD, SURPRISE = range(7)

_BASELINE_CATEGORY = {
    ANGER: "Negative",
    DISGUST: "Negative",
    FEAR: "Negative",
    HAPPY: "Positive",
    NEUTRAL: "Neutral",
    SAD: "Negative",
    SURPRISE: "Negative",
}


def label_index(label: str) -> int:
    try:
        return LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown label {label!r}; expected one of {LABELS}") from None


def check_scores7(scores: Sequence[float]) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != (7,):
        raise ValueError(f"expected 7 emotion scores, got shape {s.shape}")
    if not np.all(np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError(f"emotion scores must lie in [0, 1], got {s.tolist()}")
    return s


@dataclass(frozen=True)
class AffectTriple:
    negative: float
    neutral: float
    positive: float

    def as_rgb(self) -> np.ndarray:
        """Channel order used by the heatmaps: R=negative, G=neutral, B=positive."""
        return np.array([self.negative, self.neutral, self.positive], dtype=np.float64)


def average_ensemble(member_scores: Sequence[Sequence[float]]) -> np.ndarray:
    """Componentwise mean of the per-model score vectors for one face."""
    if len(member_scores) == 0:
        raise ValueError("average_ensemble needs at least one member")
    stacked = np.stack([check_scores7(s) for s in member_scores])
    return stacked.mean(axis=0)


def to_affect_triple(scores: Sequence[float]) -> AffectTriple:
    s = check_scores7(scores)
    negative = (s[ANGER] + s[DISGUST] + s[FEAR] + s[SAD]) / 4.0
    return AffectTriple(negative=float(negative), neutral=float(s[NEUTRAL]), positive=float(s[HAPPY]))


def baseline_categorize(scores: Sequence[float]) -> str:
    # np.argmax returns the first maximal index, which is the documented tie rule
    s = check_scores7(scores)
    return _BASELINE_CATEGORY[int(np.argmax(s))]
