"""Weighted sum-rule fusion of the two modality scores and the decision rule.

The fused score is (alpha * face + beta * palm) / 2 with weights normalized
so alpha + beta = 2; equal weighting is then alpha = beta = 1 and two
perfect scores fuse to exactly 1. Weights are derived from per-modality
equal error rates (more accurate trait, larger weight), and the verdict
compares the fused score against a threshold, boundary inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FuseIdError

#: A perfect (zero) EER is clamped to this before inversion.
EER_FLOOR = 1e-4

_WEIGHT_SUM_TOL = 1e-9


class Verdict(str, Enum):
    GENUINE = "genuine"
    IMPOSTOR = "impostor"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ModalityErrorStats:
    """Tuning-split error summary for one modality: its equal error rate."""

    eer: float

    def __post_init__(self):
        if not math.isfinite(self.eer) or not 0.0 <= self.eer <= 0.5:
            raise ValueError(f"EER must lie in [0, 0.5], got {self.eer}")


@dataclass(frozen=True)
class FusionWeights:
    """Normalized weights (alpha + beta = 2) plus a flag marking EER clamping."""

    alpha: float
    beta: float
    clamped: bool = False


@dataclass(frozen=True)
class FusionPolicy:
    """Fusion weights and decision threshold.

    Weights must already satisfy alpha + beta = 2 (use
    :meth:`from_raw_weights` to normalize arbitrary nonnegative weights);
    keeping construction non-mutating makes persistence round-trips
    bit-exact.
    """

    alpha: float
    beta: float
    threshold: float

    def __post_init__(self):
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError(f"weights must be nonnegative, got ({self.alpha}, {self.beta})")
        if abs(self.alpha + self.beta - 2.0) > _WEIGHT_SUM_TOL:
            raise ValueError(
                f"weights must sum to 2, got {self.alpha} + {self.beta} = {self.alpha + self.beta}"
            )
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")

    @classmethod
    def from_raw_weights(cls, alpha: float, beta: float, threshold: float) -> "FusionPolicy":
        """Normalize any nonnegative weight pair to sum 2 and build a policy."""
        if alpha < 0.0 or beta < 0.0 or alpha + beta <= 0.0:
            raise ValueError(f"raw weights must be nonnegative with a positive sum, got ({alpha}, {beta})")
        a = 2.0 * alpha / (alpha + beta)
        return cls(alpha=a, beta=2.0 - a, threshold=threshold)


@dataclass(frozen=True)
class Decision:
    """Outcome of one verification: verdict plus the scores that produced it."""

    verdict: Verdict
    fused_score: float
    face_score: float | None
    palm_score: float | None
    policy: FusionPolicy


def compute_weights(
    face_stats: ModalityErrorStats,
    palm_stats: ModalityErrorStats,
    *,
    eer_floor: float = EER_FLOOR,
) -> FusionWeights:
    """Inverse-EER weights, normalized to alpha + beta = 2.

    A modality with a lower EER gets the larger weight; scaling both EERs
    by the same factor leaves the weights unchanged. A zero EER is clamped
    to ``eer_floor`` before inversion and flagged in the result.
    """
    clamped = face_stats.eer == 0.0 or palm_stats.eer == 0.0
    face_eer = max(face_stats.eer, eer_floor)
    palm_eer = max(palm_stats.eer, eer_floor)
    w_face = 1.0 / face_eer
    w_palm = 1.0 / palm_eer
    alpha = 2.0 * w_face / (w_face + w_palm)
    return FusionWeights(alpha=alpha, beta=2.0 - alpha, clamped=clamped)


def fuse(ms_face: float, ms_palm: float, policy: FusionPolicy) -> float:
    """Weighted sum of the two matching scores: (alpha*face + beta*palm) / 2."""
    _check_score(ms_face, "face score")
    _check_score(ms_palm, "palm score")
    return 0.5 * (policy.alpha * ms_face + policy.beta * ms_palm)


def fuse_many(face_scores, palm_scores, policy: FusionPolicy) -> np.ndarray:
    """Vectorized :func:`fuse` over aligned score arrays."""
    f = np.asarray(face_scores, dtype=float)
    p = np.asarray(palm_scores, dtype=float)
    if f.shape != p.shape:
        raise ValueError(f"score arrays differ in shape: {f.shape} vs {p.shape}")
    if f.size and (f.min() < 0.0 or f.max() > 1.0 or p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("scores must lie in [0, 1]")
    return 0.5 * (policy.alpha * f + policy.beta * p)


def decide(
    fused: float,
    policy: FusionPolicy,
    *,
    face_score: float | None = None,
    palm_score: float | None = None,
) -> Decision:
    """Genuine iff the fused score reaches the threshold (boundary inclusive)."""
    _check_score(fused, "fused score")
    verdict = Verdict.GENUINE if fused >= policy.threshold else Verdict.IMPOSTOR
    return Decision(
        verdict=verdict,
        fused_score=fused,
        face_score=face_score,
        palm_score=palm_score,
        policy=policy,
    )


def _check_score(value: float, what: str):
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise FuseIdError(f"{what} must lie in [0, 1], got {value}")
