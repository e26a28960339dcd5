"""Distance-based matching of feature vectors against an enrolled gallery.

Distances are plain Euclidean. Raw distances are mapped to similarities in
[0, 1] with a min-max normalizer fitted on training-set distances, and a
probe is ranked against the gallery using the minimum distance over each
subject's enrolled samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ModalityMismatchError, NormalizerError
from .modality import Modality
from .subspace import FeatureVector


@dataclass(frozen=True)
class Template:
    """One subject's enrolled feature vectors for a single modality."""

    subject_id: str
    vectors: tuple[FeatureVector, ...]

    def __post_init__(self):
        vectors = tuple(self.vectors)
        if not vectors:
            raise ValueError(f"template for {self.subject_id!r} has no vectors")
        mod = vectors[0].modality
        length = len(vectors[0])
        for v in vectors[1:]:
            if v.modality is not mod:
                raise ModalityMismatchError(f"mixed modalities in template {self.subject_id!r}")
            if len(v) != length:
                raise DimensionMismatchError(f"mixed feature lengths in template {self.subject_id!r}")
        object.__setattr__(self, "vectors", vectors)

    @property
    def modality(self) -> Modality:
        return self.vectors[0].modality


@dataclass(frozen=True)
class MatchScore:
    """Similarity of a probe to one gallery subject."""

    subject_id: str
    similarity: float
    raw_distance: float
    modality: Modality


@dataclass(frozen=True)
class DistanceNormalizer:
    """Maps raw distances to similarities via min-max over fitted distances.

    similarity = 1 - clamp((d - d_min) / (d_max - d_min), 0, 1), so a
    distance at or below d_min scores 1 and at or above d_max scores 0.
    """

    d_min: float
    d_max: float

    def __post_init__(self):
        if not (math.isfinite(self.d_min) and math.isfinite(self.d_max)):
            raise NormalizerError("normalizer bounds must be finite")
        if self.d_min < 0.0:
            raise NormalizerError(f"d_min must be nonnegative, got {self.d_min}")
        if self.d_max <= self.d_min:
            raise NormalizerError(
                f"degenerate fit: d_max ({self.d_max}) must exceed d_min ({self.d_min})"
            )

    @classmethod
    def fit(cls, distances) -> "DistanceNormalizer":
        """Fit bounds from a pool of training-time distances."""
        d = np.asarray(distances, dtype=float)
        if d.size < 2:
            raise NormalizerError(f"need at least 2 distances to fit, got {d.size}")
        return cls(float(d.min()), float(d.max()))

    def similarity(self, d):
        """Similarity for a scalar distance or an array of distances."""
        d = np.asarray(d, dtype=float)
        if np.any(d < 0.0):
            raise ValueError("distances must be nonnegative")
        s = 1.0 - np.clip((d - self.d_min) / (self.d_max - self.d_min), 0.0, 1.0)
        return float(s) if s.ndim == 0 else s


def euclidean_distance(x: FeatureVector, y: FeatureVector) -> float:
    """sqrt of the summed squared coordinate differences."""
    if x.modality is not y.modality:
        raise ModalityMismatchError(f"cannot compare {x.modality} with {y.modality}")
    if len(x) != len(y):
        raise DimensionMismatchError(f"feature lengths differ: {len(x)} vs {len(y)}")
    return float(np.linalg.norm(x.coords - y.coords))


def distance_to_similarity(d: float, normalizer: DistanceNormalizer) -> float:
    if normalizer is None:
        raise NormalizerError("normalizer is not fitted")
    return normalizer.similarity(d)


def match_gallery(
    probe: FeatureVector,
    gallery,
    normalizer: DistanceNormalizer,
) -> list[MatchScore]:
    """Rank the gallery against a probe, best match first.

    Each subject scores by the minimum distance over their enrolled
    samples. Output is sorted by similarity descending, ties broken by
    subject id ascending.
    """
    gallery = list(gallery)
    if not gallery:
        raise ValueError("gallery is empty")
    scores = []
    for template in gallery:
        d = min(euclidean_distance(probe, v) for v in template.vectors)
        scores.append(
            MatchScore(
                subject_id=template.subject_id,
                similarity=distance_to_similarity(d, normalizer),
                raw_distance=d,
                modality=probe.modality,
            )
        )
    scores.sort(key=lambda s: (-s.similarity, s.subject_id))
    return scores


def similarity_percent(similarity: float) -> int:
    """Similarity quantized to an integer 0..100, for display only."""
    if not 0.0 <= similarity <= 1.0:
        raise ValueError(f"similarity must be in [0, 1], got {similarity}")
    return int(round(similarity * 100.0))


def pairwise_distances(features) -> np.ndarray:
    """All distinct pairwise distances among a list of FeatureVectors."""
    feats = list(features)
    if len(feats) < 2:
        raise ValueError(f"need at least 2 features, got {len(feats)}")
    coords = np.stack([f.coords for f in feats])
    sq = np.sum(coords**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (coords @ coords.T)
    iu = np.triu_indices(len(feats), 1)
    return np.sqrt(np.maximum(d2[iu], 0.0))
