"""Per-modality eigen-subspace training and feature projection.

A model is trained from N flattened training images: subtract the average
image, eigen-decompose the sample covariance through the small N x N Gram
matrix, keep the K leading components, and project any probe image onto
that basis. The projection coefficients are the feature vector used for
matching; the weighted sum-of-squares energy of a feature in the diagonal
basis is exposed as a diagnostic scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import eigencore, imaging
from .errors import DatasetError, DimensionMismatchError, ModalityMismatchError
from .modality import Modality

#: Default fraction of total spectrum energy the retained components must cover.
DEFAULT_ENERGY = 0.95

_ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class SubspaceModel:
    """Trained projection basis for one modality.

    Attributes:
        modality: which trait the model was trained on.
        mean: average training image, flattened (length n).
        eigenvalues: covariance eigenvalues of the retained components,
            strictly positive, descending (length K).
        basis: n x K matrix with orthonormal columns.
        canonical_size: (rows, cols) every projected image must have.
    """

    modality: Modality
    mean: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray
    canonical_size: tuple[int, int]

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        vals = np.asarray(self.eigenvalues, dtype=float)
        basis = np.asarray(self.basis, dtype=float)
        rows, cols = self.canonical_size
        if mean.ndim != 1 or mean.shape[0] != rows * cols:
            raise DimensionMismatchError(
                f"mean of length {mean.shape} does not match canonical size {rows}x{cols}"
            )
        if basis.ndim != 2 or basis.shape[0] != mean.shape[0]:
            raise DimensionMismatchError(
                f"basis shape {basis.shape} does not match mean length {mean.shape[0]}"
            )
        k = basis.shape[1]
        if k < 1 or vals.shape != (k,):
            raise DimensionMismatchError(f"{vals.shape} eigenvalues for a {k}-column basis")
        if np.any(vals <= 0.0) or np.any(np.diff(vals) > 0.0):
            raise ValueError("eigenvalues must be strictly positive and descending")
        gram = basis.T @ basis
        if np.max(np.abs(gram - np.eye(k))) > _ORTHO_TOL:
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "canonical_size", (int(rows), int(cols)))

    @property
    def n_pixels(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class FeatureVector:
    """Projection coefficients of one image in a model's basis."""

    coords: np.ndarray
    modality: Modality

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 1:
            raise DimensionMismatchError(f"coords must be 1-D, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("feature coordinates must be finite")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "modality", Modality(self.modality))

    def __len__(self) -> int:
        return self.coords.shape[0]


def compute_mean(vectors) -> np.ndarray:
    """Componentwise mean of equally sized flattened images."""
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    if not vecs:
        raise DatasetError("cannot average an empty image set")
    length = vecs[0].shape
    for i, v in enumerate(vecs):
        if v.shape != length:
            raise DimensionMismatchError(f"vector {i} has shape {v.shape}, expected {length}")
    return np.mean(np.stack(vecs), axis=0)


def center(vectors, mean) -> list[np.ndarray]:
    """Subtract the mean from every vector; results sum to ~zero."""
    mean = np.asarray(mean, dtype=float)
    out = []
    for i, v in enumerate(vectors):
        v = np.asarray(v, dtype=float)
        if v.shape != mean.shape:
            raise DimensionMismatchError(f"vector {i} has shape {v.shape}, mean has {mean.shape}")
        out.append(v - mean)
    return out


def train(
    images,
    modality: Modality,
    *,
    energy: float = DEFAULT_ENERGY,
    k: int | None = None,
) -> SubspaceModel:
    """Train a subspace model from >= 2 same-sized grayscale matrices.

    The covariance spectrum comes from the Gram-matrix shortcut with the
    1/N covariance scaling applied to the eigenvalues. The retained
    dimension K is either ``k`` (clamped to the available rank) or the
    smallest K whose eigenvalues capture ``energy`` of the total spectrum.
    """
    mats = [np.asarray(im, dtype=float) for im in images]
    if len(mats) < 2:
        raise DatasetError(f"training needs at least 2 images, got {len(mats)}")
    shape = mats[0].shape
    if len(shape) != 2:
        raise DimensionMismatchError(f"images must be 2-D matrices, got shape {shape}")
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise DimensionMismatchError(f"image {i} has shape {m.shape}, expected {shape}")
    if k is not None and k < 1:
        raise ValueError(f"fixed k must be >= 1, got {k}")
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy fraction must be in (0, 1], got {energy}")

    n_images = len(mats)
    flat = [imaging.flatten(m) for m in mats]
    mean = compute_mean(flat)
    diffs = center(flat, mean)
    a = np.stack(diffs, axis=1)
    gram_vals, basis = eigencore.snapshot_eigenvectors(a, top_k=n_images)
    if basis.shape[1] == 0:
        raise DatasetError("training images are all identical; covariance has no usable spectrum")
    eigenvalues = gram_vals / n_images

    if k is not None:
        keep = min(k, eigenvalues.shape[0])
    else:
        fractions = np.cumsum(eigenvalues) / np.sum(eigenvalues)
        keep = int(np.searchsorted(fractions, energy - 1e-15) + 1)
        keep = min(keep, eigenvalues.shape[0])
    return SubspaceModel(
        modality=modality,
        mean=mean,
        eigenvalues=eigenvalues[:keep],
        basis=basis[:, :keep],
        canonical_size=(shape[0], shape[1]),
    )


def project(model: SubspaceModel, img) -> FeatureVector:
    """Project an image of the model's canonical size onto its basis."""
    img = np.asarray(img, dtype=float)
    if img.shape != model.canonical_size:
        raise DimensionMismatchError(
            f"image shape {img.shape} does not match model size {model.canonical_size}"
        )
    return FeatureVector(project_centered(model, imaging.flatten(img) - model.mean), model.modality)


def project_centered(model: SubspaceModel, delta) -> np.ndarray:
    """Project an already mean-relative flattened vector. Linear in its input."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != model.mean.shape:
        raise DimensionMismatchError(
            f"vector of length {delta.shape} does not match model pixel count {model.n_pixels}"
        )
    return model.basis.T @ delta


def reconstruct(model: SubspaceModel, feat: FeatureVector) -> np.ndarray:
    """Rebuild the image a feature vector encodes: mean + basis @ coords."""
    _check_feature(model, feat)
    rows, cols = model.canonical_size
    return imaging.unflatten(model.mean + model.basis @ feat.coords, rows, cols)


def canonical_energy(model: SubspaceModel, feat: FeatureVector) -> float:
    """Weighted sum-of-squares of a feature in the model's diagonal basis.

    Equals the covariance quadratic form of the reconstructed offset;
    nonnegative, and purely diagnostic (matching uses the full coordinate
    vector, which a single scalar cannot replace).
    """
    _check_feature(model, feat)
    return float(np.sum(model.eigenvalues * feat.coords * feat.coords))


def truncate(model: SubspaceModel, k: int) -> SubspaceModel:
    """Model restricted to its k leading components."""
    if not 1 <= k <= model.k:
        raise ValueError(f"k must be in [1, {model.k}], got {k}")
    return SubspaceModel(
        modality=model.modality,
        mean=model.mean,
        eigenvalues=model.eigenvalues[:k],
        basis=model.basis[:, :k],
        canonical_size=model.canonical_size,
    )


def _check_feature(model: SubspaceModel, feat: FeatureVector):
    if feat.modality is not model.modality:
        raise ModalityMismatchError(
            f"{feat.modality} feature used with a {model.modality} model"
        )
    if len(feat) != model.k:
        raise DimensionMismatchError(
            f"feature has {len(feat)} coordinates, model retains {model.k}"
        )
