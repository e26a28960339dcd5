"""Symmetric eigen-decomposition and quadratic-form utilities.

Everything downstream (subspace training, feature projection) rests on the
routines here: a cyclic Jacobi eigensolver for real symmetric matrices,
modal-matrix diagonalization, quadratic forms evaluated both directly and
in the diagonalizing basis, and the small-Gram-matrix shortcut that turns
an n x n sample covariance eigenproblem into an N x N one when there are
far fewer samples N than pixels n.

All functions are pure and operate on float64 numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionMismatchError

#: Absolute tolerance for accepting a matrix as symmetric.
SYMMETRY_TOL = 1e-12

#: Relative drop in off-diagonal Frobenius norm that counts as converged.
JACOBI_TOL = 1e-12

#: Hard cap on Jacobi sweeps; exceeding it raises ConvergenceError.
MAX_SWEEPS = 100

#: Gram eigenvalues below RANK_TOL * lambda_max are treated as rank noise.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral decomposition of a real symmetric matrix.

    Attributes:
        eigenvalues: 1-D array, sorted descending.
        modal_matrix: square array whose k-th column is the unit-norm
            eigenvector paired with ``eigenvalues[k]``. Orthonormal, so its
            inverse equals its transpose.
    """

    eigenvalues: np.ndarray
    modal_matrix: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.modal_matrix, dtype=float)
        if vecs.ndim != 2 or vecs.shape[0] != vecs.shape[1]:
            raise DimensionMismatchError("modal matrix must be square")
        if vals.shape != (vecs.shape[0],):
            raise DimensionMismatchError(
                f"{vals.shape[0]} eigenvalues for a {vecs.shape[0]}-dim modal matrix"
            )
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "modal_matrix", vecs)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def as_symmetric(m, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate and return a float64 copy of a symmetric matrix.

    Raises DimensionMismatchError if ``m`` is not square, empty, non-finite,
    or asymmetric beyond ``tol`` (absolute, per entry). The returned copy is
    exactly symmetrized so later arithmetic never sees the sub-tolerance
    asymmetry.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimensionMismatchError("matrix must have dimension >= 1")
    if not np.all(np.isfinite(a)):
        raise DimensionMismatchError("matrix entries must be finite")
    skew = np.max(np.abs(a - a.T)) if a.shape[0] > 1 else 0.0
    if skew > tol:
        raise DimensionMismatchError(
            f"matrix is not symmetric: max |a[i,j] - a[j,i]| = {skew:.3e} > {tol:.0e}"
        )
    return (a + a.T) / 2.0


def _offdiag_sq(a: np.ndarray) -> float:
    """Squared Frobenius norm of the off-diagonal part."""
    return 2.0 * float(np.sum(np.tril(a, -1) ** 2))


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Removes the per-column sign ambiguity so decompositions are
    reproducible across runs and platforms.
    """
    idx = np.argmax(np.abs(vecs), axis=0)
    flip = vecs[idx, np.arange(vecs.shape[1])] < 0.0
    out = vecs.copy()
    out[:, flip] *= -1.0
    return out


def eigen_symmetric(
    m,
    *,
    max_sweeps: int = MAX_SWEEPS,
    tol: float = JACOBI_TOL,
) -> EigenDecomposition:
    """Eigen-decompose a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate every upper-triangle pivot (p, q) in row order, each
    rotation annihilating entry (p, q). Convergence is declared when the
    off-diagonal Frobenius norm falls below ``tol`` times its initial value;
    failing to get there within ``max_sweeps`` sweeps raises
    ConvergenceError rather than returning a silently truncated answer.

    Returns an EigenDecomposition with eigenvalues sorted descending (ties
    keep their pre-sort order) and sign-fixed orthonormal eigenvector
    columns.
    """
    a = as_symmetric(m)
    n = a.shape[0]
    v = np.eye(n)
    if n > 1:
        off0 = math.sqrt(_offdiag_sq(a))
        if off0 > 0.0:
            _jacobi_sweeps(a, v, off0 * tol, max_sweeps)
    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return EigenDecomposition(vals[order], _fix_signs(v[:, order]))


def _jacobi_sweeps(a: np.ndarray, v: np.ndarray, target: float, max_sweeps: int):
    """Run cyclic Jacobi sweeps in place on ``a``, accumulating rotations in ``v``."""
    n = a.shape[0]
    npairs = n * (n - 1) / 2.0
    # Pivots at or below `floor` can never push the residual past `target`
    # even if every pair sits exactly there, so they are safe to skip.
    floor = target / (2.0 * n)
    for sweep in range(max_sweeps + 1):
        offsq = _offdiag_sq(a)
        if math.sqrt(offsq) <= target:
            return
        if sweep == max_sweeps:
            raise ConvergenceError(
                f"Jacobi failed to converge in {max_sweeps} sweeps "
                f"(residual {math.sqrt(offsq):.3e}, target {target:.3e})"
            )
        # Early sweeps skip pivots well under the current RMS off-diagonal
        # value; they would barely reduce the residual.
        thresh = floor
        if sweep < 3:
            thresh = max(floor, 0.1 * math.sqrt(offsq / (2.0 * npairs)))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(a[p, q])
                if abs(apq) <= thresh:
                    continue
                app = float(a[p, p])
                aqq = float(a[q, q])
                tau = (aqq - app) / (2.0 * apq)
                tausq = tau * tau
                if tausq + 1.0 == tausq:  # tau^2 overflowed its precision
                    t = 0.5 / tau
                elif tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(tausq + 1.0))
                else:
                    t = -1.0 / (-tau + math.sqrt(tausq + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # Rows p,q of J^T A J; the symmetric mirror serves as the
                # column update.
                new_p = c * a[p, :] - s * a[q, :]
                new_q = s * a[p, :] + c * a[q, :]
                new_p[p] = app - t * apq
                new_q[q] = aqq + t * apq
                new_p[q] = 0.0
                new_q[p] = 0.0
                a[p, :] = new_p
                a[q, :] = new_q
                a[:, p] = new_p
                a[:, q] = new_q
                new_vp = c * v[:, p] - s * v[:, q]
                new_vq = s * v[:, p] + c * v[:, q]
                v[:, p] = new_vp
                v[:, q] = new_vq


def diagonalize(m) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(modal, diag)`` with ``modal^T m modal = diag(diag)``.

    ``modal`` is the normalized modal matrix (orthonormal eigenvector
    columns, so its inverse is its transpose) and ``diag`` holds the
    eigenvalues in descending order.
    """
    dec = eigen_symmetric(m)
    return dec.modal_matrix, dec.eigenvalues


def canonical_form(coeffs, m) -> float:
    """Evaluate the quadratic form c^T m c by direct expansion.

    This is the double sum over a[i,j] * c[i] * c[j]. The equivalent
    sum-of-squares evaluation in the diagonalizing basis is provided by
    :func:`sum_of_squares`; the two must agree to rounding error.
    """
    c = np.asarray(coeffs, dtype=float)
    a = as_symmetric(m)
    if c.ndim != 1 or c.shape[0] != a.shape[0]:
        raise DimensionMismatchError(
            f"coefficient vector of length {c.shape} does not fit a "
            f"{a.shape[0]}-dim matrix"
        )
    return float(np.einsum("i,ij,j->", c, a, c))


def sum_of_squares(coeffs, decomposition: EigenDecomposition) -> float:
    """Evaluate the same quadratic form as a weighted sum of squares.

    With y = P^T c in the eigenbasis P, the form collapses to
    sum_k lambda_k * y_k**2 (the principal-axes evaluation).
    """
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.shape[0] != decomposition.dim:
        raise DimensionMismatchError(
            f"coefficient vector of length {c.shape} does not fit a "
            f"{decomposition.dim}-dim decomposition"
        )
    y = decomposition.modal_matrix.T @ c
    return float(np.sum(decomposition.eigenvalues * y * y))


def snapshot_eigenvectors(
    a,
    top_k: int,
    *,
    rank_tol: float = RANK_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Leading eigenpairs of A A^T computed through the small Gram matrix.

    For an n x N matrix A with N <= n (columns are sample vectors), the
    nonzero spectrum of the big outer-product matrix A A^T equals that of
    the small Gram matrix A^T A, and each Gram eigenvector w maps to an
    outer-product eigenvector v = A w (renormalized to unit length).

    Eigenvalues below ``rank_tol`` times the largest are treated as rank
    noise and dropped, so fewer than ``top_k`` pairs may come back.

    Args:
        a: n x N array, one sample per column.
        top_k: number of leading eigenpairs requested (>= 1).

    Returns:
        ``(eigenvalues, vectors)`` where eigenvalues is descending with
        shape (k,) and vectors is n x k with unit, sign-fixed columns.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise DimensionMismatchError(f"expected a nonempty 2-D sample matrix, got shape {a.shape}")
    n, n_samples = a.shape
    if n_samples > n:
        raise DimensionMismatchError(
            f"snapshot shortcut needs at most as many samples as pixels ({n_samples} > {n})"
        )
    if top_k <= 0:
        raise ValueError(f"top_k must be positive, got {top_k}")
    if top_k > n_samples:
        raise ValueError(f"top_k={top_k} exceeds the number of samples {n_samples}")

    gram = a.T @ a
    dec = eigen_symmetric(gram)
    lam_max = float(dec.eigenvalues[0])
    if lam_max <= 0.0:
        return np.empty(0), np.empty((n, 0))
    keep = dec.eigenvalues > rank_tol * lam_max
    vals = dec.eigenvalues[keep][:top_k]
    w = dec.modal_matrix[:, keep][:, : vals.shape[0]]
    vecs = a @ w
    vecs /= np.linalg.norm(vecs, axis=0)
    return vals, _fix_signs(vecs)
