"""Symmetric eigendecomposition utilities and constrained Brockett selection rules.

The closed-form GPA solvers reduce to trace minimization over matrices with
orthonormal rows (a Brockett cost on the Stiefel manifold), whose optimum is
assembled from ordered eigenvectors.  This module owns that assembly: the
eigensolver wrapper with a deterministic sign convention, the bottom-d
selection scaled by a covariance prior, the top-d selection that excludes a
known eigenvector by deflation, and the leading-singular-vector helper used by
the prior estimator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DimensionError, InvalidMatrix, NotAnEigenvector

# Inputs whose relative asymmetry exceeds this are rejected rather than
# silently symmetrized: asymmetry at that level signals an assembly bug.
_ASYMMETRY_TOL = 1e-8

# Eigenvalues of the selected bottom-d block closer than this (relative to the
# spectral scale) are treated as one degenerate cluster.
_CLUSTER_TOL = 1e-9


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in ascending order with matching orthonormal columns."""

    values: np.ndarray   # (k,)
    vectors: np.ndarray  # (m, k), column j pairs with values[j]


def _canonical_signs(vectors):
    """Flip column signs so each column's largest-magnitude entry is positive.

    Ties break toward the lowest index (np.argmax returns the first maximum),
    which makes downstream reference shapes bitwise reproducible.
    """
    V = np.array(vectors, dtype=float, copy=True)
    idx = np.argmax(np.abs(V), axis=0)
    flip = V[idx, np.arange(V.shape[1])] < 0.0
    V[:, flip] *= -1.0
    return V


def eig_sym(A):
    """Full spectrum of a symmetric matrix, ascending, with canonical signs.

    The input must be symmetric within 1e-8 relative Frobenius norm; it is
    symmetrized as (A + A^T)/2 before decomposition.  Non-finite entries or
    excessive asymmetry raise InvalidMatrix.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix("matrix contains non-finite entries")
    scale = np.linalg.norm(A)
    if scale > 0 and np.linalg.norm(A - A.T) > _ASYMMETRY_TOL * scale:
        raise InvalidMatrix("matrix is not symmetric within 1e-8 relative tolerance")
    values, vectors = np.linalg.eigh(0.5 * (A + A.T))
    return EigenPairs(values=values, vectors=_canonical_signs(vectors))


def _prior_lambdas(prior):
    """Accept a CovariancePrior or a plain descending array of eigenvalue targets."""
    lam = np.asarray(getattr(prior, "lambdas", prior), dtype=float).ravel()
    if lam.size == 0:
        raise DimensionError("empty covariance prior")
    if np.any(lam < -1e-12 * max(1.0, lam.max(initial=0.0))):
        raise DegenerateInput("covariance prior entries must be non-negative")
    if np.any(np.diff(lam) > 1e-12 * max(1.0, abs(lam[0]))):
        raise DegenerateInput("covariance prior entries must be non-ascending")
    return np.clip(lam, 0.0, None)


def _cluster_slices(values, tol):
    """Contiguous index ranges of near-equal eigenvalues."""
    slices = []
    start = 0
    for j in range(1, values.size + 1):
        if j == values.size or values[j] - values[j - 1] > tol:
            slices.append(slice(start, j))
            start = j
    return slices


def _anchor_rotate(X, values, anchor):
    """Resolve degenerate eigenvalue clusters against a data anchor.

    Within a cluster of (numerically) equal eigenvalues any orthonormal basis
    is cost-optimal; rotate each cluster's columns to diagonalize the anchor's
    restriction, ordering by anchor eigenvalue descending so the largest prior
    entry pairs with the strongest data direction.  A no-op when all selected
    eigenvalues are separated.
    """
    tol = _CLUSTER_TOL * max(1.0, float(np.max(np.abs(values), initial=0.0)))
    X = np.array(X, copy=True)
    for cluster in _cluster_slices(values, tol):
        width = cluster.stop - cluster.start
        if width < 2:
            continue
        Xc = X[:, cluster]
        restricted = Xc.T @ anchor @ Xc
        w, omega = np.linalg.eigh(0.5 * (restricted + restricted.T))
        X[:, cluster] = Xc @ omega[:, ::-1]
    return _canonical_signs(X)


def bottom_d_scaled(P, prior, anchor=None):
    """Scale the d bottom eigenvectors of P by the square root of the prior.

    Returns S (d x m) with row k = sqrt(lambda_k) * xi_k^T, pairing the largest
    prior entry with the smallest eigenvalue of P.  S minimizes
    trace(S P S^T) subject to S S^T = diag(prior).

    `anchor` (optional symmetric m x m) resolves degenerate eigenvalue
    clusters deterministically; see _anchor_rotate.
    """
    lam = _prior_lambdas(prior)
    d = lam.size
    pairs = eig_sym(P)
    m = pairs.vectors.shape[0]
    if d > m:
        raise DimensionError(f"prior dimension {d} exceeds matrix size {m}")
    X = pairs.vectors[:, :d]
    if anchor is not None:
        X = _anchor_rotate(X, pairs.values[:d], np.asarray(anchor, dtype=float))
    return np.sqrt(lam)[:, None] * X.T


def top_d_excluding(Q, d, u):
    """The d top eigenvectors of Q after removing the known eigenvector u.

    u is shifted to the bottom of the spectrum by deflation
    Q - c*uhat*uhat^T with c = alpha_max - alpha_min + 1, which is always
    "sufficiently big" to exclude it from the top-d selection.  Returns an
    m x d matrix with orthonormal columns orthogonal to u.
    """
    pairs = eig_sym(Q)
    m = pairs.vectors.shape[0]
    if d >= m:
        raise DimensionError(f"cannot take {d} top eigenvectors excluding one from a {m}x{m} matrix")
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != m:
        raise DimensionError("eigenvector length does not match the matrix")
    norm_u = np.linalg.norm(u)
    if norm_u == 0:
        raise NotAnEigenvector("zero vector cannot be an eigenvector")
    uhat = u / norm_u
    Qsym = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)
    Qu = Qsym @ uhat
    alpha = uhat @ Qu
    spectral_scale = max(abs(pairs.values[0]), abs(pairs.values[-1]))
    if np.linalg.norm(Qu - alpha * uhat) > 1e-6 * max(1.0, spectral_scale):
        raise NotAnEigenvector("u is not an eigenvector of Q within tolerance")
    c = pairs.values[-1] - pairs.values[0] + 1.0
    deflated = eig_sym(Qsym - c * np.outer(uhat, uhat))
    return deflated.vectors[:, -d:][:, ::-1]


def leftmost_singular_vector(M):
    """Unit vector maximizing ||M^T theta||_2, the leading left singular vector.

    The sign is fixed by the canonical convention; for matrices with
    non-negative entries this makes every entry non-negative (Perron-Frobenius),
    with round-off negatives above -1e-12 clamped to zero.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidMatrix("matrix contains non-finite entries")
    if np.linalg.norm(M) == 0:
        raise DegenerateInput("all-zero matrix has no leading singular vector")
    U, _, _ = np.linalg.svd(M, full_matrices=False)
    theta = _canonical_signs(U[:, :1]).ravel()
    if np.min(theta) >= -1e-12:
        theta = np.clip(theta, 0.0, None)
        theta /= np.linalg.norm(theta)
    return theta
