"""Linear basis warps: the affine map and the thin-plate spline.

A linear basis warp (LBW) sends a point p through W^T beta(p), where beta
lifts p to an l-dimensional feature vector and W (l x d) carries all
transformation parameters.  On a point matrix D (d x m) this reads
W^T B(D) with B(D) collecting per-column features.  Warps may carry a
quadratic regularizer ||Z W||_F^2; for the TPS, Z^T Z is the bending-energy
matrix whose null space is exactly the affine maps.

The TPS is parameterized in its regression form: the weights W are the images
of the control centers, and the feature map routes through the parameter
recovery matrix E_lambda so no side constraints remain on W.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateCenters, DimensionError
from .spectral import _canonical_signs, eig_sym


def affine_basis(D):
    """Homogeneous lift: D stacked over a row of ones, (d+1) x m."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise DimensionError(f"expected a d x m matrix, got shape {D.shape}")
    return np.vstack([D, np.ones((1, D.shape[1]))])


def tps_kernel(r, d):
    """Radial kernel: r^2 log(r^2) in 2D (0 at r=0 by continuity), -r in 3D."""
    r = np.asarray(r, dtype=float)
    if d == 2:
        r2 = r * r
        safe = np.where(r2 > 0, r2, 1.0)
        out = np.where(r2 > 0, r2 * np.log(safe), 0.0)
        return out if out.ndim else float(out)
    if d == 3:
        out = -np.abs(r)
        return out if out.ndim else float(out)
    raise DimensionError(f"TPS kernel is defined for d in {{2, 3}}, got d={d}")


class LbwModel:
    """Base interface shared by the affine and TPS warps."""

    feature_dim = 0
    smoothing = 0.0

    def basis(self, D):
        """Feature matrix B(D), l x m, column-wise independent."""
        raise NotImplementedError

    @property
    def regularizer(self):
        """Matrix Z with Z^T Z equal to the (possibly zero) bending matrix."""
        raise NotImplementedError

    def gram_regularizer(self):
        """Z^T Z, the l x l PSD quadratic form penalizing W."""
        Z = self.regularizer
        return Z.T @ Z

    def describe(self):
        raise NotImplementedError


class AffineWarp(LbwModel):
    """The homogeneous affine map as an unregularized LBW (l = d+1)."""

    def __init__(self, d):
        if d < 1:
            raise DimensionError("affine warp needs d >= 1")
        self.d = d
        self.feature_dim = d + 1
        self.smoothing = 0.0

    def basis(self, D):
        D = np.asarray(D, dtype=float)
        if D.shape[0] != self.d:
            raise DimensionError(f"expected {self.d} x m points, got {D.shape}")
        return affine_basis(D)

    @property
    def regularizer(self):
        return np.zeros((0, self.feature_dim))

    def gram_regularizer(self):
        return np.zeros((self.feature_dim, self.feature_dim))

    def describe(self):
        return {"type": "affine", "d": self.d}


@dataclass(frozen=True)
class TpsWarp(LbwModel):
    """A thin-plate spline warp anchored at l control centers.

    centers: d x l control-center matrix.
    internal_smoothing: the diagonal loading lambda of the kernel matrix.
    recovery: E_lambda, (l+d+1) x l, mapping prescribed center images to the
        constrained spline coefficients.
    bending: the l x l bending-energy matrix (PSD, rank l-(d+1)).
    sqrt_bending: its symmetric PSD square root Z.
    smoothing: the data-term weight mu of ||Z W||_F^2 in a GPA solve.
    """

    centers: np.ndarray
    internal_smoothing: float
    recovery: np.ndarray
    bending: np.ndarray
    sqrt_bending: np.ndarray
    smoothing: float = 0.0

    @property
    def d(self):
        return self.centers.shape[0]

    @property
    def feature_dim(self):
        return self.centers.shape[1]

    def basis(self, D):
        D = np.asarray(D, dtype=float)
        if D.shape[0] != self.d:
            raise DimensionError(f"expected {self.d} x m points, got {D.shape}")
        phi = tps_kernel(cdist(self.centers.T, D.T), self.d)
        stacked = np.vstack([phi, D, np.ones((1, D.shape[1]))])
        return self.recovery.T @ stacked

    @property
    def regularizer(self):
        return self.sqrt_bending

    def gram_regularizer(self):
        return self.bending

    def with_smoothing(self, mu):
        return TpsWarp(self.centers, self.internal_smoothing, self.recovery,
                       self.bending, self.sqrt_bending, float(mu))

    def describe(self):
        return {
            "type": "tps",
            "centers": [[float(v) for v in row] for row in self.centers],
            "internal_smoothing": float(self.internal_smoothing),
        }


def _psd_sqrt(A):
    """Symmetric PSD square root with round-off negatives clamped to zero."""
    pairs = eig_sym(A)
    vals = pairs.values
    vals = np.where(vals < 1e-12 * max(vals.max(initial=0.0), 0.0), 0.0, vals)
    V = pairs.vectors
    return (V * np.sqrt(vals)) @ V.T


def default_internal_smoothing(centers):
    """1e-8 of the kernel magnitude at the median pairwise center distance."""
    centers = np.asarray(centers, dtype=float)
    d, l = centers.shape
    dist = cdist(centers.T, centers.T)
    off = dist[np.triu_indices(l, k=1)]
    if off.size == 0 or np.all(off == 0):
        raise DegenerateCenters("control centers are coincident")
    scale = abs(tps_kernel(float(np.median(off)), d))
    return 1e-8 * max(scale, np.finfo(float).tiny)


def tps_build(centers, internal_smoothing=None, smoothing=0.0):
    """Construct a TpsWarp from control centers and the internal loading lambda.

    Solves the bordered interpolation system [[K_lambda, C~^T], [C~, O]] once;
    E_lambda is its inverse's first l columns and the bending matrix its top
    l x l block.  (Block inversion shows this equals the explicit
    K^{-1}-based formulas whenever K_lambda is invertible, and it stays valid
    for symmetric center layouts where K_0 alone is singular.)
    """
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] not in (2, 3):
        raise DimensionError(f"centers must be d x l with d in {{2, 3}}, got {centers.shape}")
    d, l = centers.shape
    if l < d + 2:
        raise DegenerateCenters(f"TPS needs at least d+2={d + 2} centers, got {l}")
    if internal_smoothing is None:
        internal_smoothing = default_internal_smoothing(centers)
    if internal_smoothing < 0:
        raise DegenerateCenters("internal smoothing must be non-negative")
    if smoothing < 0:
        raise DegenerateCenters("smoothing weight must be non-negative")

    K = tps_kernel(cdist(centers.T, centers.T), d)
    np.fill_diagonal(K, internal_smoothing)
    C = np.vstack([centers, np.ones((1, l))])
    if np.linalg.matrix_rank(C) < d + 1:
        raise DegenerateCenters("control centers are not in general position (C~ rank-deficient)")
    bordered = np.zeros((l + d + 1, l + d + 1))
    bordered[:l, :l] = K
    bordered[:l, l:] = C.T
    bordered[l:, :l] = C
    try:
        inv = np.linalg.inv(bordered)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCenters("TPS system matrix is singular for these centers") from exc
    recovery = inv[:, :l]
    # functional validity check: E_lambda C~^T must be [O; I]
    target = np.vstack([np.zeros((l, d + 1)), np.eye(d + 1)])
    if np.max(np.abs(recovery @ C.T - target)) > 1e-6:
        raise DegenerateCenters("TPS system matrix is numerically singular for these centers")
    bending = 0.5 * (recovery[:l, :] + recovery[:l, :].T)
    return TpsWarp(
        centers=centers.copy(),
        internal_smoothing=float(internal_smoothing),
        recovery=recovery,
        bending=bending,
        sqrt_bending=_psd_sqrt(bending),
        smoothing=float(smoothing),
    )


def tps_basis(model, D):
    """Feature matrix of a TpsWarp at the points D: E_lambda^T [phi; D; 1^T]."""
    return model.basis(D)


def place_control_points(data, k, flat_axes=0):
    """A k-per-axis grid aligned with the principal axes of the data.

    `data` may be a Shape, a ShapeSet (visible points pooled), or a raw d x m
    matrix.  The grid spans exactly the per-axis min/max of the centered data;
    the last `flat_axes` (lowest-variance) axes receive two layers instead of
    k, as used for nearly flat shapes.
    """
    if k < 2:
        raise DimensionError("need at least k=2 control points per axis")
    if hasattr(data, "shapes"):
        pts = np.hstack([s.visible_points() for s in data.shapes])
    elif hasattr(data, "visible_points"):
        pts = data.visible_points()
    else:
        pts = np.asarray(data, dtype=float)
    d = pts.shape[0]
    if not 0 <= flat_axes < d:
        raise DimensionError(f"flat_axes must lie in [0, d), got {flat_axes}")
    mu = pts.mean(axis=1, keepdims=True)
    X = pts - mu
    pairs = eig_sym(X @ X.T)
    axes = _canonical_signs(pairs.vectors[:, ::-1])  # principal first
    coords = axes.T @ X
    lo = coords.min(axis=1)
    hi = coords.max(axis=1)
    scale = float(np.max(hi - lo))
    if np.any(hi - lo <= 1e-12 * max(scale, 1.0)):
        raise DegenerateCenters("shape has zero extent along a principal axis")
    counts = [2 if j >= d - flat_axes else k for j in range(d)]
    ticks = [np.linspace(lo[j], hi[j], counts[j]) for j in range(d)]
    mesh = np.meshgrid(*ticks, indexing="ij")
    grid = np.vstack([m.ravel() for m in mesh])
    return mu + axes @ grid


def apply_warp(model, W, D):
    """W^T B(D): the warped point matrix, d x m."""
    W = np.asarray(W, dtype=float)
    B = model.basis(D)
    if W.shape[0] != B.shape[0]:
        raise DimensionError(f"weights have {W.shape[0]} rows, basis has {B.shape[0]}")
    return W.T @ B


def bending_energy(model, W):
    """trace(W^T (Z^T Z) W), the integrated second-derivative energy; >= 0."""
    W = np.asarray(W, dtype=float)
    G = model.gram_regularizer()
    if W.shape[0] != G.shape[0]:
        raise DimensionError(f"weights have {W.shape[0]} rows, regularizer expects {G.shape[0]}")
    return float(max(np.einsum("ij,ik,kj->", W, G, W), 0.0))


def fit_inverse_tps(model, W, internal_smoothing=None):
    """A TPS mapping the forward warp's center images back to the centers.

    The inverse warp's centers are the forward images c'_k = W^T beta(c_k) and
    its weights prescribe the original centers as images, so it interpolates
    c'_k -> c_k exactly at internal_smoothing 0 and in regularized
    least-squares otherwise.
    """
    images = apply_warp(model, W, model.centers)
    if internal_smoothing is None:
        internal_smoothing = model.internal_smoothing
    inverse = tps_build(images, internal_smoothing)
    return inverse, model.centers.T.copy()


def tps_to_json_dict(model):
    """Serializable form of a TpsWarp: centers and lambda only.

    The recovery and bending matrices are derived quantities and are rebuilt
    on load rather than shipped.
    """
    return {
        "type": "tps",
        "centers": [[float(v) for v in row] for row in model.centers],
        "internal_smoothing": float(model.internal_smoothing),
        "smoothing": float(model.smoothing),
    }


def tps_from_json_dict(doc):
    """Rebuild a TpsWarp from its serialized centers and lambda."""
    if doc.get("type") != "tps":
        raise DimensionError(f"not a TPS model document: {doc.get('type')!r}")
    centers = np.asarray(doc["centers"], dtype=float)
    model = tps_build(centers, float(doc["internal_smoothing"]))
    return model.with_smoothing(float(doc.get("smoothing", 0.0)))


def free_translation_witness(model, D, tol=1e-6):
    """A vector x with B(D)^T x = 1 (and Z x = 0 when the warp is regularized).

    Returns None when no such vector exists within tolerance; its existence is
    what licenses the closed-form GPA solution (the all-ones eigenvector).
    """
    B = model.basis(D)
    rows = [B.T]
    rhs = [np.ones(B.shape[1])]
    Z = model.regularizer
    use_reg = model.smoothing > 0 and Z.shape[0] > 0
    if use_reg:
        rows.append(Z)
        rhs.append(np.zeros(Z.shape[0]))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.max(np.abs(B.T @ x - 1.0)) >= tol:
        return None
    if use_reg and np.max(np.abs(Z @ x)) >= tol:
        return None
    return x
