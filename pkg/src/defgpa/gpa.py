"""The DefGPA solver.

Pipeline (all closed-form): pairwise similarity Procrustes between shapes,
completion of missing points by visibility-weighted averaging, estimation of
the reference covariance prior from per-shape singular values, assembly of the
point-space matrix P, and the constrained trace minimization whose optimum is
the bottom-d eigenvectors of P + nu*11^T scaled by the prior.  A reflection
correction against one datum shape fixes the orientation gauge.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateConfiguration,
    DegenerateInput,
    DimensionError,
    InsufficientOverlap,
    SingularSystem,
    UnconstrainedPoint,
)
from .spectral import bottom_d_scaled, leftmost_singular_vector


@dataclass(frozen=True)
class CovariancePrior:
    """Prescribed eigenvalues of the reference covariance S S^T, descending."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if lam.size == 0:
            raise DimensionError("empty covariance prior")
        scale = max(1.0, float(np.max(np.abs(lam))))
        if np.any(lam < -1e-12 * scale):
            raise DegenerateInput("prior eigenvalues must be non-negative")
        if np.any(np.diff(lam) > 1e-12 * scale):
            raise DegenerateInput("prior eigenvalues must be non-ascending")
        lam = np.clip(lam, 0.0, None)
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def d(self):
        return self.lambdas.size

    def matrix(self):
        return np.diag(self.lambdas)

    @property
    def trace(self):
        return float(self.lambdas.sum())


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * R p + t with orthonormal R (det -1 only if reflections allowed)."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).ravel()
        if self.scale <= 0:
            raise DegenerateConfiguration(f"similarity scale must be positive, got {self.scale}")
        if np.max(np.abs(R.T @ R - np.eye(R.shape[0]))) > 1e-10:
            raise DegenerateConfiguration("rotation block is not orthonormal")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def apply(self, points):
        return self.scale * (self.rotation @ np.asarray(points, dtype=float)) + self.translation[:, None]

    @classmethod
    def identity(cls, d):
        return cls(1.0, np.eye(d), np.zeros(d))


@dataclass
class ShapeConditions:
    """Per-shape residuals of the closed-form solvability conditions."""

    index: int
    projector_residual: float   # ||Q_i 1 - 1||_inf (full) or ||P_i 1||_inf (partial)
    witness_residual: float
    witness_found: bool
    passes: bool

    def to_dict(self):
        return {
            "index": self.index,
            "projector_residual": self.projector_residual,
            "witness_residual": self.witness_residual,
            "witness_found": self.witness_found,
            "passes": self.passes,
        }


@dataclass
class TheoremConditionReport:
    """Aggregated pass/fail record of the all-ones eigenvector conditions."""

    shapes: list
    aggregate_residual: float
    tolerance: float
    all_pass: bool

    def to_dict(self):
        return {
            "tolerance": self.tolerance,
            "aggregate_residual": self.aggregate_residual,
            "all_pass": self.all_pass,
            "shapes": [s.to_dict() for s in self.shapes],
        }


@dataclass
class GpaSolution:
    """Optimal reference shape with per-shape weights and diagnostics."""

    reference: np.ndarray          # d x m
    weights: tuple                 # n matrices, l_i x d
    prior: CovariancePrior
    nu: float
    cost: float                    # data + regularization + penalty
    data_cost: float
    reg_cost: float
    penalty_cost: float
    mus: tuple = ()
    models: tuple = ()             # model descriptor dicts
    report: TheoremConditionReport | None = None

    def to_json_dict(self):
        doc = {
            "d": int(self.reference.shape[0]),
            "m": int(self.reference.shape[1]),
            "n": len(self.weights),
            "reference": [[float(v) for v in row] for row in self.reference],
            "weights": [[[float(v) for v in row] for row in W] for W in self.weights],
            "prior": [float(v) for v in self.prior.lambdas],
            "nu": float(self.nu),
            "mu": [float(v) for v in self.mus],
            "models": list(self.models),
            "cost": float(self.cost),
            "data_cost": float(self.data_cost),
            "reg_cost": float(self.reg_cost),
            "penalty_cost": float(self.penalty_cost),
        }
        doc["conditions"] = self.report.to_dict() if self.report is not None else None
        return doc


# ---------------------------------------------------------------------------
# pairwise similarity Procrustes and shape completion


def pairwise_similarity_procrustes(d1, d2, allow_reflection=False):
    """Optimal s, R, t with (s R D1 + t 1^T) matching D2 on jointly visible points.

    Closed-form via the SVD of the centered cross-covariance; when reflections
    are not allowed the determinant of R is corrected to +1 by flipping the
    weakest singular direction.
    """
    joint = d1.visibility & d2.visibility
    d = d1.d
    if int(joint.sum()) < d + 1:
        raise InsufficientOverlap(f"need at least {d + 1} jointly visible points, have {int(joint.sum())}")
    P1 = d1.points[:, joint]
    P2 = d2.points[:, joint]
    mu1 = P1.mean(axis=1, keepdims=True)
    mu2 = P2.mean(axis=1, keepdims=True)
    A1 = P1 - mu1
    A2 = P2 - mu2
    denom = float(np.sum(A1 * A1))
    if denom <= 0:
        raise DegenerateConfiguration("source points are coincident")
    M = A1 @ A2.T
    U, sv, Vt = np.linalg.svd(M)
    if sv[0] <= 0 or (d >= 2 and sv[d - 2] <= 1e-12 * sv[0]):
        raise DegenerateConfiguration("cross-covariance is rank-deficient; rotation undetermined")
    R = Vt.T @ U.T
    if not allow_reflection and np.linalg.det(R) < 0:
        D = np.eye(d)
        D[-1, -1] = -1.0
        R = Vt.T @ D @ U.T
    s = float(np.trace(R @ M)) / denom
    if s <= 0:
        raise DegenerateConfiguration("optimal similarity scale is not positive")
    t = (mu2 - s * (R @ mu1)).ravel()
    return SimilarityTransform(s, R, t)


def pairwise_transform_table(shape_set, allow_reflection=False):
    """n x n table; entry [i][k] maps shape k into the frame of shape i."""
    n = shape_set.n
    table = [[None] * n for _ in range(n)]
    for i in range(n):
        for k in range(n):
            if i == k:
                table[i][k] = SimilarityTransform.identity(shape_set.d)
            else:
                table[i][k] = pairwise_similarity_procrustes(
                    shape_set[k], shape_set[i], allow_reflection=allow_reflection)
    return table


def complete_shape(shape_set, i, transforms):
    """Full d x m matrix for shape i: visible points kept, missing ones filled.

    Each missing point is the visibility-weighted average of its occurrences
    in the other shapes mapped into frame i through the pairwise transforms
    (the sum runs over all shapes, each masked by its own visibility).
    """
    target = shape_set[i]
    d, m = target.d, target.m
    acc = np.zeros((d, m))
    counts = np.zeros(m)
    for k, src in enumerate(shape_set):
        gamma = src.visibility.astype(float)
        mapped = transforms[i][k].apply(src.filled(0.0))
        acc += mapped * gamma[None, :]
        counts += gamma
    missing = ~target.visibility
    if np.any(counts[missing] == 0):
        bad = np.flatnonzero(missing & (counts == 0)).tolist()
        raise UnconstrainedPoint(f"points {bad} are visible in no shape")
    out = target.filled(0.0)
    safe = np.where(counts > 0, counts, 1.0)
    out[:, missing] = (acc / safe[None, :])[:, missing]
    return out


def complete_all(shape_set, allow_reflection=False):
    """Completed full matrices for every shape (full shapes pass through)."""
    if shape_set.all_full:
        return [s.points.copy() for s in shape_set]
    table = pairwise_transform_table(shape_set, allow_reflection=allow_reflection)
    return [
        s.points.copy() if s.is_full else complete_shape(shape_set, i, table)
        for i, s in enumerate(shape_set)
    ]


# ---------------------------------------------------------------------------
# reference covariance prior


def estimate_prior(full_shapes):
    """Reference covariance prior from per-shape singular values.

    Each centered full shape contributes the unit vector of its d leading
    singular values; the consensus direction is the leading left singular
    vector of their stack, rescaled by the average shape scale and squared.
    """
    columns = []
    norms = []
    for i, D in enumerate(full_shapes):
        D = np.asarray(D, dtype=float)
        Dbar = D - D.mean(axis=1, keepdims=True)
        sv = np.linalg.svd(Dbar, compute_uv=False)[: D.shape[0]]
        nrm = float(np.linalg.norm(sv))
        if nrm == 0:
            raise DegenerateInput(f"shape {i} has zero scale")
        columns.append(sv / nrm)
        norms.append(nrm)
    pi = np.column_stack(columns)
    theta = leftmost_singular_vector(pi)
    s = float(np.mean(norms))
    return CovariancePrior((s * theta) ** 2)


def estimate_prior_for_set(shape_set, allow_reflection=False):
    """Algorithm-level prior: completes partial shapes first, then estimates."""
    return estimate_prior(complete_all(shape_set, allow_reflection=allow_reflection))


# ---------------------------------------------------------------------------
# P-matrix assembly and the closed-form solve


def _solve_normal(N, rhs, index):
    """SPD solve with one diagonal-jitter retry before giving up."""
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(N), rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        pass
    jitter = 1e-12 * max(np.trace(N) / N.shape[0], np.finfo(float).tiny)
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(N + jitter * np.eye(N.shape[0])), rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"normal matrix of shape {index} is singular", shape_index=index) from exc


def _per_shape_terms(shape_set, models):
    """Per shape: masked basis B_i Gamma_i and the solved N_i^{-1} B_i Gamma_i."""
    if len(models) != shape_set.n:
        raise DimensionError(f"{shape_set.n} shapes but {len(models)} models")
    terms = []
    for i, (shape, model) in enumerate(zip(shape_set, models)):
        if model.smoothing < 0:
            raise DimensionError(f"model {i} has negative smoothing")
        B = model.basis(shape.filled(0.0))
        if B.shape != (model.feature_dim, shape.m):
            raise DimensionError(f"model {i} basis has shape {B.shape}, expected ({model.feature_dim},{shape.m})")
        Bg = B * shape.visibility[None, :]
        N = Bg @ B.T + model.smoothing * model.gram_regularizer()
        solved = _solve_normal(N, Bg, i)
        terms.append((shape, Bg, solved))
    return terms


def assemble_P(shape_set, models):
    """P = sum_i (Gamma_i - Gamma_i B_i^T N_i^{-1} B_i Gamma_i); symmetric, 0 <= P <= nI."""
    m = shape_set.m
    P = np.zeros((m, m))
    for shape, Bg, solved in _per_shape_terms(shape_set, models):
        P += np.diag(shape.visibility.astype(float)) - Bg.T @ solved
    return 0.5 * (P + P.T)


def _gram_anchor(shape_set):
    """Visibility-masked Gram of the centered shapes; rigid-transform invariant.

    Used only to resolve numerically degenerate eigenvalue clusters of the
    solve matrix deterministically (zero-residual data makes the bottom-d
    eigenvalue exactly d-fold degenerate).
    """
    m = shape_set.m
    G = np.zeros((m, m))
    for s in shape_set:
        mu = s.visible_points().mean(axis=1, keepdims=True)
        X = (s.filled(0.0) - mu) * s.visibility[None, :]
        G += X.T @ X
    return G


def correct_reflection(S, ref_shape):
    """Flip the first row of S if an orthogonal Procrustes to ref_shape reflects.

    The Procrustes runs over the visible points of ref_shape; det of the
    optimal orthogonal factor is the orientation test, and flipping one row of
    S flips it back to +1.
    """
    S = np.asarray(S, dtype=float)
    gamma = ref_shape.visibility.astype(float)
    nnz = gamma.sum()
    Dk = ref_shape.filled(0.0) * gamma[None, :]
    centered = Dk - (Dk @ gamma)[:, None] * gamma[None, :] / nnz
    E = centered @ S.T
    U, sv, Vt = np.linalg.svd(E)
    if sv[0] <= 0 or sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateConfiguration("orientation is undetermined for this reference shape")
    if np.linalg.det(Vt.T @ U.T) < 0:
        S = S.copy()
        S[0, :] *= -1.0
    return S


def check_theorem_conditions(shape_set, models, tol=1e-6):
    """Evaluate the equivalent closed-form solvability statements per shape.

    For full shapes the projector condition is Q_i 1 = 1, for partial shapes
    P_i 1 = 0; the witness condition asks for x with
    Gamma_i B_i^T x = Gamma_i 1 (and Z_i x = 0 when regularized).  Also checks
    the aggregate P 1 = 0.
    """
    results = []
    m = shape_set.m
    aggregate = np.zeros(m)
    ones = np.ones(m)
    for i, (shape, Bg, solved) in enumerate(_per_shape_terms(shape_set, models)):
        gamma = shape.visibility.astype(float)
        # P_i 1; for full shapes this equals 1 - Q_i 1, so one residual serves both
        Pi_1 = gamma * ones - Bg.T @ (solved @ (gamma * ones))
        aggregate += Pi_1
        projector_residual = float(np.max(np.abs(Pi_1)))
        model = models[i]
        B = model.basis(shape.filled(0.0))
        vis = shape.visibility
        rows = [B.T[vis, :]]
        rhs = [np.ones(int(vis.sum()))]
        Z = model.regularizer
        use_reg = model.smoothing > 0 and Z.shape[0] > 0
        if use_reg:
            rows.append(Z)
            rhs.append(np.zeros(Z.shape[0]))
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        x, *_ = np.linalg.lstsq(A, b, rcond=None)
        witness_residual = float(np.max(np.abs(B.T[vis, :] @ x - 1.0)))
        if use_reg:
            witness_residual = max(witness_residual, float(np.max(np.abs(Z @ x))))
        witness_found = witness_residual < tol
        passes = projector_residual < tol and witness_found
        results.append(ShapeConditions(i, projector_residual, witness_residual, witness_found, passes))
    aggregate_residual = float(np.max(np.abs(aggregate)))
    all_pass = aggregate_residual < tol and all(r.passes for r in results)
    return TheoremConditionReport(results, aggregate_residual, tol, all_pass)


def solve(shape_set, models, prior=None, nu=None, reflection_ref=0,
          allow_reflection=False, check_conditions=True):
    """Closed-form GPA with linear basis warps.

    Assembles P, adds the translation penalty nu*11^T, scales the bottom-d
    eigenvectors by the prior, corrects reflection against one datum shape,
    and recovers per-shape weights by regularized least squares.  With
    prior=None the reference covariance prior is estimated from the
    (completed) shapes; with nu=None the penalty weight defaults to n/m.
    """
    d, m, n = shape_set.d, shape_set.m, shape_set.n
    if d > m - 1:
        raise DimensionError(f"need m >= d+1 landmarks to exclude the ones vector, got d={d}, m={m}")
    if prior is None:
        prior = estimate_prior_for_set(shape_set, allow_reflection=allow_reflection)
    elif not isinstance(prior, CovariancePrior):
        prior = CovariancePrior(prior)
    if prior.d != d:
        raise DimensionError(f"prior has {prior.d} entries, shapes have d={d}")
    if nu is None:
        nu = n / m
    elif nu < 0:
        raise DimensionError(f"penalty weight nu must be non-negative, got {nu}")
    nu = float(nu)

    terms = _per_shape_terms(shape_set, models)
    P = np.zeros((m, m))
    for shape, Bg, solved in terms:
        P += np.diag(shape.visibility.astype(float)) - Bg.T @ solved
    P = 0.5 * (P + P.T)

    M = P + nu * np.ones((m, m))
    S = bottom_d_scaled(M, prior, anchor=_gram_anchor(shape_set))
    if prior.lambdas[-1] > 0:
        S = correct_reflection(S, shape_set[reflection_ref])

    weights = []
    data_cost = 0.0
    reg_cost = 0.0
    for (shape, Bg, solved), model in zip(terms, models):
        W = solved @ S.T
        weights.append(W)
        residual = (W.T @ Bg) - S * shape.visibility[None, :]
        data_cost += float(np.sum(residual * residual))
        if model.smoothing > 0:
            reg_cost += model.smoothing * float(
                np.einsum("ij,ik,kj->", W, model.gram_regularizer(), W))
    penalty_cost = nu * float(np.sum(S.sum(axis=1) ** 2))
    report = check_theorem_conditions(shape_set, models) if check_conditions else None
    return GpaSolution(
        reference=S,
        weights=tuple(weights),
        prior=prior,
        nu=nu,
        cost=data_cost + reg_cost + penalty_cost,
        data_cost=data_cost,
        reg_cost=reg_cost,
        penalty_cost=penalty_cost,
        mus=tuple(model.smoothing for model in models),
        models=tuple(model.describe() for model in models),
        report=report,
    )


def solve_affine_centered(shape_set, prior=None, reflection_ref=0):
    """Affine GPA via translation elimination on full shapes.

    Centers every shape, sums the projectors onto the centered row spaces
    (Q_o), and scales the d top eigenvectors by the prior; equivalent to the
    homogeneous path up to row signs.
    """
    from .warps import AffineWarp

    if not shape_set.all_full:
        raise DegenerateInput("translation-eliminated affine GPA requires full shapes")
    d, m, n = shape_set.d, shape_set.m, shape_set.n
    if d > m - 1:
        raise DimensionError(f"need m >= d+1 landmarks, got d={d}, m={m}")
    if prior is None:
        prior = estimate_prior([s.points for s in shape_set])
    elif not isinstance(prior, CovariancePrior):
        prior = CovariancePrior(prior)

    Q = np.zeros((m, m))
    for i, s in enumerate(shape_set):
        Dbar = s.points - s.points.mean(axis=1, keepdims=True)
        G = Dbar @ Dbar.T
        try:
            sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), Dbar)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystem(f"centered shape {i} is degenerate", shape_index=i) from exc
        Q += Dbar.T @ sol
    Q = 0.5 * (Q + Q.T)

    # top-d of Q are the bottom-d of -Q, with identical prior pairing
    S = bottom_d_scaled(-Q, prior, anchor=_gram_anchor(shape_set))
    if prior.lambdas[-1] > 0:
        S = correct_reflection(S, shape_set[reflection_ref])

    models = [AffineWarp(d) for _ in range(n)]
    weights = []
    data_cost = 0.0
    for i, (shape, model) in enumerate(zip(shape_set, models)):
        B = model.basis(shape.points)
        W = _solve_normal(B @ B.T, B @ S.T, i)
        weights.append(W)
        residual = W.T @ B - S
        data_cost += float(np.sum(residual * residual))
    return GpaSolution(
        reference=S,
        weights=tuple(weights),
        prior=prior,
        nu=0.0,
        cost=data_cost,
        data_cost=data_cost,
        reg_cost=0.0,
        penalty_cost=0.0,
        mus=tuple(0.0 for _ in range(n)),
        models=tuple(model.describe() for model in models),
        report=None,
    )
