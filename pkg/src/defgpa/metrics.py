"""Evaluation metrics: reference/datum-space residuals and cross-validation.

rmse_r measures residuals after mapping each datum shape into the reference
frame; rmse_d maps the reference back through per-shape inverse transforms
(exact for invertible affine maps, a fitted inverse spline for the TPS).  The
cross-validation error re-solves the GPA with groups of points held out,
predicts them through the fold transforms, and gauge-corrects with a rigid
Procrustes between the fold reference and the full reference.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DimensionError,
    InsufficientOverlap,
    SingularTransform,
)
from . import gpa as _gpa
from .warps import TpsWarp, apply_warp, fit_inverse_tps


@dataclass(frozen=True)
class CveConfig:
    """Leave-N-out layout: contiguous deterministic folds, optional shuffle."""

    group_size: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.group_size < 1:
            raise DimensionError("fold size must be at least 1")


def _masked_sq_norm(residual, mask):
    r = residual * mask[None, :]
    return float(np.sum(r * r))


def rmse_r(solution, shape_set, models):
    """Root-mean-square reference-space residual over all visible landmarks."""
    kappa = sum(s.num_visible for s in shape_set)
    total = 0.0
    for shape, model, W in zip(shape_set, models, solution.weights):
        mapped = apply_warp(model, W, shape.filled(0.0))
        total += _masked_sq_norm(mapped - solution.reference, shape.visibility)
    return float(np.sqrt(total / kappa))


def _inverse_transform(model, W, S):
    """T^{-1}(S) for one shape: exact affine inverse or fitted inverse TPS."""
    if isinstance(model, TpsWarp):
        inverse, W_inv = fit_inverse_tps(model, W, model.internal_smoothing)
        return apply_warp(inverse, W_inv, S)
    # affine: W^T = [A | t]
    W = np.asarray(W, dtype=float)
    d = S.shape[0]
    A = W[:d, :].T
    t = W[d, :]
    try:
        return np.linalg.solve(A, S - t[:, None])
    except np.linalg.LinAlgError as exc:
        raise SingularTransform("affine transform has a singular linear part") from exc


def rmse_d(solution, shape_set, models):
    """Root-mean-square datum-space residual via per-shape inverse transforms."""
    kappa = sum(s.num_visible for s in shape_set)
    total = 0.0
    for shape, model, W in zip(shape_set, models, solution.weights):
        back = _inverse_transform(model, W, solution.reference)
        total += _masked_sq_norm(shape.filled(0.0) - back, shape.visibility)
    return float(np.sqrt(total / kappa))


def gauge_align(A, B, mask=None):
    """Rigid (R in SO(d), t) minimizing ||(R A + t 1^T - B) * mask||_F.

    The similarity Procrustes of the completion stage with the scale pinned
    to 1 and the determinant corrected to +1.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionError(f"shapes {A.shape} and {B.shape} do not match")
    d, m = A.shape
    if mask is None:
        mask = np.ones(m, dtype=bool)
    mask = np.asarray(mask, dtype=bool).ravel()
    if int(mask.sum()) < d + 1:
        raise InsufficientOverlap(f"need at least {d + 1} joint points, have {int(mask.sum())}")
    P = A[:, mask]
    Q = B[:, mask]
    muP = P.mean(axis=1, keepdims=True)
    muQ = Q.mean(axis=1, keepdims=True)
    M = (P - muP) @ (Q - muQ).T
    U, sv, Vt = np.linalg.svd(M)
    if sv[0] <= 0 or (d >= 2 and sv[d - 2] <= 1e-12 * sv[0]):
        raise DegenerateConfiguration("cross-covariance is rank-deficient; rotation undetermined")
    R = Vt.T @ U.T
    if np.linalg.det(R) < 0:
        D = np.eye(d)
        D[-1, -1] = -1.0
        R = Vt.T @ D @ U.T
    t = (muQ - R @ muP).ravel()
    return R, t


def _fold_slices(m, config):
    order = np.arange(m)
    if config.seed is not None:
        order = np.random.default_rng(config.seed).permutation(m)
    N = config.group_size
    n_folds = int(np.ceil(m / N))
    return [order[k * N: min((k + 1) * N, m)] for k in range(n_folds)]


def cross_validation_error(shape_set, models, prior=None, nu=None, config=None,
                           reflection_ref=0):
    """Leave-N-out CVE and the per-shape predicted reference shapes.

    Per fold the GPA is re-solved on the kept points (prior re-estimated on
    the reduced set, as the full pipeline would), held-out points are pushed
    through the fold transforms, and the fold reference is rigidly aligned to
    the full reference restricted to the kept points.  Only originally visible
    landmarks enter the error.
    """
    if config is None:
        config = CveConfig()
    d, m, n = shape_set.d, shape_set.m, shape_set.n
    if config.group_size >= m:
        raise DimensionError(f"fold size {config.group_size} must be below m={m}")
    if m - config.group_size < d + 1:
        raise DimensionError(f"folds of {config.group_size} leave fewer than d+1={d + 1} points")

    full = _gpa.solve(shape_set, models, prior=prior, nu=nu,
                      reflection_ref=reflection_ref, check_conditions=False)
    nu_used = full.nu

    predicted = [np.full((d, m), np.nan) for _ in range(n)]
    covered = np.zeros(m, dtype=bool)
    for fold in _fold_slices(m, config):
        keep = np.setdiff1d(np.arange(m), fold)
        for shape in shape_set:
            if int(shape.visibility[keep].sum()) < d + 1:
                raise InsufficientOverlap(
                    f"fold {fold.tolist()} leaves a shape with fewer than {d + 1} visible points")
        try:
            reduced = shape_set.restrict_points(keep)
        except Exception as exc:  # a kept point visible nowhere: skip, not fatal
            warnings.warn(f"skipping fold {fold.tolist()}: {exc}")
            continue
        nu_fold = max(nu_used, n / keep.size)
        fold_sol = _gpa.solve(reduced, models, prior=None, nu=nu_fold,
                              reflection_ref=reflection_ref, check_conditions=False)
        R, t = gauge_align(fold_sol.reference, full.reference[:, keep])
        for i, shape in enumerate(shape_set):
            pred = apply_warp(models[i], fold_sol.weights[i], shape.filled(0.0)[:, fold])
            predicted[i][:, fold] = R @ pred + t[:, None]
        covered[fold] = True

    kappa = 0
    total = 0.0
    for i, shape in enumerate(shape_set):
        use = shape.visibility & covered
        kappa += int(use.sum())
        diff = np.where(use[None, :], predicted[i] - full.reference, 0.0)
        total += float(np.sum(diff * diff))
        predicted[i][:, ~shape.visibility] = np.nan
    if kappa == 0:
        raise DegenerateConfiguration("no fold produced any prediction")
    return float(np.sqrt(total / kappa)), predicted
