"""Shared synthetic-instance generators for the test suite."""

import numpy as np
import pytest

from defgpa import AffineWarp, Shape, ShapeSet, place_control_points, tps_build


def random_rotation(rng, d):
    """Haar-ish random element of SO(d)."""
    A = rng.normal(size=(d, d))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1.0
    return Q


def base_shape(rng, d, m, scale=1.0):
    """Well-spread random base landmarks, d x m."""
    return scale * rng.normal(size=(d, m))


def full_set(rng, d, m, n, kind="affine", noise=0.0, deform=0.15):
    """n full shapes derived from one base: rigid, affine, or smooth-random."""
    base = base_shape(rng, d, m)
    shapes = []
    for _ in range(n):
        if kind == "rigid":
            D = random_rotation(rng, d) @ base + rng.normal(size=(d, 1))
        elif kind == "affine":
            A = np.eye(d) + deform * rng.normal(size=(d, d))
            D = A @ base + rng.normal(size=(d, 1))
        else:  # loosely deformed: affine plus smooth quadratic bend
            A = np.eye(d) + deform * rng.normal(size=(d, d))
            D = A @ base + rng.normal(size=(d, 1))
            bend = rng.normal(size=(d, d)) * deform * 0.3
            D = D + bend @ (base * base)
        if noise > 0:
            D = D + noise * rng.normal(size=D.shape)
        shapes.append(Shape(D, np.ones(m, bool)))
    return ShapeSet(tuple(shapes))


def mask_set(rng, shape_set, frac=0.2, min_joint=None):
    """Hide ~frac of the entries while keeping the set solvable.

    Repairs guarantee: every point visible somewhere, every shape keeps a
    comfortable majority of points, and every shape pair overlaps in at least
    min_joint (default d+1) points.
    """
    d, m, n = shape_set.d, shape_set.m, shape_set.n
    if min_joint is None:
        min_joint = d + 1
    vis = np.ones((n, m), dtype=bool)
    hide = rng.random((n, m)) < frac
    vis &= ~hide
    floor = max(d + 2, int(np.ceil(0.6 * m)))
    for i in range(n):
        short = floor - int(vis[i].sum())
        if short > 0:
            hidden = np.flatnonzero(~vis[i])
            vis[i, rng.choice(hidden, size=short, replace=False)] = True
    for j in range(m):
        if not vis[:, j].any():
            vis[rng.integers(n), j] = True
    for i in range(n):
        for k in range(i + 1, n):
            while int((vis[i] & vis[k]).sum()) < min_joint:
                hidden = np.flatnonzero(~(vis[i] & vis[k]))
                j = rng.choice(hidden)
                vis[i, j] = True
                vis[k, j] = True
    return ShapeSet(tuple(
        Shape(s.points, vis[i], s.label) for i, s in enumerate(shape_set)))


def affine_models(shape_set):
    return [AffineWarp(shape_set.d) for _ in range(shape_set.n)]


def tps_models(shape_set, k=3, theta=1.0, internal=None, flat_axes=0):
    models = []
    for s in shape_set:
        centers = place_control_points(s, k, flat_axes)
        models.append(tps_build(centers, internal).with_smoothing(s.num_visible * theta))
    return models


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
