import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from polymem.geometry import Polytope, distances, hausdorff_outer, inner_radius0
from polymem.precondition import (AffineMap, DegenerateBody, canonicalize, directional_widths,
                                  epsilon_kernel, fatness, mvee, polar_points, reduce_halfspaces)

from conftest import random_body


def _random_affine_body(seed, d, n):
    rng = np.random.default_rng(seed)
    K = random_body(rng, d, n, radius=0.3)
    A = rng.normal(size=(d, d)) + 2 * np.eye(d)
    return K.affine_image(A, rng.normal(size=d))


def test_affine_map_round_trip(rng):
    T = AffineMap(rng.normal(size=(3, 3)) + 3 * np.eye(3), rng.normal(size=3))
    X = rng.normal(size=(50, 3))
    assert np.allclose(T.inverse(T(X)), X, atol=1e-9)
    assert np.allclose(T.inverted()(T(X)), X, atol=1e-9)


def test_mvee_of_square_is_circumcircle():
    P = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1.0]])
    c, A = mvee(P)
    assert np.allclose(c, 0, atol=1e-9)
    assert np.allclose(A, np.eye(2) / 2, rtol=1e-5)


def test_mvee_rejects_flat_points():
    with pytest.raises(DegenerateBody):
        mvee(np.array([[0, 0], [1, 1], [2, 2.0]]))


def test_cross_polytope_maps_by_pure_scaling():
    d = 3
    signs = np.array(np.meshgrid(*[[-1, 1]] * d)).reshape(d, -1).T
    K = Polytope(signs, np.full(len(signs), 0.25))
    C = canonicalize(K)
    assert C.gamma >= 1 / d
    s = C.map.matrix[0, 0]
    assert np.allclose(C.map.matrix, s * np.eye(d), atol=1e-4 * s)
    assert np.allclose(C.map.translation, 0, atol=1e-9)


def _lp_extreme(K, u):
    res = linprog(-u, A_ub=K.normals, b_ub=K.offsets, bounds=[(None, None)] * K.dim, method="highs")
    return -res.fun


def test_thin_box_two_inclusions():
    K = Polytope.box([-0.4, -0.001], [0.4, 0.001])
    C = canonicalize(K)
    r0 = inner_radius0(2)
    # inner ball: every halfspace sits at least r0/2 from the origin
    assert C.body.offsets.min() >= r0 / 2 - 1e-9
    # outer: LP maxima along the axes stay within Q0
    for u in np.vstack([np.eye(2), -np.eye(2)]):
        assert _lp_extreme(C.body, u) <= 0.5 / math.sqrt(2) + 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 5000), d=st.sampled_from([2, 3]), n=st.integers(8, 40))
def test_canonical_certificate(seed, d, n):
    C = canonicalize(_random_affine_body(seed, d, n))
    gamma, outer = fatness(C.body)
    assert gamma >= 1 / d - 1e-6
    assert outer <= 1 + 1e-9


def test_polar_points_examples():
    assert np.allclose(polar_points(Polytope([[1.0, 0.0]], [0.5])), [[2.0, 0.0]])
    U = np.random.default_rng(3).normal(size=(40, 3))
    U /= np.linalg.norm(U, axis=1)[:, None]
    D = polar_points(Polytope(U, np.full(40, 0.2)))
    assert np.allclose(np.linalg.norm(D, axis=1), 5.0)
    with pytest.raises(ValueError):
        polar_points(Polytope([[1.0, 0.0]], [-0.1]))


def test_polar_involution_on_box():
    a, c = 0.3, 0.1
    box = Polytope.box([-a, -c], [a, c])
    D = polar_points(box)
    # the body whose vertices are D is the diamond |x|/ (1/a) + |y| / (1/c) <= 1
    diamond = Polytope([[a, c], [a, -c], [-a, c], [-a, -c]], [1, 1, 1, 1])
    assert np.allclose(np.sort(diamond.vertex_array, axis=0), np.sort(D, axis=0))
    back = polar_points(diamond)
    assert np.allclose(np.sort(back, axis=0), np.sort(box.vertex_array, axis=0))


def test_kernel_coarse_and_segment():
    rng = np.random.default_rng(5)
    S = rng.uniform(-1, 1, size=(300, 3))
    idx = epsilon_kernel(S, 1.0)
    assert len(idx) >= 6
    E = np.vstack([np.eye(3), -np.eye(3)])
    assert np.allclose(directional_widths(S[idx], E), directional_widths(S, E))
    seg = np.array([[0.0, 0.0], [1.0, 2.0]])
    for eps in (1.0, 0.1, 0.01):
        assert list(epsilon_kernel(seg, eps)) == [0, 1]


def test_kernel_width_on_sphere():
    rng = np.random.default_rng(7)
    S = rng.normal(size=(10_000, 3))
    S /= np.linalg.norm(S, axis=1)[:, None]
    eps = 0.05
    idx = epsilon_kernel(S, eps)
    U = rng.normal(size=(10_000, 3))
    U /= np.linalg.norm(U, axis=1)[:, None]
    ratio = directional_widths(S[idx], U) / directional_widths(S, U)
    assert ratio.min() >= 1 - eps
    # size constant c in |S'| <= c / eps, measured once on this cloud (c = 463) and frozen
    assert len(idx) <= 463 / eps


def test_reduce_keeps_identity_and_fatness():
    K = _random_affine_body(11, 3, 60)
    R = reduce_halfspaces(K, 0.5)
    base = canonicalize(K)
    assert np.all(np.diff(R.source_indices) > 0)
    assert np.allclose(R.body.normals, base.body.normals[R.source_indices])
    assert np.allclose(R.body.offsets, 0.5 * base.body.offsets[R.source_indices])
    assert R.gamma >= 1 / (2 * 3) - 1e-6
    assert R.eps_abs == pytest.approx(0.5 / (4 * 3 * math.sqrt(3)))


def test_reduce_prunes_dense_circle():
    th = np.linspace(0, 2 * np.pi, 512, endpoint=False)
    K = Polytope(np.c_[np.cos(th), np.sin(th)], np.full(512, 0.2))
    eps = 0.1
    R = reduce_halfspaces(K, eps)
    d = 2
    half = reduce_halfspaces(K, eps).map.apply_body(K)
    assert hausdorff_outer(R.body, half) <= eps / (2 * d * math.sqrt(d))
    # the kernel should discard most of the 512 halfspaces
    assert len(R.source_indices) < 512 / 4


def test_pullback_soundness():
    rng = np.random.default_rng(13)
    K = _random_affine_body(17, 2, 30)
    eps = 0.2
    R = reduce_halfspaces(K, eps)
    V = K.vertex_array
    diam = max(np.linalg.norm(a - b) for a in V for b in V)
    lo, hi = V.min(axis=0) - eps * diam * 2, V.max(axis=0) + eps * diam * 2
    Q = rng.uniform(lo, hi, size=(10_000, 2))
    dist = distances(K, Q)
    TQ = R.map(Q)
    inside = dist == 0
    assert np.all(R.body.contains(TQ[inside]))
    far = dist > eps * diam
    assert np.all(distances(R.body, TQ[far]) > R.eps_abs)
