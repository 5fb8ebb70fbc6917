"""Generators for test bodies, labelled query points and point clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import Ball, Polytope, distances, inner_radius0, root_side, sphere_sample

# Facet-count constant of the best outer ball approximations produced below,
# count ~ C_B * (diam/eps)^((d-1)/2), measured on a desk sweep of d = 2, 3
# (see tests/test_workloads.py::test_ball_constant_is_frozen).
C_B = {2: 1.15, 3: 0.99}
BAND_MARGIN = 0.05


class Family(str, Enum):
    RANDOM_TANGENT = "random-tangent"
    BALL = "ball"
    HYPERCYLINDER = "hypercylinder"
    BOX = "box"
    SIMPLEX = "simplex"


@dataclass(frozen=True)
class BodySpec:
    family: Family
    d: int
    params: dict = field(default_factory=dict)
    seed: int = 0


class DiameterTooLarge(ValueError):
    """The hypercylinder's cross-section would not fit the unit cube."""


# --------------------------------------------------------------------------
# Bodies


def unit_directions(rng, n: int, d: int) -> np.ndarray:
    U = rng.normal(size=(n, d))
    return U / np.linalg.norm(U, axis=1)[:, None]


def gen_random_tangent(d: int, n: int, seed: int = 0, directions=None) -> Polytope:
    """n halfspaces tangent to the ball of radius r0/2, intersected with Q0."""
    if n < d + 1 and directions is None:
        raise ValueError("need at least d+1 halfspaces")
    U = unit_directions(np.random.default_rng(seed), n, d) if directions is None else \
        np.asarray(directions, float)
    K = Polytope(U, np.full(len(U), inner_radius0(d) / 2))
    return K.intersect(Polytope.cube(d))


def _fibonacci(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (1 + math.sqrt(5)) * i
    r = np.sqrt(1 - z * z)
    return np.c_[r * np.cos(phi), r * np.sin(phi), z]


def _outer_error(U, R) -> float:
    """How far the circumscribed polytope {<u,x> <= R} reaches beyond the ball."""
    K = Polytope(U, np.full(len(U), R))
    return float(np.linalg.norm(K.vertex_array, axis=1).max()) - R


def ball_directions(d: int, radius: float, facet_eps: float) -> np.ndarray:
    """Tangent directions whose circumscribed polytope is within facet_eps of
    the ball.  The angular gap theta with R(1/cos theta - 1) = facet_eps sets
    the density, which scales like sqrt(R facet_eps)."""
    theta = math.acos(radius / (radius + facet_eps))
    if d == 2:
        n = max(3, math.ceil(math.pi / theta))
        a = 2 * math.pi * np.arange(n) / n
        return np.c_[np.cos(a), np.sin(a)]
    if d == 3:
        # spherical caps of radius theta cover the sphere at about 1.2x their area
        n = max(8, math.ceil(1.2 * 4 / theta ** 2))
        while True:
            U = _fibonacci(n)
            if _outer_error(U, radius) <= facet_eps:
                return U
            n = math.ceil(n * 1.1)
    return sphere_sample(Ball(np.zeros(d), 1.0), 2 * math.sin(theta / 2))


def gen_ball_polytope(d: int, diam: float, facet_eps: float) -> Polytope:
    """Outer facet_eps-approximation of the origin-centred ball of radius diam/4."""
    if not (0 < facet_eps <= diam / 4):
        raise ValueError("facet_eps must lie in (0, diam/4]")
    R = diam / 4
    U = ball_directions(d, R, facet_eps)
    return Polytope(U, np.full(len(U), R))


@dataclass(frozen=True)
class CylinderInfo:
    k: int
    kappa: float
    t: int
    delta: float
    c_b: float


def hypercylinder_shape(d: int, alpha: float, eps: float, c_b: float | None = None) -> CylinderInfo:
    """Curved dimension k, query budget t and cross-section diameter Delta
    for the storage lower-bound body.  Raises when Delta exceeds 1/sqrt(d)."""
    if d < 2 or alpha < 4:
        raise ValueError("need d >= 2 and alpha >= 4")
    kappa = (d - 1) * math.sqrt(2 / alpha)
    k = min(d - 1, max(1, math.ceil(kappa - 1e-12)))
    t = math.ceil(eps ** (-(d - 1) / alpha) - 1e-9)
    cb = C_B.get(k + 1, C_B[3]) if c_b is None else c_b
    delta = eps * ((2 ** d + 1) * t / cb) ** (2 / k)
    if delta > 1 / math.sqrt(d):
        raise DiameterTooLarge(
            f"Delta = {delta:.4g} exceeds 1/sqrt(d) = {1 / math.sqrt(d):.4g} at eps = {eps}")
    return CylinderInfo(k, kappa, t, delta, cb)


def gen_hypercylinder(d: int, alpha: float, eps: float, c_b: float | None = None,
                      delta: float | None = None):
    """Ball polytope in the first k+1 coordinates, extended along the rest,
    cut by Q0.  Returns (body, CylinderInfo).

    ``delta`` overrides the computed cross-section diameter for exploratory
    runs; the default path enforces the diameter condition.
    """
    info = hypercylinder_shape(d, alpha, eps, c_b) if delta is None else \
        CylinderInfo(*_override(d, alpha, eps, c_b, delta))
    m = info.k + 1
    cross = gen_ball_polytope(m, info.delta, min(eps / 4, info.delta / 4))
    N = np.zeros((cross.n, d))
    N[:, :m] = cross.normals
    body = Polytope(N, cross.offsets).intersect(Polytope.cube(d))
    return body, info


def _override(d, alpha, eps, c_b, delta):
    kappa = (d - 1) * math.sqrt(2 / alpha)
    k = min(d - 1, max(1, math.ceil(kappa - 1e-12)))
    t = math.ceil(eps ** (-(d - 1) / alpha) - 1e-9)
    return k, kappa, t, float(delta), C_B.get(k + 1, C_B[3]) if c_b is None else c_b


def gen_box(d: int, half: float | None = None) -> Polytope:
    h = root_side(d) / 4 if half is None else half
    return Polytope.box(-h * np.ones(d), h * np.ones(d))


def gen_simplex(d: int, radius: float | None = None) -> Polytope:
    """Regular simplex with inradius ``radius`` (default r0/2) about the origin."""
    r = inner_radius0(d) / 2 if radius is None else radius
    V = np.eye(d + 1) - 1 / (d + 1)                     # centred vertices in R^(d+1)
    Q, _ = np.linalg.qr(V.T)                            # orthonormal basis of the hyperplane
    N = -(V @ Q[:, :d])                                 # facet normals point away from vertices
    N /= np.linalg.norm(N, axis=1)[:, None]
    return Polytope(N, np.full(d + 1, r))


def make_body(spec: BodySpec):
    """Body for a spec; also returns generator info (or None)."""
    p = dict(spec.params)
    f = Family(spec.family)
    if f is Family.RANDOM_TANGENT:
        return gen_random_tangent(spec.d, int(p.get("n", 50)), spec.seed), None
    if f is Family.BALL:
        diam = float(p.get("diam", 1.0))
        return gen_ball_polytope(spec.d, diam, float(p.get("facet_eps", 0.003))), None
    if f is Family.HYPERCYLINDER:
        return gen_hypercylinder(spec.d, float(p["alpha"]), float(p["eps"]), p.get("c_b"),
                                 p.get("delta"))
    if f is Family.BOX:
        return gen_box(spec.d, p.get("half")), None
    return gen_simplex(spec.d, p.get("radius")), None


# --------------------------------------------------------------------------
# Query points


class Stratum(str, Enum):
    INSIDE = "inside"
    BAND = "band"
    FAR = "far"


@dataclass
class LabeledPoints:
    points: np.ndarray
    stratum: np.ndarray        # stratum names (Stratum values) as strings
    distance: np.ndarray       # exact distance to K (0 inside)

    def __len__(self):
        return len(self.points)

    def mask(self, s: Stratum) -> np.ndarray:
        return self.stratum == Stratum(s).value


def _interior_point(K: Polytope) -> np.ndarray:
    return K.vertex_array.mean(axis=0)


def _facet_offsets(K, rng, s):
    """Points at exact distance s: cross a facet along its normal."""
    o = _interior_point(K)
    U = unit_directions(rng, len(s), K.dim)
    proj = U @ K.normals.T
    room = K.offsets - K.normals @ o
    with np.errstate(divide="ignore"):
        hit = np.where(proj > 1e-12, room / proj, np.inf)
    j = hit.argmin(axis=1)
    B = o + hit[np.arange(len(s)), j][:, None] * U
    return B + s[:, None] * K.normals[j]


def _vertex_offsets(K, rng, s):
    """Points at exact distance s from a vertex along its normal cone."""
    V = K.vertex_array
    out = np.empty((len(s), K.dim))
    pick = rng.integers(0, len(V), len(s))
    for i, v in enumerate(pick):
        act = np.flatnonzero(np.abs(K.normals @ V[v] - K.offsets) <= 1e-9)
        w = rng.random(len(act)) + 1e-3
        u = w @ K.normals[act]
        out[i] = V[v] + s[i] * u / np.linalg.norm(u)
    return out


def _exterior(K, rng, lo, hi, count):
    s = lo + (hi - lo) * (1 - rng.random(count))        # (lo, hi]
    half = count // 2
    X = np.vstack([_facet_offsets(K, rng, s[:half]), _vertex_offsets(K, rng, s[half:])])
    return X, s


def gen_queries(K: Polytope, eps: float, counts=(1000, 1000, 1000), seed: int = 0,
                margin: float = BAND_MARGIN, certify: bool = True) -> LabeledPoints:
    """Inside points, band points at distance in (eps(1+margin), 2eps] and far
    points beyond 2eps, each with its exact distance to K.

    Exterior points are built at a known distance (an offset along a facet
    normal or along a vertex normal cone) and re-measured by the
    nearest-point oracle when ``certify`` is set.
    """
    rng = np.random.default_rng(seed)
    n_in, n_band, n_far = counts
    V = K.vertex_array
    d = K.dim
    pick = rng.integers(0, len(V), (n_in, d + 1))
    W = rng.dirichlet(np.ones(d + 1), n_in)
    inside = np.einsum("ij,ijk->ik", W, V[pick])
    band, s_band = _exterior(K, rng, eps * (1 + margin), 2 * eps, n_band)
    far_hi = max(4 * eps, 0.25)
    far, s_far = _exterior(K, rng, 2 * eps * (1 + 1e-9), far_hi, n_far)
    X = np.vstack([inside, band, far])
    dist = np.r_[np.zeros(n_in), s_band, s_far]
    lab = np.array([Stratum.INSIDE.value] * n_in + [Stratum.BAND.value] * n_band
                   + [Stratum.FAR.value] * n_far)
    if certify and len(X):
        measured = distances(K, X)
        scale = max(1.0, float(np.abs(X).max()))
        if np.any(np.abs(measured - dist) > 1e-9 * scale):
            raise AssertionError("oracle disagrees with a constructed distance")
    return LabeledPoints(X, lab, dist)


# --------------------------------------------------------------------------
# Point clouds


def gen_points(d: int, n: int, kind: str = "uniform", seed: int = 0, *,
               clusters: int = 2, sigma: float = 0.05, gap: float = 0.5) -> np.ndarray:
    """Uniform points in the unit cube, truncated Gaussian clusters, or
    points on the unit sphere.

    Cluster centres lie on the first axis, spaced so that any two clusters
    are at least ``gap`` apart (each cluster is cut at radius 3 sigma).
    """
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        return rng.random((n, d))
    if kind == "sphere":
        return unit_directions(rng, n, d)
    if kind == "clusters":
        step = gap + 6 * sigma
        centres = np.zeros((clusters, d))
        centres[:, 0] = step * np.arange(clusters)
        label = rng.integers(0, clusters, n)
        Z = rng.normal(size=(n, d)) * sigma
        norm = np.linalg.norm(Z, axis=1)
        over = norm > 3 * sigma
        Z[over] *= (3 * sigma / norm[over])[:, None]
        return centres[label] + Z
    raise ValueError(f"unknown distribution {kind!r}")
