"""Outer approximations of a body: global baselines and per-cell bundles.

Global: ``dudley_approx`` (supporting halfspaces seen from a large sphere),
``bentley_columns`` (vertical extents per grid column) and ``hybrid_tradeoff``
(a uniform grid with a local Dudley bundle per boundary cell).

Local, for one quadtree cell: ``set_cover_local`` picks a few *input*
halfspaces by greedy cover over a sample grid, ``local_dudley`` builds fresh
supporting halfspaces near the cell.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection, QhullError

from . import _kernels
from .config import DEFAULT, Tolerances
from .geometry import (Ball, Polytope, QuadtreeCell, _dedupe, box_excluder, box_max_violation,
                       distances, feasible, inner_radius0, max_violation, nearest_points, root_side,
                       sphere_sample)

DUDLEY_RADIUS = 3.0


class Method(str, Enum):
    SET_COVER = "SetCover"
    LOCAL_DUDLEY = "LocalDudley"
    EXACT = "Exact"


@dataclass(frozen=True)
class GridCell:
    """A box cell of a uniform grid over Q0 (not necessarily a quadtree cell)."""

    index: tuple
    lo: np.ndarray
    hi: np.ndarray

    @property
    def center(self):
        return (self.lo + self.hi) / 2

    @property
    def diam(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def corners(self):
        d = self.lo.size
        bits = np.array(list(itertools.product((0, 1), repeat=d)), float)
        return self.lo + bits * (self.hi - self.lo)


@dataclass
class LocalApprox:
    """P(Q): a halfspace bundle that approximates K inside one cell."""

    cell: object
    normals: np.ndarray
    offsets: np.ndarray
    method: Method
    indices: np.ndarray | None = None   # input-halfspace identities (set cover / exact)

    def __len__(self):
        return len(self.offsets)

    def contains(self, X, tol: float = DEFAULT.membership) -> np.ndarray:
        X = np.atleast_2d(X)
        if len(self.offsets) == 0:
            return np.ones(len(X), bool)
        return max_violation(X, self.normals, self.offsets) <= tol

    @classmethod
    def from_indices(cls, K: Polytope, cell, idx, method: Method) -> "LocalApprox":
        idx = np.asarray(idx, dtype=np.int64)
        return cls(cell, K.normals[idx], K.offsets[idx], method, idx)


@dataclass(frozen=True)
class TooLarge:
    cell: object
    reason: str = "budget"     # "budget": cover needs more than t; "grid": sample grid over cap
    size: int = 0


@dataclass(frozen=True)
class DudleySample:
    sphere_point: np.ndarray
    contact: np.ndarray
    normal: np.ndarray
    offset: float


# --------------------------------------------------------------------------
# Dudley


def _supports(X, P):
    """Halfspaces through contacts P orthogonal to X - P (rows with X != P)."""
    D = X - P
    L = np.linalg.norm(D, axis=1)
    ok = L > 0
    N = D[ok] / L[ok, None]
    b = np.einsum("ij,ij->i", N, P[ok])
    return N, b, ok


def _unique_halfspaces(N, b, tol=DEFAULT.dedup):
    if len(b) == 0:
        return N, b
    H = _dedupe(np.hstack([N, b[:, None]]), tol)
    return H[:, :-1], H[:, -1]


def dudley_samples(K: Polytope, eps: float, radius: float = DUDLEY_RADIUS) -> list[DudleySample]:
    S = sphere_sample(Ball(np.zeros(K.dim), radius), math.sqrt(eps) / 4)
    P, _ = nearest_points(K, S)
    N, b, ok = _supports(S, P)
    return [DudleySample(s, p, n, o) for s, p, n, o in zip(S[ok], P[ok], N, b)]


def dudley_approx(K: Polytope, eps: float, radius: float = DUDLEY_RADIUS) -> Polytope:
    """Intersection of supporting halfspaces at the nearest points of a
    sqrt(eps)/4-dense sample of the radius-3 sphere (duplicates merged)."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    S = sphere_sample(Ball(np.zeros(K.dim), radius), math.sqrt(eps) / 4)
    P, _ = nearest_points(K, S)
    N, b, _ = _supports(S, P)
    N, b = _unique_halfspaces(N, b)
    return Polytope(N, b, normalize=False)


# --------------------------------------------------------------------------
# Bentley columns


@dataclass
class ColumnTable:
    d: int
    pitch: float               # side of a column's (d-1)-dim base
    per_axis: int
    lo: np.ndarray             # column floor, nan where the column misses K
    hi: np.ndarray

    @property
    def columns(self) -> int:
        return self.lo.size

    @property
    def nonempty(self) -> int:
        return int(np.sum(~np.isnan(self.lo)))

    def column_of(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        s0 = root_side(self.d)
        idx = np.floor((X[:, :-1] + s0 / 2) / self.pitch).astype(np.int64)
        idx = np.clip(idx, 0, self.per_axis - 1)
        return np.ravel_multi_index(tuple(idx.T), (self.per_axis,) * (self.d - 1))

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        s0 = root_side(self.d)
        inside_box = np.all(np.abs(X) <= s0 / 2 + DEFAULT.membership, axis=1)
        out = np.zeros(len(X), bool)
        c = self.column_of(X[inside_box])
        z = X[inside_box, -1]
        lo, hi = self.lo[c], self.hi[c]
        with np.errstate(invalid="ignore"):
            out[inside_box] = (z >= lo - DEFAULT.membership) & (z <= hi + DEFAULT.membership)
        return out


def bentley_columns(K: Polytope, eps: float) -> ColumnTable:
    """Min and max of x_d over K inside each column of diameter eps."""

    d = K.dim
    s0 = root_side(d)
    per_axis = max(1, math.ceil(s0 / (eps / math.sqrt(max(d - 1, 1))) - 1e-12))
    pitch = s0 / per_axis
    shape = (per_axis,) * (d - 1)
    lo = np.full(int(np.prod(shape)), np.nan)
    hi = np.full(int(np.prod(shape)), np.nan)
    c = np.zeros(d)
    c[-1] = 1.0
    for flat, idx in enumerate(itertools.product(range(per_axis), repeat=d - 1)):
        blo = -s0 / 2 + np.array(idx) * pitch
        bounds = [(float(a), float(a + pitch)) for a in blo] + [(-s0 / 2, s0 / 2)]
        box_lo = np.array([b[0] for b in bounds])
        box_hi = np.array([b[1] for b in bounds])
        if box_excluder(K, box_lo, box_hi) >= 0:
            continue
        r1 = linprog(c, A_ub=K.normals, b_ub=K.offsets, bounds=bounds, method="highs")
        if r1.status != 0:
            continue
        r2 = linprog(-c, A_ub=K.normals, b_ub=K.offsets, bounds=bounds, method="highs")
        lo[flat] = r1.fun
        hi[flat] = -r2.fun
    return ColumnTable(d, pitch, per_axis, lo, hi)


# --------------------------------------------------------------------------
# Scaled body and greedy cover


def scaled_body(K: Polytope, eps: float) -> Polytope:
    """K+ = (1 + 2 sqrt(d) eps) K, same halfspace order."""
    return K.scaled(1 + 2 * math.sqrt(K.dim) * eps)


@dataclass(frozen=True)
class CoverParams:
    beta: float
    delta: float
    eps: float


def cover_params(K: Polytope, eps: float) -> CoverParams:
    """Scaling step beta and grid radius delta for the cover construction.

    With a the inner radius of K about the origin and b = max(outer radius, r0),
    beta = eps/(4b) and delta = a*beta.  For a body between gamma*B0 and B0 this
    is beta = sqrt(d) eps / 2 and delta = gamma eps / 4.
    """
    d = K.dim
    a = float(K.offsets.min())
    if a <= 0:
        raise ValueError("origin must be interior to K")
    b = max(float(np.linalg.norm(K.vertex_array, axis=1).max()), inner_radius0(d))
    eps = min(eps, 4 * b)
    beta = eps / (4 * b)
    return CoverParams(beta, a * beta, eps)


def _grid_axes(cell, delta: float) -> np.ndarray:
    lo, hi = np.asarray(cell.lo, float), np.asarray(cell.hi, float)
    d = lo.size
    side = float(np.max(hi - lo))
    k = max(1, math.ceil(side / (delta / math.sqrt(d)) - 1e-12))
    return np.array([np.linspace(a, b, k + 1) for a, b in zip(lo, hi)])


def cover_grid(cell, delta: float) -> np.ndarray:
    """Grid nodes anchored at the cell's low corner, pitch <= delta/sqrt(d)
    and dividing the side evenly; every cell point has a node within delta/2."""
    axes = _grid_axes(cell, delta)
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def cover_grid_size(cell, delta: float) -> int:
    d = len(cell.lo)
    side = float(np.max(np.asarray(cell.hi) - np.asarray(cell.lo)))
    k = max(1, math.ceil(side / (delta / math.sqrt(d)) - 1e-12))
    return (k + 1) ** d


def cover_instance(K: Polytope, cell, eps: float, params: CoverParams | None = None):
    """The element/set incidence of the cover problem for one cell.

    Returns (M, candidates): M[i, j] says grid point i of R lies outside
    (1+beta) h_j for candidate halfspace j.
    """
    p = params or cover_params(K, eps)
    grow = 1 + p.beta
    boxmax = box_max_violation(K.scaled(grow), cell.lo, cell.hi)
    cand = np.flatnonzero(boxmax > 0)
    if len(cand) == 0:
        return np.zeros((0, 0), bool), cand
    # A point outside K++ through some h is outside (1+beta)h too, so h is a
    # candidate; scanning the candidates alone therefore finds all of R.
    M = _kernels.cover_rows(_grid_axes(cell, p.delta), np.ascontiguousarray(K.normals[cand]),
                            np.ascontiguousarray(K.offsets[cand]), grow)
    return M, cand


def set_cover_local(K: Polytope, cell, eps: float, t: int,
                    tol: Tolerances = DEFAULT, params: CoverParams | None = None):
    """At most t input halfspaces approximating K inside the cell, or TooLarge."""
    p = params or cover_params(K, eps)
    size = cover_grid_size(cell, p.delta)
    if size > tol.cover_grid_cap:
        return TooLarge(cell, "grid", size)
    M, cand = cover_instance(K, cell, eps, p)
    if M.shape[0] == 0:
        return LocalApprox.from_indices(K, cell, [], Method.SET_COVER)
    chosen, nc, overflow, stuck = _kernels.greedy_cover(np.ascontiguousarray(M), int(t))
    if stuck:
        raise RuntimeError("cover instance has an uncoverable element")
    if overflow:
        return TooLarge(cell, "budget", nc + 1)
    idx = np.sort(cand[chosen[:nc]])
    return LocalApprox.from_indices(K, cell, idx, Method.SET_COVER)


def greedy_cover_size(M: np.ndarray) -> int:
    _, nc, _, stuck = _kernels.greedy_cover(np.ascontiguousarray(M, dtype=bool), M.shape[1] + 1)
    if stuck:
        raise ValueError("uncoverable element")
    return nc


# --------------------------------------------------------------------------
# Local Dudley


def _clip_to_box(K: Polytope, lo, hi) -> Polytope | None:
    """K intersected with a box, keeping only halfspaces that cut the box."""
    if box_excluder(K, lo, hi) >= 0:
        return None
    cut = box_max_violation(K, lo, hi) > 0
    return K.subset(np.flatnonzero(cut)).intersect(Polytope.box(lo, hi))


def _clipped_vertices(K: Polytope) -> np.ndarray:
    """Vertices of a clipped local body.  These bodies can carry a few hundred
    halfspaces, where trying every d-subset is slow, so qhull intersects them
    around the Chebyshev centre; flat or failing cases use brute force."""
    d = K.dim
    if math.comb(K.n, d) <= 20_000:
        return K.vertex_array
    norms = np.linalg.norm(K.normals, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([K.normals, norms[:, None]]), b_ub=K.offsets,
                  bounds=[(None, None)] * d + [(0, None)], method="highs")
    if res.status != 0 or res.x[-1] < 1e-9:
        return K.vertex_array
    try:
        H = HalfspaceIntersection(np.hstack([K.normals, -K.offsets[:, None]]), res.x[:d])
    except QhullError:
        return K.vertex_array
    return _dedupe(H.intersections, DEFAULT.dedup)


def local_dudley(K: Polytope, cell, eps: float) -> LocalApprox:
    """Supporting halfspaces with contact near the cell, from a Dudley sphere
    of radius 3 diam(Q) around the cell centre at density sqrt(eps')/4,
    eps' = eps / diam(Q)."""
    c = np.asarray(cell.center, float)
    D = float(cell.diam)
    d = c.size
    eps_s = eps / D
    reach = math.sqrt(eps_s) * D                 # contacts kept within this of the cell
    margin = 1.25 * reach + 1e-9
    lo = np.asarray(cell.lo, float) - margin
    hi = np.asarray(cell.hi, float) + margin
    empty = np.empty((0, d))
    Kloc = _clip_to_box(K, lo, hi)
    if Kloc is None:
        return LocalApprox(cell, empty, np.empty(0), Method.LOCAL_DUDLEY)
    S = c + D * sphere_sample(Ball(np.zeros(d), DUDLEY_RADIUS), math.sqrt(eps_s) / 4)
    S = S[K.violation(S) > 0]
    if len(S) == 0:
        return LocalApprox(cell, empty, np.empty(0), Method.LOCAL_DUDLEY)
    P = _kernels.nearest_points(_clipped_vertices(Kloc), S, 1e-15)
    gap = np.maximum(np.maximum(cell.lo - P, P - cell.hi), 0.0)
    near = np.linalg.norm(gap, axis=1) <= reach
    N, b, _ = _supports(S[near], P[near])
    N, b = _unique_halfspaces(N, b)
    return LocalApprox(cell, N, b, Method.LOCAL_DUDLEY)


# --------------------------------------------------------------------------
# Hybrid grid


class CellLabel(str, Enum):
    INSIDE = "Inside"
    OUTSIDE = "Outside"
    BUNDLE = "Bundle"


def corners_near(K: Polytope, corners, eps: float) -> bool:
    """Every corner within eps of K (cheap halfspace bound first)."""
    viol = K.violation(corners)
    if np.any(viol > eps):
        return False
    if np.all(viol <= 0):
        return True
    return bool(np.all(distances(K, corners) <= eps))


@dataclass
class HybridGrid:
    d: int
    eps: float
    alpha: float
    pitch_target: float
    per_axis: int
    labels: dict = field(default_factory=dict)      # index tuple -> CellLabel
    bundles: dict = field(default_factory=dict)     # index tuple -> LocalApprox

    @property
    def storage(self) -> int:
        return sum(len(b) for b in self.bundles.values())

    @property
    def boundary_cells(self) -> int:
        return len(self.bundles)

    def query(self, X):
        """(accepted, halfspaces tested) for every row of X."""
        X = np.atleast_2d(np.asarray(X, float))
        s0 = root_side(self.d)
        acc = np.zeros(len(X), bool)
        tests = np.zeros(len(X), np.int64)
        ok = np.all(np.abs(X) <= s0 / 2 + DEFAULT.membership, axis=1)
        idx = np.clip(np.floor((X + s0 / 2) / (s0 / self.per_axis)).astype(np.int64), 0, self.per_axis - 1)
        for i in np.flatnonzero(ok):
            key = tuple(idx[i])
            lab = self.labels[key]
            if lab is CellLabel.INSIDE:
                acc[i] = True
            elif lab is CellLabel.BUNDLE:
                B = self.bundles[key]
                v = X[i] @ B.normals.T - B.offsets if len(B) else np.empty(0)
                bad = np.flatnonzero(v > DEFAULT.membership)
                acc[i] = bad.size == 0
                tests[i] = len(B) if bad.size == 0 else bad[0] + 1
        return acc, tests


def hybrid_tradeoff(K: Polytope, eps: float, alpha: float) -> HybridGrid:
    """Uniform grid of cells with diameter at most r = eps^(1-2/alpha);
    boundary cells carry a local Dudley bundle."""
    if alpha < 2:
        raise ValueError("alpha must be at least 2")
    d = K.dim
    r = eps ** (1 - 2 / alpha)
    per_axis = max(1, math.ceil(1 / r - 1e-9))
    s0 = root_side(d)
    side = s0 / per_axis
    H = HybridGrid(d, eps, alpha, r, per_axis)
    for idx in itertools.product(range(per_axis), repeat=d):
        lo = -s0 / 2 + np.array(idx) * side
        cell = GridCell(idx, lo, lo + side)
        if not feasible(K, (cell.lo, cell.hi)):
            H.labels[idx] = CellLabel.OUTSIDE
        elif corners_near(K, cell.corners(), eps):
            H.labels[idx] = CellLabel.INSIDE
        else:
            H.labels[idx] = CellLabel.BUNDLE
            H.bundles[idx] = local_dudley(K, cell, eps)
    return H


# --------------------------------------------------------------------------
# Verification


@dataclass(frozen=True)
class VerifyReport:
    samples: int
    inside_rejected: int
    far_accepted: int

    @property
    def ok(self) -> bool:
        return self.inside_rejected == 0 and self.far_accepted == 0


def stratified_points(cell, samples: int, rng) -> np.ndarray:
    lo, hi = np.asarray(cell.lo, float), np.asarray(cell.hi, float)
    d = lo.size
    k = max(1, int(round((samples / 4) ** (1 / d))))
    per = max(1, samples // k ** d)
    strata = np.array(list(itertools.product(range(k), repeat=d)), float)
    base = lo + strata[:, None, :] * (hi - lo) / k
    U = rng.random((len(strata), per, d)) * (hi - lo) / k
    return (base + U).reshape(-1, d)


def verify_local_approx(K: Polytope, A: LocalApprox, eps: float, samples: int = 2000,
                        rng=None, extra_points=None) -> VerifyReport:
    rng = np.random.default_rng(0) if rng is None else rng
    X = stratified_points(A.cell, samples, rng)
    if extra_points is not None:
        X = np.vstack([X, extra_points])
    acc = A.contains(X)
    inK = K.contains(X)
    dist = distances(K, X)
    return VerifyReport(len(X), int(np.sum(inK & ~acc)), int(np.sum((dist > eps) & acc)))
