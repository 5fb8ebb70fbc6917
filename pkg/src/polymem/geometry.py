"""Exact geometric primitives: halfspace bodies, quadtree cells and oracles.

A body is an ordered list of closed halfspaces ``<n_i, x> <= b_i`` with unit
normals.  The root quadtree cell ``Q0`` is the axis-aligned cube of unit
diameter centred at the origin, so its side is ``1/sqrt(d)``.

The distance and Hausdorff oracles work on the vertex set, which is found by
brute force over d-subsets of the bounding hyperplanes.  That is O(n^d) and
only meant for the small bodies used in tests and benchmarks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from . import _kernels
from .config import DEFAULT, Tolerances


class DimensionMismatch(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


class Unbounded(RuntimeError):
    pass


def root_side(d: int) -> float:
    return 1.0 / math.sqrt(d)


def inner_radius0(d: int) -> float:
    """Radius r0 = 1/(2 sqrt d) of the ball inscribed in Q0."""
    return 0.5 / math.sqrt(d)


# --------------------------------------------------------------------------
# Halfspaces and bodies


@dataclass(frozen=True)
class Halfspace:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).ravel()
        norm = float(np.linalg.norm(n))
        if not norm > 0 or not np.all(np.isfinite(n)):
            raise ValueError("halfspace normal must be finite and nonzero")
        n = n / norm
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def contains(self, q, tol: float = DEFAULT.membership) -> bool:
        return float(self.normal @ np.asarray(q, float)) <= self.offset + tol


def max_violation(X, N, b, block: int = 1 << 22) -> np.ndarray:
    """max_i (<N_i, x> - b_i) per row of X, in row blocks to bound memory."""
    X = np.atleast_2d(X)
    if len(b) == 0:
        return np.full(X.shape[0], -np.inf)
    step = max(1, block // len(b))
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], step):
        out[s:s + step] = (X[s:s + step] @ N.T - b).max(axis=1)
    return out


class Polytope:
    """Intersection of closed halfspaces, stored as unit normals and offsets.

    The halfspace order is part of the identity of the body: downstream code
    refers to halfspaces by their position in this list.
    """

    def __init__(self, normals, offsets, *, normalize: bool = True):
        N = np.array(normals, dtype=float, ndmin=2)
        b = np.array(offsets, dtype=float).ravel()
        if N.shape[0] != b.shape[0]:
            raise ValueError("normals and offsets disagree in length")
        if normalize and N.shape[0]:
            norms = np.linalg.norm(N, axis=1)
            if np.any(norms <= 0) or not np.all(np.isfinite(N)):
                raise ValueError("every normal must be finite and nonzero")
            N = N / norms[:, None]
            b = b / norms
        N.setflags(write=False)
        b.setflags(write=False)
        self.normals = N
        self.offsets = b

    @classmethod
    def from_halfspaces(cls, hs: Iterable[Halfspace]) -> "Polytope":
        hs = list(hs)
        return cls([h.normal for h in hs], [h.offset for h in hs], normalize=False)

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        d = lo.size
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def cube(cls, d: int) -> "Polytope":
        """Q0 as 2d halfspaces."""
        h = root_side(d) / 2
        return cls.box(-h * np.ones(d), h * np.ones(d))

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def n(self) -> int:
        return self.normals.shape[0]

    def __len__(self):
        return self.n

    def halfspace(self, i: int) -> Halfspace:
        return Halfspace(self.normals[i], self.offsets[i])

    @property
    def halfspaces(self) -> list[Halfspace]:
        return [self.halfspace(i) for i in range(self.n)]

    def violation(self, X) -> np.ndarray:
        """max_i (<n_i, x> - b_i) for every row of X (negative means interior)."""
        X = np.atleast_2d(np.asarray(X, float))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"points have dim {X.shape[1]}, body has {self.dim}")
        return max_violation(X, self.normals, self.offsets)

    def contains(self, X, tol: float = DEFAULT.membership) -> np.ndarray:
        return self.violation(X) <= tol

    def scaled(self, factor: float) -> "Polytope":
        """Uniform scaling about the origin; halfspace identities are kept."""
        return Polytope(self.normals, self.offsets * factor, normalize=False)

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope(np.vstack([self.normals, other.normals]),
                        np.concatenate([self.offsets, other.offsets]), normalize=False)

    def subset(self, idx) -> "Polytope":
        idx = np.asarray(idx, dtype=np.int64)
        return Polytope(self.normals[idx], self.offsets[idx], normalize=False)

    def affine_image(self, A, c) -> "Polytope":
        """Image of the body under x -> A x + c (A invertible)."""
        A = np.asarray(A, float)
        c = np.asarray(c, float)
        Ainv = np.linalg.inv(A)
        N = self.normals @ Ainv
        return Polytope(N, self.offsets + N @ c)

    @cached_property
    def vertex_array(self) -> np.ndarray:
        """Vertices, cached; falls back to a pivoting walk for large n."""
        try:
            return enumerate_vertices(self).vertices
        except BudgetExceeded:
            return _walk_vertices(self)

    def __repr__(self):
        return f"Polytope(d={self.dim}, n={self.n})"


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, float))


@dataclass(frozen=True)
class VertexSet:
    vertices: np.ndarray
    source: Polytope = field(repr=False)

    def __len__(self):
        return len(self.vertices)


# --------------------------------------------------------------------------
# Quadtree cells


@dataclass(frozen=True, order=True)
class QuadtreeCell:
    level: int
    index: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.index)
        object.__setattr__(self, "index", idx)
        if self.level < 0 or any(i < 0 or i >= (1 << self.level) for i in idx):
            raise ValueError(f"bad cell {self.level} {idx}")

    @classmethod
    def root(cls, d: int) -> "QuadtreeCell":
        return cls(0, (0,) * d)

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def diam(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def side(self) -> float:
        return self.diam / math.sqrt(self.d)

    @property
    def lo(self) -> np.ndarray:
        s0 = root_side(self.d)
        return -s0 / 2 + np.asarray(self.index, float) * self.side

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.side

    @property
    def center(self) -> np.ndarray:
        return self.lo + self.side / 2

    def corners(self) -> np.ndarray:
        lo, s = self.lo, self.side
        bits = np.array(list(itertools.product((0, 1), repeat=self.d)), float)
        return lo + bits * s

    def children(self) -> list["QuadtreeCell"]:
        """The 2^d children in lexicographic index order."""
        base = tuple(2 * i for i in self.index)
        return [QuadtreeCell(self.level + 1, tuple(b + o for b, o in zip(base, off)))
                for off in itertools.product((0, 1), repeat=self.d)]

    def child_slot(self, child: "QuadtreeCell") -> int:
        slot = 0
        for i in child.index:
            slot = (slot << 1) | (i & 1)
        return slot

    def parent(self) -> "QuadtreeCell":
        if self.level == 0:
            raise ValueError("root has no parent")
        return QuadtreeCell(self.level - 1, tuple(i >> 1 for i in self.index))

    def box(self) -> Polytope:
        return Polytope.box(self.lo, self.hi)

    def contains(self, q) -> bool:
        """Half-open membership matching the upper-closed tie rule."""
        q = np.asarray(q, float)
        top = (1 << self.level) - 1
        lo, hi = self.lo, self.hi
        ok = q >= lo
        idx = np.asarray(self.index)
        ok &= np.where(idx == top, q <= hi, q < hi)
        return bool(ok.all())


def cell_indices(X, level: int) -> np.ndarray:
    """Integer cell indices of points of Q0 at a given level (vectorized)."""
    X = np.atleast_2d(np.asarray(X, float))
    d = X.shape[1]
    s0 = root_side(d)
    u = (X + s0 / 2) / s0
    idx = np.floor(u * (1 << level)).astype(np.int64)
    return np.clip(idx, 0, (1 << level) - 1)


def in_root(X, tol: float = 0.0) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    h = root_side(X.shape[1]) / 2
    return np.all(np.abs(X) <= h + tol, axis=1)


def locate_cell(is_leaf: Callable[[QuadtreeCell], bool] | int, q) -> QuadtreeCell:
    """Leaf cell containing q.

    ``is_leaf`` is either a predicate on cells (the tree's depth map) or a
    fixed level.  One bit per coordinate is read per level; points on a
    bisecting face go to the upper child.
    """
    q = np.asarray(q, float)
    d = q.size
    if not in_root(q)[0]:
        raise ValueError("query point lies outside Q0")
    if isinstance(is_leaf, int):
        return QuadtreeCell(is_leaf, tuple(cell_indices(q, is_leaf)[0]))
    cell = QuadtreeCell.root(d)
    s0 = root_side(d)
    u = (q + s0 / 2) / s0
    while not is_leaf(cell):
        lvl = cell.level + 1
        idx = np.clip(np.floor(u * (1 << lvl)).astype(np.int64), 0, (1 << lvl) - 1)
        cell = QuadtreeCell(lvl, tuple(idx))
    return cell


# --------------------------------------------------------------------------
# Membership and feasibility


def exact_membership(K: Polytope, q, tol: float = DEFAULT.membership) -> bool:
    q = np.asarray(q, float).ravel()
    if q.size != K.dim:
        raise DimensionMismatch(f"point has dim {q.size}, body has {K.dim}")
    return bool(np.all(K.normals @ q <= K.offsets + tol))


def box_excluder(K: Polytope, lo, hi) -> int:
    """Index of a halfspace that alone excludes the whole box, or -1.

    The first such halfspace (in list order) with the largest margin is
    returned so witnesses are deterministic.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    lowest = np.where(K.normals > 0, K.normals * lo, K.normals * hi).sum(axis=1)
    margin = lowest - K.offsets
    j = int(np.argmax(margin)) if K.n else -1
    return j if j >= 0 and margin[j] > DEFAULT.lp else -1


def box_max_violation(K: Polytope, lo, hi) -> np.ndarray:
    """max over the box of <n_i, x> - b_i, per halfspace."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    highest = np.where(K.normals > 0, K.normals * hi, K.normals * lo).sum(axis=1)
    return highest - K.offsets


def lp_gap(K: Polytope, lo, hi) -> float:
    """min over the box of max_i (<n_i,x> - b_i), solved as an LP."""
    d = K.dim
    c = np.zeros(d + 1)
    c[-1] = 1.0
    A = np.hstack([K.normals, -np.ones((K.n, 1))])
    bounds = [(float(a), float(b)) for a, b in zip(lo, hi)] + [(None, None)]
    res = linprog(c, A_ub=A, b_ub=K.offsets, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(res.fun)


def feasible(K: Polytope, cell, tol: Tolerances = DEFAULT) -> bool:
    """True iff K meets the closed box of ``cell`` (a QuadtreeCell or (lo, hi))."""
    lo, hi = (cell.lo, cell.hi) if isinstance(cell, QuadtreeCell) else cell
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if box_excluder(K, lo, hi) >= 0:
        return False
    probe = np.vstack([(lo + hi) / 2, lo, hi])
    if np.any(K.violation(probe) <= 0):
        return True
    return lp_gap(K, lo, hi) <= tol.lp


# --------------------------------------------------------------------------
# Vertices


def _dedupe(P: np.ndarray, tol: float) -> np.ndarray:
    if len(P) <= 1:
        return P
    tree = cKDTree(P)
    keep = np.ones(len(P), bool)
    for i, nbrs in enumerate(tree.query_ball_point(P, r=tol)):
        if keep[i]:
            for j in nbrs:
                if j > i:
                    keep[j] = False
    out = P[keep]
    order = np.lexsort(np.round(out, 9).T[::-1])
    return out[order]


def enumerate_vertices(K: Polytope, tol: Tolerances = DEFAULT) -> VertexSet:
    """All vertices of a bounded body by solving every d-subset of hyperplanes."""
    d, n = K.dim, K.n
    total = math.comb(n, d)
    if total > tol.vertex_budget:
        raise BudgetExceeded(f"C({n},{d}) = {total} exceeds budget {tol.vertex_budget}")
    if not _is_bounded(K):
        raise Unbounded("body is unbounded")
    V = _kernels.brute_vertices(np.ascontiguousarray(K.normals),
                                np.ascontiguousarray(K.offsets), tol.dedup)
    return VertexSet(_dedupe(V, tol.dedup), K)


def _is_bounded(K: Polytope) -> bool:
    """Bounded iff the normals positively span R^d: no u with N u <= 0, u != 0."""
    d = K.dim
    for s in (1.0, -1.0):
        for a in range(d):
            c = np.zeros(d)
            c[a] = -s
            res = linprog(c, A_ub=K.normals, b_ub=np.zeros(K.n),
                          bounds=[(-1, 1)] * d, method="highs")
            if res.status == 0 and res.fun < -1e-9:
                return False
    return True


def _active(K: Polytope, v, tol=1e-9):
    return np.flatnonzero(np.abs(K.normals @ v - K.offsets) <= tol)


def _walk_vertices(K: Polytope, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Vertex enumeration by walking the edge graph from an LP vertex."""
    d = K.dim
    rng = np.random.default_rng(0)
    res = linprog(rng.normal(size=d), A_ub=K.normals, b_ub=K.offsets,
                  bounds=[(None, None)] * d, method="highs-ds")
    if res.status == 3:
        raise Unbounded("body is unbounded")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")

    def snap(v):
        act = _active(K, v, 1e-8)
        if len(act) >= d:
            v = np.linalg.lstsq(K.normals[act], K.offsets[act], rcond=None)[0]
        return v

    start = snap(res.x)
    seen = {tuple(np.round(start, 8))}
    out = [start]
    queue = [start]
    while queue:
        v = queue.pop()
        act = _active(K, v)
        NA = K.normals[act]
        dirs = []
        for sub in itertools.combinations(range(len(act)), d - 1):
            M = NA[list(sub)] if d > 1 else np.empty((0, d))
            _, s, vt = np.linalg.svd(np.vstack([M, np.zeros((1, d))]))
            e = vt[-1]
            if d > 1 and np.linalg.matrix_rank(M, tol=1e-10) < d - 1:
                continue
            for sg in (1.0, -1.0):
                f = sg * e
                if np.all(NA @ f <= 1e-10) and not any(np.allclose(f, g, atol=1e-9) for g in dirs):
                    dirs.append(f)
        for f in dirs:
            rate = K.normals @ f
            slack = K.offsets - K.normals @ v
            mask = rate > 1e-12
            mask[act] = False
            if not mask.any():
                raise Unbounded("body is unbounded")
            step = np.min(slack[mask] / rate[mask])
            w = snap(v + step * f)
            key = tuple(np.round(w, 8))
            if key not in seen:
                seen.add(key)
                out.append(w)
                queue.append(w)
    return _dedupe(np.array(out), tol.dedup)


# --------------------------------------------------------------------------
# Distances


def nearest_points(K: Polytope, Q, tol: Tolerances = DEFAULT):
    """Nearest points of K to every row of Q, and the distances."""
    Q = np.atleast_2d(np.asarray(Q, float))
    if Q.shape[1] != K.dim:
        raise DimensionMismatch("query dimension differs from body dimension")
    near = Q.copy()
    outside = K.violation(Q) > 0
    if outside.any():
        V = K.vertex_array
        near[outside] = _kernels.nearest_points(V, Q[outside], 1e-15)
    dist = np.linalg.norm(Q - near, axis=1)
    return near, dist


def distances(K: Polytope, Q) -> np.ndarray:
    return nearest_points(K, Q)[1]


def distance_to_polytope(K: Polytope, q) -> float:
    """Euclidean distance from q to K (zero inside)."""
    return float(distances(K, np.asarray(q, float).reshape(1, -1))[0])


def hausdorff_outer(P: Polytope, K: Polytope, tol: Tolerances = DEFAULT) -> float:
    """Hausdorff distance between an outer approximation P and K.

    Requires K inside P; the farthest point of P from K is one of P's vertices.
    """
    VK = K.vertex_array
    if np.any(P.violation(VK) > tol.dedup):
        raise ValueError("hausdorff_outer needs K contained in P")
    VP = P.vertex_array
    return float(distances(K, VP).max()) if len(VP) else 0.0


# --------------------------------------------------------------------------
# Sphere sampling


def sphere_sample(S: Ball, spacing: float) -> np.ndarray:
    """A spacing-dense point set on the sphere bounding S.

    Each facet of the circumscribing cube gets a grid of pitch at most
    ``spacing/sqrt(d)`` (cell centres of an odd split, so the facet centre is
    one of them), and the grid is projected radially
    onto the sphere.  Radial projection onto the ball does not increase
    distances, so density carries over.
    """
    c = np.asarray(S.center, float)
    R = float(S.radius)
    d = c.size
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pitch = spacing / math.sqrt(d)
    m = max(1, math.ceil(2 * R / pitch - 1e-12))
    m += 1 - m % 2   # odd, so facet centres (the axis directions) are included
    ticks = -R + (np.arange(m) + 0.5) * (2 * R / m)
    face = np.array(list(itertools.product(ticks, repeat=d - 1))).reshape(-1, d - 1)
    out = []
    for axis in range(d):
        for sign in (-1.0, 1.0):
            P = np.insert(face, axis, sign * R, axis=1)
            out.append(P)
    P = np.vstack(out)
    P *= R / np.linalg.norm(P, axis=1)[:, None]
    return P + c
