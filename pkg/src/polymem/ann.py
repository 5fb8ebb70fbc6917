"""Approximate nearest neighbours by lifting sites to tangent planes of the
paraboloid z = |x|^2 and shooting vertical rays with membership queries.

The point location layer is a plain quadtree whose leaves hold every site
that can be the nearest neighbour of some point of the leaf (a triangle
inequality filter).  Sites close to the leaf are scanned directly.  When many
far sites remain, their lifted planes form an upper envelope that is
approximated by a SplitReduce tree, and a binary search along the vertical
line through the query finds a plane that is nearly the highest one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Polytope, root_side
from .splitreduce import Kind, SplitReduceTree, build, query

ANNULUS = 4.0          # far sites are kept within ANNULUS * 2 cell diameters after scaling


# --------------------------------------------------------------------------
# Lifting


@dataclass(frozen=True)
class LiftedPlane:
    """The plane z = <slope, x> + intercept tangent to the paraboloid above a site."""

    site: int
    slope: np.ndarray
    intercept: float

    def value(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.slope + self.intercept

    def gap(self, X) -> np.ndarray:
        """Vertical distance from the paraboloid down to the plane."""
        X = np.atleast_2d(X)
        return np.einsum("ij,ij->i", X, X) - self.value(X)

    def upper_halfspace(self) -> tuple[np.ndarray, float]:
        """(normal, offset) of z >= plane in the form <n, (x, z)> <= b, unnormalized."""
        return np.r_[self.slope, -1.0], -self.intercept


def lift(p, site: int = -1) -> LiftedPlane:
    p = np.asarray(p, float)
    return LiftedPlane(site, 2 * p, -float(p @ p))


# --------------------------------------------------------------------------
# Envelope of one leaf's far sites


@dataclass
class Envelope:
    """Lifted far sites of one cell, framed so SplitReduce can take them.

    Normalized coordinates put the cell centre at the origin and divide by
    ``scale``.  The box Q' spans the normalized cell in x and [z_lo, z_hi]
    vertically; it is mapped onto Q0 in d+1 dimensions axis by axis.
    """

    sites: np.ndarray          # site index of halfspace i
    local: np.ndarray          # normalized site coordinates
    center: np.ndarray
    scale: float
    half: float                # normalized half side of the cell
    z_lo: float
    z_hi: float
    ax: float                  # x scale of the map onto Q0
    az: float                  # z scale of the map onto Q0
    lipschitz: float           # of the envelope over the cell
    min_gap: float             # normalized lower bound on any query's far-site distance
    eps: float
    eps_prime: float           # stopping length of the binary search (normalized z units)
    eps_tree: float            # absolute error handed to SplitReduce
    default_site: int          # position in ``sites`` of a plane above z_lo over the whole cell
    body: Polytope

    @property
    def z_mid(self) -> float:
        return (self.z_lo + self.z_hi) / 2

    @property
    def box_diam(self) -> float:
        d = self.local.shape[1]
        return math.hypot(2 * self.half * math.sqrt(d), self.z_hi - self.z_lo)

    @property
    def iterations(self) -> int:
        return max(0, math.ceil(math.log2((self.z_hi - self.z_lo) / self.eps_prime)))

    def normalize(self, Q) -> np.ndarray:
        return (np.atleast_2d(np.asarray(Q, float)) - self.center) / self.scale

    def to_unit(self, Xn, z) -> np.ndarray:
        """Normalized (x, z) to the unit-diameter cube in d+1 dimensions."""
        return np.hstack([Xn * self.ax, ((np.asarray(z, float) - self.z_mid) * self.az)[:, None]])

    def plane_values(self, Xn, idx=None) -> np.ndarray:
        L = self.local if idx is None else self.local[idx]
        return 2 * Xn @ L.T - np.einsum("ij,ij->i", L, L)


def build_envelope(points, R, lo, hi, eps: float, annulus: float = ANNULUS) -> Envelope:
    """Frame the lifted planes of sites R over the box [lo, hi] (a cube).

    Every site of R must be farther than diam/2 from every point of the cell;
    the binary search error is scaled by the squared lower bound on the
    query-to-site distance, so the approximation is relative.
    """
    R = np.asarray(R, np.int64)
    if R.size == 0:
        raise ValueError("envelope needs at least one site")
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    d = lo.size
    center = (lo + hi) / 2
    side = float(np.max(hi - lo))
    D = side * math.sqrt(d)
    P = np.asarray(points, float)[R]
    far = np.linalg.norm(P - center, axis=1)
    if far.min() <= D / 2:
        raise ValueError("sites must lie outside the cell's circumscribed ball")
    scale = max(D, far.max() / (2 * annulus))
    half = side / 2 / scale
    rad = half * math.sqrt(d)
    L = (P - center) / scale
    min_gap = (far.min() - D / 2) / scale
    sq = np.einsum("ij,ij->i", L, L)
    default = int(np.argmin(sq))                           # highest plane at the centre
    lip = 2 * float(np.sqrt(sq.max()))
    pad = 0.25 * min_gap ** 2
    z_lo = -sq[default] - 2 * math.sqrt(sq[default]) * rad - pad
    corners = np.array(np.meshgrid(*[[-half, half]] * d, indexing="ij")).reshape(d, -1).T
    zmax = float((2 * corners @ L.T - sq).max(axis=1).max())
    z_hi = zmax + 2 * (zmax - z_lo)
    unit_half = 0.5 / math.sqrt(d + 1)
    ax = unit_half / half
    az = 2 * unit_half / (z_hi - z_lo)
    budget = eps * min_gap ** 2                            # half of the 2 eps m^2 vertical budget
    eps_prime = eps / (6 * annulus) * min(1.0, min_gap ** 2)
    eps_tree = min(1.0, budget / (1 / az + lip / ax))
    z_mid = (z_lo + z_hi) / 2
    normals = np.hstack([2 * L / ax, np.full((len(R), 1), -1 / az)])
    offsets = sq + z_mid
    box_n = np.vstack([np.eye(d + 1)[:d], -np.eye(d + 1)[:d], np.eye(d + 1)[d:]])
    box_b = np.full(len(box_n), unit_half)
    body = Polytope(np.vstack([normals, box_n]), np.r_[offsets, box_b])
    return Envelope(R, L, center, scale, half, z_lo, z_hi, ax, az, lip, min_gap, eps,
                    eps_prime, eps_tree, default, body)


def envelope_top(env: Envelope, Xn) -> tuple[np.ndarray, np.ndarray]:
    """Exact upper envelope by linear scan: (value, position of the top plane)."""
    V = env.plane_values(np.atleast_2d(Xn))
    return V.max(axis=1), V.argmax(axis=1)


# --------------------------------------------------------------------------
# Ray shooting


@dataclass
class RayShot:
    site: np.ndarray           # position in env.sites
    iterations: int
    cost: np.ndarray           # membership-query work (levels + halfspace tests)
    low: np.ndarray            # final segment, normalized z
    high: np.ndarray


def _stabbed(T: SplitReduceTree, y, z0, z1) -> list[int]:
    """Bundles of leaves whose cells meet the vertical segment x = y, z in [z0, z1]."""
    d = T.d
    s0 = root_side(d)
    out = []
    stack = [(0, 0, np.zeros(d, np.int64))]
    while stack:
        node, lvl, idx = stack.pop()
        side = s0 / (1 << lvl)
        lo = -s0 / 2 + idx * side
        hi = lo + side
        if np.any(y < lo[:-1] - 1e-12) or np.any(y > hi[:-1] + 1e-12):
            continue
        if z1 < lo[-1] - 1e-12 or z0 > hi[-1] + 1e-12:
            continue
        k = T.kind[node]
        if k == Kind.LEAF:
            out.append(int(T.bundle[node]))
        elif k == Kind.INTERNAL:
            f = int(T.first_child[node])
            for slot in range(1 << d):
                bits = np.array([(slot >> (d - 1 - a)) & 1 for a in range(d)])
                stack.append((f + slot, lvl + 1, 2 * idx + bits))
    return out


def ray_shoot(env: Envelope, T: SplitReduceTree, Q, stab: bool = True) -> RayShot:
    """Near-highest lifted plane above each query of the cell.

    Bisects the vertical segment of Q' through the query.  A rejected midpoint
    names a plane lying above it; the answer is the highest plane, evaluated
    exactly at the query, among those witnesses, the bundles of leaves the
    final segment passes through, and the default plane.
    """
    Xn = env.normalize(Q)
    m = len(Xn)
    lo = np.full(m, env.z_lo)
    hi = np.full(m, env.z_hi)
    cost = np.zeros(m, np.int64)
    n_sites = len(env.sites)
    cands = [{env.default_site} for _ in range(m)]
    its = env.iterations
    for _ in range(its):
        mid = (lo + hi) / 2
        r = query(T, env.to_unit(Xn, mid), canonical=True)
        cost += r.cost
        hi = np.where(r.inside, mid, hi)
        lo = np.where(r.inside, lo, mid)
        for i in np.flatnonzero(~r.inside & (r.witness >= 0) & (r.witness < n_sites)):
            cands[i].add(int(r.witness[i]))
    if stab:
        ylo = env.to_unit(Xn, lo)
        yhi = env.to_unit(Xn, hi)
        for i in range(m):
            for b in _stabbed(T, ylo[i, :-1], ylo[i, -1], yhi[i, -1]):
                B = T.bundles[b]
                if B.indices is not None:
                    cands[i].update(int(j) for j in B.indices if j < n_sites)
    site = np.empty(m, np.int64)
    for i in range(m):
        c = np.array(sorted(cands[i]))
        site[i] = c[int(np.argmax(env.plane_values(Xn[i:i + 1], c)[0]))]
    return RayShot(site, its, cost, lo, hi)


# --------------------------------------------------------------------------
# Index


@dataclass
class AnnCell:
    lo: np.ndarray
    side: float
    level: int
    near: np.ndarray
    far: np.ndarray
    envelope: Envelope | None = None
    tree: SplitReduceTree | None = None


@dataclass
class AnnIndex:
    points: np.ndarray
    eps: float
    t: int
    rep_threshold: int
    lo: np.ndarray                 # domain cube
    side: float
    first_child: np.ndarray        # per quadtree node, -1 at leaves
    leaf: np.ndarray               # per node, index into ``cells`` or -1
    level: np.ndarray
    cells: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def depth(self) -> int:
        return int(self.level.max())

    @property
    def lifted_cells(self) -> int:
        return sum(c.tree is not None for c in self.cells)


@dataclass
class AnnAnswer:
    site: np.ndarray
    distance: np.ndarray
    cost: np.ndarray


def _domain(X, domain):
    if domain is not None:
        lo, hi = (np.asarray(v, float) for v in domain)
    else:
        lo, hi = X.min(axis=0), X.max(axis=0)
    side = float(np.max(hi - lo))
    side = side * 1.02 if side > 0 else 1.0
    mid = (lo + hi) / 2
    return mid - side / 2, side


def build_ann(X, eps: float, t: int, *, rep_threshold: int = 16, max_depth: int = 24,
              domain=None, lift_threshold: float | None = None) -> AnnIndex:
    """Quadtree with complete representative sets at its leaves.

    A cell with centre c and diameter D keeps every site within
    (1 + eps)(r* + D) of c, r* being c's nearest-site distance; the nearest
    site of any point of the cell is among them.  Cells split while they keep
    more than ``rep_threshold`` sites and some site lies within 2D.  Far sites (outside radius 2D) of a
    leaf go into a lifted SplitReduce structure when there are more than
    t lg(1/eps) of them.
    """
    X = np.atleast_2d(np.asarray(X, float))
    if len(X) == 0:
        raise ValueError("no sites")
    if not (0 < eps <= 0.5):
        raise ValueError("eps must lie in (0, 1/2]")
    n, d = X.shape
    kd = cKDTree(X)
    lo0, side0 = _domain(X, domain)
    cutoff = t * math.log2(1 / eps) if lift_threshold is None else lift_threshold
    first, leaf, level = [], [], []
    cells: list[AnnCell] = []
    boxes = []

    def new_node(lo, side, lvl):
        first.append(-1)
        leaf.append(-1)
        level.append(lvl)
        boxes.append((lo, side))
        return len(first) - 1

    stack = [new_node(lo0, side0, 0)]
    while stack:
        node = stack.pop()
        lo, side = boxes[node]
        lvl = level[node]
        c = lo + side / 2
        D = side * math.sqrt(d)
        r_star, _ = kd.query(c)
        reps = np.array(sorted(kd.query_ball_point(c, (1 + eps) * (r_star + D) * (1 + 1e-12))), np.int64)
        # A cell with no site within 2D keeps its representatives however
        # often it is split (a distant tight cluster stays inside the
        # (1+eps) r* ball), so it stops and hands them all to the envelope.
        if len(reps) > rep_threshold and r_star <= 2 * D and lvl < max_depth:
            kids = []
            for off in np.ndindex(*(2,) * d):
                kids.append(new_node(lo + np.array(off) * side / 2, side / 2, lvl + 1))
            first[node] = kids[0]
            stack.extend(reversed(kids))
            continue
        dist = np.linalg.norm(X[reps] - c, axis=1)
        near = reps[dist <= 2 * D]
        far = reps[dist > 2 * D]
        cell = AnnCell(lo, side, lvl, near, far)
        if len(far) > cutoff:
            env = build_envelope(X, far, lo, lo + side, eps)
            cell.envelope = env
            cell.tree = build(env.body, t, env.eps_tree, strict_inside=True, witness_outside=True)
        leaf[node] = len(cells)
        cells.append(cell)
    return AnnIndex(X, eps, t, rep_threshold, lo0, side0, np.array(first, np.int64),
                    np.array(leaf, np.int64), np.array(level, np.int32), cells)


def locate(I: AnnIndex, Q) -> tuple[np.ndarray, np.ndarray]:
    """(node, levels descended) of the leaf holding each query."""
    Q = np.atleast_2d(np.asarray(Q, float))
    d = I.d
    u = (Q - I.lo) / I.side
    if np.any(u < -1e-12) or np.any(u > 1 + 1e-12):
        raise ValueError("query outside the index domain")
    node = np.zeros(len(Q), np.int64)
    weights = 1 << np.arange(d - 1, -1, -1)
    lvl = 0
    active = I.first_child[node] >= 0
    while active.any():
        lvl += 1
        a = np.flatnonzero(active)
        idx = np.clip(np.floor(u[a] * (1 << lvl)).astype(np.int64), 0, (1 << lvl) - 1)
        node[a] = I.first_child[node[a]] + (idx & 1) @ weights
        active[a] = I.first_child[node[a]] >= 0
    return node, I.level[node].astype(np.int64)


def ann_query(I: AnnIndex, Q, stab: bool = True) -> AnnAnswer:
    """Approximate nearest site of each query, with its distance and cost."""
    Q = np.atleast_2d(np.asarray(Q, float))
    node, levels = locate(I, Q)
    site = np.full(len(Q), -1, np.int64)
    best = np.full(len(Q), np.inf)
    cost = levels.copy()
    order = np.argsort(node, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(node[order]) != 0])
    for g in np.split(order, starts[1:]):
        cell = I.cells[I.leaf[node[g[0]]]]
        pool = cell.near
        if cell.tree is not None:
            shot = ray_shoot(cell.envelope, cell.tree, Q[g], stab=stab)
            cost[g] += shot.cost
            picks = cell.envelope.sites[shot.site]
            cost[g] += len(cell.near)
            _take(I.points, Q[g], pool, g, site, best)
            dist = np.linalg.norm(I.points[picks] - Q[g], axis=1)
            better = (dist < best[g]) | ((dist == best[g]) & (picks < site[g]))
            site[g] = np.where(better, picks, site[g])
            best[g] = np.where(better, dist, best[g])
        else:
            cost[g] += len(cell.near) + len(cell.far)
            _take(I.points, Q[g], np.r_[pool, cell.far], g, site, best)
    return AnnAnswer(site, best, cost)


def _take(P, Qg, pool, g, site, best):
    """Exact scan of ``pool`` for the queries g, lowest site index on ties."""
    if len(pool) == 0:
        return
    pool = np.sort(pool)
    D = np.linalg.norm(Qg[:, None, :] - P[pool][None, :, :], axis=2)
    j = D.argmin(axis=1)
    dist = D[np.arange(len(g)), j]
    better = dist < best[g]
    site[g] = np.where(better, pool[j], site[g])
    best[g] = np.where(better, dist, best[g])
