"""Recursive quadtree approximation of a convex polytope for membership queries.

Each cell of the quadtree over Q0 is labelled in turn:

1. Outside when it misses K,
2. Inside when every corner is within eps of K (or inside K in strict mode),
3. Leaf when at most t input halfspaces approximate K inside the cell,
4. otherwise it is split into its 2^d children.

Recursion stops once a cell's diameter is at most eps.  A query descends to
its leaf and scans at most t halfspaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .approximators import LocalApprox, Method, corners_near, cover_params, set_cover_local
from .config import DEFAULT, Tolerances
from .geometry import Polytope, QuadtreeCell, box_excluder, box_max_violation, feasible, root_side
from .precondition import AffineMap, CanonicalForm


class Kind(IntEnum):
    INTERNAL = 0
    INSIDE = 1
    OUTSIDE = 2
    LEAF = 3


@dataclass(frozen=True)
class BuildParams:
    eps_abs: float
    t: int
    strict_inside: bool = False
    witness_outside: bool = False


@dataclass
class SplitReduceTree:
    """Nodes are stored flat; the 2^d children of a node occupy a contiguous
    block starting at ``first_child`` in lexicographic slot order."""

    d: int
    params: BuildParams
    kind: np.ndarray                 # int8 per node
    first_child: np.ndarray          # int64 per node, -1 for leaves
    level: np.ndarray                # int32 per node
    bundle: np.ndarray               # int64 per node, index into ``bundles`` or -1
    witness: np.ndarray              # int64 per node, excluding halfspace of an Outside cell or -1
    bundles: list = field(default_factory=list)
    frame: AffineMap | None = None   # original coordinates -> canonical coordinates
    source_indices: np.ndarray | None = None

    @property
    def nodes(self) -> int:
        return len(self.kind)

    @property
    def depth(self) -> int:
        return int(self.level.max()) if self.nodes else 0

    @property
    def sum_tq(self) -> int:
        return int(sum(len(b) for b in self.bundles))

    def children(self, node: int) -> range:
        f = int(self.first_child[node])
        return range(f, f + (1 << self.d)) if f >= 0 else range(0)

    def cell(self, node: int) -> QuadtreeCell:
        """Reconstruct the cell of a node by walking down from the root."""
        path = []
        parent = self._parents()
        while node != 0:
            p = int(parent[node])
            path.append(node - int(self.first_child[p]))
            node = p
        cell = QuadtreeCell.root(self.d)
        for slot in reversed(path):
            cell = cell.children()[slot]
        return cell

    def _parents(self) -> np.ndarray:
        if getattr(self, "_parent_cache", None) is None:
            parent = np.full(self.nodes, -1, np.int64)
            for n in np.flatnonzero(self.first_child >= 0):
                f = self.first_child[n]
                parent[f:f + (1 << self.d)] = n
            self._parent_cache = parent
        return self._parent_cache


def depth_bound(eps: float) -> int:
    return math.ceil(math.log2(1 / eps)) + 1


def _cutting_set(K: Polytope, cell) -> np.ndarray:
    return np.flatnonzero(box_max_violation(K, cell.lo, cell.hi) > 0)


def _bundle(K, cell, eps, t, tol, cover) -> LocalApprox | None:
    """At most t input halfspaces that approximate K in the cell, or None.

    The greedy cover runs when its sample grid fits in memory.  When it does
    not, the halfspaces that cut the cell are an exact local description and
    are used if there are at most t of them.
    """
    A = set_cover_local(K, cell, eps, t, tol, cover)
    if isinstance(A, LocalApprox):
        return A
    if A.reason == "grid":
        E = _cutting_set(K, cell)
        if len(E) <= t:
            return LocalApprox.from_indices(K, cell, E, Method.EXACT)
    return None


def _final_bundle(K, cell, eps, t, tol, cover) -> LocalApprox:
    """Bundle for a cell at the depth stop that cannot be labelled Inside."""
    A = _bundle(K, cell, eps, t, tol, cover)
    if A is None:
        A = LocalApprox.from_indices(K, cell, _cutting_set(K, cell), Method.EXACT)
    return A


def build(K: Polytope | CanonicalForm, t: int, eps: float | None = None, *,
          strict_inside: bool = False, witness_outside: bool = False,
          tol: Tolerances = DEFAULT) -> SplitReduceTree:
    """Build the tree for a body lying in Q0.

    ``eps`` defaults to the canonical form's absolute error.  In witness mode
    a cell is labelled Outside only when a single input halfspace excludes it,
    so every rejection can name a violated halfspace.
    """
    frame = source = None
    if isinstance(K, CanonicalForm):
        frame, source = K.map, K.source_indices
        eps = K.eps_abs if eps is None else eps
        K = K.body
    if eps is None or not (0 < eps <= 1):
        raise ValueError("eps_abs must lie in (0, 1]")
    if t < 1:
        raise ValueError("t must be at least 1")
    d = K.dim
    cover = cover_params(K, eps)
    params = BuildParams(float(eps), int(t), strict_inside, witness_outside)
    kind, first, level, bundle, witness = [], [], [], [], []
    bundles: list[LocalApprox] = []
    cells: list[QuadtreeCell] = []

    def new_node(cell):
        cells.append(cell)
        kind.append(Kind.INTERNAL)
        first.append(-1)
        level.append(cell.level)
        bundle.append(-1)
        witness.append(-1)
        return len(cells) - 1

    def set_leaf(node, A):
        kind[node] = Kind.LEAF
        bundle[node] = len(bundles)
        bundles.append(A)

    stack = [new_node(QuadtreeCell.root(d))]
    while stack:
        node = stack.pop()
        cell = cells[node]
        excl = box_excluder(K, cell.lo, cell.hi)
        meets = excl < 0 and feasible(K, cell, tol)
        if excl >= 0 or (not meets and not witness_outside):
            kind[node] = Kind.OUTSIDE
            witness[node] = excl
            continue
        corners = cell.corners()
        if meets:
            if strict_inside:
                inner = bool(np.all(K.violation(corners) <= 0))
            else:
                inner = corners_near(K, corners, eps)
            if inner:
                kind[node] = Kind.INSIDE
                continue
        if cell.diam <= eps:
            if meets and not strict_inside:
                kind[node] = Kind.INSIDE
            else:
                set_leaf(node, _final_bundle(K, cell, eps, t, tol, cover))
            continue
        A = _bundle(K, cell, eps, t, tol, cover)
        if A is not None:
            set_leaf(node, A)
            continue
        kids = [new_node(c) for c in cell.children()]
        first[node] = kids[0]
        stack.extend(reversed(kids))

    return SplitReduceTree(d, params, np.array(kind, np.int8), np.array(first, np.int64),
                           np.array(level, np.int32), np.array(bundle, np.int64),
                           np.array(witness, np.int64), bundles, frame, source)


@dataclass
class QueryResult:
    inside: np.ndarray      # bool
    witness: np.ndarray     # input halfspace violated by the point, or -1
    levels: np.ndarray      # levels descended
    tests: np.ndarray       # halfspaces evaluated at the leaf
    node: np.ndarray        # leaf node reached (-1 outside Q0)

    @property
    def cost(self) -> np.ndarray:
        return self.levels + self.tests


def query(T: SplitReduceTree, X, *, canonical: bool = False,
          tol: float = DEFAULT.membership) -> QueryResult:
    """Answer membership for each row of X.

    Points are mapped into the tree's frame unless ``canonical`` is set.
    Witnesses are reported as indices into the body the tree was built from
    (or the original input when the tree came from a canonical form).
    Points outside Q0 are rejected without a witness.
    """
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[1] != T.d:
        raise ValueError(f"points have dim {X.shape[1]}, tree has {T.d}")
    Y = X if canonical or T.frame is None else T.frame(X)
    m, d = Y.shape
    s0 = root_side(d)
    inside = np.zeros(m, bool)
    wit = np.full(m, -1, np.int64)
    levels = np.zeros(m, np.int64)
    tests = np.zeros(m, np.int64)
    node = np.full(m, -1, np.int64)
    ok = np.all(np.abs(Y) <= s0 / 2 + tol, axis=1)
    node[ok] = 0
    u = (Y + s0 / 2) / s0
    weights = 1 << np.arange(d - 1, -1, -1)
    active = ok & (T.kind[np.maximum(node, 0)] == Kind.INTERNAL)
    lvl = 0
    while active.any():
        lvl += 1
        a = np.flatnonzero(active)
        idx = np.clip(np.floor(u[a] * (1 << lvl)).astype(np.int64), 0, (1 << lvl) - 1)
        node[a] = T.first_child[node[a]] + (idx & 1) @ weights
        levels[a] += 1
        active[a] = T.kind[node[a]] == Kind.INTERNAL
    k = np.where(ok, T.kind[np.maximum(node, 0)], -1)
    inside[k == Kind.INSIDE] = True
    out = k == Kind.OUTSIDE
    wit[out] = T.witness[node[out]]
    leafy = np.flatnonzero(k == Kind.LEAF)
    if leafy.size:
        order = leafy[np.argsort(node[leafy], kind="stable")]
        starts = np.flatnonzero(np.r_[True, np.diff(node[order]) != 0])
        for g in np.split(order, starts[1:]):
            B = T.bundles[T.bundle[node[g[0]]]]
            if len(B) == 0:
                inside[g] = True
                continue
            bad = (Y[g] @ B.normals.T - B.offsets) > tol
            any_bad = bad.any(axis=1)
            first_bad = np.argmax(bad, axis=1)
            inside[g] = ~any_bad
            tests[g] = np.where(any_bad, first_bad + 1, len(B))
            if B.indices is not None:
                w = np.where(any_bad, B.indices[first_bad], -1)
                wit[g] = w
    if T.source_indices is not None:
        has = wit >= 0
        wit[has] = T.source_indices[wit[has]]
    return QueryResult(inside, wit, levels, tests, node)


def contains(T: SplitReduceTree, X, **kw) -> np.ndarray:
    return query(T, X, **kw).inside


@dataclass(frozen=True)
class SpaceReport:
    nodes: int
    internal: int
    inside: int
    outside: int
    leaves: int
    sum_tq: int
    max_tq: int
    depth: int
    oversize_leaves: int     # depth-stop bundles holding more than t halfspaces


def space_report(T: SplitReduceTree) -> SpaceReport:
    counts = np.bincount(T.kind.astype(np.int64), minlength=4)
    sizes = [len(b) for b in T.bundles]
    return SpaceReport(
        nodes=T.nodes,
        internal=int(counts[Kind.INTERNAL]),
        inside=int(counts[Kind.INSIDE]),
        outside=int(counts[Kind.OUTSIDE]),
        leaves=int(counts[Kind.LEAF]),
        sum_tq=int(sum(sizes)),
        max_tq=max(sizes, default=0),
        depth=T.depth,
        oversize_leaves=sum(s > T.params.t for s in sizes),
    )


def leaf_cells(T: SplitReduceTree) -> dict[QuadtreeCell, Kind]:
    """Map from every non-internal node's cell to its label."""
    out = {}

    def walk(n, cell):
        if T.kind[n] == Kind.INTERNAL:
            for slot, c in enumerate(cell.children()):
                walk(int(T.first_child[n]) + slot, c)
        else:
            out[cell] = Kind(int(T.kind[n]))

    walk(0, QuadtreeCell.root(T.d))
    return out
