"""File formats.

Bodies (.poly) are comma-separated rows ``n_1,...,n_d,b`` for the halfspaces
<n, x> <= b, after a ``# polytope d=<d>`` comment line.  Point files are CSV
with an ``x0,...`` header.  Trees are stored as a preorder stream of node tags
with their bundles, packed into a numpy .npz archive; the header carries d,
eps_abs, t and the mode flags.
"""

from __future__ import annotations

import io
import json
import pickle
from pathlib import Path

import numpy as np

from .approximators import LocalApprox, Method
from .geometry import Polytope, QuadtreeCell
from .precondition import AffineMap, CanonicalForm
from .splitreduce import BuildParams, Kind, SplitReduceTree
from .workloads import LabeledPoints, Stratum

TREE_MAGIC = "polymem-tree"
INDEX_MAGIC = b"polymem-ann-index\n"
FORMAT_VERSION = 1
_METHODS = [Method.SET_COVER, Method.LOCAL_DUDLEY, Method.EXACT]


# --------------------------------------------------------------------------
# Bodies and points


def write_polytope(K: Polytope, path) -> None:
    data = np.hstack([K.normals, K.offsets[:, None]])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=f"polytope d={K.dim}")


def read_polytope(path) -> Polytope:
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return Polytope(data[:, :-1], data[:, -1])


def write_points(X, path, header_prefix: str = "x") -> None:
    X = np.atleast_2d(X)
    head = ",".join(f"{header_prefix}{i}" for i in range(X.shape[1]))
    np.savetxt(path, X, delimiter=",", fmt="%.17g", header=head, comments="")


def read_points(path) -> np.ndarray:
    """Coordinates from a CSV; with a header, only the x0, x1, ... columns
    are read, so labelled query files work too."""
    text = Path(path).read_text().splitlines()
    if text and not _numeric(text[0]):
        names = text[0].split(",")
        cols = [i for i, c in enumerate(names) if c.startswith("x") and c[1:].isdigit()]
        return np.loadtxt(path, delimiter=",", skiprows=1, usecols=cols or None, ndmin=2)
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _numeric(line: str) -> bool:
    try:
        [float(v) for v in line.split(",")]
        return True
    except ValueError:
        return False


def write_labeled(L: LabeledPoints, path) -> None:
    d = L.points.shape[1]
    with open(path, "w") as f:
        f.write(",".join([f"x{i}" for i in range(d)] + ["stratum", "distance"]) + "\n")
        for p, s, dist in zip(L.points, L.stratum, L.distance):
            f.write(",".join([repr(float(v)) for v in p] + [Stratum(s).value, repr(float(dist))]) + "\n")


def read_labeled(path) -> LabeledPoints:
    rows = Path(path).read_text().splitlines()[1:]
    pts, lab, dist = [], [], []
    for r in rows:
        parts = r.split(",")
        pts.append([float(v) for v in parts[:-2]])
        lab.append(Stratum(parts[-2]).value)
        dist.append(float(parts[-1]))
    return LabeledPoints(np.array(pts), np.array(lab), np.array(dist))


# --------------------------------------------------------------------------
# Canonical form


def write_canonical(C: CanonicalForm, path) -> None:
    np.savez(path, normals=C.body.normals, offsets=C.body.offsets, matrix=C.map.matrix,
             translation=C.map.translation, gamma=C.gamma, eps_abs=C.eps_abs,
             source=np.asarray(C.source_indices, np.int64))


def read_canonical(path) -> CanonicalForm:
    with np.load(path) as z:
        body = Polytope(z["normals"], z["offsets"], normalize=False)
        T = AffineMap(z["matrix"], z["translation"])
        return CanonicalForm(body, T, float(z["gamma"]), float(z["eps_abs"]), z["source"])


# --------------------------------------------------------------------------
# Local approximations


def approx_to_dict(A: LocalApprox) -> dict:
    cell = A.cell
    return {"level": getattr(cell, "level", None), "index": list(getattr(cell, "index", ())),
            "lo": np.asarray(cell.lo).tolist(), "hi": np.asarray(cell.hi).tolist(),
            "normals": A.normals.tolist(), "offsets": A.offsets.tolist(),
            "method": Method(A.method).value,
            "indices": None if A.indices is None else A.indices.tolist()}


def approx_from_dict(obj: dict) -> LocalApprox:
    d = len(obj["lo"])
    cell = QuadtreeCell(obj["level"], tuple(obj["index"])) if obj["level"] is not None else None
    N = np.asarray(obj["normals"], float).reshape(-1, d)
    idx = None if obj["indices"] is None else np.asarray(obj["indices"], np.int64)
    return LocalApprox(cell, N, np.asarray(obj["offsets"], float), Method(obj["method"]), idx)


# --------------------------------------------------------------------------
# SplitReduce trees


def _preorder(T: SplitReduceTree):
    out = []
    stack = [0]
    while stack:
        n = stack.pop()
        out.append(n)
        if T.kind[n] == Kind.INTERNAL:
            stack.extend(reversed(T.children(n)))
    return out


def tree_to_arrays(T: SplitReduceTree) -> dict:
    order = _preorder(T)
    tags = T.kind[order]
    leaves = [int(T.bundle[n]) for n in order if T.kind[n] == Kind.LEAF]
    B = [T.bundles[b] for b in leaves]
    d = T.d
    sizes = np.array([len(b) for b in B], np.int64)
    normals = np.vstack([b.normals for b in B]) if B else np.empty((0, d))
    offsets = np.concatenate([b.offsets for b in B]) if B else np.empty(0)
    indices = np.concatenate([b.indices if b.indices is not None else np.full(len(b), -1, np.int64)
                              for b in B]) if B else np.empty(0, np.int64)
    methods = np.array([_METHODS.index(Method(b.method)) for b in B], np.int8)
    header = {"magic": TREE_MAGIC, "version": FORMAT_VERSION, "d": d,
              "eps_abs": T.params.eps_abs, "t": T.params.t,
              "strict_inside": T.params.strict_inside,
              "witness_outside": T.params.witness_outside}
    arrays = dict(header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), np.uint8),
                  tags=tags.astype(np.int8), witness=T.witness[order], sizes=sizes,
                  normals=normals, offsets=offsets, indices=indices, methods=methods)
    if T.frame is not None:
        arrays["frame_matrix"] = T.frame.matrix
        arrays["frame_translation"] = T.frame.translation
    if T.source_indices is not None:
        arrays["source"] = np.asarray(T.source_indices, np.int64)
    return arrays


def tree_from_arrays(z) -> SplitReduceTree:
    header = json.loads(bytes(z["header"]).decode())
    if header.get("magic") != TREE_MAGIC:
        raise ValueError("not a polymem tree")
    d = int(header["d"])
    tags, wit = z["tags"], z["witness"]
    sizes, normals, offsets, indices, methods = z["sizes"], z["normals"], z["offsets"], z["indices"], z["methods"]
    starts = np.r_[0, np.cumsum(sizes)]
    kind, first, level, bundle, witness, bundles = [], [], [], [], [], []
    pos = 0
    leaf_no = 0

    def new(lvl):
        kind.append(0)
        first.append(-1)
        level.append(lvl)
        bundle.append(-1)
        witness.append(-1)
        return len(kind) - 1

    # Rebuild with contiguous child blocks: a node's children are allocated
    # together when the node is read, then filled in preorder.
    stack = [(new(0), QuadtreeCell.root(d))]
    while stack:
        node, cell = stack.pop()
        tag = int(tags[pos])
        kind[node] = tag
        witness[node] = int(wit[pos])
        pos += 1
        if tag == Kind.INTERNAL:
            kids = cell.children()
            ids = [new(cell.level + 1) for _ in kids]
            first[node] = ids[0]
            stack.extend(reversed(list(zip(ids, kids))))
        elif tag == Kind.LEAF:
            a, b = starts[leaf_no], starts[leaf_no + 1]
            idx = indices[a:b]
            has_idx = len(idx) == 0 or idx[0] >= 0
            m = _METHODS[int(methods[leaf_no])]
            bundle[node] = len(bundles)
            bundles.append(LocalApprox(cell, normals[a:b].reshape(-1, d), offsets[a:b], m,
                                       idx.astype(np.int64) if has_idx else None))
            leaf_no += 1
    params = BuildParams(float(header["eps_abs"]), int(header["t"]),
                         bool(header["strict_inside"]), bool(header["witness_outside"]))
    frame = AffineMap(z["frame_matrix"], z["frame_translation"]) if "frame_matrix" in z else None
    source = z["source"] if "source" in z else None
    return SplitReduceTree(d, params, np.array(kind, np.int8), np.array(first, np.int64),
                           np.array(level, np.int32), np.array(bundle, np.int64),
                           np.array(witness, np.int64), bundles, frame, source)


def write_tree(T: SplitReduceTree, path) -> None:
    with open(path, "wb") as f:
        np.savez(f, **tree_to_arrays(T))


def read_tree(path) -> SplitReduceTree:
    with np.load(path) as z:
        return tree_from_arrays(z)


def tree_bytes(T: SplitReduceTree) -> int:
    buf = io.BytesIO()
    np.savez(buf, **tree_to_arrays(T))
    return buf.tell()


# --------------------------------------------------------------------------
# ANN index (a pickle behind a magic line; load only files you wrote)


def write_index(I, path) -> None:
    with open(path, "wb") as f:
        f.write(INDEX_MAGIC)
        pickle.dump(I, f, protocol=pickle.HIGHEST_PROTOCOL)


def read_index(path):
    with open(path, "rb") as f:
        if f.readline() != INDEX_MAGIC:
            raise ValueError("not a polymem ANN index")
        return pickle.load(f)
