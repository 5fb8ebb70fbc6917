"""Command line entry point: ``polymem <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import formats
from .ann import ann_query, build_ann
from .bench import BenchConfig, load_config, report, sweep
from .geometry import in_root
from .precondition import canonicalize
from .splitreduce import build, query, space_report
from .workloads import BodySpec, Family, gen_points, gen_queries, make_body


def _params(items) -> dict:
    out = {}
    for item in items or []:
        key, _, value = item.partition("=")
        if not _:
            raise SystemExit(f"bad --params entry {item!r}, expected key=value")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def cmd_build(a) -> int:
    K = formats.read_polytope(a.body)
    if a.canonicalize or not np.all(in_root(K.vertex_array, 1e-12)):
        src = canonicalize(K, a.eps)
        T = build(src, a.t, strict_inside=a.strict, witness_outside=a.witness)
    else:
        T = build(K, a.t, a.eps, strict_inside=a.strict, witness_outside=a.witness)
    formats.write_tree(T, a.output)
    s = space_report(T)
    print(f"nodes={s.nodes} leaves={s.leaves} inside={s.inside} outside={s.outside} "
          f"sum_tq={s.sum_tq} max_tq={s.max_tq} depth={s.depth}", file=sys.stderr)
    return 0


def cmd_query(a) -> int:
    T = formats.read_tree(a.tree)
    X = formats.read_points(a.points)
    R = query(T, X)
    out = open(a.output, "w") if a.output else sys.stdout
    try:
        out.write("query_id,inside,witness,cost\n")
        for i in range(len(X)):
            out.write(f"{i},{int(R.inside[i])},{int(R.witness[i])},{int(R.cost[i])}\n")
    finally:
        if a.output:
            out.close()
    return 0


def cmd_ann_build(a) -> int:
    X = formats.read_points(a.points)
    I = build_ann(X, a.eps, a.t, rep_threshold=a.rep_threshold)
    formats.write_index(I, a.output)
    print(f"sites={len(X)} leaves={len(I.cells)} lifted={I.lifted_cells} depth={I.depth}",
          file=sys.stderr)
    return 0


def cmd_ann_query(a) -> int:
    I = formats.read_index(a.index)
    Q = formats.read_points(a.queries)
    A = ann_query(I, Q)
    out = open(a.output, "w") if a.output else sys.stdout
    try:
        out.write("query_id,site_id,distance,cost\n")
        for i in range(len(Q)):
            out.write(f"{i},{int(A.site[i])},{float(A.distance[i])!r},{int(A.cost[i])}\n")
    finally:
        if a.output:
            out.close()
    return 0


def cmd_gen(a) -> int:
    p = _params(a.params)
    K, info = make_body(BodySpec(Family(a.family), a.d, p, a.seed))
    formats.write_polytope(K, a.output)
    if info is not None:
        print(f"k={info.k} kappa={info.kappa:.4f} t={info.t} delta={info.delta:.6g}", file=sys.stderr)
    return 0


def cmd_gen_points(a) -> int:
    p = _params(a.params)
    X = gen_points(a.d, a.n, a.kind, a.seed, **p)
    formats.write_points(X, a.output)
    return 0


def cmd_gen_queries(a) -> int:
    K = formats.read_polytope(a.body)
    L = gen_queries(K, a.eps, tuple(a.counts), a.seed)
    formats.write_labeled(L, a.output)
    return 0


def cmd_bench(a) -> int:
    cfg = load_config(a.config) if a.config else BenchConfig()
    log = (lambda m: print(m, file=sys.stderr)) if a.verbose else None
    res = sweep(cfg, log=log)
    csv_text, summary = report(res.records, failures=res.failures)
    if a.output:
        with open(a.output, "w") as f:
            f.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    print(summary, file=sys.stderr)
    return 1 if any(r.violations for r in res.records) else 0


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polymem", description="Approximate polytope membership")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a SplitReduce tree for a body")
    b.add_argument("--body", required=True)
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--t", type=int, required=True)
    b.add_argument("--strict", action="store_true", help="label Inside only when the cell lies in K")
    b.add_argument("--witness", action="store_true", help="label Outside only with a single excluding halfspace")
    b.add_argument("--canonicalize", action="store_true",
                   help="map the body to canonical position first (eps is then relative)")
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="answer membership queries against a tree")
    q.add_argument("--tree", required=True)
    q.add_argument("--points", required=True)
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_query)

    ab = sub.add_parser("ann-build", help="build an approximate nearest neighbour index")
    ab.add_argument("--points", required=True)
    ab.add_argument("--eps", type=float, required=True)
    ab.add_argument("--t", type=int, required=True)
    ab.add_argument("--rep-threshold", type=int, default=16)
    ab.add_argument("-o", "--output", required=True)
    ab.set_defaults(func=cmd_ann_build)

    aq = sub.add_parser("ann-query", help="query an ANN index")
    aq.add_argument("--index", required=True)
    aq.add_argument("--queries", required=True)
    aq.add_argument("-o", "--output")
    aq.set_defaults(func=cmd_ann_query)

    g = sub.add_parser("gen", help="generate a body")
    g.add_argument("--family", required=True, choices=[f.value for f in Family])
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--params", nargs="*", metavar="KEY=VALUE")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    gp = sub.add_parser("gen-points", help="generate a point cloud")
    gp.add_argument("--d", type=int, required=True)
    gp.add_argument("--n", type=int, required=True)
    gp.add_argument("--kind", default="uniform", choices=["uniform", "clusters", "sphere"])
    gp.add_argument("--params", nargs="*", metavar="KEY=VALUE")
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("-o", "--output", required=True)
    gp.set_defaults(func=cmd_gen_points)

    gq = sub.add_parser("gen-queries", help="generate labelled membership queries for a body")
    gq.add_argument("--body", required=True)
    gq.add_argument("--eps", type=float, required=True)
    gq.add_argument("--counts", type=int, nargs=3, default=[1000, 1000, 1000],
                    metavar=("INSIDE", "BAND", "FAR"))
    gq.add_argument("--seed", type=int, default=0)
    gq.add_argument("-o", "--output", required=True)
    gq.set_defaults(func=cmd_gen_queries)

    bn = sub.add_parser("bench", help="run a trade-off sweep")
    bn.add_argument("--config")
    bn.add_argument("-o", "--output")
    bn.add_argument("-v", "--verbose", action="store_true")
    bn.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
