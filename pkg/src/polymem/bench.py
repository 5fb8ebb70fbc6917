"""Space/time trade-off sweeps, correctness gates and log-log slope fits."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import splitreduce
from .approximators import bentley_columns, dudley_approx, hybrid_tradeoff
from .workloads import BodySpec, Family, Stratum, gen_queries, make_body

COLUMNS = ["family", "d", "eps", "alpha", "t", "nodes", "sum_tq", "mean_tests", "max_tests",
           "depth", "inside_ok", "far_ok", "band_n", "build_ms", "query_us", "structure"]
TIMING = ("build_ms", "query_us")
STRUCTURES = ("splitreduce", "hybrid", "dudley", "bentley")


@dataclass
class BenchConfig:
    families: list = field(default_factory=lambda: ["ball", "random-tangent"])
    d: list = field(default_factory=lambda: [2])
    eps: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    alpha: list = field(default_factory=lambda: [4.0])
    structures: list = field(default_factory=lambda: ["splitreduce", "hybrid"])
    t_rule: str = "balanced"          # balanced | quarter | fixed:<n>
    queries: list = field(default_factory=lambda: [300, 300, 300])
    seed: int = 7
    random_tangent_n: int = 60
    ball_diam: float = 1.0
    ball_facet_eps: float = 0.003
    hypercylinder_delta: float = 0.0  # 0 keeps the generator's own diameter

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**raw)
        for s in cfg.structures:
            if s not in STRUCTURES:
                raise ValueError(f"unknown structure {s!r}")
        return cfg


def load_config(path) -> BenchConfig:
    with open(path, "rb") as f:
        return BenchConfig.from_dict(tomllib.load(f))


@dataclass
class TradeoffRecord:
    family: str
    d: int
    eps: float
    alpha: float
    t: int
    nodes: int
    sum_tq: int
    mean_tests: float
    max_tests: int
    depth: int
    inside_ok: int
    far_ok: int
    band_n: int
    build_ms: float
    query_us: float
    structure: str
    n_inside: int = 0        # gate denominators, not written to the CSV
    n_exterior: int = 0

    @property
    def violations(self) -> int:
        return (self.n_inside - self.inside_ok) + (self.n_exterior - self.far_ok)


@dataclass
class SweepResult:
    records: list
    failures: list           # (family, d, eps, alpha, structure, message)


def balanced_t(eps: float, d: int, alpha: float) -> int:
    return math.ceil(math.log2(1 / eps) / eps ** ((d - 1) / alpha) - 1e-9)


def quarter_power_t(eps: float, d: int) -> int:
    return math.ceil(eps ** (-(d - 1) / 4) - 1e-9)


def budget(rule: str, eps: float, d: int, alpha: float) -> int:
    if rule == "balanced":
        return balanced_t(eps, d, alpha)
    if rule == "quarter":
        return quarter_power_t(eps, d)
    if rule.startswith("fixed:"):
        return int(rule.split(":", 1)[1])
    raise ValueError(f"unknown t rule {rule!r}")


def _body(cfg: BenchConfig, family: str, d: int, eps: float, alpha: float):
    params = {}
    if family == Family.RANDOM_TANGENT.value:
        params = {"n": cfg.random_tangent_n}
    elif family == Family.BALL.value:
        params = {"diam": cfg.ball_diam, "facet_eps": cfg.ball_facet_eps}
    elif family == Family.HYPERCYLINDER.value:
        params = {"alpha": alpha, "eps": eps}
        if cfg.hypercylinder_delta > 0:
            params["delta"] = cfg.hypercylinder_delta
    K, _ = make_body(BodySpec(Family(family), d, params, cfg.seed))
    return K


def _score(acc, L, tests):
    ins = L.mask(Stratum.INSIDE)
    ext = ~ins
    return dict(inside_ok=int(np.sum(acc[ins])), far_ok=int(np.sum(~acc[ext])),
                band_n=int(np.sum(L.mask(Stratum.BAND))), n_inside=int(ins.sum()),
                n_exterior=int(ext.sum()),
                mean_tests=round(float(np.mean(tests)), 6) if len(tests) else 0.0,
                max_tests=int(np.max(tests)) if len(tests) else 0)


def first_violation(X, N, b, tol: float = 1e-12, block: int = 1 << 22):
    """(accepted, halfspaces evaluated) for a linear scan that stops at the
    first violated halfspace; evaluated in blocks of halfspaces."""
    m = len(X)
    tests = np.full(m, len(b), np.int64)
    open_ = np.ones(m, bool)
    step = max(1, block // max(1, m))
    for s in range(0, len(b), step):
        idx = np.flatnonzero(open_)
        if idx.size == 0:
            break
        viol = X[idx] @ N[s:s + step].T - b[s:s + step] > tol
        hit = viol.any(axis=1)
        tests[idx[hit]] = s + viol[hit].argmax(axis=1) + 1
        open_[idx[hit]] = False
    return open_, tests


def _run_structure(name, K, eps, alpha, t, L):
    """(storage fields, accepted, tests, build seconds, query seconds)."""
    X = L.points
    t0 = time.perf_counter()
    if name == "splitreduce":
        T = splitreduce.build(K, t, eps)
        built = time.perf_counter()
        R = splitreduce.query(T, X)
        done = time.perf_counter()
        s = splitreduce.space_report(T)
        return dict(nodes=s.nodes, sum_tq=s.sum_tq, depth=s.depth), R.inside, R.tests, built - t0, done - built
    if name == "hybrid":
        H = hybrid_tradeoff(K, eps, alpha)
        built = time.perf_counter()
        acc, tests = H.query(X)
        done = time.perf_counter()
        return dict(nodes=H.per_axis ** K.dim, sum_tq=H.storage, depth=1), acc, tests, built - t0, done - built
    if name == "dudley":
        P = dudley_approx(K, eps)
        built = time.perf_counter()
        acc, tests = first_violation(X, P.normals, P.offsets)
        done = time.perf_counter()
        return dict(nodes=1, sum_tq=P.n, depth=0), acc, tests, built - t0, done - built
    if name == "bentley":
        C = bentley_columns(K, eps)
        built = time.perf_counter()
        acc = C.contains(X)
        done = time.perf_counter()
        return dict(nodes=C.columns, sum_tq=2 * C.nonempty, depth=0), acc, np.full(len(X), 2), built - t0, done - built
    raise ValueError(name)


def sweep(cfg: BenchConfig, log=None) -> SweepResult:
    """Every (family, d, eps, alpha, structure) combination, in config order."""
    records, failures = [], []
    for family in cfg.families:
        for d in cfg.d:
            bodies = {}
            for eps in cfg.eps:
                for alpha in cfg.alpha:
                    for name in cfg.structures:
                        # dudley and bentley ignore alpha: emit them once per eps
                        if name in ("dudley", "bentley") and alpha != cfg.alpha[0]:
                            continue
                        a = 2.0 if name == "dudley" else (0.0 if name == "bentley" else float(alpha))
                        t = budget(cfg.t_rule, eps, d, alpha) if name == "splitreduce" else 0
                        hyper = family == Family.HYPERCYLINDER.value
                        key = (eps, alpha) if hyper else None
                        try:
                            if key not in bodies:
                                bodies[key] = (_body(cfg, family, d, eps, alpha), {})
                            K, qs = bodies[key]
                            if eps not in qs:
                                qs[eps] = gen_queries(K, eps, tuple(cfg.queries), cfg.seed)
                            L = qs[eps]
                            store, acc, tests, tb, tq = _run_structure(name, K, eps, a, t, L)
                        except Exception as exc:       # recorded, sweep continues
                            failures.append((family, d, eps, a, name, f"{type(exc).__name__}: {exc}"))
                            if log:
                                log(f"FAILED {family} d={d} eps={eps} alpha={a} {name}: {exc}")
                            continue
                        rec = TradeoffRecord(family=family, d=d, eps=eps, alpha=a, t=t,
                                             build_ms=round(tb * 1e3, 3),
                                             query_us=round(tq * 1e6 / max(1, len(L)), 3),
                                             structure=name, **store, **_score(acc, L, tests))
                        records.append(rec)
                        if log:
                            log(f"{family} d={d} eps={eps} alpha={a} {name}: nodes={rec.nodes} "
                                f"sum_tq={rec.sum_tq} max_tests={rec.max_tests} violations={rec.violations}")
    return SweepResult(records, failures)


# --------------------------------------------------------------------------
# Fits


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r2: float
    points: int


def fit_loglog(xs, ys) -> ExponentFit:
    """Least squares of lg y against lg x."""
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    if len(xs) < 3:
        raise ValueError("need at least 3 points to fit an exponent")
    if np.unique(xs).size < 2 or np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("degenerate ladder")
    lx, ly = np.log2(xs), np.log2(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss if ss > 0 else 1.0
    return ExponentFit(float(slope), float(intercept), r2, len(xs))


def fit_exponent(records, y: str = "sum_tq") -> ExponentFit:
    """Slope of lg(column) against lg(1/eps) over records."""
    recs = list(records)
    return fit_loglog([1 / r.eps for r in recs], [getattr(r, y) for r in recs])


def hybrid_storage_exponent(d, alpha):
    return (d - 1) * (1 - 1 / alpha)


def hybrid_query_exponent(d, alpha):
    return (d - 1) / alpha


def splitreduce_storage_exponent(d, alpha):
    return (d - 1) * (1 - (2 * math.floor(math.log2(alpha)) - 2) / alpha)


def lower_bound_exponent(d, alpha):
    return (d - 1) * (1 - (2 * math.sqrt(2 * alpha) - 3) / alpha) - 1


def group_fits(records) -> list[tuple[tuple, str, ExponentFit, float | None]]:
    """Fits of storage (sum_tq) and query cost (max_tests) per
    (structure, family, d, alpha) series, paired with the formula value."""
    series = {}
    for r in records:
        series.setdefault((r.structure, r.family, r.d, r.alpha), []).append(r)
    out = []
    for key, recs in series.items():
        structure, family, d, alpha = key
        recs = sorted(recs, key=lambda r: r.eps, reverse=True)
        if len({r.eps for r in recs}) < 3:
            continue
        for col in ("sum_tq", "max_tests"):
            try:
                fit = fit_exponent(recs, col)
            except ValueError:
                continue
            formula = None
            if structure == "hybrid":
                formula = hybrid_storage_exponent(d, alpha) if col == "sum_tq" else hybrid_query_exponent(d, alpha)
            elif structure == "dudley" and col == "sum_tq":
                formula = (d - 1) / 2
            elif structure == "splitreduce" and col == "sum_tq":
                formula = splitreduce_storage_exponent(d, alpha)
            out.append((key, col, fit, formula))
    return out


# --------------------------------------------------------------------------
# Report


def to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        row = asdict(r)
        w.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def determinism_digest(csv_text: str) -> str:
    """SHA-256 of the CSV with the timing columns removed."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return hashlib.sha256(b"").hexdigest()
    keep = [i for i, c in enumerate(rows[0]) if c not in TIMING]
    text = "\n".join(",".join(r[i] for i in keep) for r in rows)
    return hashlib.sha256(text.encode()).hexdigest()


def report(records, fits=None, failures=()) -> tuple[str, str]:
    """(CSV text, human summary)."""
    fits = group_fits(records) if fits is None else fits
    lines = []
    bad = [r for r in records if r.violations]
    lines.append(f"records: {len(records)}  correctness violations: {sum(r.violations for r in bad)}")
    for r in bad:
        lines.append(f"  GATE {r.structure} {r.family} d={r.d} eps={r.eps} alpha={r.alpha}: "
                     f"inside {r.inside_ok}/{r.n_inside}, exterior {r.far_ok}/{r.n_exterior}")
    if failures:
        lines.append(f"failed cells: {len(failures)}")
        for f in failures:
            lines.append("  " + " ".join(map(str, f)))
    if fits:
        lines.append("")
        lines.append(f"{'structure':<12}{'family':<16}{'d':>2}{'alpha':>7}  {'column':<10}"
                     f"{'slope':>8}{'R2':>7}{'formula':>9}  note")
        for (structure, family, d, alpha), col, fit, formula in fits:
            note = ""
            if structure == "splitreduce" and col == "sum_tq" and alpha > 0:
                limit = splitreduce_storage_exponent(d, alpha)
                if fit.slope > limit + 0.5:
                    note = f"CHECK: above storage formula {limit:.3f} by more than 0.5"
                floor = lower_bound_exponent(d, alpha)
                note = (note + f" lower-bound floor {floor:.3f}").strip()
            ftxt = f"{formula:9.3f}" if formula is not None else f"{'-':>9}"
            lines.append(f"{structure:<12}{family:<16}{d:>2}{alpha:>7g}  {col:<10}"
                         f"{fit.slope:8.3f}{fit.r2:7.3f}{ftxt}  {note}")
    return to_csv(records), "\n".join(lines)
