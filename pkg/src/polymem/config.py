"""Numerical tolerances and resource caps shared by every module.

The geometry here is done in floating point, so every comparison that the
algorithms would make exactly is routed through one of these constants.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    membership: float = 1e-12       # slack allowed on <n, q> <= b
    lp: float = 1e-10               # LP feasibility slack
    dedup: float = 1e-9             # vertices closer than this are merged
    vertex_budget: int = 2_000_000  # max d-subsets tried by brute-force enumeration
    distance_rel: float = 1e-9      # nearest-point accuracy, relative to the body's size
    mvee_rel: float = 1e-6          # Khachiyan stopping rule
    mvee_iters: int = 100_000
    cover_grid_cap: int = 1 << 18   # largest sample grid the greedy cover will build
    dudley_sample_cap: int = 4_000_000


DEFAULT = Tolerances()


def with_overrides(**kw) -> Tolerances:
    return replace(DEFAULT, **kw)
