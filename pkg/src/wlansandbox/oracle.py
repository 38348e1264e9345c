"""Brute-force ground truth: every joint power configuration, averaged over seeds."""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .parallel import parallel_map
from .sim import seconds
from .wlan.dcf import simulate_scenario
from .wlan.scenario import Scenario

DEFAULT_CAP = 10_000


class OracleCapExceeded(ValueError):
    def __init__(self, size: int, cap: int):
        self.size, self.cap = size, cap
        super().__init__(f"{size} joint configurations exceed the cap of {cap}; "
                         f"raise it with --cap {size}")


@dataclass(frozen=True)
class OracleRow:
    powers: tuple[float, ...]
    mean_aggregate: float
    per_bss: tuple[float, ...]


def _evaluate(args) -> tuple[float, tuple[float, ...]]:
    s, powers, seeds, duration = args
    sc = s.with_powers(dict(zip(s.bss_ids, powers)))
    reps = [simulate_scenario(sc, duration, sd) for sd in seeds]
    per = tuple(float(np.mean([r.bss[i].thr_mbps for r in reps])) for i in range(len(s.bss)))
    return float(np.mean([r.aggregate for r in reps])), per


def exhaustive_search(s: Scenario, seeds: Sequence[int], duration: int = seconds(10),
                      cap: int = DEFAULT_CAP, jobs: int = 1) -> list[OracleRow]:
    """All ``|power_levels| ** |BSS|`` configurations, best first (ties by powers)."""
    size = len(s.power_levels) ** len(s.bss)
    if size > cap:
        raise OracleCapExceeded(size, cap)
    configs = list(itertools.product(s.power_levels, repeat=len(s.bss)))
    results = parallel_map(_evaluate, [(s, c, tuple(seeds), duration) for c in configs], jobs)
    rows = [OracleRow(c, agg, per) for c, (agg, per) in zip(configs, results)]
    rows.sort(key=lambda r: (-r.mean_aggregate, r.powers))
    return rows


def near_optimal(rows: Sequence[OracleRow], tolerance: float = 0.05) -> set[tuple[float, ...]]:
    best = rows[0].mean_aggregate
    return {r.powers for r in rows if r.mean_aggregate >= (1 - tolerance) * best}


def rows_to_csv(s: Scenario, rows: Sequence[OracleRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["powers", "mean_aggregate_mbps"] + [f"bss_{b}_mbps" for b in s.bss_ids])
    for r in rows:
        w.writerow(["/".join(f"{p:g}" for p in r.powers), f"{r.mean_aggregate:.6f}"]
                   + [f"{v:.6f}" for v in r.per_bss])
    return buf.getvalue()
