"""Execution time versus result variability across simulated durations."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..sim import derive_seed, seconds
from ..wlan.dcf import simulate_scenario
from ..wlan.scenario import Scenario


@dataclass(frozen=True)
class SweepRow:
    duration_s: float
    mean_exec_ms: float
    cov: float
    mean_aggregate: float
    degenerate: bool


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Sample std / mean; 0 for a single value."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    mean = values.mean()
    return float(values.std(ddof=1) / mean) if mean > 0 else 0.0


def stability_sweep(s: Scenario, durations: Sequence[float], seeds_per_point: int,
                    seed: int = 0) -> list[SweepRow]:
    """Aggregate-throughput CoV and mean wall-clock time per simulated duration.

    The same seed list is reused at every duration, so rows differ only in
    how long each run is simulated.
    """
    if list(durations) != sorted(durations):
        raise ValueError("durations must be ascending")
    if seeds_per_point < 1:
        raise ValueError("seeds_per_point must be >= 1")
    seeds = [derive_seed(seed, f"sweep.{k}") for k in range(seeds_per_point)]
    simulate_scenario(s, seconds(0.01), seeds[0])   # compile before timing
    rows = []
    for d in durations:
        totals, elapsed = [], []
        for sd in seeds:
            t0 = time.perf_counter()
            rep = simulate_scenario(s, seconds(d), sd)
            elapsed.append(time.perf_counter() - t0)
            totals.append(rep.aggregate)
        rows.append(SweepRow(float(d), 1e3 * float(np.mean(elapsed)), coefficient_of_variation(totals),
                             float(np.mean(totals)), seeds_per_point == 1))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["duration_s", "mean_exec_ms", "cov"])
    for r in rows:
        w.writerow([f"{r.duration_s:g}", f"{r.mean_exec_ms:.3f}", f"{r.cov:.6f}"])
    return buf.getvalue()
