"""Emulated operative network and the feature extraction that characterizes it."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..sim import RngStream, derive_seed
from ..wlan.channel import ChannelParams
from ..wlan.dcf import ThroughputReport, simulate_scenario
from ..wlan.scenario import (SATURATED, Bss, Node, Scenario, ScenarioError, canonical_scenario,
                             _line_of, load_scenario, scenario_from_dict)

PROBE_POWER_DBM = 20.0


class EstimationError(ValueError):
    pass


class UnderlayHandle:
    """A scenario with hidden perturbations standing in for the live network.

    The perturbations (path-loss exponent offset, per-BSS traffic scaling and
    a seed offset) are drawn once from ``seed`` and are only observable
    through :meth:`probe`, :meth:`offered_loads` and :meth:`measure`.
    """

    def __init__(self, base: Scenario, seed: int = 0, exponent_jitter: float = 0.2,
                 traffic_jitter: float = 0.1):
        rng = RngStream(seed, "underlay.perturbation")
        delta = (2 * rng.draw() - 1) * exponent_jitter
        scale = {b.id: 1 + (2 * rng.draw() - 1) * traffic_jitter for b in base.bss}
        channel = dataclasses.replace(base.channel, exponent=base.channel.exponent + delta)
        truth = dataclasses.replace(base, channel=channel)
        truth = truth.with_loads({b.id: b.traffic_load * scale[b.id]
                                  for b in base.bss if not b.saturated})
        self.base = base
        self.seed = seed
        self.exponent_jitter = exponent_jitter
        self.traffic_jitter = traffic_jitter
        self._truth = truth
        self._seed_offset = derive_seed(seed, "underlay.seed-offset")
        self._config = dict(base.powers)
        self.deployments: list[dict[str, float]] = []

    # hidden state, exposed for tests and reporting only
    @property
    def true_exponent(self) -> float:
        return self._truth.channel.exponent

    @property
    def config(self) -> dict[str, float]:
        return dict(self._config)

    @property
    def power_levels(self) -> tuple[float, ...]:
        return self._truth.power_levels

    @property
    def default_power(self) -> float:
        return self._truth.default_power

    def apply(self, powers: Mapping[str, float]) -> None:
        for b, p in powers.items():
            if b not in self._config:
                raise KeyError(f"unknown BSS {b!r}")
            if p not in self._truth.power_levels:
                raise ValueError(f"power {p} not supported by the equipment")
        self._config.update({b: float(p) for b, p in powers.items()})
        self.deployments.append(dict(powers))

    # -- what the management subsystem can observe ------------------------------

    def inventory(self) -> tuple[tuple[Node, ...], tuple[Bss, ...], tuple[tuple[str, str, int], ...]]:
        """Node locations, BSS membership and the floor plan's wall counts."""
        bss = tuple(dataclasses.replace(b, traffic_load=SATURATED, tx_power=self._config[b.id])
                    for b in self._truth.bss)
        return self._truth.nodes, bss, self._truth.walls

    def offered_loads(self) -> dict[str, float]:
        return {b.id: b.traffic_load for b in self._truth.bss}

    def probe(self, tx: str, rx: str, tx_dbm: float = PROBE_POWER_DBM) -> float:
        return self._truth.rx_dbm(tx, rx, tx_dbm)

    def measure(self, duration: int, seed: int) -> ThroughputReport:
        live = self._truth.with_powers(self._config)
        return simulate_scenario(live, duration, derive_seed(self._seed_offset, str(seed)))


def load_underlay(path: str | Path) -> UnderlayHandle:
    """Underlay file: ``{"scenario": <object> | "canonical" | <path>, "seed": int,
    "exponent_jitter": float, "traffic_jitter": float}``."""
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON: {exc.msg}", "<document>", exc.lineno) from None
    if not isinstance(d, dict):
        raise ScenarioError("underlay file must be a JSON object", "<document>")
    unknown = set(d) - {"scenario", "seed", "exponent_jitter", "traffic_jitter"}
    if unknown:
        key = sorted(unknown)[0]
        raise ScenarioError("unknown field", key, _line_of(text, key))
    raw = d.get("scenario", "canonical")
    if raw == "canonical":
        base = canonical_scenario()
    elif isinstance(raw, str):
        base = load_scenario(path.parent / raw)
    else:
        base = scenario_from_dict(raw, text)
    for key, kind in (("seed", int), ("exponent_jitter", (int, float)), ("traffic_jitter", (int, float))):
        if key in d and (isinstance(d[key], bool) or not isinstance(d[key], kind)):
            raise ScenarioError(f"expected a number, got {d[key]!r}", key, _line_of(text, key))
    return UnderlayHandle(base, seed=d.get("seed", 0), exponent_jitter=d.get("exponent_jitter", 0.2),
                          traffic_jitter=d.get("traffic_jitter", 0.1))


# -- characterization ------------------------------------------------------------------

@dataclass
class ScenarioSpec:
    nodes: tuple[Node, ...]
    bss: tuple[Bss, ...]
    walls: tuple[tuple[str, str, int], ...]
    pl0: float
    exponent: float
    power_levels: tuple[float, ...]
    default_power: float
    wall_loss: float = ChannelParams.wall_loss
    probes: int = 0
    fit_residual_db: float = 0.0


def fit_path_loss(samples: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares fit of ``loss = pl0 + 10 n log10(d)`` to (distance m, loss dB)
    pairs; returns ``(pl0, n, rms residual)``."""
    x = np.array([math.log10(max(d, 1.0)) for d, _ in samples])
    y = np.array([pl for _, pl in samples])
    if len(np.unique(x)) < 2:
        raise EstimationError("need probes at two or more distinct distances")
    A = np.column_stack([np.ones_like(x), 10.0 * x])
    (pl0, n), *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ [pl0, n] - y) ** 2)))
    return float(pl0), float(n), rms


def extract_features(u: UnderlayHandle, probes: Sequence[tuple[str, str]] | None = None,
                     wall_loss: float = ChannelParams.wall_loss) -> ScenarioSpec:
    nodes, bss, walls = u.inventory()
    if probes is None:
        probes = [(a.id, b.id) for a in nodes for b in nodes if a.id < b.id]
    pos = {n.id: n for n in nodes}
    wall_count = {frozenset((a, b)): c for a, b, c in walls}
    samples = []
    for tx, rx in probes:
        loss = PROBE_POWER_DBM - u.probe(tx, rx)
        loss -= wall_count.get(frozenset((tx, rx)), 0) * wall_loss
        samples.append((pos[tx].distance_to(pos[rx]), loss))
    pl0, n, rms = fit_path_loss(samples)
    loads = u.offered_loads()
    bss = tuple(dataclasses.replace(b, traffic_load=loads[b.id]) for b in bss)
    return ScenarioSpec(nodes=nodes, bss=bss, walls=walls, pl0=pl0, exponent=n,
                        power_levels=u.power_levels, default_power=u.default_power,
                        wall_loss=wall_loss, probes=len(samples), fit_residual_db=rms)


def prepare_sandbox(spec: ScenarioSpec) -> Scenario:
    for name in ("nodes", "bss", "power_levels"):
        if not getattr(spec, name):
            raise ScenarioError(f"feature set is missing {name}", name)
    if spec.exponent is None or spec.pl0 is None or not math.isfinite(spec.exponent):
        raise ScenarioError("feature set has no path-loss estimate", "exponent")
    try:
        channel = ChannelParams(pl0=spec.pl0, exponent=spec.exponent, wall_loss=spec.wall_loss)
    except ValueError as exc:
        raise ScenarioError(str(exc), "exponent") from None
    return Scenario(nodes=spec.nodes, bss=spec.bss, channel=channel,
                    power_levels=tuple(spec.power_levels), default_power=spec.default_power,
                    walls=spec.walls)

