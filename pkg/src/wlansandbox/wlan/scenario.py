"""Deployment description (nodes, BSSs, channel, MAC constants) and its JSON form."""
from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .channel import ChannelParams, McsTable, path_loss, rx_power, cca_busy as _cca_busy

SATURATED = math.inf


class ScenarioError(ValueError):
    """Invalid scenario content; ``key`` names the offending field."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = ""
        if key:
            where += f" [field '{key}'"
            where += f", line {line}]" if line else "]"
        super().__init__(message + where)


@dataclass(frozen=True)
class Node:
    id: str
    role: str          # "AP" or "STA"
    x: float
    y: float
    bss_id: str

    def distance_to(self, other: "Node") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Bss:
    id: str
    ap: str
    stations: tuple[str, ...]
    traffic_load: float = SATURATED   # Mbps offered downlink
    tx_power: float = 23.0            # dBm

    @property
    def saturated(self) -> bool:
        return math.isinf(self.traffic_load)


@dataclass(frozen=True)
class MacParams:
    slot_us: int = 9
    difs_us: int = 34
    cw_min: int = 15
    cw_max: int = 1023
    payload_bits: int = 12_000
    overhead_us: int = 100

    def __post_init__(self):
        for name in ("slot_us", "cw_min", "cw_max", "payload_bits"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"{name} must be positive", f"mac.{name}")
        for name in ("difs_us", "overhead_us"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be non-negative", f"mac.{name}")
        if self.cw_max < self.cw_min:
            raise ScenarioError("cw_max must be >= cw_min", "mac.cw_max")


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[Node, ...]
    bss: tuple[Bss, ...]
    channel: ChannelParams = ChannelParams()
    mcs: McsTable = McsTable()
    power_levels: tuple[float, ...] = (3.0, 7.0, 11.0, 15.0, 19.0, 23.0)
    default_power: float = 23.0
    mac: MacParams = MacParams()
    walls: tuple[tuple[str, str, int], ...] = ()
    _node_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "bss", tuple(self.bss))
        object.__setattr__(self, "power_levels", tuple(float(p) for p in self.power_levels))
        object.__setattr__(self, "walls", tuple((a, b, int(n)) for a, b, n in self.walls))
        index = {}
        for n in self.nodes:
            if n.id in index:
                raise ScenarioError(f"duplicate node id {n.id!r}", "nodes")
            if n.role not in ("AP", "STA"):
                raise ScenarioError(f"node {n.id!r} has unknown role {n.role!r}", "nodes.role")
            if not (math.isfinite(n.x) and math.isfinite(n.y)):
                raise ScenarioError(f"node {n.id!r} has non-finite coordinates", "nodes.x")
            index[n.id] = n
        object.__setattr__(self, "_node_index", index)
        if not self.bss:
            raise ScenarioError("at least one BSS is required", "bss")
        if not self.power_levels:
            raise ScenarioError("power_levels must not be empty", "power_levels")
        if list(self.power_levels) != sorted(set(self.power_levels)):
            raise ScenarioError("power_levels must be sorted and distinct", "power_levels")
        if self.default_power not in self.power_levels:
            raise ScenarioError("default_power must be one of power_levels", "default_power")
        seen_bss, owner = set(), {}
        for b in self.bss:
            if b.id in seen_bss:
                raise ScenarioError(f"duplicate BSS id {b.id!r}", "bss.id")
            seen_bss.add(b.id)
            ap = index.get(b.ap)
            if ap is None or ap.role != "AP" or ap.bss_id != b.id:
                raise ScenarioError(f"BSS {b.id!r}: ap {b.ap!r} is not an AP of this BSS", "bss.ap")
            if not b.traffic_load >= 0:
                raise ScenarioError(f"BSS {b.id!r}: traffic_load must be >= 0", "bss.traffic_load")
            if b.tx_power not in self.power_levels:
                raise ScenarioError(f"BSS {b.id!r}: tx_power {b.tx_power} not in power_levels",
                                    "bss.tx_power")
            for s in b.stations:
                sta = index.get(s)
                if sta is None or sta.role != "STA" or sta.bss_id != b.id:
                    raise ScenarioError(f"BSS {b.id!r}: station {s!r} is not a STA of this BSS",
                                        "bss.stations")
                if s in owner:
                    raise ScenarioError(f"station {s!r} associated twice", "bss.stations")
                owner[s] = b.id
        for n in self.nodes:
            if n.role == "STA" and n.id not in owner:
                raise ScenarioError(f"station {n.id!r} is not associated to any AP", "nodes")
        for a, b, count in self.walls:
            if a not in index or b not in index:
                raise ScenarioError(f"wall entry references unknown node {a!r}/{b!r}", "walls")
            if count < 0:
                raise ScenarioError("wall counts must be non-negative", "walls")

    # -- geometry --------------------------------------------------------

    def node(self, node_id: str) -> Node:
        return self._node_index[node_id]

    def bss_by_id(self, bss_id: str) -> Bss:
        for b in self.bss:
            if b.id == bss_id:
                return b
        raise KeyError(bss_id)

    @property
    def bss_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.bss)

    def walls_between(self, a: str, b: str) -> int:
        for x, y, n in self.walls:
            if (x, y) == (a, b) or (x, y) == (b, a):
                return n
        return 0

    def path_loss(self, a: str, b: str) -> float:
        na, nb = self.node(a), self.node(b)
        return path_loss(na.distance_to(nb), self.walls_between(a, b), self.channel)

    def rx_dbm(self, tx: str, rx: str, tx_dbm: float) -> float:
        return rx_power(tx_dbm, self.path_loss(tx, rx))

    def cca_busy(self, listener: str, transmitters: list[tuple[str, float]]) -> bool:
        if any(t == listener for t, _ in transmitters):
            raise ValueError("listener cannot be one of the transmitters")
        return _cca_busy([self.rx_dbm(t, listener, p) for t, p in transmitters], self.channel)

    # -- configuration ---------------------------------------------------

    @property
    def powers(self) -> dict[str, float]:
        return {b.id: b.tx_power for b in self.bss}

    def with_powers(self, powers: Mapping[str, float]) -> "Scenario":
        unknown = set(powers) - set(self.bss_ids)
        if unknown:
            raise KeyError(f"unknown BSS ids {sorted(unknown)}")
        bss = tuple(dataclasses.replace(b, tx_power=float(powers[b.id])) if b.id in powers else b
                    for b in self.bss)
        return dataclasses.replace(self, bss=bss)

    def with_loads(self, loads: Mapping[str, float]) -> "Scenario":
        bss = tuple(dataclasses.replace(b, traffic_load=float(loads[b.id])) if b.id in loads else b
                    for b in self.bss)
        return dataclasses.replace(self, bss=bss)

    def with_default_powers(self) -> "Scenario":
        return self.with_powers({b.id: self.default_power for b in self.bss})

    def reward_bound(self, bss_id: str) -> float:
        """Offered load when finite, otherwise the top PHY rate."""
        load = self.bss_by_id(bss_id).traffic_load
        return load if math.isfinite(load) else self.mcs.max_rate


def canonical_scenario() -> Scenario:
    """Two residential BSSs, one STA each.

    APs sit 30 m apart with each STA 3 m behind its AP on the AP-AP axis, so
    at 23 dBm the APs hear each other (-68.7 dBm) and share the medium, while
    at 7 dBm they fall below CCA (-84.7 dBm) and transmit concurrently.
    """
    nodes = (
        Node("AP1", "AP", 0.0, 0.0, "1"),
        Node("STA1", "STA", -3.0, 0.0, "1"),
        Node("AP2", "AP", 30.0, 0.0, "2"),
        Node("STA2", "STA", 33.0, 0.0, "2"),
    )
    bss = (Bss("1", "AP1", ("STA1",)), Bss("2", "AP2", ("STA2",)))
    return Scenario(nodes=nodes, bss=bss)


# -- serialization ------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    return {
        "nodes": [{"id": n.id, "role": n.role, "x": n.x, "y": n.y, "bss": n.bss_id} for n in s.nodes],
        "bss": [{"id": b.id, "ap": b.ap, "stations": list(b.stations),
                 "traffic_load": "saturated" if b.saturated else b.traffic_load,
                 "tx_power": b.tx_power} for b in s.bss],
        "channel": dataclasses.asdict(s.channel),
        "mcs_table": [list(e) for e in s.mcs.entries],
        "mac": dataclasses.asdict(s.mac),
        "power_levels": list(s.power_levels),
        "default_power": s.default_power,
        "walls": [[a, b, n] for a, b, n in s.walls],
    }


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    leaf = key.split(".")[-1]
    leaf = re.sub(r"\[\d+\]$", "", leaf)
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{leaf}"' in line:
            return i
    return None


def scenario_from_dict(d: Mapping[str, Any], text: str | None = None) -> Scenario:
    """Build a Scenario; missing optional sections take the documented defaults."""

    def fail(msg: str, key: str):
        raise ScenarioError(msg, key, _line_of(text, key))

    def get(obj: Mapping, key: str, path: str, kind=None, default=...):
        if not isinstance(obj, Mapping):
            fail("expected an object", path.rsplit(".", 1)[0])
        if key not in obj:
            if default is ...:
                fail("missing required field", path)
            return default
        value = obj[key]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                fail(f"expected a number, got {value!r}", path)
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                fail(f"expected an integer, got {value!r}", path)
        if kind is str and not isinstance(value, str):
            fail(f"expected a string, got {value!r}", path)
        return value

    if not isinstance(d, Mapping):
        fail("scenario must be a JSON object", "scenario")
    for section in d:
        if section not in {"nodes", "bss", "channel", "mcs_table", "mac", "power_levels",
                           "default_power", "walls"}:
            fail("unknown section", section)

    raw_nodes = get(d, "nodes", "nodes")
    if not isinstance(raw_nodes, list):
        fail("expected a list", "nodes")
    nodes = []
    for i, rn in enumerate(raw_nodes):
        p = f"nodes[{i}]"
        nodes.append(Node(str(get(rn, "id", p + ".id")), get(rn, "role", p + ".role", str),
                          get(rn, "x", p + ".x", float), get(rn, "y", p + ".y", float),
                          str(get(rn, "bss", p + ".bss"))))

    def section(name: str, label: str, defaults: dict, kind) -> dict:
        raw = get(d, name, name, default={})
        if not isinstance(raw, Mapping):
            fail("expected an object", name)
        for k in raw:
            if k not in defaults:
                fail(f"unknown {label} parameter", f"{name}.{k}")
        return {k: get(raw, k, f"{name}.{k}", kind) for k in raw}

    ch_kwargs = section("channel", "channel", dataclasses.asdict(ChannelParams()), float)
    try:
        channel = ChannelParams(**ch_kwargs)
    except ValueError as exc:
        fail(str(exc), "channel")

    mcs_raw = get(d, "mcs_table", "mcs_table", default=None)
    try:
        mcs = McsTable() if mcs_raw is None else McsTable(tuple(tuple(e) for e in mcs_raw))
    except (ValueError, TypeError) as exc:
        fail(f"invalid MCS table: {exc}", "mcs_table")

    mac_kwargs = section("mac", "MAC", dataclasses.asdict(MacParams()), int)
    try:
        mac = MacParams(**mac_kwargs)
    except ScenarioError as exc:
        fail(str(exc).split(" [field")[0], exc.key)

    levels = get(d, "power_levels", "power_levels", default=list(Scenario.power_levels))
    if not isinstance(levels, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                               for v in levels):
        fail("expected a list of numbers", "power_levels")
    default_power = get(d, "default_power", "default_power", float,
                        default=max(levels) if levels else 23.0)

    raw_bss = get(d, "bss", "bss")
    if not isinstance(raw_bss, list):
        fail("expected a list", "bss")
    bss = []
    for i, rb in enumerate(raw_bss):
        p = f"bss[{i}]"
        load = get(rb, "traffic_load", p + ".traffic_load", default="saturated")
        if load == "saturated":
            load = SATURATED
        elif isinstance(load, bool) or not isinstance(load, (int, float)):
            fail(f"expected a number or \"saturated\", got {load!r}", p + ".traffic_load")
        stations = get(rb, "stations", p + ".stations")
        if not isinstance(stations, list):
            fail("expected a list", p + ".stations")
        bss.append(Bss(str(get(rb, "id", p + ".id")), str(get(rb, "ap", p + ".ap")),
                       tuple(str(s) for s in stations), float(load),
                       get(rb, "tx_power", p + ".tx_power", float, default=default_power)))

    walls = get(d, "walls", "walls", default=[])
    try:
        walls = tuple((str(a), str(b), int(n)) for a, b, n in walls)
    except (TypeError, ValueError):
        fail("expected a list of [node, node, count]", "walls")

    try:
        return Scenario(nodes=tuple(nodes), bss=tuple(bss), channel=channel, mcs=mcs,
                        power_levels=tuple(levels), default_power=default_power, mac=mac, walls=walls)
    except ScenarioError as exc:
        if exc.key and exc.line is None and text:
            raise ScenarioError(str(exc).split(" [field")[0], exc.key, _line_of(text, exc.key)) from None
        raise


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON: {exc.msg}", "<document>", exc.lineno) from None
    return scenario_from_dict(data, text)


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
