"""Interoperability plugin: a small standardized command set for driving a
simulator backend (start / stop / configure / status / collect).

Only the in-process reference backend ships.  An external simulator would
implement the same ``dispatch``/``capabilities`` pair, translating commands
into its own CLI invocations and log parsing.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .wlan.dcf import ThroughputReport, simulate_scenario
from .wlan.scenario import Scenario, scenario_to_dict


class AdapterError(Exception):
    pass


class IllegalState(AdapterError):
    pass


class UnsupportedParameter(AdapterError):
    pass


class InvalidValue(AdapterError):
    pass


@dataclass(frozen=True)
class Start:
    scenario: Scenario
    duration: int | None = None   # us; falls back to the configured sim.duration
    seed: int = 0


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class Configure:
    params: Mapping[str, object]


@dataclass(frozen=True)
class Status:
    pass


@dataclass(frozen=True)
class Collect:
    pass


AdapterCommand = Union[Start, Stop, Configure, Status, Collect]


class State(enum.Enum):
    IDLE = "idle"
    RUNNING = "running"
    FINISHED = "finished"


@dataclass(frozen=True)
class Response:
    state: State
    report: ThroughputReport | None = None


@dataclass(frozen=True)
class BackendCapabilities:
    technologies: tuple[str, ...]
    monitoring_mode: str
    max_parallel_instances: int
    commands: tuple[str, ...]
    parameters: tuple[str, ...]    # glob-style: "tx_power.*"

    def allows(self, key: str) -> bool:
        return any(re.fullmatch(re.escape(p).replace(r"\*", r"[^.]+"), key) for p in self.parameters)


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    command: AdapterCommand
    result: str


REFERENCE_CAPABILITIES = BackendCapabilities(
    technologies=("ieee802.11-dcf", "downlink", "tpc"),
    monitoring_mode="batch",
    max_parallel_instances=0,     # 0: bounded only by host resources
    commands=("start", "stop", "configure", "status", "collect"),
    parameters=("tx_power.*", "traffic_load.*", "sim.duration"),
)


def command_name(cmd: AdapterCommand) -> str:
    return type(cmd).__name__.lower()


def command_args(cmd: AdapterCommand) -> str:
    if isinstance(cmd, Start):
        digest = hashlib.sha256(json.dumps(scenario_to_dict(cmd.scenario), sort_keys=True)
                                .encode()).hexdigest()[:12]
        return f"scenario={digest};duration={cmd.duration};seed={cmd.seed}"
    if isinstance(cmd, Configure):
        return ";".join(f"{k}={v}" for k, v in sorted(cmd.params.items(), key=lambda kv: str(kv[0])))
    return ""


class ReferenceBackend:
    """Batch-mode backend around :func:`simulate_scenario`.

    ``Start`` runs the whole simulation before returning, so ``RUNNING`` is
    only ever held while the engine is executing.  ``Stop`` aborts a run or,
    from ``FINISHED``, resets to ``IDLE``; it never fails.
    """

    def __init__(self, engine: str = "fast"):
        self.engine = engine
        self.state = State.IDLE
        self.overrides: dict[str, object] = {}
        self.report: ThroughputReport | None = None
        self.transcript: list[TranscriptEntry] = []

    def capabilities(self) -> BackendCapabilities:
        return REFERENCE_CAPABILITIES

    def dispatch(self, cmd: AdapterCommand) -> Response:
        try:
            resp = self._dispatch(cmd)
        except AdapterError as exc:
            self._log(cmd, type(exc).__name__)
            raise
        self._log(cmd, "ok")
        return resp

    def _log(self, cmd: AdapterCommand, result: str) -> None:
        self.transcript.append(TranscriptEntry(len(self.transcript), cmd, result))

    def _dispatch(self, cmd: AdapterCommand) -> Response:
        if isinstance(cmd, Status):
            return Response(self.state, self.report)
        if isinstance(cmd, Stop):
            if self.state is not State.IDLE:
                self.state = State.IDLE
                self.report = None
            return Response(self.state)
        if isinstance(cmd, Configure):
            if self.state is State.RUNNING:
                raise IllegalState("cannot configure while running")
            checked = {k: self._check_param(k, v) for k, v in dict(cmd.params).items()}
            self.overrides.update(checked)
            return Response(self.state)
        if isinstance(cmd, Collect):
            if self.state is not State.FINISHED or self.report is None:
                raise IllegalState("nothing to collect; no finished run")
            return Response(self.state, self.report)
        if isinstance(cmd, Start):
            if self.state is not State.IDLE:
                raise IllegalState(f"cannot start from {self.state.value}")
            scenario, duration = self._resolve(cmd)
            self.state = State.RUNNING
            try:
                self.report = simulate_scenario(scenario, duration, cmd.seed, engine=self.engine)
            finally:
                self.state = State.FINISHED if self.report is not None else State.IDLE
            return Response(self.state, self.report)
        raise AdapterError(f"unknown command {cmd!r}")

    def _check_param(self, key: object, value: object) -> object:
        if not isinstance(key, str) or not REFERENCE_CAPABILITIES.allows(key):
            raise UnsupportedParameter(f"parameter {key!r} is not in the whitelist")
        number = isinstance(value, (int, float)) and not isinstance(value, bool)
        if key.startswith("tx_power.") and not (number and math.isfinite(value)):
            raise InvalidValue(f"{key} expects a power in dBm, got {value!r}")
        if key.startswith("traffic_load."):
            if value == "saturated":
                return math.inf
            if not (number and value >= 0):
                raise InvalidValue(f"{key} expects Mbps >= 0 or 'saturated', got {value!r}")
        if key == "sim.duration" and not (isinstance(value, int) and not isinstance(value, bool)
                                           and value > 0):
            raise InvalidValue(f"sim.duration expects a positive integer (us), got {value!r}")
        return value

    def _resolve(self, cmd: Start) -> tuple[Scenario, int]:
        s = cmd.scenario
        powers, loads = {}, {}
        for key, value in self.overrides.items():
            kind, _, bss = key.partition(".")
            if kind in ("tx_power", "traffic_load") and bss not in s.bss_ids:
                raise InvalidValue(f"{key}: no BSS {bss!r} in this scenario")
            if kind == "tx_power":
                if value not in s.power_levels:
                    raise InvalidValue(f"{key}={value} is not one of the scenario's power levels")
                powers[bss] = float(value)
            elif kind == "traffic_load":
                loads[bss] = float(value)
        duration = cmd.duration if cmd.duration is not None else self.overrides.get("sim.duration")
        if not isinstance(duration, int) or isinstance(duration, bool) or duration <= 0:
            raise InvalidValue("no positive duration given by Start or sim.duration")
        return s.with_powers(powers).with_loads(loads), duration

    def transcript_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seq", "command", "args", "result"])
        for e in self.transcript:
            w.writerow([e.seq, command_name(e.command), command_args(e.command), e.result])
        return buf.getvalue()


def dispatch(backend: ReferenceBackend, cmd: AdapterCommand) -> Response:
    return backend.dispatch(cmd)


def capabilities(backend: ReferenceBackend) -> BackendCapabilities:
    return backend.capabilities()


def replay(transcript: Sequence[TranscriptEntry], engine: str = "fast") -> ReferenceBackend:
    """Re-dispatch a transcript on a fresh backend; errors recur as they did."""
    backend = ReferenceBackend(engine)
    for entry in transcript:
        try:
            backend.dispatch(entry.command)
        except AdapterError:
            pass
    return backend


@dataclass
class AdapterRunner:
    """Runs fixed-configuration simulations through a backend, refusing any
    parameter the backend does not advertise before anything is dispatched."""

    backend: ReferenceBackend = field(default_factory=ReferenceBackend)

    def configure(self, params: Mapping[str, object]) -> None:
        caps = self.backend.capabilities()
        for key in params:
            if not caps.allows(key):
                raise UnsupportedParameter(f"backend does not support {key!r}")
        self.backend.dispatch(Configure(dict(params)))

    def __call__(self, scenario: Scenario, duration: int, seed: int) -> ThroughputReport:
        self.backend.dispatch(Stop())
        self.configure({f"tx_power.{b}": p for b, p in scenario.powers.items()})
        self.backend.dispatch(Start(scenario, duration, seed))
        return self.backend.dispatch(Collect()).report
