"""Simplified downlink DCF over a single shared channel.

Per AP: uniform backoff in ``[0, CW)`` slots, binary exponential backoff on
failure, countdown frozen while the summed received power of the other active
transmitters reaches CCA.  Inter-frame spaces after a transmission are folded
into the per-frame overhead, so every AP that hears the medium go idle resumes
counting at the same instant and equal counters collide; ``DIFS`` only delays
a countdown that starts on an already idle medium.  The MCS of each frame is picked from the
noise-only SINR; the frame is delivered iff its receiver's SINR against the
worst interference seen while it was on air still clears that MCS threshold.

Two engines implement the same state machine:

* ``"events"`` drives the model from :class:`~wlansandbox.sim.Simulator`
  and can write an event trace;
* ``"fast"`` is a numba-compiled loop over the same rules.

Both consume identical pre-drawn random streams and give bit-identical
results; tests hold them to that.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
import numba

from ..sim import EngineFault, EventKind, RngStream, Simulator
from .channel import dbm_to_mw
from .scenario import Scenario

NEVER = np.iinfo(np.int64).max


@dataclass(frozen=True)
class BssResult:
    bss_id: str
    thr_mbps: float
    airtime: float
    collisions: int
    mean_sinr: float
    frames: int
    offered_mbps: float
    zero_rate: bool


@dataclass(frozen=True)
class ThroughputReport:
    bss: tuple[BssResult, ...]
    window: tuple[int, int]

    def __getitem__(self, bss_id: str) -> BssResult:
        for r in self.bss:
            if r.bss_id == bss_id:
                return r
        raise KeyError(bss_id)

    @property
    def throughputs(self) -> dict[str, float]:
        return {r.bss_id: r.thr_mbps for r in self.bss}

    @property
    def aggregate(self) -> float:
        return sum(r.thr_mbps for r in self.bss)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bss_id", "thr_mbps", "airtime", "collisions", "mean_sinr"])
        for r in self.bss:
            w.writerow([r.bss_id, f"{r.thr_mbps:.6f}", f"{r.airtime:.6f}", r.collisions,
                        "nan" if math.isnan(r.mean_sinr) else f"{r.mean_sinr:.4f}"])
        return buf.getvalue()


# -- precomputed link tables ----------------------------------------------------

@dataclass
class LinkTables:
    n_ap: int
    ap_rx: np.ndarray       # [j, i] mW at AP i from AP j
    n_dest: np.ndarray      # usable stations per AP
    dest_dur: np.ndarray    # [i, k] frame airtime us
    dest_sig: np.ndarray    # [i, k] mW at station
    dest_req: np.ndarray    # [i, k] linear SINR threshold of the chosen MCS
    dest_intf: np.ndarray   # [i, k, j] mW at station k of AP i from AP j
    saturated: np.ndarray
    load: np.ndarray        # bits per us (Mbps)
    noise_mw: float
    cca_mw: float
    min_dur: int


def build_tables(s: Scenario) -> LinkTables:
    n = len(s.bss)
    mac = s.mac
    noise_dbm = s.channel.noise_floor
    ap_ids = [b.ap for b in s.bss]
    ap_rx = np.zeros((n, n))
    for j, bj in enumerate(s.bss):
        for i in range(n):
            if i != j:
                ap_rx[j, i] = dbm_to_mw(s.rx_dbm(bj.ap, ap_ids[i], bj.tx_power))
    max_k = max(1, max(len(b.stations) for b in s.bss))
    n_dest = np.zeros(n, np.int64)
    dest_dur = np.zeros((n, max_k), np.int64)
    dest_sig = np.zeros((n, max_k))
    dest_req = np.zeros((n, max_k))
    dest_intf = np.zeros((n, max_k, n))
    for i, b in enumerate(s.bss):
        k = 0
        for sta in b.stations:
            sig_dbm = s.rx_dbm(b.ap, sta, b.tx_power)
            m = s.mcs.index_for(sig_dbm - noise_dbm)
            if m < 0:
                continue
            min_sinr, rate = s.mcs.entries[m]
            dest_dur[i, k] = mac.overhead_us + math.ceil(mac.payload_bits / rate)
            dest_sig[i, k] = dbm_to_mw(sig_dbm)
            dest_req[i, k] = 10.0 ** (min_sinr / 10.0)
            for j, bj in enumerate(s.bss):
                if j != i:
                    dest_intf[i, k, j] = dbm_to_mw(s.rx_dbm(bj.ap, sta, bj.tx_power))
            k += 1
        n_dest[i] = k
    loads = np.array([b.traffic_load for b in s.bss], dtype=float)
    used = dest_dur[dest_dur > 0]
    return LinkTables(
        n_ap=n, ap_rx=ap_rx, n_dest=n_dest, dest_dur=dest_dur, dest_sig=dest_sig,
        dest_req=dest_req, dest_intf=dest_intf, saturated=np.isinf(loads),
        load=np.where(np.isinf(loads), 0.0, loads), noise_mw=dbm_to_mw(noise_dbm),
        cca_mw=dbm_to_mw(s.channel.cca_threshold),
        min_dur=int(used.min()) if used.size else mac.overhead_us + 1,
    )


def draw_buffers(s: Scenario, seed: int, t_end: int, min_dur: int) -> np.ndarray:
    """Backoff uniforms per AP; one draw per attempted frame plus one spare
    bounds the need, since every draw is followed by a transmission."""
    n = t_end // min_dur + 2
    return np.stack([RngStream(seed, f"mac.{b.id}").draws(n) for b in s.bss])


def _arrival_time(k: int, bits: int, load: float) -> int:
    # k-th frame (1-based) of a constant-bit-rate source
    return int(math.ceil(k * bits / load))


# -- reference engine on the event core ----------------------------------------

class _DcfModel:
    """State machine shared by both engines; ``resolve(t)`` applies every
    transition due at ``t`` in a fixed order: frame ends, arrivals, then
    simultaneous backoff expiries."""

    def __init__(self, tab: LinkTables, s: Scenario, uniforms: np.ndarray, t_end: int):
        n = tab.n_ap
        self.tab, self.mac, self.u, self.t_end = tab, s.mac, uniforms, t_end
        self.ui = [0] * n
        self.tx_end = [NEVER] * n
        self.tx_dest = [0] * n
        self.tx_start = [0] * n
        self.imax = [0.0] * n
        self.bo = [-1] * n
        self.cw = [s.mac.cw_min] * n
        self.resume = [NEVER] * n
        self.queue = [0] * n
        self.arr_k = [1] * n
        self.next_arr = [NEVER] * n
        self.rr = [0] * n
        self.delivered = [0] * n
        self.failed = [0] * n
        self.airtime = [0] * n
        self.sinr_sum = [0.0] * n
        self.frames = [0] * n
        self.last = -1
        for i in range(n):
            if tab.n_dest[i] == 0:
                continue
            if tab.saturated[i]:
                self.bo[i] = self._draw(i)
                self.resume[i] = s.mac.difs_us
            elif tab.load[i] > 0:
                self.next_arr[i] = _arrival_time(1, s.mac.payload_bits, tab.load[i])

    def _draw(self, i: int) -> int:
        if self.ui[i] >= self.u.shape[1]:
            raise EngineFault("random buffer exhausted")
        v = int(self.u[i, self.ui[i]] * self.cw[i])
        self.ui[i] += 1
        return v

    def backlogged(self, i: int) -> bool:
        return self.tab.n_dest[i] > 0 and (self.tab.saturated[i] or self.queue[i] > 0)

    def sensed(self, i: int) -> float:
        total = 0.0
        for j in range(self.tab.n_ap):
            if j != i and self.tx_end[j] != NEVER:
                total += self.tab.ap_rx[j, i]
        return total

    def expiry(self, i: int) -> int:
        if self.tx_end[i] != NEVER or self.resume[i] == NEVER or self.bo[i] < 0:
            return NEVER
        return self.resume[i] + self.bo[i] * self.mac.slot_us

    def next_time(self) -> int:
        t = NEVER
        for i in range(self.tab.n_ap):
            t = min(t, self.tx_end[i], self.expiry(i), self.next_arr[i])
        return t

    def resolve(self, t: int) -> list[str]:
        tab, mac, n = self.tab, self.mac, self.tab.n_ap
        notes = []
        ended = False
        for i in range(n):
            if self.tx_end[i] == t:
                k = self.tx_dest[i]
                self.airtime[i] += t - self.tx_start[i]
                sig = tab.dest_sig[i, k]
                denom = self.imax[i] + tab.noise_mw
                self.sinr_sum[i] += 10.0 * math.log10(sig / denom)
                self.frames[i] += 1
                if sig >= tab.dest_req[i, k] * denom:
                    self.delivered[i] += 1
                    self.cw[i] = mac.cw_min
                    if not tab.saturated[i]:
                        self.queue[i] -= 1
                    notes.append(f"end:{i}:ok")
                else:
                    self.failed[i] += 1
                    self.cw[i] = min(2 * self.cw[i] + 1, mac.cw_max)
                    notes.append(f"end:{i}:fail")
                self.tx_end[i] = NEVER
                self.bo[i] = -1
                ended = True
        for i in range(n):
            while self.next_arr[i] == t:
                self.queue[i] += 1
                self.arr_k[i] += 1
                self.next_arr[i] = _arrival_time(self.arr_k[i], mac.payload_bits, tab.load[i])
        for i in range(n):
            if self.tx_end[i] != NEVER or not self.backlogged(i):
                continue
            idle = self.sensed(i) < tab.cca_mw
            if self.bo[i] < 0:
                self.bo[i] = self._draw(i)
                self.resume[i] = (t if ended else t + mac.difs_us) if idle else NEVER
            elif idle and self.resume[i] == NEVER:
                self.resume[i] = t if ended else t + mac.difs_us
        starters = [i for i in range(n) if self.expiry(i) == t]
        for i in starters:
            k = self.rr[i] % tab.n_dest[i]
            self.rr[i] += 1
            self.tx_dest[i] = k
            self.tx_start[i] = t
            self.tx_end[i] = t + tab.dest_dur[i, k]
            self.imax[i] = 0.0
            self.resume[i] = NEVER
            notes.append(f"start:{i}")
        if starters:
            for i in range(n):
                if self.tx_end[i] != NEVER:
                    k = self.tx_dest[i]
                    interf = 0.0
                    for j in range(n):
                        if j != i and self.tx_end[j] != NEVER:
                            interf += tab.dest_intf[i, k, j]
                    if interf > self.imax[i]:
                        self.imax[i] = interf
                elif self.resume[i] != NEVER and self.sensed(i) >= tab.cca_mw:
                    if t > self.resume[i]:
                        self.bo[i] -= (t - self.resume[i]) // mac.slot_us
                    self.resume[i] = NEVER
                    notes.append(f"freeze:{i}")
        self.last = t
        return notes

    def finish(self) -> None:
        for i in range(self.tab.n_ap):
            if self.tx_end[i] != NEVER:
                self.airtime[i] += self.t_end - self.tx_start[i]


def _run_events(tab: LinkTables, s: Scenario, uniforms: np.ndarray, t_end: int,
                trace: TextIO | None) -> _DcfModel:
    model = _DcfModel(tab, s, uniforms, t_end)
    pending: set[tuple[int, EventKind, int]] = set()

    def wake(sim: Simulator) -> None:
        for i in range(tab.n_ap):
            for t, kind in ((model.tx_end[i], EventKind.TX_END),
                            (model.expiry(i), EventKind.BACKOFF_EXPIRY),
                            (model.next_arr[i], EventKind.ARRIVAL)):
                if t != NEVER and t <= t_end and (t, kind, i) not in pending:
                    pending.add((t, kind, i))
                    sim.schedule(t, kind, i)

    def handle(sim: Simulator, ev) -> str:
        pending.discard((ev.time, ev.kind, ev.detail))
        if ev.time == model.last:
            return f"ap={ev.detail};noop"
        notes = model.resolve(ev.time)
        wake(sim)
        return f"ap={ev.detail};" + ("|".join(notes) if notes else "noop")

    sim = Simulator({k: handle for k in (EventKind.TX_END, EventKind.BACKOFF_EXPIRY,
                                          EventKind.ARRIVAL)}, trace=trace)
    wake(sim)
    sim.run_until(t_end)
    model.finish()
    return model


# -- compiled engine ------------------------------------------------------------

@numba.njit(cache=True)
def _dcf_kernel(ap_rx, n_dest, dest_dur, dest_sig, dest_req, dest_intf, saturated, load,
                noise_mw, cca_mw, slot, difs, cw_min, cw_max, bits, uniforms, t_end):
    n = ap_rx.shape[0]
    never = np.iinfo(np.int64).max
    n_u = uniforms.shape[1]
    ui = np.zeros(n, np.int64)
    tx_end = np.full(n, never, np.int64)
    tx_dest = np.zeros(n, np.int64)
    tx_start = np.zeros(n, np.int64)
    imax = np.zeros(n)
    bo = np.full(n, -1, np.int64)
    cw = np.full(n, cw_min, np.int64)
    resume = np.full(n, never, np.int64)
    queue = np.zeros(n, np.int64)
    arr_k = np.ones(n, np.int64)
    next_arr = np.full(n, never, np.int64)
    rr = np.zeros(n, np.int64)
    delivered = np.zeros(n, np.int64)
    failed = np.zeros(n, np.int64)
    airtime = np.zeros(n, np.int64)
    sinr_sum = np.zeros(n)
    frames = np.zeros(n, np.int64)
    starter = np.zeros(n, np.bool_)

    for i in range(n):
        if n_dest[i] == 0:
            continue
        if saturated[i]:
            if ui[i] >= n_u:
                return -1, delivered, failed, airtime, sinr_sum, frames
            bo[i] = np.int64(uniforms[i, ui[i]] * cw[i])
            ui[i] += 1
            resume[i] = difs
        elif load[i] > 0:
            next_arr[i] = np.int64(math.ceil(1 * bits / load[i]))

    while True:
        t = never
        for i in range(n):
            if tx_end[i] < t:
                t = tx_end[i]
            if tx_end[i] == never and resume[i] != never and bo[i] >= 0:
                e = resume[i] + bo[i] * slot
                if e < t:
                    t = e
            if next_arr[i] < t:
                t = next_arr[i]
        if t > t_end:
            break

        ended = False
        for i in range(n):
            if tx_end[i] == t:
                k = tx_dest[i]
                airtime[i] += t - tx_start[i]
                sig = dest_sig[i, k]
                denom = imax[i] + noise_mw
                sinr_sum[i] += 10.0 * math.log10(sig / denom)
                frames[i] += 1
                if sig >= dest_req[i, k] * denom:
                    delivered[i] += 1
                    cw[i] = cw_min
                    if not saturated[i]:
                        queue[i] -= 1
                else:
                    failed[i] += 1
                    cw[i] = min(2 * cw[i] + 1, cw_max)
                tx_end[i] = never
                bo[i] = -1
                ended = True
        for i in range(n):
            while next_arr[i] == t:
                queue[i] += 1
                arr_k[i] += 1
                next_arr[i] = np.int64(math.ceil(arr_k[i] * bits / load[i]))
        for i in range(n):
            if tx_end[i] != never:
                continue
            if not (n_dest[i] > 0 and (saturated[i] or queue[i] > 0)):
                continue
            sensed = 0.0
            for j in range(n):
                if j != i and tx_end[j] != never:
                    sensed += ap_rx[j, i]
            idle = sensed < cca_mw
            if bo[i] < 0:
                if ui[i] >= n_u:
                    return -1, delivered, failed, airtime, sinr_sum, frames
                bo[i] = np.int64(uniforms[i, ui[i]] * cw[i])
                ui[i] += 1
                if idle:
                    resume[i] = t if ended else t + difs
                else:
                    resume[i] = never
            elif idle and resume[i] == never:
                resume[i] = t if ended else t + difs
        any_start = False
        for i in range(n):
            starter[i] = (tx_end[i] == never and resume[i] != never and bo[i] >= 0
                          and resume[i] + bo[i] * slot == t)
        for i in range(n):
            if starter[i]:
                any_start = True
                k = rr[i] % n_dest[i]
                rr[i] += 1
                tx_dest[i] = k
                tx_start[i] = t
                tx_end[i] = t + dest_dur[i, k]
                imax[i] = 0.0
                resume[i] = never
        if any_start:
            for i in range(n):
                if tx_end[i] != never:
                    k = tx_dest[i]
                    interf = 0.0
                    for j in range(n):
                        if j != i and tx_end[j] != never:
                            interf += dest_intf[i, k, j]
                    if interf > imax[i]:
                        imax[i] = interf
                elif resume[i] != never:
                    sensed = 0.0
                    for j in range(n):
                        if j != i and tx_end[j] != never:
                            sensed += ap_rx[j, i]
                    if sensed >= cca_mw:
                        if t > resume[i]:
                            bo[i] -= (t - resume[i]) // slot
                        resume[i] = never

    for i in range(n):
        if tx_end[i] != never:
            airtime[i] += t_end - tx_start[i]
    return 0, delivered, failed, airtime, sinr_sum, frames


# -- public entry point ---------------------------------------------------------

ENGINES = ("fast", "events")


def simulate_scenario(s: Scenario, duration: int, seed: int, *, engine: str = "fast",
                      trace: TextIO | None = None) -> ThroughputReport:
    """Run the DCF model for ``duration`` microseconds.

    ``trace`` (events engine only) receives one ``time_us,seq,kind,detail``
    line per processed event.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if trace is not None:
        engine = "events"
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    tab = build_tables(s)
    uniforms = draw_buffers(s, seed, duration, tab.min_dur)
    mac = s.mac
    if engine == "fast":
        status, delivered, failed, airtime, sinr_sum, frames = _dcf_kernel(
            tab.ap_rx, tab.n_dest, tab.dest_dur, tab.dest_sig, tab.dest_req, tab.dest_intf,
            tab.saturated, tab.load, tab.noise_mw, tab.cca_mw, mac.slot_us, mac.difs_us,
            mac.cw_min, mac.cw_max, mac.payload_bits, uniforms, duration)
        if status != 0:
            raise EngineFault("random buffer exhausted")
    else:
        m = _run_events(tab, s, uniforms, duration, trace)
        delivered, failed, airtime, sinr_sum, frames = (m.delivered, m.failed, m.airtime,
                                                        m.sinr_sum, m.frames)
    results = []
    for i, b in enumerate(s.bss):
        nf = int(frames[i])
        results.append(BssResult(
            bss_id=b.id,
            thr_mbps=int(delivered[i]) * mac.payload_bits / duration,
            airtime=int(airtime[i]) / duration,
            collisions=int(failed[i]),
            mean_sinr=float(sinr_sum[i]) / nf if nf else math.nan,
            frames=nf,
            offered_mbps=b.traffic_load,
            zero_rate=bool(tab.n_dest[i] == 0 and len(b.stations) > 0),
        ))
    return ThroughputReport(tuple(results), (0, duration))


def isolated_airtime_bound(s: Scenario, bss_id: str) -> float:
    """Closed-form saturated throughput (Mbps) of one BSS with nobody else on air:
    payload / (E[backoff] * slot + overhead + payload / rate)."""
    b = s.bss_by_id(bss_id)
    mac = s.mac
    sta = b.stations[0]
    snr = s.rx_dbm(b.ap, sta, b.tx_power) - s.channel.noise_floor
    rate = s.mcs.entries[s.mcs.index_for(snr)][1]
    mean_backoff = (mac.cw_min - 1) / 2
    return mac.payload_bits / (mean_backoff * mac.slot_us + mac.overhead_us + mac.payload_bits / rate)


def mean_report(reports: Sequence[ThroughputReport]) -> dict[str, float]:
    ids = [r.bss_id for r in reports[0].bss]
    return {i: float(np.mean([rep[i].thr_mbps for rep in reports])) for i in ids}
