"""Propagation, carrier sensing, SINR and MCS lookup."""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class ChannelParams:
    pl0: float = 40.0            # dB at 1 m
    exponent: float = 3.5
    wall_loss: float = 5.0       # dB per wall
    noise_floor: float = -95.0   # dBm
    cca_threshold: float = -82.0  # dBm

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError(f"path-loss exponent must be > 0, got {self.exponent}")
        if not self.cca_threshold > self.noise_floor:
            raise ValueError("cca_threshold must be above noise_floor")


# 802.11ax, 20 MHz, one spatial stream, 0.8 us GI: MCS0..MCS10.
DEFAULT_MCS = (
    (2.0, 8.6), (5.0, 17.2), (9.0, 25.8), (11.0, 34.4), (15.0, 51.6),
    (18.0, 68.8), (20.0, 77.4), (25.0, 86.0), (29.0, 103.2), (31.0, 114.7),
    (34.0, 129.0),
)


@dataclass(frozen=True)
class McsTable:
    entries: tuple[tuple[float, float], ...] = DEFAULT_MCS

    def __post_init__(self):
        entries = tuple((float(s), float(r)) for s, r in self.entries)
        if not entries:
            raise ValueError("MCS table is empty")
        for (s0, r0), (s1, r1) in zip(entries, entries[1:]):
            if not (s1 > s0 and r1 > r0):
                raise ValueError("MCS table must be strictly increasing in SINR and rate")
        if entries[0][1] <= 0:
            raise ValueError("MCS rates must be positive")
        object.__setattr__(self, "entries", entries)

    @property
    def max_rate(self) -> float:
        return self.entries[-1][1]

    def index_for(self, sinr_db: float) -> int:
        """Index of the highest entry with ``min_sinr <= sinr_db``, or -1."""
        return bisect_right([s for s, _ in self.entries], sinr_db) - 1


def path_loss(d: float, walls: int, ch: ChannelParams) -> float:
    if d < 0:
        raise ValueError("distance must be non-negative")
    return ch.pl0 + 10.0 * ch.exponent * math.log10(max(d, 1.0)) + walls * ch.wall_loss


def rx_power(tx_dbm: float, pl_db: float) -> float:
    return tx_dbm - pl_db


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw) if mw > 0 else -math.inf


def total_power_dbm(levels_dbm: Iterable[float]) -> float:
    return mw_to_dbm(sum(dbm_to_mw(p) for p in levels_dbm))


def cca_busy(rx_levels_dbm: Iterable[float], ch: ChannelParams) -> bool:
    """True when the summed power of all active transmitters, as received at
    the listener, reaches the CCA threshold."""
    return total_power_dbm(rx_levels_dbm) >= ch.cca_threshold


def sinr(signal_dbm: float, interferers_dbm: Sequence[float], noise_dbm: float) -> float:
    denom = sum(dbm_to_mw(i) for i in interferers_dbm) + dbm_to_mw(noise_dbm)
    return signal_dbm - 10.0 * math.log10(denom)


def mcs_lookup(sinr_db: float, table: McsTable) -> float:
    i = table.index_for(sinr_db)
    return table.entries[i][1] if i >= 0 else 0.0
