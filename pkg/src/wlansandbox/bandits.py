"""Per-BSS multi-armed bandits choosing a transmit power each iteration."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

from .sim import RngStream, derive_seed, seconds
from .wlan.dcf import ThroughputReport, simulate_scenario
from .wlan.scenario import Scenario


@dataclass(frozen=True)
class EpsilonGreedy:
    eps0: float = 1.0
    decay: float = 0.995

    def __post_init__(self):
        if not 0 <= self.eps0 <= 1:
            raise ValueError("eps0 must lie in [0, 1]")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")


@dataclass(frozen=True)
class UCB1:
    c: float = math.sqrt(2)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")


@dataclass(frozen=True)
class Thompson:
    alpha0: float = 1.0
    beta0: float = 1.0

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError("Beta prior parameters must be positive")


Policy = Union[EpsilonGreedy, UCB1, Thompson]

POLICY_NAMES = {"eps-greedy": EpsilonGreedy, "ucb1": UCB1, "thompson": Thompson}


def policy_from_spec(kind: str, params: Mapping[str, float] | None = None) -> Policy:
    try:
        cls = POLICY_NAMES[kind]
    except KeyError:
        raise ValueError(f"unknown policy {kind!r}; expected one of {sorted(POLICY_NAMES)}") from None
    return cls(**dict(params or {}))


def policy_name(policy: Policy) -> str:
    return {EpsilonGreedy: "eps-greedy", UCB1: "ucb1", Thompson: "thompson"}[type(policy)]


@dataclass(frozen=True)
class Arm:
    index: int
    power: float


@dataclass
class ArmStats:
    pulls: int = 0
    mean_reward: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0


def fresh_stats(policy: Policy, n_arms: int) -> list[ArmStats]:
    if isinstance(policy, Thompson):
        return [ArmStats(alpha=policy.alpha0, beta=policy.beta0) for _ in range(n_arms)]
    return [ArmStats() for _ in range(n_arms)]


def normalize_reward(throughput: float, bound: float) -> float:
    if not bound > 0:
        raise ValueError(f"reward bound must be positive, got {bound}")
    return min(max(throughput, 0.0) / bound, 1.0)


def _argmax(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def select_arm(policy: Policy, stats: Sequence[ArmStats], t: int, rng: RngStream,
               beta_sampler=None) -> int:
    """Index of the arm to play at iteration ``t`` (0-based); ties go to the
    lowest index."""
    if not stats:
        raise ValueError("no arms")
    n = len(stats)
    if isinstance(policy, EpsilonGreedy):
        if rng.draw() < policy.eps0 * policy.decay ** t:
            return rng.randrange(n)
        return _argmax([a.mean_reward for a in stats])
    if isinstance(policy, UCB1):
        for i, a in enumerate(stats):
            if a.pulls == 0:
                return i
        log_t = math.log(max(t, 1))
        return _argmax([a.mean_reward + policy.c * math.sqrt(log_t / a.pulls) for a in stats])
    if isinstance(policy, Thompson):
        gen = beta_sampler if beta_sampler is not None else rng.numpy_generator()
        return _argmax([float(gen.beta(a.alpha, a.beta)) for a in stats])
    raise TypeError(f"unsupported policy {policy!r}")


def update(stats: list[ArmStats], arm: int, reward: float) -> list[ArmStats]:
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward {reward} outside [0, 1]")
    a = stats[arm]
    a.pulls += 1
    a.mean_reward += (reward - a.mean_reward) / a.pulls
    a.alpha += reward
    a.beta += 1.0 - reward
    return stats


class Agent:
    """One bandit learner; owns its statistics and random stream."""

    def __init__(self, policy: Policy, arms: Sequence[float], rng: RngStream):
        self.policy = policy
        self.arms = [Arm(i, float(p)) for i, p in enumerate(arms)]
        self.stats = fresh_stats(policy, len(self.arms))
        self.rng = rng
        self._beta = rng.numpy_generator() if isinstance(policy, Thompson) else None

    def select(self, t: int) -> Arm:
        return self.arms[select_arm(self.policy, self.stats, t, self.rng, self._beta)]

    def update(self, arm: Arm, reward: float) -> None:
        update(self.stats, arm.index, reward)


# -- learning episodes -------------------------------------------------------------

@dataclass(frozen=True)
class TraceRow:
    iteration: int
    bss_id: str
    power_dbm: float
    thr_mbps: float
    reward: float


@dataclass
class LearningTrace:
    bss_ids: tuple[str, ...]
    iterations: int
    rows: list[TraceRow] = field(default_factory=list)
    reward_mode: str = "network"

    def __len__(self) -> int:
        return self.iterations

    def powers(self, bss_id: str) -> list[float]:
        return [r.power_dbm for r in self.rows if r.bss_id == bss_id]

    def throughputs(self, bss_id: str) -> list[float]:
        return [r.thr_mbps for r in self.rows if r.bss_id == bss_id]

    def aggregate(self) -> list[float]:
        out = [0.0] * self.iterations
        for r in self.rows:
            out[r.iteration] += r.thr_mbps
        return out

    def modal_config(self, tail: float = 0.25) -> tuple[dict[str, float], dict[str, float]]:
        """Per-BSS most frequent power over the final ``tail`` of iterations and
        its share; ties go to the lower power."""
        start = self.iterations - max(1, math.ceil(tail * self.iterations))
        config, share = {}, {}
        for b in self.bss_ids:
            window = [r.power_dbm for r in self.rows if r.bss_id == b and r.iteration >= start]
            counts = Counter(window)
            best = min(counts, key=lambda p: (-counts[p], p))
            config[b] = best
            share[b] = counts[best] / len(window)
        return config, share

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "bss_id", "power_dbm", "thr_mbps", "reward"])
        for r in self.rows:
            w.writerow([r.iteration, r.bss_id, f"{r.power_dbm:g}", f"{r.thr_mbps:.6f}",
                        f"{r.reward:.6f}"])
        return buf.getvalue()


Simulate = Callable[[Scenario, int, int], ThroughputReport]


def iteration_rewards(s: Scenario, report: ThroughputReport, mode: str) -> dict[str, float]:
    """``network``: every agent gets the normalized aggregate throughput;
    ``own``: each agent gets its BSS's normalized throughput."""
    if mode == "own":
        return {b: normalize_reward(report[b].thr_mbps, s.reward_bound(b)) for b in s.bss_ids}
    if mode == "network":
        r = normalize_reward(report.aggregate, sum(s.reward_bound(b) for b in s.bss_ids))
        return {b: r for b in s.bss_ids}
    raise ValueError(f"unknown reward mode {mode!r}")


def run_learning_episode(s: Scenario, policy: Policy | Mapping[str, Policy], iterations: int,
                         iter_duration: int = seconds(5), seed: int = 0, *,
                         arms: Sequence[float] | None = None, reward: str = "network",
                         simulate: Simulate | None = None) -> LearningTrace:
    """Decentralized learning: one agent per BSS, all choosing concurrently.

    Each iteration every agent picks a power, the scenario is simulated for
    ``iter_duration`` with its own derived seed, and agents are updated from
    the resulting throughput.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    simulate = simulate or (lambda sc, dur, sd: simulate_scenario(sc, dur, sd))
    arms = tuple(arms) if arms is not None else s.power_levels
    bad = [p for p in arms if p not in s.power_levels]
    if bad or not arms:
        raise ValueError(f"arms must be a non-empty subset of power_levels, got {list(arms)}")
    policies = policy if isinstance(policy, Mapping) else {b: policy for b in s.bss_ids}
    missing = set(s.bss_ids) - set(policies)
    if missing:
        raise ValueError(f"no agent for BSS {sorted(missing)}")
    agents = {b: Agent(policies[b], arms, RngStream(seed, f"agent.{b}")) for b in s.bss_ids}
    trace = LearningTrace(s.bss_ids, iterations, reward_mode=reward)
    for t in range(iterations):
        chosen = {b: agents[b].select(t) for b in s.bss_ids}
        sc = s.with_powers({b: a.power for b, a in chosen.items()})
        report = simulate(sc, iter_duration, derive_seed(seed, f"iter.{t}"))
        rewards = iteration_rewards(s, report, reward)
        for b in s.bss_ids:
            agents[b].update(chosen[b], rewards[b])
            trace.rows.append(TraceRow(t, b, chosen[b].power, report[b].thr_mbps, rewards[b]))
    return trace


# -- synthetic check --------------------------------------------------------------

@dataclass(frozen=True)
class BanditCheck:
    rate: float
    choices: tuple[int, ...]


def synthetic_bandit_check(policy: Policy, arm_means: Sequence[float], steps: int,
                           seed: int = 0) -> BanditCheck:
    """Play ``policy`` against independent Bernoulli arms; report the share of
    best-arm pulls over the final 10% of steps."""
    if not all(0 <= m <= 1 for m in arm_means):
        raise ValueError("arm means must lie in [0, 1]")
    env = RngStream(seed, "env")
    agent = Agent(policy, range(len(arm_means)), RngStream(seed, "agent"))
    best = _argmax(list(arm_means))
    choices = []
    for t in range(steps):
        arm = agent.select(t)
        reward = 1.0 if env.draw() < arm_means[arm.index] else 0.0
        agent.update(arm, reward)
        choices.append(arm.index)
    tail = choices[steps - max(1, math.ceil(steps / 10)):] if steps else []
    rate = sum(c == best for c in tail) / len(tail) if tail else 1.0
    return BanditCheck(rate, tuple(choices))
