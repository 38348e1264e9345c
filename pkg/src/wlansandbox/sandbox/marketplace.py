"""Directory-backed registry of candidate ML models and their track record."""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from ..bandits import Policy, policy_from_spec

MATURITY_ORDER = ("stable", "beta", "experimental")


class NoModel(LookupError):
    pass


@dataclass
class ModelDescriptor:
    id: str
    algorithm: str                       # eps-greedy | ucb1 | thompson
    hyperparameters: dict = field(default_factory=dict)
    use_cases: list[str] = field(default_factory=lambda: ["tpc-obss"])
    maturity: str = "beta"
    eval_count: int = 0
    history: list[float] = field(default_factory=list)   # observed improvement, percent

    def __post_init__(self):
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", self.id):
            raise ValueError(f"model id {self.id!r} must be a plain file-name token")
        if self.maturity not in MATURITY_ORDER:
            raise ValueError(f"maturity must be one of {MATURITY_ORDER}")
        self.policy()

    def policy(self) -> Policy:
        params = {k: v for k, v in self.hyperparameters.items() if k != "arms_dbm"}
        return policy_from_spec(self.algorithm, params)

    @property
    def arms(self) -> list[float] | None:
        arms = self.hyperparameters.get("arms_dbm")
        return None if arms is None else [float(a) for a in arms]

    @property
    def mean_improvement(self) -> float | None:
        return sum(self.history) / len(self.history) if self.history else None

    def record(self, improvement_pct: float) -> None:
        self.history.append(float(improvement_pct))
        self.eval_count += 1


class Marketplace:
    def __init__(self, models: Iterable[ModelDescriptor] = ()):
        self._models: dict[str, ModelDescriptor] = {}
        for m in models:
            self.add(m)

    def add(self, m: ModelDescriptor) -> None:
        if m.id in self._models:
            raise ValueError(f"duplicate model id {m.id!r}")
        self._models[m.id] = m

    def __len__(self) -> int:
        return len(self._models)

    def __iter__(self):
        return iter(sorted(self._models.values(), key=lambda m: m.id))

    def __eq__(self, other) -> bool:
        return isinstance(other, Marketplace) and list(self) == list(other)

    def get(self, model_id: str) -> ModelDescriptor:
        return self._models[model_id]

    @classmethod
    def load(cls, directory: str | Path) -> "Marketplace":
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"marketplace directory {directory} does not exist")
        models = []
        for p in sorted(directory.glob("*.json")):
            try:
                models.append(ModelDescriptor(**json.loads(p.read_text())))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{p}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
            except TypeError as exc:
                raise ValueError(f"{p}: bad model descriptor ({exc})") from None
            except ValueError as exc:
                raise ValueError(f"{p}: {exc}") from None
        return cls(models)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for m in self:
            save_model(m, directory)


def save_model(m: ModelDescriptor, directory: str | Path) -> None:
    path = Path(directory) / f"{m.id}.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(asdict(m), indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def default_marketplace() -> Marketplace:
    return Marketplace([
        ModelDescriptor("eps-greedy-tpc", "eps-greedy", {"eps0": 1.0, "decay": 0.995},
                        maturity="stable"),
        ModelDescriptor("ucb1-tpc", "ucb1", {"c": 2 ** 0.5}),
        ModelDescriptor("thompson-tpc", "thompson", {"alpha0": 1.0, "beta0": 1.0}),
    ])


def ranked_models(m: Marketplace, use_case: str | Iterable[str]) -> list[ModelDescriptor]:
    """Tag-matching models, best first: evaluated ones by mean observed
    improvement, then unevaluated ones by maturity; ids break ties."""
    tags = {use_case} if isinstance(use_case, str) else set(use_case)
    matching = [d for d in m if tags & set(d.use_cases)]
    evaluated = sorted((d for d in matching if d.history), key=lambda d: (-d.mean_improvement, d.id))
    fresh = sorted((d for d in matching if not d.history),
                   key=lambda d: (MATURITY_ORDER.index(d.maturity), d.id))
    return evaluated + fresh


def select_model(m: Marketplace, use_case: str | Iterable[str]) -> ModelDescriptor:
    ranked = ranked_models(m, use_case)
    if not ranked:
        raise NoModel(f"no model in the marketplace matches {use_case!r}")
    return ranked[0]
