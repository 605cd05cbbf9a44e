"""Seeded population-based search (a simplified PB2 without the GP bandit).

Every generation the whole population is evaluated. The bottom quartile then
copies genomes from the top quartile (only from strictly better members) and
perturbs each copied gene: with probability 0.25 it is resampled within its
bounds, otherwise multiplied by 0.8 or 1.2 and clamped.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ._parallel import parallel_map

RESAMPLE_PROB = 0.25
FACTORS = (0.8, 1.2)


@dataclass(frozen=True)
class Dim:
    name: str
    low: float
    high: float
    scale: str = "linear"  # "linear", "log" or "int"

    def __post_init__(self):
        if self.scale not in ("linear", "log", "int"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.high < self.low or (self.scale == "log" and self.low <= 0):
            raise ValueError(f"bad bounds for {self.name}: [{self.low}, {self.high}]")

    def sample(self, rng: np.random.Generator) -> float:
        if self.scale == "log":
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        if self.scale == "int":
            return float(rng.integers(int(self.low), int(self.high) + 1))
        return float(rng.uniform(self.low, self.high))

    def clamp(self, x: float) -> float:
        x = min(max(x, self.low), self.high)
        return float(round(x)) if self.scale == "int" else float(x)


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dim, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([d.sample(rng) for d in self.dims])

    def contains(self, x: Sequence[float]) -> bool:
        return len(x) == len(self.dims) and all(d.low <= v <= d.high for d, v in zip(self.dims, x))

    def explore(self, x: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, str]:
        out = np.empty_like(x)
        ops = []
        for i, d in enumerate(self.dims):
            if rng.random() < RESAMPLE_PROB:
                out[i] = d.sample(rng)
                ops.append("r")
            else:
                f = FACTORS[int(rng.integers(len(FACTORS)))]
                out[i] = d.clamp(x[i] * f)
                ops.append(f"x{f}")
            if not d.low <= out[i] <= d.high:
                raise AssertionError(f"gene {d.name} left its bounds: {out[i]}")
        return out, " ".join(ops)


@dataclass
class SearchTrial:
    index: int
    generation: int
    member: int
    params: np.ndarray
    value: float
    info: Any = None
    parent: int | None = None
    perturbation: str = "init"


Objective = Callable[[np.ndarray], "tuple[float, Any]"]


@dataclass
class _Member:
    params: np.ndarray
    parent: int | None = None
    perturbation: str = "init"
    cache_key: bytes = field(init=False)

    def __post_init__(self):
        self.cache_key = self.params.tobytes()


def population_search(
    objective: Objective,
    space: SearchSpace,
    budget: int,
    population_size: int = 20,
    seed: int = 0,
    jobs: int = 1,
) -> list[SearchTrial]:
    """Run ``budget`` objective evaluations and return every trial in evaluation order.

    ``objective(params) -> (value, info)`` is maximised and must be
    deterministic: genomes that survive a generation unchanged are looked up
    in a cache instead of being re-evaluated, but still logged as trials.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if population_size < 1:
        raise ValueError("population_size must be at least 1")
    rng = np.random.default_rng(seed)
    size = min(population_size, budget)
    population = [_Member(space.sample(rng)) for _ in range(size)]
    cache: dict[bytes, tuple[float, Any]] = {}
    trials: list[SearchTrial] = []
    generation = 0
    while True:
        members = population[: budget - len(trials)]
        fresh = list({m.cache_key: m.params for m in members if m.cache_key not in cache}.items())
        for (key, _), result in zip(fresh, parallel_map(objective, [p for _, p in fresh], jobs)):
            cache[key] = result
        slot_trial = []
        for slot, m in enumerate(members):
            value, info = cache[m.cache_key]
            trial = SearchTrial(len(trials), generation, slot, m.params.copy(), float(value), info, m.parent, m.perturbation)
            trials.append(trial)
            slot_trial.append(trial)
        if len(trials) >= budget:
            return trials

        quart = max(1, size // 4)
        order = sorted(range(size), key=lambda i: (-slot_trial[i].value, i))
        top, bottom = order[:quart], order[-quart:]
        survivors = [_Member(m.params, slot_trial[i].index, "kept") for i, m in enumerate(population)]
        for recipient in bottom:
            donor = top[int(rng.integers(quart))]
            if slot_trial[donor].value > slot_trial[recipient].value:
                params, ops = space.explore(population[donor].params, rng)
                survivors[recipient] = _Member(params, slot_trial[donor].index, ops)
        population = survivors
        generation += 1


def ranked(trials: Sequence[SearchTrial]) -> list[SearchTrial]:
    """Trials by decreasing value, earlier trials first on ties."""
    return sorted(trials, key=lambda t: (-t.value, t.index))
