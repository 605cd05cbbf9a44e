"""Markov behavioral policies over the reachable states of a compiled game."""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from .game import Game, action_label, parse_action

ATTACKER = "attacker"
DEFENDER = "defender"


class CoverageError(KeyError):
    """A policy has no entry for a state that the computation needs."""


@dataclass(frozen=True, eq=False)
class BehavioralPolicy:
    """Per-state action distributions for one role.

    ``probs[s]`` is aligned with ``game.actions(s, role)``.
    """

    game: Game
    role: str
    probs: Mapping[int, np.ndarray]

    def __post_init__(self):
        if self.role not in (ATTACKER, DEFENDER):
            raise ValueError(f"unknown role {self.role!r}")
        for s, p in self.probs.items():
            n = len(self.game.actions(s, self.role))
            if p.shape != (n,):
                raise ValueError(f"state {s}: expected {n} probabilities, got shape {p.shape}")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"state {s}: not a probability vector {p}")

    def __getitem__(self, s: int) -> np.ndarray:
        try:
            return self.probs[s]
        except KeyError:
            raise CoverageError(f"{self.role} policy has no entry for state {s}") from None

    def __contains__(self, s: int) -> bool:
        return s in self.probs

    def actions(self, s: int) -> tuple[int, ...]:
        return self.game.actions(s, self.role)

    def check_coverage(self) -> None:
        missing = [s for s in self.game.states() if s not in self.probs]
        if missing:
            raise CoverageError(f"{self.role} policy is missing reachable states {missing[:5]}")

    def prob(self, s: int, action: int) -> float:
        acts = self.actions(s)
        return float(self[s][acts.index(action)]) if action in acts else 0.0

    def to_dict(self) -> dict:
        table = {}
        for s in sorted(self.probs):
            labels = [action_label(a, self.role) for a in self.actions(s)]
            table[str(s)] = dict(zip(labels, (float(x) for x in self.probs[s])))
        return {"role": self.role, "game": self.game.spec.to_dict(), "states": table}

    @classmethod
    def from_dict(cls, game: Game, doc: dict) -> BehavioralPolicy:
        role = doc["role"]
        probs = {}
        for key, entry in doc["states"].items():
            s = int(key)
            acts = game.actions(s, role)
            vec = np.zeros(len(acts))
            for label, p in entry.items():
                vec[acts.index(parse_action(label))] = p
            probs[s] = vec
        return cls(game, role, probs)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def uniform_policy(game: Game, role: str) -> BehavioralPolicy:
    probs = {}
    for s in game.states():
        n = len(game.actions(s, role))
        probs[s] = np.full(n, 1.0 / n)
    return BehavioralPolicy(game, role, probs)


def deterministic_policy(
    game: Game, role: str, choose: Callable[[int, tuple[int, ...]], int]
) -> BehavioralPolicy:
    """Build a pure policy from ``choose(state_index, legal_actions) -> action``."""
    probs = {}
    for s in game.states():
        acts = game.actions(s, role)
        vec = np.zeros(len(acts))
        vec[acts.index(choose(s, acts))] = 1.0
        probs[s] = vec
    return BehavioralPolicy(game, role, probs)


def max_deviation(p: BehavioralPolicy, q: BehavioralPolicy) -> float:
    """Largest absolute probability difference over the states both policies share."""
    shared = set(p.probs) & set(q.probs)
    return max((float(np.max(np.abs(p[s] - q[s]))) for s in shared), default=0.0)
