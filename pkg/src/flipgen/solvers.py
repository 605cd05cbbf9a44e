"""Exact evaluation: expected utilities, best responses and the BR-utility metric.

All values are the attacker's; the game is zero-sum so the defender's utility
is the negation. Because both policies are Markov in the public state, a
player responding to a fixed opponent faces a finite-horizon MDP and is
solved exactly by backward induction.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np

from ._parallel import parallel_map
from .game import FlipItSpec, Game, compile_game
from .policy import ATTACKER, DEFENDER, BehavioralPolicy, uniform_policy

GAMMA_GRID = tuple(round(0.1 * i, 10) for i in range(11))
LAMBDA_GRID = tuple(round(0.1 * 2**i, 10) for i in range(8))
RHO_GRID = tuple(round(0.2 * i, 10) for i in range(6))
DEFAULT_GRIDS = {"gamma": GAMMA_GRID, "lambda": LAMBDA_GRID, "rho": RHO_GRID}

# respond(values, state_index) -> distribution over the mover's legal actions,
# where ``values`` are the mover's own expected utilities.
Responder = Callable[[np.ndarray, int], np.ndarray]


def as_game(spec: FlipItSpec | Game) -> Game:
    return spec if isinstance(spec, Game) else compile_game(spec)


def _other(role: str) -> str:
    return DEFENDER if role == ATTACKER else ATTACKER


def solve_response(
    spec: FlipItSpec | Game, opponent: BehavioralPolicy, respond: Responder
) -> tuple[BehavioralPolicy, dict[int, np.ndarray], float]:
    """Backward induction for the player facing a fixed Markov ``opponent``.

    At every reachable state the mover's action values are computed with its
    own (already solved) later play as continuation, and ``respond`` turns them
    into that state's distribution.

    Returns:
        The mover's policy, its action values per state (in the mover's own
        utility), and the attacker's expected utility from the initial state.
    """
    game = as_game(spec)
    mover = _other(opponent.role)
    sign = 1.0 if mover == ATTACKER else -1.0
    v_next = np.zeros(game.n_masks)
    probs: dict[int, np.ndarray] = {}
    values: dict[int, np.ndarray] = {}
    for t in reversed(range(game.rounds)):
        v_now = np.zeros(game.n_masks)
        for mask in game.reachable[t]:
            s = game.index(mask, t)
            payoff = game.reward[mask] + v_next[game.next_mask[mask]]
            q = payoff @ opponent[s] if mover == ATTACKER else opponent[s] @ payoff
            p = respond(sign * q, s)
            probs[s] = p
            values[s] = sign * q
            v_now[mask] = p @ q
        v_next = v_now
    return BehavioralPolicy(game, mover, probs), values, float(v_next[game.initial_mask])


def _pure_lowest_index(values: np.ndarray, _s: int) -> np.ndarray:
    p = np.zeros(len(values))
    p[int(np.argmax(values))] = 1.0
    return p


def action_values(
    spec: FlipItSpec | Game, defender_policy: BehavioralPolicy, continuation: BehavioralPolicy
) -> dict[int, np.ndarray]:
    """Attacker Q-values against ``defender_policy`` when later rounds follow ``continuation``."""
    _, q, _ = solve_response(spec, defender_policy, lambda _v, s: continuation[s])
    return q


def expected_utility_exact(
    spec: FlipItSpec | Game, att: BehavioralPolicy, dfn: BehavioralPolicy
) -> tuple[float, float]:
    """Exact ``(attacker, defender)`` expected utility by forward propagation of reach probabilities."""
    game = as_game(spec)
    reach = np.zeros(game.n_masks)
    reach[game.initial_mask] = 1.0
    total = 0.0
    for t in range(game.rounds):
        nxt = np.zeros(game.n_masks)
        for mask in game.reachable[t]:
            pr = reach[mask]
            if pr == 0.0:
                continue
            s = game.index(mask, t)
            joint = pr * np.outer(att[s], dfn[s])
            total += float(np.sum(joint * game.reward[mask]))
            np.add.at(nxt, game.next_mask[mask], joint)
        reach = nxt
    return total, -total


def sample_actions(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling: positions in ``p`` for each uniform draw in ``u``."""
    cdf = np.cumsum(p)
    return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(p) - 1)


def monte_carlo_utility(
    spec: FlipItSpec | Game,
    att: BehavioralPolicy,
    dfn: BehavioralPolicy,
    n_episodes: int,
    seed: int,
) -> tuple[float, float]:
    """Sample mean of the attacker's return and its standard error."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    game = as_game(spec)
    rng = np.random.default_rng(seed)
    masks = np.full(n_episodes, game.initial_mask, dtype=np.int64)
    returns = np.zeros(n_episodes)
    for t in range(game.rounds):
        nxt = np.empty_like(masks)
        for mask in np.unique(masks):
            idx = np.flatnonzero(masks == mask)
            s = game.index(int(mask), t)
            a = sample_actions(att[s], rng.random(idx.size))
            d = sample_actions(dfn[s], rng.random(idx.size))
            returns[idx] += game.reward[mask][a, d]
            nxt[idx] = game.next_mask[mask][a, d]
        masks = nxt
    if n_episodes == 1:
        return float(returns[0]), 0.0
    return float(returns.mean()), float(returns.std(ddof=1) / np.sqrt(n_episodes))


def defender_best_response(
    spec: FlipItSpec | Game, att: BehavioralPolicy
) -> tuple[BehavioralPolicy, float]:
    """Pure defender policy minimising the attacker's utility (ties to the lowest node)."""
    policy, _, value = solve_response(spec, att, _pure_lowest_index)
    return policy, value


def attacker_best_response(
    spec: FlipItSpec | Game, dfn: BehavioralPolicy
) -> tuple[BehavioralPolicy, float]:
    """Pure attacker policy maximising its utility (ties to the lowest action id, pass first)."""
    policy, _, value = solve_response(spec, dfn, _pure_lowest_index)
    return policy, value


@dataclass(frozen=True)
class MetricReport:
    utility_vs_uniform: float
    br_utility: float
    model_id: str = ""
    game_id: str = ""


def evaluate_model(
    spec: FlipItSpec | Game, policy: BehavioralPolicy, model_id: str = "", game_id: str = ""
) -> MetricReport:
    game = as_game(spec)
    u_uniform, _ = expected_utility_exact(game, policy, uniform_policy(game, DEFENDER))
    _, u_br = defender_best_response(game, policy)
    return MetricReport(u_uniform, u_br, model_id, game_id or game.spec.name)


def model_report(spec: FlipItSpec | Game, model, defender: BehavioralPolicy | None = None) -> MetricReport:
    """Metrics for a model specification, averaged over its training seeds.

    ``model`` is anything with ``policies(game, defender)`` and ``name``
    (see :class:`flipgen.models.ModelSpec`).
    """
    game = as_game(spec)
    reports = [evaluate_model(game, p) for p in model.policies(game, defender)]
    return MetricReport(
        float(np.mean([r.utility_vs_uniform for r in reports])),
        float(np.mean([r.br_utility for r in reports])),
        model.name,
        game.spec.name,
    )


@dataclass(frozen=True)
class SweepResult:
    trait: str
    grid: tuple[float, ...]
    reports: tuple[MetricReport, ...]

    @property
    def spread_utility(self) -> float:
        u = [r.utility_vs_uniform for r in self.reports]
        return max(u) - min(u)

    @property
    def spread_br(self) -> float:
        u = [r.br_utility for r in self.reports]
        return max(u) - min(u)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trait", "value", "utility_vs_uniform", "br_utility"])
        for value, r in zip(self.grid, self.reports):
            writer.writerow([self.trait, repr(value), repr(r.utility_vs_uniform), repr(r.br_utility)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "trait": self.trait,
            "grid": list(self.grid),
            "reports": [asdict(r) for r in self.reports],
            "spread_utility": self.spread_utility,
            "spread_br": self.spread_br,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _sweep_point(game: Game, model, trait: str, value: float) -> MetricReport:
    return model_report(game, model.with_param(trait, value))


def sweep_metrics(
    spec: FlipItSpec | Game,
    model,
    trait: str,
    schedule: Sequence[float] | None = None,
    jobs: int = 1,
) -> SweepResult:
    """Re-derive ``model`` at every grid value of ``trait`` and evaluate it.

    ``gamma`` and ``rho`` only exist for SRDQ models; ``lambda`` for every
    family except level-k. SRDQ points are averaged over the model's seed set.
    """
    if trait not in DEFAULT_GRIDS:
        raise ValueError(f"unknown trait {trait!r}; expected one of {sorted(DEFAULT_GRIDS)}")
    grid = tuple(sorted(DEFAULT_GRIDS[trait] if schedule is None else schedule))
    model.with_param(trait, grid[0])  # fail fast on family/trait mismatch
    game = as_game(spec)
    reports = parallel_map(partial(_sweep_point, game, model, trait), grid, jobs)
    return SweepResult(trait, grid, tuple(reports))
