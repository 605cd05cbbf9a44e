"""Sub-rational distributional Q-learning (SRDQ).

A tabular categorical distributional Q-learner whose parameters are meant to be
read as traits: ``gamma`` is how far ahead the agent plans, ``rho`` weighs
gains against penalties (``rho * gain + (1 - rho) * penalty``), ``lam`` is the
softmax rationality used both while learning and when acting, and ``alpha``
is the learning rate.

Return distributions live on one fixed, evenly spaced support shared by the
whole table. Targets are projected onto it by splitting each atom's mass
linearly between its two neighbours.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numba
import numpy as np

from .game import FlipItSpec, Game, StepOutcome, action_label, parse_action
from .models import softmax
from .policy import ATTACKER, DEFENDER, BehavioralPolicy, uniform_policy
from .solvers import as_game

N_ATOMS = 51


class PTConfig(enum.Enum):
    """Scalar summary of a return distribution used for greedy and softmax choices."""

    EXPECTATION = "expectation"


@dataclass(frozen=True)
class SRDQParams:
    gamma: float
    rho: float
    lam: float
    alpha: float = 1e-3
    episodes: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")
        if self.episodes < 1:
            raise ValueError("episodes must be positive")


@dataclass(frozen=True, eq=False)
class ReturnDistribution:
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.atoms.shape != self.probs.shape:
            raise ValueError("atoms and probabilities differ in length")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("not a probability vector")


def subjective_reward(gain: float, penalty: float, rho: float) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return rho * gain + (1.0 - rho) * penalty


def decompose_reward(outcome: StepOutcome) -> tuple[float, float]:
    """Split a round's outcome into the control gain and the (non-positive) attack penalty."""
    return outcome.attacker_gain, -outcome.attacker_cost


def pt_value(dist: ReturnDistribution, pt: PTConfig = PTConfig.EXPECTATION) -> float:
    if pt is PTConfig.EXPECTATION:
        return float(dist.probs @ dist.atoms)
    raise NotImplementedError(pt)


def categorical_project(target_atoms, target_probs, support) -> np.ndarray:
    """Project a discrete distribution onto ``support`` (sorted ascending).

    Mass outside the support is clamped onto the boundary atoms.
    """
    z = np.asarray(support, dtype=float)
    if z.size == 0:
        raise ValueError("empty support")
    x = np.asarray(target_atoms, dtype=float)
    p = np.asarray(target_probs, dtype=float)
    if z.size == 1:
        return np.array([p.sum()])
    x = np.clip(x, z[0], z[-1])
    lo = np.clip(np.searchsorted(z, x, side="right") - 1, 0, z.size - 2)
    w = (x - z[lo]) / (z[lo + 1] - z[lo])
    out = np.zeros(z.size)
    np.add.at(out, lo, p * (1.0 - w))
    np.add.at(out, lo + 1, p * w)
    return out


def default_support(game: Game, rho: float, gamma: float, n_atoms: int = N_ATOMS) -> np.ndarray:
    """Evenly spaced atoms covering every achievable discounted subjective return.

    Per-round subjective rewards are bounded by their extremes over the game's
    transition table; the return bound follows by interval arithmetic over the
    horizon.
    """
    us = [subjective_reward(0.0, 0.0, rho)]
    for mask in game.next_mask:
        u = rho * game.gain[mask] - (1.0 - rho) * game.cost[mask]
        us += [float(u.min()), float(u.max())]
    u_min, u_max = min(us), max(us)
    horizon = sum(gamma**i for i in range(max(game.rounds, 1)))
    lo = min(u_min, u_min * horizon)
    hi = max(u_max, u_max * horizon)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    return np.linspace(lo, hi, n_atoms)


def zero_distribution(atoms: np.ndarray) -> np.ndarray:
    p = np.zeros(atoms.size)
    p[int(np.argmin(np.abs(atoms)))] = 1.0
    return p


class QTable:
    """Return distributions ``Z(s, a)`` for every reachable state and legal attacker action.

    ``z[s]`` has one row per action in ``game.actions(s, "attacker")``.
    """

    def __init__(self, game: Game, atoms: np.ndarray, z: dict[int, np.ndarray] | None = None):
        self.game = game
        self.atoms = np.asarray(atoms, dtype=float)
        if z is None:
            zero = zero_distribution(self.atoms)
            z = {s: np.tile(zero, (len(game.actions(s, ATTACKER)), 1)) for s in game.states()}
        self.z = z

    @property
    def support(self) -> tuple[float, float, int]:
        return float(self.atoms[0]), float(self.atoms[-1]), int(self.atoms.size)

    def distribution(self, s: int, action: int) -> ReturnDistribution:
        row = self.game.actions(s, ATTACKER).index(action)
        return ReturnDistribution(self.atoms, self.z[s][row])

    def pt_values(self, s: int, pt: PTConfig = PTConfig.EXPECTATION) -> np.ndarray:
        if pt is not PTConfig.EXPECTATION:
            raise NotImplementedError(pt)
        return self.z[s] @ self.atoms

    def greedy_action(self, s: int) -> int:
        return self.game.actions(s, ATTACKER)[int(np.argmax(self.pt_values(s)))]

    def freeze(self) -> QTable:
        for arr in self.z.values():
            arr.setflags(write=False)
        return self

    def to_dict(self) -> dict:
        z_min, z_max, k = self.support
        entries = {}
        for s in sorted(self.z):
            labels = [action_label(a, ATTACKER) for a in self.game.actions(s, ATTACKER)]
            entries[str(s)] = {lab: [float(x) for x in row] for lab, row in zip(labels, self.z[s])}
        return {
            "support": {"z_min": z_min, "z_max": z_max, "n_atoms": k},
            "game": self.game.spec.to_dict(),
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, doc: dict, game: Game | None = None) -> QTable:
        if game is None:
            game = as_game(FlipItSpec.from_dict(doc["game"]))
        sup = doc["support"]
        atoms = np.linspace(sup["z_min"], sup["z_max"], sup["n_atoms"])
        z = {}
        for key, entry in doc["entries"].items():
            s = int(key)
            acts = game.actions(s, ATTACKER)
            arr = np.empty((len(acts), atoms.size))
            for label, row in entry.items():
                arr[acts.index(parse_action(label))] = row
            z[s] = arr
        return cls(game, atoms, z).freeze()

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"


@numba.njit(cache=True)
def _project_atom(target, x, p, z0, dz, k):
    x = min(max(x, z0), z0 + dz * (k - 1))
    b = (x - z0) / dz
    lo = min(int(np.floor(b)), k - 2)
    w = b - lo
    target[lo] += p * (1.0 - w)
    target[lo + 1] += p * w


@numba.njit(cache=True)
def _train_kernel(z, means, n_act, util, nxt, def_cdf, atoms, draws, init_mask, n_masks, gamma, alpha, lam):
    k = atoms.size
    z0 = atoms[0]
    dz = (atoms[k - 1] - atoms[0]) / (k - 1)
    rounds = draws.shape[1]
    weights = np.empty(z.shape[1])
    target = np.empty(k)
    for ep in range(draws.shape[0]):
        mask = init_mask
        for t in range(rounds):
            s = t * n_masks + mask
            na = n_act[mask]
            top = means[s, 0]
            for i in range(1, na):
                top = max(top, means[s, i])
            total = 0.0
            for i in range(na):
                weights[i] = np.exp(lam * (means[s, i] - top))
                total += weights[i]
            r = draws[ep, t, 0] * total
            a = na - 1
            acc = 0.0
            for i in range(na):
                acc += weights[i]
                if acc > r:
                    a = i
                    break
            nd = n_act[n_masks + mask]
            d = nd - 1
            r = draws[ep, t, 1] * def_cdf[s, nd - 1]
            for i in range(nd):
                if def_cdf[s, i] > r:
                    d = i
                    break
            u = util[mask, a, d]
            nm = nxt[mask, a, d]
            target[:] = 0.0
            if t + 1 == rounds:
                _project_atom(target, u, 1.0, z0, dz, k)
            else:
                s2 = s + n_masks - mask + nm
                best = 0
                for i in range(1, n_act[nm]):
                    if means[s2, i] > means[s2, best]:
                        best = i
                for i in range(k):
                    p = z[s2, best, i]
                    if p != 0.0:
                        _project_atom(target, u + gamma * atoms[i], p, z0, dz, k)
            m = 0.0
            for i in range(k):
                v = (1.0 - alpha) * z[s, a, i] + alpha * target[i]
                z[s, a, i] = v
                m += v * atoms[i]
            means[s, a] = m
            mask = nm


def train(
    spec: FlipItSpec | Game,
    defender_policy: BehavioralPolicy | None,
    params: SRDQParams,
    support: np.ndarray | None = None,
) -> QTable:
    """Train a QTable against a fixed defender policy.

    Each round the attacker samples from ``softmax(lam, E[Z(S, .)])``, the
    defender from its policy, and ``Z(S, A)`` moves a step ``alpha`` toward the
    projected target ``u + gamma * Z(S', a*)`` (``a*`` greedy, lowest id on
    ties; a point mass at ``u`` when ``S'`` is terminal). Runs are
    reproducible bit-for-bit from ``params.seed``.

    ``support`` overrides the default atoms; it must be evenly spaced.
    """
    game = as_game(spec)
    dfn = uniform_policy(game, DEFENDER) if defender_policy is None else defender_policy
    dfn.check_coverage()
    if support is None:
        atoms = default_support(game, params.rho, params.gamma)
    else:
        atoms = np.asarray(support, dtype=float)
        if atoms.size < 2 or not np.allclose(np.diff(atoms), atoms[1] - atoms[0], rtol=1e-9, atol=0):
            raise ValueError("support must hold at least two evenly spaced atoms")
    table = QTable(game, atoms)
    if game.rounds == 0:
        return table.freeze()

    n, n_masks = game.n_nodes, game.n_masks
    states = game.states()
    z = np.zeros((game.n_states, n + 1, atoms.size))
    means = np.zeros((game.n_states, n + 1))
    def_cdf = np.ones((game.n_states, n))
    n_act = np.zeros(2 * n_masks, dtype=np.int64)  # attacker counts, then defender counts
    util = np.zeros((n_masks, n + 1, n))
    nxt = np.zeros((n_masks, n + 1, n), dtype=np.int64)
    for mask in game.next_mask:
        na, nd = game.next_mask[mask].shape
        n_act[mask], n_act[n_masks + mask] = na, nd
        util[mask, :na, :nd] = params.rho * game.gain[mask] - (1.0 - params.rho) * game.cost[mask]
        nxt[mask, :na, :nd] = game.next_mask[mask]
    for s in states:
        rows = table.z[s]
        z[s, : len(rows)] = rows
        means[s, : len(rows)] = rows @ atoms
        cdf = np.cumsum(dfn[s])
        def_cdf[s, : cdf.size] = cdf

    draws = np.random.default_rng(params.seed).random((params.episodes, game.rounds, 2))
    _train_kernel(
        z, means, n_act, util, nxt, def_cdf, atoms, draws,
        game.initial_mask, n_masks, float(params.gamma), float(params.alpha), float(params.lam),
    )
    for s in states:
        table.z[s] = z[s, : len(table.z[s])].copy()
    return table.freeze()


def policy_from_qtable(qtable: QTable, lam: float, pt: PTConfig = PTConfig.EXPECTATION) -> BehavioralPolicy:
    probs = {s: softmax(qtable.pt_values(s, pt), lam) for s in qtable.z}
    return BehavioralPolicy(qtable.game, ATTACKER, probs)
