"""Baseline behavioral attacker models: quantal response, level-k and quantal level-k.

Each model is extended to the multi-round game per state: at every state the
attacker reacts to its action values, computed by backward induction with the
model's own later play as continuation. The level hierarchies alternate roles,
level-0 being uniform play for whichever side sits at the bottom.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Union

import numpy as np

from .game import FlipItSpec, Game
from .policy import ATTACKER, DEFENDER, BehavioralPolicy, uniform_policy
from .solvers import as_game, solve_response

LAMBDA_BOUNDS = (0.01, 20.0)
K_CHOICES = (1, 2, 3)


def softmax(values, lam: float) -> np.ndarray:
    """Quantal choice probabilities ``exp(lam * v) / sum(exp(lam * v))``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    if lam == 0:
        return np.full(v.size, 1.0 / v.size)
    z = lam * v
    e = np.exp(z - z.max())
    return e / e.sum()


def uniform_argmax(values: np.ndarray) -> np.ndarray:
    """Uniform distribution over the maximising entries (ties within 1e-12 relative)."""
    top = values.max()
    best = values >= top - 1e-12 * max(1.0, abs(top))
    return best / best.sum()


@dataclass(frozen=True)
class QRParams:
    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")


@dataclass(frozen=True)
class LKParams:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"level must be a positive integer, got {self.k}")


@dataclass(frozen=True)
class QLKParams:
    k: int
    lam: float

    def __post_init__(self):
        LKParams(self.k)
        QRParams(self.lam)


def _anchor(game: Game, anchor_defender: BehavioralPolicy | None) -> BehavioralPolicy:
    return uniform_policy(game, DEFENDER) if anchor_defender is None else anchor_defender


def qr_policy(
    spec: FlipItSpec | Game, defender_policy: BehavioralPolicy | None, params: QRParams
) -> BehavioralPolicy:
    game = as_game(spec)
    policy, _, _ = solve_response(
        game, _anchor(game, defender_policy), lambda q, _s: softmax(q, params.lam)
    )
    return policy


def _hierarchy(game: Game, k: int, anchor_defender: BehavioralPolicy | None, respond) -> BehavioralPolicy:
    # level 0 sits on the defender side for odd k, on the attacker side for even k
    if k % 2 == 1:
        current = _anchor(game, anchor_defender)
    else:
        current = uniform_policy(game, ATTACKER)
    for _ in range(k):
        current, _, _ = solve_response(game, current, respond)
    return current


def lk_policy(
    spec: FlipItSpec | Game, params: LKParams, anchor_defender: BehavioralPolicy | None = None
) -> BehavioralPolicy:
    """Level-k attacker: alternating exact best responses, ties split uniformly."""
    return _hierarchy(as_game(spec), params.k, anchor_defender, lambda q, _s: uniform_argmax(q))


def qlk_policy(
    spec: FlipItSpec | Game, params: QLKParams, anchor_defender: BehavioralPolicy | None = None
) -> BehavioralPolicy:
    """Quantal level-k attacker: the level-k hierarchy with softmax responses at one shared lambda."""
    return _hierarchy(
        as_game(spec), params.k, anchor_defender, lambda q, _s: softmax(q, params.lam)
    )


def _srdq_params():
    from .srdq import SRDQParams

    return SRDQParams


FAMILIES = ("qr", "lk", "qlk", "srdq")
_TRAIT_FIELDS = {"lambda": "lam", "gamma": "gamma", "rho": "rho"}


def family_of(params) -> str:
    names = {QRParams: "qr", LKParams: "lk", QLKParams: "qlk", _srdq_params(): "srdq"}
    try:
        return names[type(params)]
    except KeyError:
        raise TypeError(f"not a model parameter object: {params!r}") from None


def params_from_dict(family: str, doc: dict):
    """Build a parameter object from JSON-style keys (``lambda`` rather than ``lam``)."""
    kwargs = {("lam" if key == "lambda" else key): value for key, value in doc.items()}
    cls = {"qr": QRParams, "lk": LKParams, "qlk": QLKParams, "srdq": _srdq_params()}.get(family)
    if cls is None:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {family}: {exc}") from exc


def params_to_dict(params) -> dict:
    return {("lambda" if key == "lam" else key): value for key, value in asdict(params).items()}


Params = Union[QRParams, LKParams, QLKParams, "SRDQParams"]  # noqa: F821


@dataclass(frozen=True)
class ModelSpec:
    """A frozen model: family parameters plus the seed set used when it must be trained.

    Deterministic families ignore ``seeds``; SRDQ models are trained once per
    seed and their metrics averaged.
    """

    params: Params
    seeds: tuple[int, ...] = tuple(range(10))
    name: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.name:
            object.__setattr__(self, "name", self.describe())

    @property
    def family(self) -> str:
        return family_of(self.params)

    def describe(self) -> str:
        body = ",".join(f"{k}={v}" for k, v in params_to_dict(self.params).items() if k != "seed")
        return f"{self.family}({body})"

    def with_param(self, trait: str, value: float) -> ModelSpec:
        attr = _TRAIT_FIELDS.get(trait)
        if attr is None or not hasattr(self.params, attr):
            raise ValueError(f"trait {trait!r} does not apply to the {self.family} family")
        return ModelSpec(replace(self.params, **{attr: float(value)}), self.seeds)

    def policies(
        self, spec: FlipItSpec | Game, defender: BehavioralPolicy | None = None
    ) -> list[BehavioralPolicy]:
        game = as_game(spec)
        p = self.params
        if isinstance(p, QRParams):
            return [qr_policy(game, defender, p)]
        if isinstance(p, LKParams):
            return [lk_policy(game, p, defender)]
        if isinstance(p, QLKParams):
            return [qlk_policy(game, p, defender)]
        from .srdq import policy_from_qtable, train

        out = []
        for seed in self.seeds:
            table = train(game, defender, replace(p, seed=seed))
            out.append(policy_from_qtable(table, p.lam))
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": params_to_dict(self.params),
            "seeds": list(self.seeds),
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ModelSpec:
        params = params_from_dict(doc["family"], doc.get("params", {}))
        seeds = doc.get("seeds")
        return cls(params, tuple(range(10)) if seeds is None else tuple(seeds), doc.get("name", ""))
