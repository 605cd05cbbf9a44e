"""Rules engine for flip-it security games.

Two variants are supported. In the ``original`` game every node can be
attacked and the attacker pays the target node's cost. In the ``graph`` game
the attacker starts on node 0 (a permanent home base) and may only attack
nodes adjacent to something it already holds, paying the cheapest edge cost.

Both players commit simultaneously against the pre-round ownership and see
the full board afterwards. States are indexed as ``round * 2**N + mask`` where
bit ``i`` of ``mask`` is set when the attacker owns node ``i``; the
all-defender board at round 0 is index 0.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

PASS = -1
"""Attacker action id for passing; attacks are encoded by their target node."""


class Owner(enum.IntEnum):
    DEFENDER = 0
    ATTACKER = 1


class Variant(str, enum.Enum):
    ORIGINAL = "original"
    GRAPH = "graph"


class InvalidSpecError(ValueError):
    """Raised when a game description violates one of its invariants."""


class IllegalActionError(ValueError):
    pass


class TerminalStateError(ValueError):
    pass


@dataclass(frozen=True)
class FlipItSpec:
    """Complete description of a flip-it game instance.

    ``node_costs`` is only used by the original variant, ``edge_costs`` and
    ``threshold`` only by the graph variant. Sequences are stored as tuples so
    specs are hashable and can key caches.
    """

    variant: Variant
    n_nodes: int
    rounds: int
    node_rewards: tuple[float, ...]
    node_costs: tuple[float, ...] = ()
    edge_costs: tuple[tuple[float, ...], ...] = ()
    threshold: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "node_rewards", tuple(float(r) for r in self.node_rewards))
        object.__setattr__(self, "node_costs", tuple(float(c) for c in self.node_costs))
        object.__setattr__(
            self, "edge_costs", tuple(tuple(float(c) for c in row) for row in self.edge_costs)
        )
        object.__setattr__(self, "threshold", float(self.threshold))

    @classmethod
    def original(cls, rewards: Sequence[float], costs: Sequence[float], rounds: int, name: str = ""):
        return cls(Variant.ORIGINAL, len(rewards), rounds, tuple(rewards), tuple(costs), name=name)

    @classmethod
    def graph(
        cls,
        edge_costs: Sequence[Sequence[float]],
        rewards: Sequence[float],
        threshold: float,
        rounds: int,
        name: str = "",
    ):
        return cls(
            Variant.GRAPH,
            len(rewards),
            rounds,
            tuple(rewards),
            edge_costs=tuple(tuple(row) for row in edge_costs),
            threshold=threshold,
            name=name,
        )

    @property
    def initial_ownership(self) -> tuple[Owner, ...]:
        owners = [Owner.DEFENDER] * self.n_nodes
        if self.variant is Variant.GRAPH:
            owners[0] = Owner.ATTACKER
        return tuple(owners)

    def has_edge(self, i: int, j: int) -> bool:
        return i != j and self.edge_costs[i][j] >= self.threshold

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "variant": self.variant.value,
            "n_nodes": self.n_nodes,
            "rounds": self.rounds,
            "node_rewards": list(self.node_rewards),
        }
        if self.variant is Variant.ORIGINAL:
            doc["node_costs"] = list(self.node_costs)
        else:
            doc["edge_costs"] = [list(row) for row in self.edge_costs]
            doc["threshold"] = self.threshold
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> FlipItSpec:
        try:
            return cls(
                variant=Variant(doc["variant"]),
                n_nodes=int(doc["n_nodes"]),
                rounds=int(doc["rounds"]),
                node_rewards=doc["node_rewards"],
                node_costs=doc.get("node_costs", ()),
                edge_costs=doc.get("edge_costs", ()),
                threshold=doc.get("threshold", 0.0),
                name=doc.get("name", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpecError(f"malformed game document: {exc!r}") from exc


def dumps_spec(spec: FlipItSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"


def save_spec(spec: FlipItSpec, path: str | Path) -> None:
    Path(path).write_text(dumps_spec(spec))


def load_spec(path: str | Path) -> FlipItSpec:
    return FlipItSpec.from_dict(json.loads(Path(path).read_text()))


def original_game() -> FlipItSpec:
    """The 5-node, 5-round game used to collect the human play data."""
    text = resources.files("flipgen.data").joinpath("original_game.json").read_text()
    return FlipItSpec.from_dict(json.loads(text))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_spec(spec: FlipItSpec) -> ValidationReport:
    """Check every structural invariant and report the identifiers of those violated."""
    bad: list[str] = []
    n = spec.n_nodes
    if n < 1:
        bad.append("n-nodes-positive")
    if spec.rounds < 1:
        bad.append("rounds-positive")
    if len(spec.node_rewards) != n:
        bad.append("node-rewards-length")
    values = list(spec.node_rewards) + [spec.threshold]
    if spec.variant is Variant.ORIGINAL:
        if len(spec.node_costs) != n:
            bad.append("node-costs-length")
        values += spec.node_costs
    else:
        if n < 2:
            bad.append("graph-min-nodes")
        if len(spec.edge_costs) != n or any(len(row) != n for row in spec.edge_costs):
            bad.append("edge-costs-shape")
        else:
            m = np.asarray(spec.edge_costs)
            values += m.ravel().tolist()
            if not np.array_equal(m, m.T):
                bad.append("edge-costs-symmetric")
            if np.any(np.diag(m) != 0):
                bad.append("edge-costs-zero-diagonal")
        if spec.node_rewards and spec.node_rewards[0] != 0:
            bad.append("home-base-reward-zero")
    if not all(math.isfinite(v) and v >= 0 for v in values):
        bad.append("values-finite-nonnegative")
    return ValidationReport(tuple(bad))


def _require_valid(spec: FlipItSpec, allow_empty_horizon: bool = False) -> None:
    violations = validate_spec(spec).violations
    if allow_empty_horizon and spec.rounds == 0:
        violations = tuple(v for v in violations if v != "rounds-positive")
    if violations:
        raise InvalidSpecError(", ".join(violations))


@dataclass(frozen=True)
class GameState:
    ownership: tuple[Owner, ...]
    round: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ownership", tuple(Owner(o) for o in self.ownership))

    @property
    def mask(self) -> int:
        return sum(1 << i for i, o in enumerate(self.ownership) if o is Owner.ATTACKER)

    @classmethod
    def from_mask(cls, mask: int, n_nodes: int, round: int) -> GameState:
        return cls(tuple(Owner((mask >> i) & 1) for i in range(n_nodes)), round)

    def is_terminal(self, spec: FlipItSpec) -> bool:
        return self.round >= spec.rounds


@dataclass(frozen=True)
class StepOutcome:
    next_state: GameState
    attacker_gain: float
    attacker_cost: float
    attacker_reward: float
    defender_reward: float


def initial_state(spec: FlipItSpec) -> GameState:
    _require_valid(spec, allow_empty_horizon=True)
    return GameState(spec.initial_ownership, 0)


def _check_state(spec: FlipItSpec, state: GameState) -> None:
    if len(state.ownership) != spec.n_nodes or not 0 <= state.round <= spec.rounds:
        raise ValueError(f"state {state} does not belong to a {spec.n_nodes}-node game")
    if spec.variant is Variant.GRAPH and state.ownership[0] is not Owner.ATTACKER:
        raise ValueError("graph states must keep node 0 attacker-owned")
    if state.round == spec.rounds:
        raise TerminalStateError(f"round {state.round} is terminal")


def _attack_cost(spec: FlipItSpec, ownership: Sequence[Owner], target: int) -> float:
    if spec.variant is Variant.ORIGINAL:
        return spec.node_costs[target]
    return min(
        spec.edge_costs[i][target]
        for i, o in enumerate(ownership)
        if o is Owner.ATTACKER and spec.has_edge(i, target)
    )


def legal_actions(spec: FlipItSpec, state: GameState) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Legal attacker and defender actions, each in ascending id order.

    The attacker tuple always starts with :data:`PASS`; attacks are listed by
    target node. Attacking a node the attacker already owns is not allowed.
    """
    _check_state(spec, state)
    own = state.ownership
    targets = [j for j in range(spec.n_nodes) if own[j] is Owner.DEFENDER]
    if spec.variant is Variant.GRAPH:
        holders = [i for i in range(spec.n_nodes) if own[i] is Owner.ATTACKER]
        targets = [j for j in targets if any(spec.has_edge(i, j) for i in holders)]
        defends = tuple(range(1, spec.n_nodes))
    else:
        defends = tuple(range(spec.n_nodes))
    return (PASS, *targets), defends


def step(spec: FlipItSpec, state: GameState, a: int, d: int) -> StepOutcome:
    """Apply one simultaneous round.

    A blocked attack (both players pick the same node) leaves ownership as it
    was but still costs the attacker.
    """
    att_legal, def_legal = legal_actions(spec, state)
    if a not in att_legal:
        raise IllegalActionError(f"attacker action {a} is illegal in {state}")
    if d not in def_legal:
        raise IllegalActionError(f"defender action {d} is illegal in {state}")
    own = list(state.ownership)
    cost = 0.0
    if a != PASS:
        cost = _attack_cost(spec, state.ownership, a)
    if a != d:
        if a != PASS:
            own[a] = Owner.ATTACKER
        own[d] = Owner.DEFENDER
    gain = sum(r for r, o in zip(spec.node_rewards, own) if o is Owner.ATTACKER)
    reward = gain - cost
    return StepOutcome(GameState(tuple(own), state.round + 1), gain, cost, reward, -reward)


def normalize_rewards(spec: FlipItSpec) -> FlipItSpec:
    """Rescale rewards, costs and threshold so node rewards sum to one."""
    total = sum(spec.node_rewards)
    if total <= 0:
        raise InvalidSpecError("cannot normalize a game whose rewards are all zero")
    if abs(total - 1.0) <= 1e-12:
        return spec
    # dividing (rather than multiplying by 1/total) stays finite for tiny totals
    out = replace(
        spec,
        node_rewards=tuple(r / total for r in spec.node_rewards),
        node_costs=tuple(c / total for c in spec.node_costs),
        edge_costs=tuple(tuple(c / total for c in row) for row in spec.edge_costs),
        threshold=spec.threshold / total,
    )
    if "values-finite-nonnegative" in validate_spec(out).violations:
        raise InvalidSpecError("normalized costs overflow; rewards are too small relative to costs")
    return out


def n_state_indices(spec: FlipItSpec) -> int:
    return (1 << spec.n_nodes) * (spec.rounds + 1)


def state_index(spec: FlipItSpec, state: GameState) -> int:
    if len(state.ownership) != spec.n_nodes or not 0 <= state.round <= spec.rounds:
        raise ValueError(f"state {state} does not belong to this game")
    return state.round * (1 << spec.n_nodes) + state.mask


def decode_state(spec: FlipItSpec, index: int) -> GameState:
    if not 0 <= index < n_state_indices(spec):
        raise ValueError(f"state index {index} out of range")
    t, mask = divmod(index, 1 << spec.n_nodes)
    return GameState.from_mask(mask, spec.n_nodes, t)


class Game:
    """Precomputed transition tables for one spec.

    Everything downstream (solvers, models, training) works on these tables
    rather than calling :func:`step` repeatedly. Transitions do not depend on
    the round, so tables are stored per ownership mask; ``reachable[t]`` lists
    the masks that can occur at round ``t`` from the initial state.
    """

    def __init__(self, spec: FlipItSpec):
        _require_valid(spec, allow_empty_horizon=True)
        self.spec = spec
        self.n_nodes = spec.n_nodes
        self.rounds = spec.rounds
        self.n_masks = 1 << spec.n_nodes
        self.n_states = self.n_masks * (spec.rounds + 1)
        self.initial_mask = GameState(spec.initial_ownership).mask

        self.attacker_actions: dict[int, tuple[int, ...]] = {}
        self.defender_actions: dict[int, tuple[int, ...]] = {}
        self.next_mask: dict[int, np.ndarray] = {}
        self.gain: dict[int, np.ndarray] = {}
        self.cost: dict[int, np.ndarray] = {}
        self.reward: dict[int, np.ndarray] = {}

        probe = replace(spec, rounds=max(spec.rounds, 1))
        frontier = {self.initial_mask}
        self.reachable: list[tuple[int, ...]] = []
        for _ in range(spec.rounds + 1):
            self.reachable.append(tuple(sorted(frontier)))
            for mask in frontier:
                self._tabulate(probe, mask)
            frontier = {int(m) for mask in frontier for m in self.next_mask[mask].ravel()}
        for table in (self.next_mask, self.gain, self.cost, self.reward):
            for arr in table.values():
                arr.setflags(write=False)

    def _tabulate(self, spec: FlipItSpec, mask: int) -> None:
        if mask in self.next_mask:
            return
        state = GameState.from_mask(mask, spec.n_nodes, 0)
        att, dfn = legal_actions(spec, state)
        shape = (len(att), len(dfn))
        nxt = np.empty(shape, dtype=np.int64)
        gain, cost = np.empty(shape), np.empty(shape)
        for i, a in enumerate(att):
            for j, d in enumerate(dfn):
                out = step(spec, state, a, d)
                nxt[i, j] = out.next_state.mask
                gain[i, j] = out.attacker_gain
                cost[i, j] = out.attacker_cost
        self.attacker_actions[mask] = att
        self.defender_actions[mask] = dfn
        self.next_mask[mask] = nxt
        self.gain[mask] = gain
        self.cost[mask] = cost
        self.reward[mask] = gain - cost

    def index(self, mask: int, t: int) -> int:
        return t * self.n_masks + mask

    def split(self, index: int) -> tuple[int, int]:
        """Return ``(mask, round)`` for a state index."""
        t, mask = divmod(index, self.n_masks)
        return mask, t

    @property
    def initial_index(self) -> int:
        return self.initial_mask

    def states(self, t: int | None = None) -> list[int]:
        """Reachable non-terminal state indices, optionally for one round."""
        rounds = range(self.rounds) if t is None else [t]
        return [self.index(m, r) for r in rounds for m in self.reachable[r]]

    def actions(self, index: int, role: str) -> tuple[int, ...]:
        mask = index % self.n_masks
        return self.attacker_actions[mask] if role == "attacker" else self.defender_actions[mask]

    def state(self, index: int) -> GameState:
        mask, t = self.split(index)
        return GameState.from_mask(mask, self.n_nodes, t)


@functools.lru_cache(maxsize=512)
def compile_game(spec: FlipItSpec) -> Game:
    return Game(spec)


def action_label(action: int, role: str) -> str:
    if role == "attacker":
        return "pass" if action == PASS else f"attack:{action}"
    return f"defend:{action}"


def parse_action(label: str) -> int:
    """Inverse of :func:`action_label` (the role is implied by the prefix)."""
    if label == "pass":
        return PASS
    kind, _, target = label.partition(":")
    if kind not in ("attack", "defend") or not target.isdigit():
        raise ValueError(f"unrecognised action label {label!r}")
    return int(target)
