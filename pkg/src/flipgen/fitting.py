"""Play data: ingestion, dark-triad clustering, likelihoods and model fitting.

On-disk layout of a dataset directory::

    profiles.csv     participant_id,mach,narc,psych   (SD3 scores in [1, 5])
    episodes.jsonl   one episode per line:
                     {"participant_id": ..., "game_id": ..., "episode_id": ...,
                      "steps": [{"ownership": ["D", "A", ...], "round": 0,
                                 "action": "attack:2"}, ...]}
    games/<id>.json  game descriptions; the id ``original`` is built in

``episode_id`` is optional. Actions are ``pass`` or ``attack:<node>``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .game import (
    PASS,
    FlipItSpec,
    Game,
    GameState,
    Owner,
    action_label,
    dumps_spec,
    load_spec,
    original_game,
    parse_action,
)
from .models import LAMBDA_BOUNDS, ModelSpec, params_from_dict, params_to_dict
from .policy import ATTACKER, DEFENDER, BehavioralPolicy, CoverageError, uniform_policy
from .search import Dim, SearchSpace, population_search, ranked
from .solvers import as_game, sample_actions

SD3_TYPES = ("mach", "narc", "psych")
LIKELIHOOD_FLOOR = 1e-9
SRDQ_FIT_ALPHA = 1e-3
SRDQ_FIT_EPISODES = 2000


class DatasetError(ValueError):
    def __init__(self, message: str, source: str = "", line: int | None = None, field: str = ""):
        where = source + (f":{line}" if line is not None else "")
        super().__init__(f"{where}: {message}" if where else message)
        self.source, self.line, self.field = source, line, field


class ReplayError(DatasetError):
    def __init__(self, episode_id: str, step: int, message: str):
        super().__init__(f"episode {episode_id} step {step}: {message}")
        self.episode_id, self.step = episode_id, step


@dataclass(frozen=True)
class ParticipantProfile:
    participant_id: str
    mach: float
    narc: float
    psych: float

    def __post_init__(self):
        for t in SD3_TYPES:
            v = getattr(self, t)
            if not (math.isfinite(v) and 1.0 <= v <= 5.0):
                raise ValueError(f"{self.participant_id}: SD3 score {t}={v} outside [1, 5]")

    def score(self, sd3_type: str) -> float:
        if sd3_type not in SD3_TYPES:
            raise ValueError(f"unknown SD3 type {sd3_type!r}; expected one of {SD3_TYPES}")
        return getattr(self, sd3_type)


@dataclass(frozen=True)
class EpisodeRecord:
    participant_id: str
    game_id: str
    steps: tuple[tuple[GameState, int], ...]
    episode_id: str = ""

    def to_dict(self) -> dict:
        doc = {"participant_id": self.participant_id, "game_id": self.game_id}
        if self.episode_id:
            doc["episode_id"] = self.episode_id
        doc["steps"] = [
            {
                "ownership": ["A" if o is Owner.ATTACKER else "D" for o in state.ownership],
                "round": state.round,
                "action": action_label(a, ATTACKER),
            }
            for state, a in self.steps
        ]
        return doc


@dataclass
class Dataset:
    profiles: dict[str, ParticipantProfile]
    episodes: list[EpisodeRecord]
    games: dict[str, FlipItSpec] = field(default_factory=dict)

    def game(self, game_id: str) -> FlipItSpec:
        if game_id in self.games:
            return self.games[game_id]
        if game_id == "original":
            return original_game()
        raise DatasetError(f"unknown game id {game_id!r}")

    @property
    def participants(self) -> list[str]:
        return sorted({e.participant_id for e in self.episodes})

    def subset(self, participant_ids: Iterable[str]) -> Dataset:
        keep = set(participant_ids)
        return Dataset(
            {p: prof for p, prof in self.profiles.items() if p in keep},
            [e for e in self.episodes if e.participant_id in keep],
            dict(self.games),
        )

    def by_game(self) -> dict[str, list[EpisodeRecord]]:
        out: dict[str, list[EpisodeRecord]] = {}
        for e in self.episodes:
            out.setdefault(e.game_id, []).append(e)
        return dict(sorted(out.items()))


def replay_validate(spec: FlipItSpec | Game, record: EpisodeRecord) -> None:
    """Re-simulate an episode and raise :class:`ReplayError` at the first inconsistency.

    The first state must be the initial state, every attacker action must be
    legal, and each next state must follow from the recorded attacker action
    and some legal defender action.
    """
    game = as_game(spec)
    eid = record.episode_id or "?"
    mask = game.initial_mask
    for k, (state, action) in enumerate(record.steps):
        if len(state.ownership) != game.n_nodes:
            raise ReplayError(eid, k, "ownership has the wrong number of nodes")
        if state.round != k:
            raise ReplayError(eid, k, f"expected round {k}, found {state.round}")
        if k >= game.rounds:
            raise ReplayError(eid, k, "episode runs past the horizon")
        if state.mask != mask:
            raise ReplayError(eid, k, "state is not reachable from the previous step")
        acts = game.attacker_actions[mask]
        if action not in acts:
            raise ReplayError(eid, k, f"illegal action {action_label(action, ATTACKER)}")
        if k + 1 < len(record.steps):
            successors = game.next_mask[mask][acts.index(action)]
            nxt = record.steps[k + 1][0].mask
            if nxt not in successors:
                raise ReplayError(eid, k + 1, "no defender action explains this transition")
            mask = nxt


def _parse_step(doc: dict, n_nodes: int) -> tuple[GameState, int]:
    owners = []
    for o in doc["ownership"]:
        if o not in ("A", "D"):
            raise ValueError(f"ownership entries must be 'A' or 'D', got {o!r}")
        owners.append(Owner.ATTACKER if o == "A" else Owner.DEFENDER)
    if len(owners) != n_nodes:
        raise ValueError(f"ownership has {len(owners)} entries, game has {n_nodes} nodes")
    action = parse_action(doc["action"])
    if action != PASS and not doc["action"].startswith("attack:"):
        raise ValueError(f"not an attacker action: {doc['action']!r}")
    return GameState(tuple(owners), int(doc["round"])), action


def read_profiles(path: Path) -> dict[str, ParticipantProfile]:
    profiles = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["participant_id", *SD3_TYPES]
        if reader.fieldnames != expected:
            raise DatasetError(f"header must be {','.join(expected)}", str(path), 1, "header")
        for line, row in enumerate(reader, start=2):
            try:
                prof = ParticipantProfile(row["participant_id"], *(float(row[t]) for t in SD3_TYPES))
            except (TypeError, ValueError) as exc:
                raise DatasetError(str(exc), str(path), line, "sd3") from exc
            if prof.participant_id in profiles:
                raise DatasetError("duplicate participant", str(path), line, "participant_id")
            profiles[prof.participant_id] = prof
    return profiles


def parse_dataset(path: str | Path) -> Dataset:
    """Load and replay-validate a dataset directory (see module docstring)."""
    root = Path(path)
    profiles = read_profiles(root / "profiles.csv")
    games: dict[str, FlipItSpec] = {}
    games_dir = root / "games"
    if games_dir.is_dir():
        for gp in sorted(games_dir.glob("*.json")):
            games[gp.stem] = replace(load_spec(gp), name=gp.stem)
    data = Dataset(profiles, [], games)

    ep_path = root / "episodes.jsonl"
    source = str(ep_path)
    with open(ep_path) as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", source, line) from exc
            for key in ("participant_id", "game_id", "steps"):
                if key not in doc:
                    raise DatasetError(f"missing field {key!r}", source, line, key)
            pid, gid = doc["participant_id"], doc["game_id"]
            if pid not in profiles:
                raise DatasetError(f"participant {pid!r} has no profile", source, line, "participant_id")
            try:
                spec = data.game(gid)
            except DatasetError as exc:
                raise DatasetError(str(exc), source, line, "game_id") from None
            try:
                steps = tuple(_parse_step(s, spec.n_nodes) for s in doc["steps"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"bad step: {exc}", source, line, "steps") from exc
            record = EpisodeRecord(pid, gid, steps, str(doc.get("episode_id", f"line{line}")))
            replay_validate(spec, record)
            data.episodes.append(record)
    return data


def write_dataset(data: Dataset, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "profiles.csv").write_text(profiles_csv(data))
    with open(root / "episodes.jsonl", "w") as fh:
        fh.writelines(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in data.episodes)
    if data.games:
        (root / "games").mkdir(exist_ok=True)
        for gid, spec in sorted(data.games.items()):
            (root / "games" / f"{gid}.json").write_text(dumps_spec(spec))


def cluster_by_type(data: Dataset, sd3_type: str, quantile: float = 0.75) -> Dataset:
    """Participants scoring at or above the empirical ``quantile`` of one SD3 trait.

    The quantile is linearly interpolated; clusters for different traits may
    overlap.
    """
    if not data.profiles:
        raise DatasetError("cannot cluster a dataset without profiles")
    if not 0.0 <= quantile <= 1.0:
        raise ValueError("quantile must lie in [0, 1]")
    pids = sorted(data.profiles)
    scores = np.array([data.profiles[p].score(sd3_type) for p in pids])
    cut = np.quantile(scores, quantile)
    return data.subset(p for p, s in zip(pids, scores) if s >= cut)


def encode_steps(game: Game, episodes: Sequence[EpisodeRecord]) -> tuple[np.ndarray, np.ndarray]:
    """State indices and positions of the chosen action within each state's legal list."""
    states, actions = [], []
    for e in episodes:
        for state, a in e.steps:
            mask = state.mask
            states.append(game.index(mask, state.round))
            actions.append(game.attacker_actions[mask].index(a))
    return np.array(states, dtype=np.int64), np.array(actions, dtype=np.int64)


def _step_log_probs(policy: BehavioralPolicy, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    width = max((len(p) for p in policy.probs.values()), default=1)
    dense = np.zeros((policy.game.n_states, width))
    known = np.zeros(policy.game.n_states, dtype=bool)
    for s, p in policy.probs.items():
        dense[s, : len(p)] = p
        known[s] = True
    if states.size and not known[states].all():
        missing = sorted(set(states[~known[states]].tolist()))
        raise CoverageError(f"policy does not cover observed states {missing[:5]}")
    return np.log(np.maximum(dense[states, actions], LIKELIHOOD_FLOOR))


def log_likelihood(policy: BehavioralPolicy, episodes: Sequence[EpisodeRecord]) -> float:
    """Sum of ``ln max(pi(a|s), 1e-9)`` over every observed step."""
    states, actions = encode_steps(policy.game, episodes)
    return float(_step_log_probs(policy, states, actions).sum())


def mean_log_likelihood(policy: BehavioralPolicy, episodes: Sequence[EpisodeRecord]) -> float:
    states, actions = encode_steps(policy.game, episodes)
    return float(_step_log_probs(policy, states, actions).mean()) if states.size else 0.0


def search_space(family: str) -> SearchSpace:
    lam = Dim("lambda", *LAMBDA_BOUNDS, scale="log")
    level = Dim("k", 1, 3, scale="int")
    spaces = {
        "qr": (lam,),
        "lk": (level,),
        "qlk": (level, lam),
        "srdq": (Dim("gamma", 0.0, 1.0), Dim("rho", 0.0, 1.0), lam),
    }
    if family not in spaces:
        raise ValueError(f"unknown model family {family!r}")
    return SearchSpace(spaces[family])


def params_for(family: str, vector: Sequence[float], seed: int = 0):
    values = dict(zip(search_space(family).names, (float(v) for v in vector)))
    if "k" in values:
        values["k"] = int(values["k"])
    if family == "srdq":
        values.update(alpha=SRDQ_FIT_ALPHA, episodes=SRDQ_FIT_EPISODES, seed=seed)
    return params_from_dict(family, values)


@dataclass
class FitResult:
    family: str
    params: dict
    train_log_likelihood: float
    test_log_likelihood: float
    uniform_baseline_test_log_likelihood: float
    train_steps: int
    test_steps: int
    trials: int
    train_participants: list[str]
    test_participants: list[str]

    @property
    def test_per_step(self) -> float:
        return self.test_log_likelihood / self.test_steps if self.test_steps else 0.0

    @property
    def baseline_per_step(self) -> float:
        return self.uniform_baseline_test_log_likelihood / self.test_steps if self.test_steps else 0.0

    def model_spec(self, seeds: Sequence[int] = tuple(range(10))) -> ModelSpec:
        return ModelSpec(params_from_dict(self.family, self.params), tuple(seeds))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "train_log_likelihood": self.train_log_likelihood,
            "test_log_likelihood": self.test_log_likelihood,
            "uniform_baseline_test_log_likelihood": self.uniform_baseline_test_log_likelihood,
            "train_steps": self.train_steps,
            "test_steps": self.test_steps,
            "trials": self.trials,
            "train_participants": self.train_participants,
            "test_participants": self.test_participants,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> FitResult:
        return cls(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def split_participants(
    participants: Sequence[str], train_frac: float, seed: int
) -> tuple[list[str], list[str]]:
    pids = sorted(set(participants))
    order = np.random.default_rng(seed).permutation(len(pids))
    n_train = round(train_frac * len(pids))
    n_train = min(max(n_train, 1), max(len(pids) - 1, 1))
    train = sorted(pids[i] for i in order[:n_train])
    test = sorted(pids[i] for i in order[n_train:])
    return train, test


class _LikelihoodObjective:
    """Picklable trial objective: train log-likelihood of one parameter vector."""

    def __init__(self, family, encoded, defenders, seed):
        self.family, self.encoded, self.defenders, self.seed = family, encoded, defenders, seed

    def policies(self, vector) -> dict[str, BehavioralPolicy]:
        model = ModelSpec(params_for(self.family, vector, self.seed), (self.seed,))
        return {gid: model.policies(game, self.defenders.get(gid))[0] for gid, (game, _, _) in self.encoded.items()}

    def __call__(self, vector):
        total = 0.0
        for gid, policy in self.policies(vector).items():
            _, states, actions = self.encoded[gid]
            total += float(_step_log_probs(policy, states, actions).sum())
        return total, None


def _encode(data: Dataset) -> dict[str, tuple[Game, np.ndarray, np.ndarray]]:
    out = {}
    for gid, eps in data.by_game().items():
        game = as_game(data.game(gid))
        out[gid] = (game, *encode_steps(game, eps))
    return out


def fit_model(
    family: str,
    cluster: Dataset,
    budget: int = 400,
    split: tuple[float, int] = (0.8, 0),
    population_size: int = 20,
    defenders: dict[str, BehavioralPolicy] | None = None,
    jobs: int = 1,
) -> FitResult:
    """Fit one model family by maximum likelihood with the population search.

    Participants (not episodes) are split into train and test sets. The trial
    with the highest train log-likelihood wins (earliest on ties) and is scored
    on the held-out participants together with the uniform policy. Models are
    derived against ``defenders[game_id]``, uniform when absent.
    """
    if not cluster.episodes:
        raise DatasetError("cannot fit on a cluster without episodes")
    space = search_space(family)
    train_frac, seed = split
    train_ids, test_ids = split_participants(cluster.participants, train_frac, seed)
    assert not set(train_ids) & set(test_ids)
    train, test = cluster.subset(train_ids), cluster.subset(test_ids)

    objective = _LikelihoodObjective(family, _encode(train), defenders or {}, seed)
    trials = population_search(objective, space, budget, population_size, seed, jobs)
    best = ranked(trials)[0]

    test_ll = baseline_ll = 0.0
    test_enc = _encode(test)
    if test_enc:
        test_policies = _LikelihoodObjective(family, test_enc, defenders or {}, seed).policies(best.params)
        for gid, (game, states, actions) in test_enc.items():
            test_ll += float(_step_log_probs(test_policies[gid], states, actions).sum())
            baseline_ll += float(_step_log_probs(uniform_policy(game, ATTACKER), states, actions).sum())
    return FitResult(
        family=family,
        params=params_to_dict(params_for(family, best.params, seed)),
        train_log_likelihood=best.value,
        test_log_likelihood=test_ll,
        uniform_baseline_test_log_likelihood=baseline_ll,
        train_steps=sum(len(e.steps) for e in train.episodes),
        test_steps=sum(len(e.steps) for e in test.episodes),
        trials=len(trials),
        train_participants=train_ids,
        test_participants=test_ids,
    )


def generate_synthetic(
    spec: FlipItSpec | Game,
    policy: BehavioralPolicy,
    defender: BehavioralPolicy | None,
    n_episodes: int,
    seed: int,
    sd3_profile: tuple[float, float, float],
    n_participants: int = 10,
    game_id: str | None = None,
    prefix: str = "p",
) -> Dataset:
    """Sample complete episodes of ``policy`` against ``defender`` (uniform by default).

    Episodes are dealt round-robin to ``n_participants`` synthetic participants
    who all carry ``sd3_profile``, so participant-level splits are possible.
    """
    game = as_game(spec)
    dfn = uniform_policy(game, DEFENDER) if defender is None else defender
    gid = game_id or game.spec.name or "game"
    pids = [f"{prefix}{i:03d}" for i in range(n_participants)]
    profiles = {p: ParticipantProfile(p, *sd3_profile) for p in pids}
    rng = np.random.default_rng(seed)

    masks = np.full(n_episodes, game.initial_mask, dtype=np.int64)
    history_masks = np.empty((game.rounds, n_episodes), dtype=np.int64)
    history_actions = np.empty((game.rounds, n_episodes), dtype=np.int64)
    for t in range(game.rounds):
        history_masks[t] = masks
        nxt = np.empty_like(masks)
        for mask in np.unique(masks):
            idx = np.flatnonzero(masks == mask)
            s = game.index(int(mask), t)
            a = sample_actions(policy[s], rng.random(idx.size))
            d = sample_actions(dfn[s], rng.random(idx.size))
            history_actions[t, idx] = np.asarray(game.attacker_actions[int(mask)])[a]
            nxt[idx] = game.next_mask[mask][a, d]
        masks = nxt

    episodes = []
    for i in range(n_episodes):
        steps = tuple(
            (GameState.from_mask(int(history_masks[t, i]), game.n_nodes, t), int(history_actions[t, i]))
            for t in range(game.rounds)
        )
        episodes.append(EpisodeRecord(pids[i % len(pids)], gid, steps, f"{prefix}-ep{i:05d}"))
    builtin = gid == "original" and game.spec == original_game()
    games = {} if builtin else {gid: replace(game.spec, name=gid)}
    return Dataset(profiles, episodes, games)


def merge(datasets: Iterable[Dataset]) -> Dataset:
    out = Dataset({}, [], {})
    for d in datasets:
        out.profiles.update(d.profiles)
        out.episodes.extend(d.episodes)
        out.games.update(d.games)
    return out


def bundled_dataset_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("flipgen.data").joinpath("synthetic")))


def profiles_csv(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["participant_id", *SD3_TYPES])
    for pid in sorted(data.profiles):
        writer.writerow([pid, *(repr(data.profiles[pid].score(t)) for t in SD3_TYPES)])
    return buf.getvalue()
