"""Search over graph flip-it games that make fixed models behave differently.

A genome is a flat vector ``[edge costs (upper triangle, row-major),
rewards of nodes 1..N-1, threshold]``. It decodes to a graph game where an
edge exists when its cost reaches the threshold and node 0 is the attacker's
zero-reward home base. The default objective is the largest gap between the
models' BR utilities, i.e. the attacker's expected utility when the defender
best-responds to each model.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections.abc import Sequence
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from .game import FlipItSpec, dumps_spec, normalize_rewards, original_game
from .models import ModelSpec
from .search import Dim, SearchSpace, SearchTrial, population_search, ranked
from .solvers import MetricReport, model_report, sweep_metrics
from .srdq import SRDQParams

OBJECTIVES = ("pairwise_br_diff", "trait_sweep_spread")
TRAITS = ("gamma", "lambda", "rho")


@dataclass(frozen=True)
class GeneratorConfig:
    models: tuple[ModelSpec, ...]
    n_nodes: int = 5
    rounds: int = 5
    r_max: float = 1.0
    c_max: float = 1.0
    objective: str = "pairwise_br_diff"
    sweep_trait: str = "gamma"
    normalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.objective == "pairwise_br_diff" and len(self.models) < 2:
            raise ValueError("the pairwise objective needs at least two models")
        if not self.models:
            raise ValueError("the model set is empty")
        if self.n_nodes < 2 or self.rounds < 1:
            raise ValueError("graph games need at least two nodes and one round")

    def to_dict(self) -> dict:
        return {
            "models": [m.to_dict() for m in self.models],
            "n_nodes": self.n_nodes,
            "rounds": self.rounds,
            "r_max": self.r_max,
            "c_max": self.c_max,
            "objective": self.objective,
            "sweep_trait": self.sweep_trait,
            "normalize": self.normalize,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> GeneratorConfig:
        kwargs = {k: v for k, v in doc.items() if k != "models"}
        return cls(models=tuple(ModelSpec.from_dict(m) for m in doc["models"]), **kwargs)


def genome_space(config: GeneratorConfig) -> SearchSpace:
    n = config.n_nodes
    edges = [Dim(f"edge_{i}_{j}", 0.0, config.c_max) for i, j in itertools.combinations(range(n), 2)]
    rewards = [Dim(f"reward_{i}", 0.0, config.r_max) for i in range(1, n)]
    return SearchSpace((*edges, *rewards, Dim("threshold", 0.0, config.c_max)))


@dataclass(frozen=True)
class DecodedGame:
    spec: FlipItSpec
    degenerate: bool


def decode_genome(genome: Sequence[float], config: GeneratorConfig) -> DecodedGame:
    """Build the graph game encoded by ``genome``.

    Games where node 0 has no edge (the attacker can only pass) or every
    reward is zero are returned flagged ``degenerate``; they are not
    normalized.
    """
    space = genome_space(config)
    genome = np.asarray(genome, dtype=float)
    if not space.contains(genome):
        raise ValueError(f"genome of length {genome.size} is outside its bounds")
    n = config.n_nodes
    n_edges = n * (n - 1) // 2
    costs = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    costs[iu] = genome[:n_edges]
    costs = costs + costs.T
    rewards = (0.0, *genome[n_edges : n_edges + n - 1])
    threshold = float(genome[-1])
    spec = FlipItSpec.graph(costs.tolist(), rewards, threshold, config.rounds, name="generated")
    isolated = not any(spec.has_edge(0, j) for j in range(1, n))
    degenerate = isolated or sum(rewards) <= 0
    if config.normalize and not degenerate:
        spec = normalize_rewards(spec)
    return DecodedGame(spec, degenerate)


def objective_value(reports: Sequence[MetricReport]) -> float:
    """Spread of BR utility across reports; equals the largest pairwise gap."""
    if not reports:
        return float("-inf")
    br = [r.br_utility for r in reports]
    return max(br) - min(br)


def game_reports(spec: FlipItSpec, config: GeneratorConfig) -> tuple[MetricReport, ...]:
    if config.objective == "trait_sweep_spread":
        return sweep_metrics(spec, config.models[0], config.sweep_trait).reports
    return tuple(model_report(spec, m) for m in config.models)


@dataclass
class Trial:
    index: int
    generation: int
    genome: np.ndarray
    spec: FlipItSpec
    degenerate: bool
    reports: tuple[MetricReport, ...]
    objective: float
    parent: int | None = None
    perturbation: str = "init"


def evaluate_genome(genome: Sequence[float], config: GeneratorConfig) -> Trial:
    decoded = decode_genome(genome, config)
    reports = () if decoded.degenerate else game_reports(decoded.spec, config)
    return Trial(
        index=0,
        generation=0,
        genome=np.asarray(genome, dtype=float),
        spec=decoded.spec,
        degenerate=decoded.degenerate,
        reports=reports,
        objective=objective_value(reports),
    )


def _search_objective(config: GeneratorConfig, genome: np.ndarray):
    trial = evaluate_genome(genome, config)
    return trial.objective, trial


@dataclass
class OptimizationResult:
    trials: list[Trial]  # ranked, best first
    best_spec: FlipItSpec
    config: GeneratorConfig
    seed: int
    population_size: int
    generations: int


def _to_trial(st: SearchTrial) -> Trial:
    t: Trial = st.info
    return Trial(st.index, st.generation, st.params, t.spec, t.degenerate, t.reports, t.objective, st.parent, st.perturbation)


def optimize(
    config: GeneratorConfig,
    population_size: int = 20,
    generations: int = 9,
    seed: int = 0,
    jobs: int = 1,
) -> OptimizationResult:
    """Evolve ``population_size`` genomes for ``generations`` rounds after the initial one.

    Exactly ``population_size * (generations + 1)`` trials are logged.
    """
    if population_size < 2:
        raise ValueError("population_size must be at least 2")
    generations = max(generations, 0)
    budget = population_size * (generations + 1)
    found = population_search(
        partial(_search_objective, config), genome_space(config), budget, population_size, seed, jobs
    )
    trials = [_to_trial(st) for st in ranked(found)]
    return OptimizationResult(trials, trials[0].spec, config, seed, population_size, generations)


def original_reference(config: GeneratorConfig) -> FlipItSpec:
    spec = original_game()
    return normalize_rewards(spec) if config.normalize else spec


def summary_model(config: GeneratorConfig) -> ModelSpec:
    """The SRDQ model whose trait sweeps fill the summary table."""
    for m in config.models:
        if m.family == "srdq":
            return m
    return ModelSpec(SRDQParams(gamma=0.9, rho=0.5, lam=3.0))


def summary_rows(best: FlipItSpec, config: GeneratorConfig, jobs: int = 1) -> list[dict]:
    model = summary_model(config)
    reference = original_reference(config)
    rows = []
    for trait in TRAITS:
        orig = sweep_metrics(reference, model, trait, jobs=jobs)
        opt = sweep_metrics(best, model, trait, jobs=jobs)
        rows.append(
            {
                "trait": trait,
                "original_utility_diff": orig.spread_utility,
                "original_br_diff": orig.spread_br,
                "optimized_utility_diff": opt.spread_utility,
                "optimized_br_diff": opt.spread_br,
            }
        )
    return rows


TRIAL_COLUMNS = ("index", "generation", "objective", "degenerate", "parent", "perturbation", "genome")


def trials_csv(trials: Sequence[Trial], config: GeneratorConfig) -> str:
    names = [m.name for m in config.models] if config.objective == "pairwise_br_diff" else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(TRIAL_COLUMNS)
    for name in names:
        header += [f"{name}:utility_vs_uniform", f"{name}:br_utility"]
    writer.writerow(header)
    for t in sorted(trials, key=lambda t: t.index):
        row = [
            t.index,
            t.generation,
            repr(t.objective),
            int(t.degenerate),
            "" if t.parent is None else t.parent,
            t.perturbation,
            " ".join(repr(float(g)) for g in t.genome),
        ]
        if names:
            for i in range(len(names)):
                if t.reports:
                    row += [repr(t.reports[i].utility_vs_uniform), repr(t.reports[i].br_utility)]
                else:
                    row += ["", ""]
        writer.writerow(row)
    return buf.getvalue()


def _rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def report(
    trials: Sequence[Trial], out_dir: str | Path, config: GeneratorConfig, jobs: int = 1
) -> dict[str, Path]:
    """Write ``best_game.json``, ``trials.csv`` and the trait-spread ``summary.csv``.

    Returns the written paths keyed by artifact name.
    """
    if not trials:
        raise ValueError("no trials to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    best = min(trials, key=lambda t: (-t.objective, t.index))
    paths = {
        "best_game": out / "best_game.json",
        "trials": out / "trials.csv",
        "summary": out / "summary.csv",
    }
    paths["best_game"].write_text(dumps_spec(best.spec))
    paths["trials"].write_text(trials_csv(trials, config))
    paths["summary"].write_text(_rows_csv(summary_rows(best.spec, config, jobs)))
    return paths
