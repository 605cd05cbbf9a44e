"""``flipgen`` command line: reproducible experiment runs with manifests.

Every command writes its artifacts plus ``manifest.json`` (resolved options,
seed and SHA-256 of each artifact) into ``--out``. Options can also come from
a JSON file given with ``--config`` whose keys are the long option names with
underscores; explicit flags win. The seed is taken from ``--seed``, then the
``FLIPGEN_SEED`` environment variable, then the config file, then 42.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 configuration
error. Failures print one JSON line ``{"error": ..., "message": ...}`` to
stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any

from . import fitting, generator, solvers
from .game import (
    FlipItSpec,
    InvalidSpecError,
    action_label,
    compile_game,
    load_spec,
    original_game,
)
from .models import FAMILIES, ModelSpec, params_from_dict
from .policy import ATTACKER, DEFENDER, BehavioralPolicy, uniform_policy
from .srdq import SRDQParams, policy_from_qtable, train

DEFAULT_SEED = 42
SEED_ENV = "FLIPGEN_SEED"


class ConfigError(ValueError):
    pass


def parse_model(text: str, seeds: tuple[int, ...]) -> ModelSpec:
    """``family:key=value,...`` (e.g. ``srdq:gamma=0.9,rho=0.1,lambda=3``) or ``@fit.json``."""
    if text.startswith("@"):
        try:
            doc = json.loads(Path(text[1:]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model file {text[1:]}: {exc}") from exc
        if "family" not in doc:
            raise ConfigError(f"{text[1:]} is not a fit result or model file")
        if "trials" in doc:
            return fitting.FitResult.from_dict(doc).model_spec(seeds)
        return ModelSpec.from_dict(doc)
    family, _, body = text.partition(":")
    if family not in FAMILIES:
        raise ConfigError(f"unknown model family {family!r}; expected one of {', '.join(FAMILIES)}")
    values: dict[str, Any] = {}
    for item in filter(None, body.split(",")):
        key, eq, raw = item.partition("=")
        if not eq:
            raise ConfigError(f"expected key=value in model spec, got {item!r}")
        try:
            values[key.strip()] = int(raw) if key.strip() in ("k", "episodes", "seed") else float(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    try:
        return ModelSpec(params_from_dict(family, values), seeds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


class Run:
    """Resolved options plus the artifact bookkeeping of one command."""

    def __init__(self, args: argparse.Namespace, defaults: dict[str, Any]):
        self.command = args.command
        config: dict[str, Any] = {}
        if args.config:
            try:
                config = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(config, dict):
                raise ConfigError("config file must hold a JSON object")
        self.config = config
        self.options: dict[str, Any] = {}
        for key, default in defaults.items():
            flag = getattr(args, key, None)
            self.options[key] = flag if flag is not None else config.get(key, default)
        self.seed = self._resolve_seed(args.seed, config)
        self.jobs = int(args.jobs if args.jobs is not None else config.get("jobs", 1))
        self.out = Path(args.out if args.out is not None else config.get("out", f"runs/{self.command}"))
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: dict[str, Path] = {}

    @staticmethod
    def _resolve_seed(flag: int | None, config: dict) -> int:
        if flag is not None:
            return int(flag)
        env = os.environ.get(SEED_ENV)
        if env:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
        return int(config.get("seed", DEFAULT_SEED))

    def __getitem__(self, key: str) -> Any:
        return self.options[key]

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.artifacts[name] = path
        return path

    def game(self, key: str = "game") -> FlipItSpec:
        path = self.options.get(key)
        if not path:
            return original_game()
        try:
            return load_spec(path)
        except OSError as exc:
            raise ConfigError(f"cannot read game {path}: {exc}") from exc

    def seeds(self) -> tuple[int, ...]:
        return tuple(self.seed + i for i in range(int(self.options.get("seeds") or 10)))

    def manifest(self) -> None:
        digests = {
            name: hashlib.sha256(path.read_bytes()).hexdigest() for name, path in sorted(self.artifacts.items())
        }
        doc = {
            "command": self.command,
            "seed": self.seed,
            "jobs": self.jobs,
            "options": self.options,
            "artifacts": digests,
        }
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _defender(run: Run, game) -> BehavioralPolicy:
    path = run.options.get("defender")
    if not path:
        return uniform_policy(game, DEFENDER)
    try:
        return BehavioralPolicy.from_dict(game, json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read defender policy {path}: {exc}") from exc


def _model_policy(run: Run, game, defender=None) -> BehavioralPolicy:
    model = parse_model(run["model"], (run.seed,))
    return model.policies(game, defender)[0]


def cmd_simulate(run: Run) -> None:
    spec = run.game()
    game = compile_game(spec)
    dfn = _defender(run, game)
    att = _model_policy(run, game, dfn)
    data = fitting.generate_synthetic(
        game, att, dfn, int(run["episodes"]), run.seed, (3.0, 3.0, 3.0), n_participants=1,
        game_id=spec.name or "game",
    )
    lines = []
    for e in data.episodes:
        for state, a in e.steps:
            owners = "".join("A" if o else "D" for o in state.ownership)
            lines.append(f"{e.episode_id} round={state.round} board={owners} attacker={action_label(a, ATTACKER)}")
    print("\n".join(lines))
    run.write("trajectories.jsonl", "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in data.episodes))


def cmd_train(run: Run) -> None:
    game = compile_game(run.game())
    try:
        params = SRDQParams(
            gamma=float(run["gamma"]), rho=float(run["rho"]), lam=float(run["lambda"]),
            alpha=float(run["alpha"]), episodes=int(run["episodes"]), seed=run.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    table = train(game, _defender(run, game), params)
    run.write("qtable.json", table.dumps())
    run.write("policy.json", policy_from_qtable(table, params.lam).dumps())


def cmd_fit(run: Run) -> None:
    try:
        data = fitting.parse_dataset(run["data"] or fitting.bundled_dataset_path())
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from exc
    cluster = data if run["cluster"] == "all" else fitting.cluster_by_type(data, run["cluster"], float(run["quantile"]))
    result = fitting.fit_model(
        run["family"], cluster, int(run["budget"]), (float(run["train_frac"]), run.seed),
        int(run["population"]), jobs=run.jobs,
    )
    run.write("fit.json", result.dumps())
    print(json.dumps({"family": result.family, "params": result.params,
                      "test_log_likelihood": result.test_log_likelihood,
                      "uniform_baseline": result.uniform_baseline_test_log_likelihood}, sort_keys=True))


def cmd_evaluate(run: Run) -> None:
    spec = run.game()
    model = parse_model(run["model"], run.seeds())
    report = solvers.model_report(spec, model)
    run.write("report.json", json.dumps(report.__dict__, indent=2, sort_keys=True) + "\n")
    run.write("report.csv", "model_id,game_id,utility_vs_uniform,br_utility\n"
              f"{report.model_id},{report.game_id},{report.utility_vs_uniform!r},{report.br_utility!r}\n")
    print(json.dumps(report.__dict__, sort_keys=True))


def cmd_sweep(run: Run) -> None:
    spec = run.game()
    model = parse_model(run["model"], run.seeds())
    schedule = None
    if run["schedule"]:
        try:
            schedule = [float(x) for x in str(run["schedule"]).split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad schedule: {exc}") from exc
    try:
        result = solvers.sweep_metrics(spec, model, run["trait"], schedule, jobs=run.jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run.write("sweep.csv", result.to_csv())
    run.write("sweep.json", result.dumps())
    print(result.to_csv(), end="")


def cmd_generate(run: Run) -> None:
    doc = dict(run.config.get("generator", {}))
    models = run["model"] or []
    if models:
        doc["models"] = [parse_model(m, run.seeds()).to_dict() for m in models]
    doc.setdefault("models", [
        ModelSpec(SRDQParams(gamma=0.9, rho=rho, lam=3.0), run.seeds()).to_dict() for rho in (0.9, 0.1)
    ])
    try:
        config = generator.GeneratorConfig.from_dict(doc)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad generator config: {exc}") from exc
    result = generator.optimize(config, int(run["population"]), int(run["generations"]), run.seed, run.jobs)
    for path in generator.report(result.trials, run.out, config, run.jobs).values():
        run.artifacts[path.name] = path
    run.write("generator_config.json", json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    best = result.trials[0]
    print(json.dumps({"best_objective": best.objective, "trial": best.index}, sort_keys=True))


def cmd_synth(run: Run) -> None:
    spec = run.game()
    game = compile_game(spec)
    dfn = _defender(run, game)
    try:
        sd3 = tuple(float(x) for x in str(run["sd3"]).split(","))
        if len(sd3) != 3:
            raise ValueError("need three scores")
    except ValueError as exc:
        raise ConfigError(f"bad --sd3 value: {exc}") from exc
    data = fitting.generate_synthetic(
        game, _model_policy(run, game, dfn), dfn, int(run["episodes"]), run.seed, sd3,
        n_participants=int(run["participants"]), game_id=spec.name or "game",
    )
    fitting.write_dataset(data, run.out / "dataset")
    for name in ("profiles.csv", "episodes.jsonl"):
        run.artifacts[f"dataset/{name}"] = run.out / "dataset" / name


COMMANDS = {
    "simulate": (cmd_simulate, {"game": None, "model": "qr:lambda=0", "defender": None, "episodes": 5}),
    "train": (cmd_train, {"game": None, "defender": None, "gamma": 0.9, "rho": 0.5, "lambda": 3.0,
                          "alpha": 1e-3, "episodes": 2000}),
    "fit": (cmd_fit, {"data": None, "family": "qr", "cluster": "all", "quantile": 0.75, "budget": 400,
                      "train_frac": 0.8, "population": 20}),
    "evaluate": (cmd_evaluate, {"game": None, "model": "qr:lambda=0", "seeds": 10}),
    "sweep": (cmd_sweep, {"game": None, "model": "srdq:gamma=0.9,rho=0.5,lambda=3", "trait": "lambda",
                          "schedule": None, "seeds": 10}),
    "generate": (cmd_generate, {"model": None, "population": 20, "generations": 9, "seeds": 10}),
    "synth": (cmd_synth, {"game": None, "model": "qr:lambda=2", "defender": None, "episodes": 500,
                          "participants": 10, "sd3": "3,3,3"}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flipgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--out", help="output directory")

    def cmd(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    p = cmd("simulate", "roll out an attacker model and print trajectories")
    p.add_argument("--game"), p.add_argument("--model"), p.add_argument("--defender")
    p.add_argument("--episodes", type=int)

    p = cmd("train", "train an SRDQ model and write its QTable")
    p.add_argument("--game"), p.add_argument("--defender")
    p.add_argument("--gamma", type=float), p.add_argument("--rho", type=float)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--alpha", type=float), p.add_argument("--episodes", type=int)

    p = cmd("fit", "fit a model family to play data")
    p.add_argument("--data", help="dataset directory (default: bundled synthetic data)")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--cluster", choices=("all", *fitting.SD3_TYPES))
    p.add_argument("--quantile", type=float), p.add_argument("--budget", type=int)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--population", type=int)

    p = cmd("evaluate", "utility vs uniform and BR utility of one model")
    p.add_argument("--game"), p.add_argument("--model"), p.add_argument("--seeds", type=int)

    p = cmd("sweep", "sweep one trait and report metric spreads")
    p.add_argument("--game"), p.add_argument("--model")
    p.add_argument("--trait", choices=tuple(solvers.DEFAULT_GRIDS))
    p.add_argument("--schedule", help="comma-separated grid overriding the default")
    p.add_argument("--seeds", type=int)

    p = cmd("generate", "search for graph games that separate the models")
    p.add_argument("--model", action="append", help="repeat for each model in the set")
    p.add_argument("--population", type=int), p.add_argument("--generations", type=int)
    p.add_argument("--seeds", type=int, help="training seeds per SRDQ model")

    p = cmd("synth", "sample a synthetic dataset from a model")
    p.add_argument("--game"), p.add_argument("--model"), p.add_argument("--defender")
    p.add_argument("--episodes", type=int), p.add_argument("--participants", type=int)
    p.add_argument("--sd3", help="mach,narc,psych scores")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = int(exc.code or 0)
        return _fail("UsageError", "invalid command line", code) if code else 0
    handler, defaults = COMMANDS[args.command]
    try:
        run = Run(args, defaults)
        handler(run)
        run.manifest()
    except (ConfigError, InvalidSpecError, fitting.DatasetError) as exc:
        return _fail(type(exc).__name__, str(exc), 3)
    except Exception as exc:  # noqa: BLE001 - surfaced as a machine-readable line
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
