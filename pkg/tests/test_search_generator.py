import csv
import io
import json

import numpy as np
import pytest
from conftest import one_node
from hypothesis import given, settings
from hypothesis import strategies as st

from flipgen.game import load_spec
from flipgen.generator import (
    GeneratorConfig,
    decode_genome,
    evaluate_genome,
    game_reports,
    genome_space,
    objective_value,
    optimize,
    report,
    trials_csv,
)
from flipgen.models import LKParams, ModelSpec, QRParams
from flipgen.search import Dim, SearchSpace, population_search, ranked

QR_PAIR = (ModelSpec(QRParams(0.0)), ModelSpec(QRParams(5.0)))


def _config(n_nodes=3, rounds=2, models=QR_PAIR, **kw):
    return GeneratorConfig(models=models, n_nodes=n_nodes, rounds=rounds, **kw)


def _genome(edges, rewards, threshold):
    return np.array([*edges, *rewards, threshold], dtype=float)


class TestSearchSpace:
    def test_sampling_in_bounds(self):
        space = SearchSpace((Dim("a", 0, 1), Dim("b", 0.01, 20, "log"), Dim("k", 1, 3, "int")))
        rng = np.random.default_rng(0)
        xs = np.array([space.sample(rng) for _ in range(500)])
        assert all(space.contains(x) for x in xs)
        assert set(xs[:, 2]) == {1.0, 2.0, 3.0}
        assert np.median(np.log(xs[:, 1])) == pytest.approx(np.log(np.sqrt(0.2)), abs=0.3)

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            Dim("x", 1, 0)
        with pytest.raises(ValueError):
            Dim("x", 0, 1, "log")
        with pytest.raises(ValueError):
            Dim("x", 0, 1, "cubic")

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1), st.lists(st.floats(0, 1), min_size=4, max_size=4))
    def test_explore_stays_in_bounds(self, seed, x):
        space = SearchSpace((Dim("a", 0, 1), Dim("b", 0.2, 0.9), Dim("c", 0, 0.5), Dim("d", 0, 1)))
        x = np.array([space.dims[i].clamp(v) for i, v in enumerate(x)])
        out, ops = space.explore(x, np.random.default_rng(seed))
        assert space.contains(out)
        assert len(ops.split()) == 4


def _quadratic(x):
    return -float(np.sum((x - 0.3) ** 2)), None


class TestPopulationSearch:
    SPACE = SearchSpace(tuple(Dim(f"x{i}", 0, 1) for i in range(3)))

    def test_exact_budget_and_generations(self):
        trials = population_search(_quadratic, self.SPACE, 47, population_size=10, seed=1)
        assert len(trials) == 47
        assert [t.index for t in trials] == list(range(47))
        assert trials[-1].generation == 4 and sum(t.generation == 4 for t in trials) == 7

    def test_deterministic(self):
        a = population_search(_quadratic, self.SPACE, 60, 8, seed=5)
        b = population_search(_quadratic, self.SPACE, 60, 8, seed=5)
        assert [(t.value, t.parent, t.perturbation) for t in a] == [(t.value, t.parent, t.perturbation) for t in b]

    def test_improves_on_a_smooth_objective(self):
        trials = population_search(_quadratic, self.SPACE, 400, 20, seed=2)
        first = max(t.value for t in trials if t.generation == 0)
        assert ranked(trials)[0].value > first

    def test_constant_objective_never_evolves(self):
        trials = population_search(lambda x: (1.0, None), self.SPACE, 40, 8, seed=3)
        gen0 = [t.params for t in trials if t.generation == 0]
        for t in trials:
            np.testing.assert_array_equal(t.params, gen0[t.member])
        assert all(t.perturbation in ("init", "kept") for t in trials)

    def test_exploit_copies_from_better_members(self):
        trials = population_search(_quadratic, self.SPACE, 100, 8, seed=4)
        for t in trials:
            if t.perturbation not in ("init", "kept"):
                donor = trials[t.parent]
                same_slot = [u for u in trials if u.generation == donor.generation and u.member == t.member]
                assert donor.value > same_slot[0].value

    def test_cache_reuses_survivors(self):
        calls = []

        def counted(x):
            calls.append(1)
            return _quadratic(x)

        trials = population_search(counted, self.SPACE, 40, 8, seed=0)
        assert len(trials) == 40 and len(calls) < 40

    def test_parallel_matches_serial(self):
        a = population_search(_quadratic, self.SPACE, 24, 6, seed=9, jobs=2)
        b = population_search(_quadratic, self.SPACE, 24, 6, seed=9)
        assert [t.value for t in a] == [t.value for t in b]


class TestDecode:
    def test_threshold_rule(self):
        cfg = _config()
        d = decode_genome(_genome([0.05, 0.5, 0.5], [0.5, 0.5], 0.1), cfg)
        assert not d.spec.has_edge(0, 1) and d.spec.has_edge(0, 2)
        assert not d.degenerate

    def test_zero_threshold_is_complete(self):
        d = decode_genome(_genome([0.0, 0.3, 0.9], [0.2, 0.2], 0.0), _config())
        assert all(d.spec.has_edge(i, j) for i in range(3) for j in range(3) if i != j)

    def test_isolated_home_base_is_degenerate(self):
        d = decode_genome(_genome([0.05, 0.05, 0.9], [0.5, 0.5], 0.1), _config())
        assert d.degenerate
        assert evaluate_genome(_genome([0.05, 0.05, 0.9], [0.5, 0.5], 0.1), _config()).objective == float("-inf")

    def test_normalization(self):
        d = decode_genome(_genome([0.4, 0.6, 0.8], [0.3, 0.1], 0.2), _config())
        assert sum(d.spec.node_rewards) == pytest.approx(1.0)
        assert d.spec.threshold == pytest.approx(0.5)
        raw = decode_genome(_genome([0.4, 0.6, 0.8], [0.3, 0.1], 0.2), _config(normalize=False))
        assert raw.spec.node_rewards == (0.0, 0.3, 0.1)

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            decode_genome(_genome([1.5, 0.6, 0.8], [0.3, 0.1], 0.2), _config())
        with pytest.raises(ValueError):
            decode_genome(np.zeros(3), _config())


class TestObjective:
    def test_identical_models_score_zero(self):
        cfg = _config(models=(ModelSpec(QRParams(0.0)), ModelSpec(QRParams(0.0))))
        t = evaluate_genome(_genome([0.4, 0.6, 0.8], [0.3, 0.1], 0.2), cfg)
        assert t.objective == 0.0

    def test_one_node_hand_value(self):
        cfg = _config(models=(ModelSpec(QRParams(0.0)), ModelSpec(QRParams(1e6))))
        reports = game_reports(one_node(), cfg)
        # uniform: (-2 + 0) / 2; near-argmax passes: 0
        assert objective_value(reports) == pytest.approx(1.0, abs=1e-9)

    def test_symmetric_in_model_order(self):
        g = _genome([0.4, 0.6, 0.8], [0.3, 0.1], 0.2)
        models = (ModelSpec(QRParams(0.0)), ModelSpec(LKParams(1)), ModelSpec(QRParams(2.0)))
        a = evaluate_genome(g, _config(models=models)).objective
        b = evaluate_genome(g, _config(models=models[::-1])).objective
        assert a == b

    def test_sweep_objective(self):
        cfg = _config(models=(ModelSpec(QRParams(1.0)),), objective="trait_sweep_spread", sweep_trait="lambda")
        t = evaluate_genome(_genome([0.4, 0.6, 0.8], [0.3, 0.1], 0.2), cfg)
        assert len(t.reports) == 8 and t.objective >= 0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            _config(models=(ModelSpec(QRParams(0.0)),))
        with pytest.raises(ValueError):
            _config(objective="max_entropy")
        cfg = _config()
        assert GeneratorConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


class TestOptimize:
    def test_generation_zero_only(self):
        res = optimize(_config(), population_size=4, generations=0, seed=1)
        assert len(res.trials) == 4 and {t.generation for t in res.trials} == {0}

    def test_trial_log(self):
        cfg = _config()
        res = optimize(cfg, population_size=6, generations=3, seed=2)
        assert len(res.trials) == 24
        space = genome_space(cfg)
        by_index = sorted(res.trials, key=lambda t: t.index)
        running = np.maximum.accumulate([t.objective for t in by_index])
        assert np.all(np.diff(running) >= 0)
        for t in res.trials:
            assert space.contains(t.genome)
            if t.reports:
                assert objective_value(t.reports) == pytest.approx(t.objective, abs=1e-9)
        assert res.best_spec == res.trials[0].spec
        assert res.trials[0].objective == max(t.objective for t in res.trials)

    def test_rejects_tiny_population(self):
        with pytest.raises(ValueError):
            optimize(_config(), population_size=1)

    def test_report_files(self, tmp_path):
        cfg = _config(n_nodes=3, rounds=2)
        res = optimize(cfg, population_size=4, generations=1, seed=3)
        paths = report(res.trials, tmp_path / "a", cfg)
        rows = list(csv.DictReader(io.StringIO(paths["trials"].read_text())))
        assert len(rows) == 8
        summary = list(csv.DictReader(io.StringIO(paths["summary"].read_text())))
        assert [r["trait"] for r in summary] == ["gamma", "lambda", "rho"]
        assert list(summary[0])[1:] == [
            "original_utility_diff",
            "original_br_diff",
            "optimized_utility_diff",
            "optimized_br_diff",
        ]
        assert load_spec(paths["best_game"]) == res.best_spec
        again = report(optimize(cfg, population_size=4, generations=1, seed=3).trials, tmp_path / "b", cfg)
        for key in paths:
            assert paths[key].read_bytes() == again[key].read_bytes()

    def test_trials_csv_marks_degenerate(self):
        cfg = _config()
        t = evaluate_genome(_genome([0.05, 0.05, 0.9], [0.5, 0.5], 0.1), cfg)
        row = next(csv.DictReader(io.StringIO(trials_csv([t], cfg))))
        assert row["degenerate"] == "1" and row["objective"] == "-inf"
