import json
import math

import numpy as np
import pytest
from _oracles import ref_legal, ref_step
from hypothesis import given, settings
from hypothesis import strategies as st

from flipgen.game import (
    PASS,
    FlipItSpec,
    GameState,
    IllegalActionError,
    InvalidSpecError,
    Owner,
    TerminalStateError,
    Variant,
    action_label,
    compile_game,
    decode_state,
    dumps_spec,
    initial_state,
    legal_actions,
    load_spec,
    n_state_indices,
    normalize_rewards,
    parse_action,
    save_spec,
    state_index,
    step,
    validate_spec,
)
from flipgen.policy import uniform_policy
from flipgen.solvers import expected_utility_exact

A, D = Owner.ATTACKER, Owner.DEFENDER


def _own(text):
    return tuple(A if c == "A" else D for c in text)


class TestSpec:
    def test_original_fixture_matches_published_rewards(self, original):
        assert original.node_rewards == (10, 10, 4, 4, 10)
        assert original.node_costs == (8, 2, 2, 8, 5)
        assert original.rounds == 5
        assert validate_spec(original).ok

    def test_asymmetric_edges_reported(self):
        spec = FlipItSpec.graph([[0, 1, 0], [0.5, 0, 0], [0, 0, 0]], [0, 1, 1], 0.1, 2)
        assert "edge-costs-symmetric" in validate_spec(spec).violations

    def test_home_base_reward_reported(self):
        spec = FlipItSpec.graph([[0, 1], [1, 0]], [3, 1], 0.1, 2)
        assert validate_spec(spec).violations == ("home-base-reward-zero",)

    @pytest.mark.parametrize(
        "spec, violation",
        [
            (FlipItSpec.original([1, 2], [1], 3), "node-costs-length"),
            (FlipItSpec.original([1], [1], 0), "rounds-positive"),
            (FlipItSpec.original([1, -1], [1, 1], 2), "values-finite-nonnegative"),
            (FlipItSpec.original([1, math.inf], [1, 1], 2), "values-finite-nonnegative"),
            (FlipItSpec.graph([[1, 1], [1, 0]], [0, 1], 0, 2), "edge-costs-zero-diagonal"),
            (FlipItSpec.graph([[0]], [0], 0, 2), "graph-min-nodes"),
            (FlipItSpec.graph([[0, 1]], [0, 1], 0, 2), "edge-costs-shape"),
        ],
    )
    def test_violations(self, spec, violation):
        report = validate_spec(spec)
        assert not report
        assert violation in report.violations

    def test_json_round_trip(self, tmp_path, small):
        path = tmp_path / "g.json"
        save_spec(small, path)
        back = load_spec(path)
        assert back == small and back.name == small.name
        assert json.loads(dumps_spec(small))["variant"] == small.variant.value

    def test_invalid_spec_rejected_by_engine(self):
        bad = FlipItSpec.graph([[0, 1], [1, 0]], [3, 1], 0.1, 2)
        with pytest.raises(InvalidSpecError):
            initial_state(bad)
        with pytest.raises(InvalidSpecError):
            compile_game(bad)


class TestInitialAndLegal:
    def test_initial_states(self, original):
        assert initial_state(original) == GameState(_own("DDDDD"), 0)
        g = FlipItSpec.graph(np.ones((4, 4)) - np.eye(4), [0, 1, 1, 1], 0.5, 3)
        assert initial_state(g) == GameState(_own("ADDD"), 0)

    def test_original_all_defender_has_six_attacker_actions(self, original):
        att, dfn = legal_actions(original, initial_state(original))
        assert att == (PASS, 0, 1, 2, 3, 4)
        assert dfn == (0, 1, 2, 3, 4)

    def test_graph_neighbour_rule(self):
        costs = [[0, 0.1, 0.8, 0.2], [0.1, 0, 0.9, 0.9], [0.8, 0.9, 0, 0.1], [0.2, 0.9, 0.1, 0]]
        spec = FlipItSpec.graph(costs, [0, 1, 1, 1], 0.5, 2)
        att, dfn = legal_actions(spec, initial_state(spec))
        assert att == (PASS, 2)
        assert dfn == (1, 2, 3)

    def test_all_owned_leaves_only_pass(self):
        spec = FlipItSpec.original([1, 1], [1, 1], 3)
        att, _ = legal_actions(spec, GameState(_own("AA"), 1))
        assert att == (PASS,)

    def test_terminal_state_rejected(self, original):
        with pytest.raises(TerminalStateError):
            legal_actions(original, GameState(_own("DDDDD"), 5))


class TestStep:
    def test_successful_attack(self, original):
        out = step(original, initial_state(original), 0, 1)
        assert out.next_state == GameState(_own("ADDDD"), 1)
        assert out.attacker_reward == 2 and out.defender_reward == -2

    def test_blocked_attack_still_costs(self, original):
        out = step(original, initial_state(original), 0, 0)
        assert out.next_state.ownership == _own("DDDDD")
        assert (out.attacker_gain, out.attacker_cost, out.attacker_reward) == (0, 8, -8)

    def test_pass_and_idle_defence(self, original):
        s = GameState(_own("ADDAD"), 2)
        out = step(original, s, PASS, 1)
        assert out.next_state.ownership == s.ownership
        assert out.attacker_cost == 0 and out.attacker_gain == 14

    def test_defence_retakes_node(self, original):
        out = step(original, GameState(_own("ADDDD"), 1), 2, 0)
        assert out.next_state.ownership == _own("DDADD")

    def test_graph_cost_is_cheapest_present_edge(self):
        costs = [[0, 0.6, 0.9], [0.6, 0, 0.7], [0.9, 0.7, 0]]
        spec = FlipItSpec.graph(costs, [0, 1, 1], 0.5, 3)
        out = step(spec, GameState(_own("AAD"), 1), 2, 1)
        assert out.attacker_cost == 0.7

    def test_illegal_actions(self, original):
        s = GameState(_own("ADDDD"), 1)
        with pytest.raises(IllegalActionError):
            step(original, s, 0, 1)
        with pytest.raises(IllegalActionError):
            step(original, s, 1, 7)
        g = FlipItSpec.graph([[0, 1], [1, 0]], [0, 1], 0.5, 2)
        with pytest.raises(IllegalActionError):
            step(g, initial_state(g), PASS, 0)

    def test_matches_reference_on_every_state(self, small):
        for t in range(small.rounds):
            for mask in range(1 << small.n_nodes):
                s = GameState.from_mask(mask, small.n_nodes, t)
                own = "".join("A" if o is A else "D" for o in s.ownership)
                if small.variant is Variant.GRAPH and own[0] != "A":
                    continue
                att, dfn = legal_actions(small, s)
                assert [list(att), list(dfn)] == list(ref_legal(small, own))
                for a in att:
                    for d in dfn:
                        out = step(small, s, a, d)
                        nxt, gain, cost = ref_step(small, own, a, d)
                        assert out.next_state == GameState(_own(nxt), t + 1)
                        assert (out.attacker_gain, out.attacker_cost) == (gain, cost)


@st.composite
def original_games(draw, max_nodes=4):
    n = draw(st.integers(1, max_nodes))
    vals = st.one_of(st.just(0.0), st.floats(1e-3, 10))
    rewards = draw(st.lists(vals, min_size=n, max_size=n))
    costs = draw(st.lists(vals, min_size=n, max_size=n))
    return FlipItSpec.original(rewards, costs, draw(st.integers(1, 3)))


@st.composite
def graph_games(draw, max_nodes=4):
    n = draw(st.integers(2, max_nodes))
    upper = draw(st.lists(st.floats(0, 1), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    costs = np.zeros((n, n))
    costs[np.triu_indices(n, 1)] = upper
    unit = st.one_of(st.just(0.0), st.floats(1e-3, 1))
    rewards = [0.0] + draw(st.lists(unit, min_size=n - 1, max_size=n - 1))
    return FlipItSpec.graph((costs + costs.T).tolist(), rewards, draw(st.floats(0, 1)), draw(st.integers(1, 3)))


any_game = st.one_of(original_games(), graph_games())


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(any_game, st.data())
    def test_random_playout_invariants(self, spec, data):
        s = initial_state(spec)
        while not s.is_terminal(spec):
            att, dfn = legal_actions(spec, s)
            assert att and dfn
            a = data.draw(st.sampled_from(att))
            d = data.draw(st.sampled_from(dfn))
            out = step(spec, s, a, d)
            assert out.attacker_reward == out.attacker_gain - out.attacker_cost
            assert out.defender_reward == -out.attacker_reward
            changed = [i for i in range(spec.n_nodes) if out.next_state.ownership[i] != s.ownership[i]]
            assert len(changed) <= 2
            for i in changed:
                assert (i == a and out.next_state.ownership[i] is A) or (
                    i == d and out.next_state.ownership[i] is D
                )
            if spec.variant is Variant.GRAPH:
                assert out.next_state.ownership[0] is A
            assert step(spec, s, a, d) == out
            s = out.next_state

    @settings(max_examples=40, deadline=None)
    @given(any_game)
    def test_normalization_scales_utility(self, spec):
        if sum(spec.node_rewards) <= 0:
            with pytest.raises(InvalidSpecError):
                normalize_rewards(spec)
            return
        norm = normalize_rewards(spec)
        assert math.isclose(sum(norm.node_rewards), 1.0, abs_tol=1e-12)
        if spec.variant is Variant.GRAPH:
            for i in range(spec.n_nodes):
                for j in range(spec.n_nodes):
                    assert spec.has_edge(i, j) == norm.has_edge(i, j)
        g, gn = compile_game(spec), compile_game(norm)
        u, _ = expected_utility_exact(g, uniform_policy(g, "attacker"), uniform_policy(g, "defender"))
        un, _ = expected_utility_exact(gn, uniform_policy(gn, "attacker"), uniform_policy(gn, "defender"))
        assert un == pytest.approx(u / sum(spec.node_rewards), abs=1e-12, rel=1e-12)

    def test_normalize_original(self, original):
        norm = normalize_rewards(original)
        assert norm.node_rewards == tuple(r / 38 for r in (10, 10, 4, 4, 10))
        assert norm.node_costs == pytest.approx(tuple(c / 38 for c in (8, 2, 2, 8, 5)), rel=1e-15)
        assert normalize_rewards(norm) is norm


class TestIndexing:
    def test_index_space_and_origin(self, original):
        assert n_state_indices(original) == 192
        assert state_index(original, initial_state(original)) == 0

    def test_round_trip_three_nodes(self):
        spec = FlipItSpec.original([1, 1, 1], [1, 1, 1], 3)
        seen = set()
        for idx in range(n_state_indices(spec)):
            s = decode_state(spec, idx)
            assert state_index(spec, s) == idx
            seen.add(s)
        assert len(seen) == 32
        with pytest.raises(ValueError):
            decode_state(spec, 32)

    def test_compiled_reachability(self, original):
        game = compile_game(original)
        assert game.reachable[0] == (0,)
        assert len(game.reachable[1]) == 6
        assert len(game.states()) == sum(len(r) for r in game.reachable[:5])

    def test_action_labels(self):
        for a, role in [(PASS, "attacker"), (3, "attacker"), (0, "defender")]:
            assert parse_action(action_label(a, role)) == a
        assert action_label(2, "defender") == "defend:2"
