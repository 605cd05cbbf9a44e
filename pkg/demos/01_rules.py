"""Play a few hand-picked moves of the original flip-it game.

Shows the ownership rules: an attack on a defended node is blocked but still
paid for, and an owned node keeps paying its reward every round.
"""

from flipgen.game import action_label, initial_state, legal_actions, original_game, step

spec = original_game()
print(f"{spec.name}: {spec.n_nodes} nodes, {spec.rounds} rounds")
print("rewards", spec.node_rewards, "costs", spec.node_costs)

state = initial_state(spec)
plan = [(0, 0), (0, 1), (2, 1), (-1, 3)]  # (attacker, defender) per round
total = 0.0
for a, d in plan:
    att, dfn = legal_actions(spec, state)
    assert a in att and d in dfn
    out = step(spec, state, a, d)
    total += out.attacker_reward
    board = "".join("A" if o else "D" for o in out.next_state.ownership)
    print(
        f"round {state.round}: attacker {action_label(a, 'attacker'):9s} defender {action_label(d, 'defender'):9s}"
        f" -> board {board}  gain {out.attacker_gain:5.1f} cost {out.attacker_cost:5.1f}"
    )
    state = out.next_state
print(f"attacker total after {len(plan)} rounds: {total:.1f}")
