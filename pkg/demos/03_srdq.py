"""Risk sensitivity in the distributional Q-learning attacker.

A one-round bandit: attacking node 0 gains 4 but costs 3, attacking node 1
gains 1 for free. A gain-seeking attacker (rho near 1) prefers node 0, a
cost-averse attacker (rho near 0) prefers node 1.
"""

from flipgen.game import FlipItSpec, compile_game
from flipgen.policy import DEFENDER, deterministic_policy
from flipgen.srdq import SRDQParams, pt_value, train

spec = FlipItSpec.original([4.0, 1.0, 0.0], [3.0, 0.0, 0.0], 1, name="bandit")
game = compile_game(spec)
defender = deterministic_policy(game, DEFENDER, lambda _s, _acts: 2)
s0 = game.initial_index

for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
    table = train(game, defender, SRDQParams(gamma=0.9, rho=rho, lam=1.0, seed=0))
    node0, node1 = (pt_value(table.distribution(s0, a)) for a in (0, 1))
    pick = "node 0" if node0 > node1 else "node 1"
    print(f"rho={rho:4.2f}  value(node 0)={node0:6.3f}  value(node 1)={node1:6.3f}  prefers {pick}")
