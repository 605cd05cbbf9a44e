"""Search for graph games that separate two risk attitudes.

Optimizes a 5-node, 5-round graph game so that best-response utilities of a
gain-seeking and a cost-averse attacker differ as much as possible, then
compares with the original game under the same normalization.
"""

from flipgen.generator import (
    GeneratorConfig,
    game_reports,
    objective_value,
    optimize,
    original_reference,
)
from flipgen.models import ModelSpec
from flipgen.srdq import SRDQParams

models = (
    ModelSpec(SRDQParams(gamma=0.9, rho=0.9, lam=3.0)),
    ModelSpec(SRDQParams(gamma=0.9, rho=0.1, lam=3.0)),
)
config = GeneratorConfig(models=models, n_nodes=5, rounds=5)
result = optimize(config, population_size=10, generations=4, seed=0)
reference = objective_value(game_reports(original_reference(config), config))

best = result.trials[0]
print(f"{len(result.trials)} trials; best BR-utility difference {best.objective:.4f} (original game {reference:.4f})")
for rep in best.reports:
    print(f"  {rep.model_id}: BR utility {rep.br_utility:.4f}")
spec = result.best_spec
print("node rewards", [round(r, 3) for r in spec.node_rewards])
print(f"edges (cost >= threshold {spec.threshold:.3f}):")
for i in range(spec.n_nodes):
    for j in range(i + 1, spec.n_nodes):
        if spec.has_edge(i, j):
            print(f"  {i} - {j}  cost {spec.edge_costs[i][j]:.3f}")
