"""Compare bounded-rationality attackers on the original game.

For each model: expected utility against a uniform defender and against the
defender's best response. Rationality rises with lambda and with level k.
"""

from flipgen.game import compile_game, original_game
from flipgen.models import LKParams, ModelSpec, QLKParams, QRParams
from flipgen.solvers import model_report

game = compile_game(original_game())
models = [
    ModelSpec(QRParams(0.0)),
    ModelSpec(QRParams(0.5)),
    ModelSpec(QRParams(5.0)),
    ModelSpec(LKParams(1)),
    ModelSpec(LKParams(2)),
    ModelSpec(QLKParams(2, 1.0)),
]
print(f"{'model':28s} {'vs uniform':>11s} {'vs best response':>17s}")
for m in models:
    rep = model_report(game, m)
    print(f"{rep.model_id:28s} {rep.utility_vs_uniform:11.3f} {rep.br_utility:17.3f}")
