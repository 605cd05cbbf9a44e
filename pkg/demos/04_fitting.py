"""Recover a quantal-response attacker from synthetic play data.

Samples 500 episodes from QR(lambda=2) against a uniform defender, fits every
model family by likelihood and compares held-out log-likelihood with the
uniform baseline.
"""

from flipgen.fitting import fit_model, generate_synthetic
from flipgen.game import compile_game, original_game
from flipgen.models import QRParams, qr_policy

game = compile_game(original_game())
data = generate_synthetic(game, qr_policy(game, None, QRParams(2.0)), None, 500, 1, (3.0, 3.0, 3.0), 10, "original")
print(f"{len(data.episodes)} episodes from {len(data.profiles)} participants")

for family, budget in (("qr", 200), ("lk", 20), ("qlk", 100)):
    res = fit_model(family, data, budget=budget, split=(0.8, 1))
    print(
        f"{family:4s} params={res.params}  test log-lik {res.test_log_likelihood:9.2f}"
        f"  (uniform {res.uniform_baseline_test_log_likelihood:9.2f})"
    )
