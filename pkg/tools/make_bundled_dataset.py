"""Regenerate the bundled 10-participant synthetic dataset.

Each participant gets an SD3 profile and plays 20 episodes of the original
game against a uniform defender with a model loosely matched to that profile.
"""

from pathlib import Path

from flipgen.fitting import bundled_dataset_path, generate_synthetic, merge, write_dataset
from flipgen.game import compile_game, original_game
from flipgen.models import ModelSpec, QLKParams, QRParams
from flipgen.srdq import SRDQParams

PARTICIPANTS = [
    # (mach, narc, psych), model
    ((4.6, 2.9, 2.1), SRDQParams(gamma=0.9, rho=0.5, lam=0.5, episodes=2000)),
    ((4.2, 3.1, 2.5), SRDQParams(gamma=0.8, rho=0.5, lam=0.5, episodes=2000)),
    ((2.4, 4.5, 2.2), SRDQParams(gamma=0.5, rho=0.8, lam=0.5, episodes=2000)),
    ((2.8, 4.1, 2.9), SRDQParams(gamma=0.6, rho=0.7, lam=0.5, episodes=2000)),
    ((2.2, 2.6, 4.4), QLKParams(k=2, lam=0.3)),
    ((3.0, 2.4, 4.0), QLKParams(k=1, lam=0.3)),
    ((1.8, 2.0, 1.6), QRParams(lam=0.1)),
    ((2.6, 2.2, 2.0), QRParams(lam=0.2)),
    ((3.2, 3.0, 3.1), QRParams(lam=0.05)),
    ((2.0, 3.4, 1.9), QRParams(lam=0.0)),
]


def main(out: Path = bundled_dataset_path()) -> None:
    game = compile_game(original_game())
    parts = []
    for i, (sd3, params) in enumerate(PARTICIPANTS):
        policy = ModelSpec(params, seeds=(i,)).policies(game)[0]
        parts.append(
            generate_synthetic(game, policy, None, 20, 1000 + i, sd3, n_participants=1,
                               game_id="original", prefix=f"s{i:02d}")
        )
    write_dataset(merge(parts), out)


if __name__ == "__main__":
    main()
