"""Behavioral attacker models and automatic game generation for flip-it security games."""

from .game import (
    PASS,
    FlipItSpec,
    Game,
    GameState,
    Owner,
    StepOutcome,
    Variant,
    compile_game,
    initial_state,
    legal_actions,
    load_spec,
    normalize_rewards,
    original_game,
    save_spec,
    step,
    validate_spec,
)
from .models import (
    LKParams,
    ModelSpec,
    QLKParams,
    QRParams,
    lk_policy,
    qlk_policy,
    qr_policy,
)
from .policy import BehavioralPolicy, uniform_policy
from .solvers import (
    MetricReport,
    attacker_best_response,
    defender_best_response,
    evaluate_model,
    expected_utility_exact,
    sweep_metrics,
)
from .srdq import QTable, SRDQParams, policy_from_qtable, train

__version__ = "0.1.0"

__all__ = [
    "PASS",
    "BehavioralPolicy",
    "FlipItSpec",
    "Game",
    "GameState",
    "LKParams",
    "MetricReport",
    "ModelSpec",
    "Owner",
    "QLKParams",
    "QRParams",
    "QTable",
    "SRDQParams",
    "StepOutcome",
    "Variant",
    "attacker_best_response",
    "compile_game",
    "defender_best_response",
    "evaluate_model",
    "expected_utility_exact",
    "initial_state",
    "legal_actions",
    "lk_policy",
    "load_spec",
    "normalize_rewards",
    "original_game",
    "policy_from_qtable",
    "qlk_policy",
    "qr_policy",
    "save_spec",
    "step",
    "sweep_metrics",
    "train",
    "uniform_policy",
    "validate_spec",
]
