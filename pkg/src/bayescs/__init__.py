"""Bayes-assisted anytime-valid confidence sequences for bounded means."""
from .betting import PredictiveDistribution, mixture, solve_lambda, solve_lambda_grid
from .core import BettingConfig, ConfidenceInterval, WealthLedger, candidate_grid, process_observation
from .lucb import LucbConfig, lucb_run
from .oracle import OraclePredictor, TrueLaw, parse_law, wasserstein1
from .ppi import PpiConfig, PpiDataset
from .predictives import (
    BetaPrior,
    EmpiricalPredictor,
    EtelConfig,
    EtelPredictor,
    MdpPredictor,
    ParametricPredictor,
)
from .sequence import ConfidenceSequence
from .simharness import Scenario, make_predictor, run_scenario

__all__ = [
    "BetaPrior",
    "BettingConfig",
    "ConfidenceInterval",
    "ConfidenceSequence",
    "EmpiricalPredictor",
    "EtelConfig",
    "EtelPredictor",
    "LucbConfig",
    "MdpPredictor",
    "OraclePredictor",
    "ParametricPredictor",
    "PpiConfig",
    "PpiDataset",
    "PredictiveDistribution",
    "Scenario",
    "TrueLaw",
    "WealthLedger",
    "candidate_grid",
    "lucb_run",
    "make_predictor",
    "mixture",
    "parse_law",
    "process_observation",
    "run_scenario",
    "solve_lambda",
    "solve_lambda_grid",
    "wasserstein1",
]
