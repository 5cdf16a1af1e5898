"""Simulation and exact-verification lab for stochastic well-structured transition systems."""

from .config import ConfigurationError, CountConfig, PathConfig, SeqConfig, weight_of
from .models import ModelKind, OracleKind, OracleOut, Reaction, oracle_eval
from .core import (Mode, Outcome, ProtocolSpec, Region, StopRule, TrialRecord,
                   UpwardSet, in_upward, run_trial, trial_seed)
from .wqo import build_reach, error_region, exact_hitting, pred_star

__all__ = [
    "ConfigurationError", "CountConfig", "PathConfig", "SeqConfig", "weight_of",
    "ModelKind", "OracleKind", "OracleOut", "Reaction", "oracle_eval",
    "Mode", "Outcome", "ProtocolSpec", "Region", "StopRule", "TrialRecord",
    "UpwardSet", "in_upward", "run_trial", "trial_seed",
    "build_reach", "error_region", "exact_hitting", "pred_star",
]
