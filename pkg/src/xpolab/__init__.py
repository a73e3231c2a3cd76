"""Desk-scale laboratory for KL-regularised preference RL on deterministic contextual MDPs.

Exact soft dynamic programming, the DPO / XPO objective family, Bradley-Terry
preference simulation, online training loops and a diagnostics suite.
"""

from .dcmdp import DCMDP, TabularPolicy, Trajectory, make_linear_dcmdp, make_token_mdp
from .errors import (
    EnumerationCapError,
    InadmissibleTrajectoryError,
    MinimizerError,
    ValidationError,
    XPOLabError,
)
from .kernels import BACKEND
from .objective import ObjectiveConfig, dpo_loss, minimize, xpo_objective
from .policy import FinitePolicyClass, LogLinearClass, LogLinearPolicy
from .preference import PreferenceDataset, bt_prob, label_pair
from .softdp import j_beta, kl_regret, solve_soft_dp
from .trainer import alpha_schedule, run_iterative_dpo, run_offline_dpo, run_online_dpo, run_xpo

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DCMDP", "EnumerationCapError", "FinitePolicyClass", "InadmissibleTrajectoryError",
    "LogLinearClass", "LogLinearPolicy", "MinimizerError", "ObjectiveConfig", "PreferenceDataset",
    "TabularPolicy", "Trajectory", "ValidationError", "XPOLabError", "alpha_schedule", "bt_prob",
    "dpo_loss", "j_beta", "kl_regret", "label_pair", "make_linear_dcmdp", "make_token_mdp", "minimize",
    "run_iterative_dpo", "run_offline_dpo", "run_online_dpo", "run_xpo", "solve_soft_dp", "xpo_objective",
]
