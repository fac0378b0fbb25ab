"""Control-flow analysis workbench: k-CFA and m-CFA for CPS, k-CFA for Featherweight Java."""

from .convert import cps_convert
from .cps import CpsProgram, free_vars, parse_cps
from .engine import Budget
from .kcfa import explore_naive, explore_widened
from .mcfa import Policy, explore_widened_mcfa
from .fj.kcfa import explore_widened_fj
from .fj.syntax import parse_fj
from .report import FlowReport, count_envs_for_lambda, inlinable_calls

__all__ = [
    "Budget",
    "CpsProgram",
    "FlowReport",
    "Policy",
    "count_envs_for_lambda",
    "cps_convert",
    "explore_naive",
    "explore_widened",
    "explore_widened_fj",
    "explore_widened_mcfa",
    "free_vars",
    "inlinable_calls",
    "parse_cps",
    "parse_fj",
]

__version__ = "0.1.0"
