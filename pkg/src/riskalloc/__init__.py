"""Risk-constrained nonconvex resource allocation: dual solver and duality-gap certification."""

from .certify import (closure_convexity_probe, gap_study, hyperplane_check,
                      semi_infinite_check)
from .config import build_instance, load_config
from .dual import (Multipliers, dual_value, lagrangian, maximize_over_policy, maximize_over_x,
                   recover_primal, solve_dual)
from .errors import *  # noqa: F401,F403
from .generate import generate
from .mixing import blackwell_halve, mix_policies, mixture_risk_deficit
from .model import (PolicyClass, RCPInstance, constraint_slack, feasible_value, make_instance)
from .probability import ScenarioSet, duplicate, expectation, make_scenario_set, refine
from .risk import (RiskSpec, envelope_gamma, lower_evaluate, primal_cvar, upper_evaluate,
                   worst_case_density)
from .services import (AwgnRate, Callback, InterferenceRate, LinearService, OutageIndicator,
                       TableService)
from .utilities import Utility

__version__ = "0.1.0"
