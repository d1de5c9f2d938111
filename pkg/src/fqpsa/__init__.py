"""Joint power and bandwidth scheduling for mixed real-time and data traffic."""

from .dualsolve import (AllocationResult, DataUserState, DualPair, RealTimeDemand,
                        ResourceBudget, SolverError, UserShare, check_feasible,
                        degrade_infeasible, f_a, f_a_inv, solve)
from .simkit import MetricsReport, ScenarioConfig, run_scenario, sweep

__version__ = "0.1.0"
