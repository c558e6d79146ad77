"""Health-informed, RUL-constrained battery dispatch.

Cell aging simulation, Monte Carlo campaigns over operating limits,
correlation and surface analysis, RUL box constraints and an AC optimal
power flow that carries them.
"""

from .cell import (
    CellParams, CellState, OperatingLimits, RulResult, health_indicator, run_half_cycle,
    simulate_to_eol, state_from_efc, terminal_voltage,
)
from .montecarlo import CampaignTable, SamplingSpec, ScenarioRecord, run_campaign, sample_scenario, simulate_campaign
from .stats import CorrelationReport, FittedSurface, correlation_table, evaluate, fit_surface, p_value, pearson
from .region import BatteryConstraints, BoxRegion, RulTarget, box_to_grid_constraints, build_box, feasibility, hi_sweep
from .case import BatteryDevice, NetworkCase, attach_batteries, load_case39, parse_matpower, serialize
from .powerflow import PowerFlowSolution, build_ybus, solve_powerflow
from .opf import OpfProblem, OpfSolution, build_problem, solve_opf, verify_rul

__version__ = "0.1.0"
