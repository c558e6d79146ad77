"""Two-case 39-bus battery experiment: conventional OPF against health-constrained OPF."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .case import BatteryDevice, load_case, load_case39
from .cell import CellParams, health_indicator, state_from_efc
from .errors import ParamError
from .opf import CASE1, CASE2, build_problem, comparison_rows, solve_opf, verify_rul
from .presets import DEFAULT_SEED, sampling_preset
from .region import (
    BatteryConstraints, RulTarget, box_to_grid_constraints, build_box_or_empty, build_surface_family,
)
from .montecarlo import simulate_campaign

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    devices: list
    boxes: list
    solutions: dict
    rul: dict
    rows: list
    t_hours: float
    families: list = field(default_factory=list, repr=False)


def _network(spec):
    if spec in (None, "case39"):
        return load_case39()
    return load_case(Path(spec))


def size_batteries(cfg, params=None, seed=DEFAULT_SEED, threads=1):
    """Devices with nameplate and box-derived bounds for every configured battery.

    Returns ``(devices, boxes, families)``.
    """
    params = params or CellParams()
    target = RulTarget(float(cfg["t_hours"]))
    rate = cfg.get("nameplate_c_rate", {"charge": 2.0, "discharge": 5.0})
    devices, boxes, families = [], [], []
    for b in cfg["batteries"]:
        try:
            bus, n_cells, efc = int(b["bus"]), int(b["n_cells"]), float(b["initial_efc"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParamError(f"bad battery entry {b!r}: {exc}") from None
        hi = health_indicator(state_from_efc(efc, params), params)
        spec = sampling_preset(cfg.get("sampling", "fig3"), seed, initial_efc_range=(efc, efc))
        table = simulate_campaign(spec, params, threads=threads)
        fam = build_surface_family(table, params, int(cfg.get("degree", 3)),
                                   i_charge_range=spec.i_charge_range, i_discharge_range=spec.i_discharge_range, hi=hi)
        box = build_box_or_empty(fam, target, float(cfg.get("margin_sigmas", 2.0)))
        k = n_cells * params.nominal_voltage / 1000.0
        nameplate = BatteryConstraints(
            p_ch_max_kw=k * params.c_rate_to_amps(rate["charge"]),
            p_disc_max_kw=k * params.c_rate_to_amps(rate["discharge"]),
            v_bus_max_pu=float("inf"),
        )
        devices.append(BatteryDevice(bus=bus, n_cells=n_cells, initial_efc=efc, hi=hi,
                                     constraints=box_to_grid_constraints(box, params, n_cells),
                                     nameplate=nameplate, name=f"bess{bus}"))
        boxes.append(box)
        families.append(fam)
        logger.info("bus %d: HI %.3f, box scale %.4f", bus, hi, box.scale)
    return devices, boxes, families


def run_experiment(cfg=None, params=None, seed=DEFAULT_SEED, threads=1, modes=(CASE1, CASE2)):
    """Size the batteries, solve the requested OPF cases and check realized RUL."""
    from .presets import table2_config

    cfg = cfg or table2_config()
    params = params or CellParams()
    case = _network(cfg.get("case"))
    devices, boxes, families = size_batteries(cfg, params, seed, threads)
    sampling = sampling_preset(cfg.get("sampling", "fig3"), seed)
    solutions, rul = {}, {}
    for mode in modes:
        sol = solve_opf(build_problem(case, devices, mode))
        solutions[mode] = sol
        rul[mode] = verify_rul(sol, devices, params, soc_max_range=sampling.soc_max_range)
    rows = []
    if CASE1 in solutions and CASE2 in solutions:
        rows = comparison_rows(solutions[CASE1], solutions[CASE2], devices, rul[CASE1], rul[CASE2])
    return ExperimentResult(devices, boxes, solutions, rul, rows, float(cfg["t_hours"]), families)
