"""Named experiment settings.

``fig2`` is the voltage/RUL correlation campaign, ``fig3`` the surface
campaign over currents and charge voltage, ``fig5`` the health sweep and
``table2`` the 39-bus battery experiment.
"""

from __future__ import annotations

import copy

from .cell import CellParams
from .errors import ParamError
from .montecarlo import SamplingSpec

DEFAULT_SEED = 20240601
_C = CellParams().nominal_capacity

_SAMPLING = {
    "fig2": dict(
        n_samples=500, soc_max_range=(0.6, 1.0), soc_min_range=(0.0, 0.4),
        i_charge_range=(4.3, 4.3), i_discharge_range=(11.7, 11.7), initial_efc_range=(500.0, 500.0),
    ),
    "fig3": dict(
        n_samples=10000, soc_max_range=(0.6, 1.0), soc_min_range=(0.0, 0.0),
        i_charge_range=(1 * _C, 2 * _C), i_discharge_range=(1 * _C, 5 * _C), initial_efc_range=(500.0, 500.0),
    ),
    "fig5": dict(
        n_samples=100, soc_max_range=(0.9, 1.0), soc_min_range=(0.0, 0.0),
        i_charge_range=(1 * _C, 2 * _C), i_discharge_range=(1 * _C, 5 * _C), initial_efc_range=(0.0, 1000.0),
    ),
}

# scenarios per health state when the sweep rebuilds surfaces
FIG5_INNER_SAMPLES = 2000
SURFACE_DEGREE = 3
MARGIN_SIGMAS = 2.0
T_HOURS = 120.0

TABLE2 = {
    "case": "case39",
    "t_hours": T_HOURS,
    "batteries": [
        {"bus": 36, "n_cells": 1500, "initial_efc": 100.0},
        {"bus": 37, "n_cells": 1500, "initial_efc": 500.0},
        {"bus": 38, "n_cells": 1500, "initial_efc": 700.0},
    ],
    # pack rating without health constraints, in C-rate
    "nameplate_c_rate": {"charge": 2.0, "discharge": 5.0},
    "sampling": "fig3",
    "degree": SURFACE_DEGREE,
    "margin_sigmas": MARGIN_SIGMAS,
}


def sampling_preset(name, seed=DEFAULT_SEED, **overrides):
    """:class:`SamplingSpec` for a named campaign."""
    if name not in _SAMPLING:
        raise ParamError(f"unknown preset {name!r}; choose from {sorted(_SAMPLING)}")
    d = dict(_SAMPLING[name])
    d.update(overrides)
    return SamplingSpec(master_seed=seed, **d)


def table2_config(**overrides):
    cfg = copy.deepcopy(TABLE2)
    cfg.update(overrides)
    return cfg


PRESETS = tuple(_SAMPLING)
