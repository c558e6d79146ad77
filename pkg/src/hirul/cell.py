"""Single LiFePO4 cell under constant-current cycling.

The model is event based: each half-cycle moves the state of charge from one
window bound to the other in closed form, then applies one capacity-fade step.
Capacity fade per half-cycle is proportional to the half-cycle's equivalent
full cycle throughput, scaled by depth-of-discharge, C-rate and mean-SOC
stress factors that all equal one at the reference condition (1C, full depth,
mean SOC 0.5). Internal resistance is a linear image of capacity loss, so the
health indicator is a linear image of state of health.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import AlreadyDead, NonTerminating, ParamError

DEFAULT_OCV_SOC = tuple(round(0.1 * k, 1) for k in range(11))
# LFP-like: steep below 20 % SOC, flat plateau 3.20-3.35 V up to 90 %, knee to full.
DEFAULT_OCV_VOLTAGE = (2.80, 3.10, 3.20, 3.22, 3.24, 3.26, 3.28, 3.30, 3.32, 3.35, 3.60)

CHARGE = "charge"
DISCHARGE = "discharge"

# JSON schema documentation for CellParams files (field -> unit).
PARAM_UNITS = {
    "nominal_capacity": "Ah",
    "nominal_voltage": "V",
    "ocv_soc": "fraction [0, 1], strictly increasing",
    "ocv_voltage": "V, strictly increasing",
    "r_bol": "ohm",
    "r_eol": "ohm",
    "cutoff_voltage": "V",
    "max_cell_voltage": "V",
    "eol_capacity_fraction": "fraction",
    "rated_life_efc": "equivalent full cycles",
    "dod_exponent": "dimensionless",
    "rate_coefficient": "1/C-rate",
    "soc_coefficient": "dimensionless",
}


@dataclass(frozen=True)
class CellParams:
    """Electrical and aging parameters of one cell.

    Defaults describe a 2.3 Ah / 3.3 V LFP cell; 1500 of them in series hold
    about 11.4 kWh.
    """

    nominal_capacity: float = 2.3
    nominal_voltage: float = 3.3
    ocv_soc: tuple = DEFAULT_OCV_SOC
    ocv_voltage: tuple = DEFAULT_OCV_VOLTAGE
    r_bol: float = 0.010
    r_eol: float = 0.020
    cutoff_voltage: float = 2.0
    max_cell_voltage: float = 3.65
    eol_capacity_fraction: float = 0.8
    rated_life_efc: float = 1000.0
    dod_exponent: float = 0.5
    rate_coefficient: float = 0.55
    soc_coefficient: float = 0.45

    def __post_init__(self):
        object.__setattr__(self, "ocv_soc", tuple(float(s) for s in self.ocv_soc))
        object.__setattr__(self, "ocv_voltage", tuple(float(v) for v in self.ocv_voltage))
        soc = np.asarray(self.ocv_soc)
        ocv = np.asarray(self.ocv_voltage)
        if soc.size < 2 or soc.size != ocv.size:
            raise ParamError("ocv_soc and ocv_voltage must have the same length >= 2")
        if soc[0] != 0.0 or soc[-1] != 1.0 or np.any(np.diff(soc) <= 0):
            raise ParamError("ocv_soc must increase strictly from 0 to 1")
        if np.any(np.diff(ocv) <= 0):
            raise ParamError("ocv curve must be strictly increasing in SOC")
        if ocv[0] < self.cutoff_voltage or ocv[-1] > self.max_cell_voltage:
            raise ParamError("ocv curve must stay within [cutoff_voltage, max_cell_voltage]")
        if not 0.0 < self.r_bol < self.r_eol:
            raise ParamError("need 0 < r_bol < r_eol")
        if not 0.0 < self.eol_capacity_fraction < 1.0:
            raise ParamError("eol_capacity_fraction must lie in (0, 1)")
        if self.nominal_capacity <= 0 or self.nominal_voltage <= 0 or self.rated_life_efc <= 0:
            raise ParamError("nominal_capacity, nominal_voltage and rated_life_efc must be positive")
        if abs(self.soc_coefficient) >= 2.0:
            raise ParamError("|soc_coefficient| must be < 2 so the SOC stress factor stays positive")

    def ocv(self, soc):
        """Open-circuit voltage, linear interpolation in the OCV table."""
        out = np.interp(soc, self.ocv_soc, self.ocv_voltage)
        return float(out) if np.ndim(out) == 0 else out

    def soc_from_ocv(self, voltage):
        """Inverse of :meth:`ocv`, clipped to [0, 1]."""
        out = np.interp(voltage, self.ocv_voltage, self.ocv_soc)
        return float(out) if np.ndim(out) == 0 else out

    def c_rate_to_amps(self, c_rate):
        return c_rate * self.nominal_capacity

    def kernel_vector(self):
        p = np.empty(_kernels.N_PARAMS)
        p[_kernels.P_CNOM] = self.nominal_capacity
        p[_kernels.P_RBOL] = self.r_bol
        p[_kernels.P_REOL] = self.r_eol
        p[_kernels.P_EOLFRAC] = self.eol_capacity_fraction
        p[_kernels.P_RATED] = self.rated_life_efc
        p[_kernels.P_KRATE] = self.rate_coefficient
        p[_kernels.P_KSOC] = self.soc_coefficient
        p[_kernels.P_DODEXP] = self.dod_exponent
        return p

    def to_dict(self):
        d = asdict(self)
        d["ocv_soc"] = list(self.ocv_soc)
        d["ocv_voltage"] = list(self.ocv_voltage)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ParamError(f"unknown cell parameter(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class CellState:
    soc: float
    capacity: float
    resistance: float
    efc: float = 0.0
    elapsed: float = 0.0

    def capacity_fraction(self, params):
        return self.capacity / params.nominal_capacity


@dataclass(frozen=True)
class OperatingLimits:
    """SOC window and constant currents (positive magnitudes, amperes).

    ``v_max``/``v_min`` are the terminal voltages reached at the window edges
    and are filled in by :meth:`with_voltages`.
    """

    soc_min: float
    soc_max: float
    i_charge: float
    i_discharge: float
    v_max: float | None = None
    v_min: float | None = None

    def validate(self):
        if not (0.0 <= self.soc_min < self.soc_max <= 1.0):
            raise ParamError(f"need 0 <= soc_min < soc_max <= 1, got [{self.soc_min}, {self.soc_max}]")
        if not (self.i_charge > 0 and self.i_discharge > 0):
            raise ParamError("charge and discharge currents must be positive")
        if self.v_max is not None and self.v_min is not None and not self.v_min < self.v_max:
            raise ParamError("v_min must be below v_max")
        return self

    def with_voltages(self, params, resistance=None):
        """Attach terminal-voltage bounds at the window edges for ``resistance`` (default R_EOL)."""
        r = params.r_eol if resistance is None else resistance
        v_max = params.ocv(self.soc_max) + self.i_charge * r
        v_min = max(params.cutoff_voltage, params.ocv(self.soc_min) - self.i_discharge * r)
        return replace(self, v_max=v_max, v_min=v_min)


@dataclass(frozen=True)
class RulResult:
    rul_hours: float
    v_max_observed: float
    v_min_observed: float
    final_state: CellState
    n_half_cycles: int = field(default=0, compare=False)


def fresh_state(params, soc=0.0):
    return CellState(soc=soc, capacity=params.nominal_capacity, resistance=params.r_bol)


def terminal_voltage(state, params, current):
    """Terminal voltage for a signed current (positive = charging)."""
    return params.ocv(state.soc) + current * state.resistance


def resistance_for_capacity(capacity, params):
    return _kernels.resistance_from_capacity(float(capacity), params.kernel_vector())


def run_half_cycle(state, params, limits, direction):
    """Move the SOC to the window bound in ``direction`` and apply one fade step."""
    limits.validate()
    if direction == CHARGE:
        target, current = limits.soc_max, limits.i_charge
    elif direction == DISCHARGE:
        target, current = limits.soc_min, limits.i_discharge
    else:
        raise ParamError(f"direction must be {CHARGE!r} or {DISCHARGE!r}, got {direction!r}")
    soc, cap, res, efc, elapsed = _kernels.half_cycle(
        float(state.soc), float(state.capacity), float(state.efc), float(state.elapsed),
        float(target), float(current), params.kernel_vector(),
    )
    return CellState(soc=soc, capacity=cap, resistance=res, efc=efc, elapsed=elapsed)


def observed_voltages(params, soc_min, soc_max, i_charge, i_discharge, resistance):
    """Window-edge terminal voltages; vectorized over numpy inputs.

    The upper value is the voltage at ``soc_max`` while charging, the lower one
    the voltage at ``soc_min`` while discharging, floored at the cut-off.
    """
    v_max = np.interp(soc_max, params.ocv_soc, params.ocv_voltage) + i_charge * resistance
    v_min = np.maximum(
        params.cutoff_voltage,
        np.interp(soc_min, params.ocv_soc, params.ocv_voltage) - i_discharge * resistance,
    )
    return v_max, v_min


def simulate_to_eol(state, params, limits):
    """Cycle the cell inside ``limits`` until remaining capacity reaches end of life.

    Starts by charging unless the SOC is already at or above ``soc_max``.
    RUL is the accumulated cycling time in hours.

    Raises
    ------
    AlreadyDead
        If the cell starts at or below the end-of-life capacity.
    NonTerminating
        If throughput exceeds ten times the rated life.
    """
    limits.validate()
    if state.capacity / params.nominal_capacity <= params.eol_capacity_fraction:
        raise AlreadyDead(
            f"capacity fraction {state.capacity / params.nominal_capacity:.6g} is already "
            f"at or below end of life ({params.eol_capacity_fraction})"
        )
    out_f, out_i = _kernels.simulate_batch(
        [state.soc], [state.capacity], [state.efc],
        [limits.soc_min], [limits.soc_max], [limits.i_charge], [limits.i_discharge],
        params.kernel_vector(),
    )
    status = out_i[0, 0]
    if status == _kernels.STATUS_NONTERMINATING:
        raise NonTerminating(f"no end of life after {out_f[0, 3]:.1f} equivalent full cycles")
    soc, cap, res, efc, elapsed = (float(x) for x in out_f[0])
    final = CellState(soc=soc, capacity=cap, resistance=res, efc=efc, elapsed=state.elapsed + elapsed)
    v_max, v_min = observed_voltages(params, limits.soc_min, limits.soc_max, limits.i_charge, limits.i_discharge, res)
    return RulResult(
        rul_hours=elapsed,
        v_max_observed=float(v_max),
        v_min_observed=float(v_min),
        final_state=final,
        n_half_cycles=int(out_i[0, 1]),
    )


def health_indicator(state, params):
    """Resistance-based health indicator: 1 at beginning of life, 0 at end of life."""
    if params.r_eol <= params.r_bol:
        raise ParamError("r_eol must exceed r_bol")
    hi = (params.r_eol - state.resistance) / (params.r_eol - params.r_bol)
    return min(1.0, max(0.0, hi))


def state_from_efc(efc, params):
    """State reached by a fresh cell after ``efc`` reference cycles (1C, full depth).

    At the reference condition every stress factor is one, so capacity falls
    linearly with throughput and the result is exact, not integrated.
    The returned cell sits at SOC 0 with a zeroed clock.
    """
    if not 0.0 <= efc <= params.rated_life_efc:
        raise ParamError(f"efc must lie in [0, {params.rated_life_efc}], got {efc}")
    loss_frac = (1.0 - params.eol_capacity_fraction) * efc / params.rated_life_efc
    cap = params.nominal_capacity * (1.0 - loss_frac)
    return CellState(soc=0.0, capacity=cap, resistance=resistance_for_capacity(cap, params), efc=float(efc))


def efc_from_hi(hi, params):
    """Reference-cycling age that yields health indicator ``hi``."""
    if not 0.0 <= hi <= 1.0:
        raise ParamError(f"hi must lie in [0, 1], got {hi}")
    return (1.0 - hi) * params.rated_life_efc


def soc_for_voltage(voltage, current, params, resistance=None, bounds=(0.0, 1.0)):
    """SOC at which charging at ``current`` reaches terminal ``voltage``.

    Uses the end-of-life resistance by default, matching how the campaign
    records its voltage bounds. Result is clipped to ``bounds``.
    """
    r = params.r_eol if resistance is None else resistance
    soc = params.soc_from_ocv(np.asarray(voltage) - np.asarray(current) * r)
    out = np.clip(soc, bounds[0], bounds[1])
    return float(out) if np.ndim(out) == 0 else out
