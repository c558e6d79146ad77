"""Seeded Monte Carlo campaigns over cell operating limits.

Every scenario draws its inputs from its own substream, keyed by
``(master_seed, scenario_id)``, so any subset of scenarios can be run in any
order, on any number of threads, and still reproduce the serial result.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _kernels
from .cell import CellParams, OperatingLimits, observed_voltages, resistance_for_capacity
from .errors import AlreadyDead, NonTerminating, ParamError

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "scenario_id", "soc_min", "soc_max", "i_charge_A", "i_discharge_A",
    "initial_efc", "hi_initial", "rul_hours", "v_max", "v_min",
)

# draw order inside one scenario's substream
_DIMENSIONS = ("soc_max", "soc_min", "i_charge", "i_discharge", "initial_efc")


def _as_range(value, name):
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ParamError(f"{name} must be a [low, high] pair, got {value!r}") from None
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ParamError(f"{name} must be ordered and finite, got [{lo}, {hi}]")
    return (lo, hi)


@dataclass(frozen=True)
class SamplingSpec:
    """Uniform sampling ranges for a campaign. Currents are in amperes."""

    n_samples: int
    soc_max_range: tuple
    soc_min_range: tuple
    i_charge_range: tuple
    i_discharge_range: tuple
    initial_efc_range: tuple = (0.0, 0.0)
    master_seed: int = 0

    def __post_init__(self):
        for name in ("soc_max_range", "soc_min_range", "i_charge_range", "i_discharge_range", "initial_efc_range"):
            object.__setattr__(self, name, _as_range(getattr(self, name), name))
        if isinstance(self.n_samples, bool) or int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ParamError(f"n_samples must be a positive integer, got {self.n_samples!r}")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise ParamError("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", seed)
        for name in ("soc_max_range", "soc_min_range"):
            lo, hi = getattr(self, name)
            if lo < 0.0 or hi > 1.0:
                raise ParamError(f"{name} must lie inside [0, 1]")
        if not self.soc_min_range[1] < self.soc_max_range[0]:
            raise ParamError("soc_min_range must lie entirely below soc_max_range")
        if self.i_charge_range[0] <= 0 or self.i_discharge_range[0] <= 0:
            raise ParamError("current ranges must be positive")
        if self.initial_efc_range[0] < 0:
            raise ParamError("initial_efc_range must be non-negative")

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d, params=None):
        """Build from a config mapping.

        ``current_unit`` may be ``"A"`` (default) or ``"C"``; C-rates are
        converted with ``params.nominal_capacity``.
        """
        d = dict(d)
        unit = d.pop("current_unit", "A")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ParamError(f"unknown sampling option(s): {sorted(unknown)}")
        if unit == "C":
            params = params or CellParams()
            for key in ("i_charge_range", "i_discharge_range"):
                if key in d:
                    d[key] = [params.c_rate_to_amps(float(x)) for x in d[key]]
        elif unit != "A":
            raise ParamError(f"current_unit must be 'A' or 'C', got {unit!r}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ParamError(str(exc)) from None


@dataclass(frozen=True)
class ScenarioRecord:
    scenario_id: int
    limits: OperatingLimits
    initial_efc: float
    rul_hours: float
    v_max: float
    v_min: float
    hi_initial: float


def _substream(master_seed, scenario_id):
    return np.random.default_rng(np.random.SeedSequence([master_seed, scenario_id]))


def sample_inputs(spec, ids):
    """Draw inputs for the scenario ids; returns a dict of arrays keyed by dimension."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= spec.n_samples):
        raise IndexError(f"scenario id out of range [0, {spec.n_samples})")
    u = np.empty((ids.size, len(_DIMENSIONS)))
    for row, sid in enumerate(ids):
        u[row] = _substream(spec.master_seed, int(sid)).random(len(_DIMENSIONS))
    out = {}
    for col, dim in enumerate(_DIMENSIONS):
        lo, hi = getattr(spec, dim + "_range")
        out[dim] = lo + (hi - lo) * u[:, col] if hi > lo else np.full(ids.size, lo)
    return out


def sample_scenario(spec, scenario_id):
    """Inputs of one scenario: ``(OperatingLimits, initial_efc)``."""
    if not 0 <= scenario_id < spec.n_samples:
        raise IndexError(f"scenario_id {scenario_id} out of range [0, {spec.n_samples})")
    s = sample_inputs(spec, [scenario_id])
    limits = OperatingLimits(
        soc_min=float(s["soc_min"][0]), soc_max=float(s["soc_max"][0]),
        i_charge=float(s["i_charge"][0]), i_discharge=float(s["i_discharge"][0]),
    )
    return limits, float(s["initial_efc"][0])


class CampaignTable:
    """Column-oriented campaign results (one numpy array per CSV column)."""

    def __init__(self, columns):
        missing = [c for c in CSV_COLUMNS if c not in columns]
        if missing:
            raise ParamError(f"campaign table missing column(s): {missing}")
        self.columns = {c: np.asarray(columns[c]) for c in CSV_COLUMNS}
        self.columns["scenario_id"] = self.columns["scenario_id"].astype(np.int64)

    def __len__(self):
        return len(self.columns["scenario_id"])

    def __getitem__(self, name):
        aliases = {"i_charge": "i_charge_A", "i_discharge": "i_discharge_A"}
        if name == "delta_v":
            return self.columns["v_max"] - self.columns["v_min"]
        if name == "ln_rul":
            return np.log(self.columns["rul_hours"])
        if name == "rul":
            return self.columns["rul_hours"]
        return self.columns[aliases.get(name, name)]

    def subset(self, mask):
        return CampaignTable({c: v[mask] for c, v in self.columns.items()})

    def to_records(self):
        c = self.columns
        return [
            ScenarioRecord(
                scenario_id=int(c["scenario_id"][k]),
                limits=OperatingLimits(
                    soc_min=float(c["soc_min"][k]), soc_max=float(c["soc_max"][k]),
                    i_charge=float(c["i_charge_A"][k]), i_discharge=float(c["i_discharge_A"][k]),
                    v_max=float(c["v_max"][k]), v_min=float(c["v_min"][k]),
                ),
                initial_efc=float(c["initial_efc"][k]),
                rul_hours=float(c["rul_hours"][k]),
                v_max=float(c["v_max"][k]),
                v_min=float(c["v_min"][k]),
                hi_initial=float(c["hi_initial"][k]),
            )
            for k in range(len(self))
        ]

    @classmethod
    def from_records(cls, records):
        cols = {c: [] for c in CSV_COLUMNS}
        for r in records:
            cols["scenario_id"].append(r.scenario_id)
            cols["soc_min"].append(r.limits.soc_min)
            cols["soc_max"].append(r.limits.soc_max)
            cols["i_charge_A"].append(r.limits.i_charge)
            cols["i_discharge_A"].append(r.limits.i_discharge)
            cols["initial_efc"].append(r.initial_efc)
            cols["hi_initial"].append(r.hi_initial)
            cols["rul_hours"].append(r.rul_hours)
            cols["v_max"].append(r.v_max)
            cols["v_min"].append(r.v_min)
        return cls({k: np.array(v, dtype=np.int64 if k == "scenario_id" else np.float64) for k, v in cols.items()})

    def to_csv(self, comment=None):
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k in range(len(self)):
            row = [int(self.columns["scenario_id"][k])]
            row += [repr(float(self.columns[c][k])) for c in CSV_COLUMNS[1:]]
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines:
            raise ParamError("campaign CSV is empty")
        reader = csv.reader(lines)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ParamError(f"unexpected campaign CSV header: {header}")
        rows = list(reader)
        cols = {c: [] for c in CSV_COLUMNS}
        for n, row in enumerate(rows, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ParamError(f"campaign CSV row {n} has {len(row)} fields")
            try:
                cols["scenario_id"].append(int(row[0]))
                for c, v in zip(CSV_COLUMNS[1:], row[1:]):
                    cols[c].append(float(v))
            except ValueError as exc:
                raise ParamError(f"campaign CSV row {n}: {exc}") from None
        return cls({k: np.array(v, dtype=np.int64 if k == "scenario_id" else np.float64) for k, v in cols.items()})


def as_table(data):
    if isinstance(data, CampaignTable):
        return data
    return CampaignTable.from_records(list(data))


def _initial_states(efc, params):
    """Vectorized :func:`hirul.cell.state_from_efc` (capacity, resistance)."""
    efc = np.asarray(efc, dtype=np.float64)
    if np.any(efc < 0) or np.any(efc > params.rated_life_efc):
        raise ParamError(f"initial efc must lie in [0, {params.rated_life_efc}]")
    cap = params.nominal_capacity * (1.0 - (1.0 - params.eol_capacity_fraction) * efc / params.rated_life_efc)
    res = np.array([resistance_for_capacity(c, params) for c in cap]) if cap.size else cap
    return cap, res


def _run_chunk(spec, params, ids, p):
    s = sample_inputs(spec, ids)
    cap, res0 = _initial_states(s["initial_efc"], params)
    n = len(ids)
    out_f, out_i = _kernels.simulate_batch(
        np.zeros(n), cap, s["initial_efc"], s["soc_min"], s["soc_max"], s["i_charge"], s["i_discharge"], p
    )
    hi0 = np.clip((params.r_eol - res0) / (params.r_eol - params.r_bol), 0.0, 1.0)
    return s, out_f, out_i, hi0


def simulate_campaign(spec, params, threads=1, chunk_size=256):
    """Run every scenario and return a :class:`CampaignTable` sorted by id.

    Raises
    ------
    AlreadyDead, NonTerminating
        With ``scenario_id`` of the first offending scenario in the message.
    """
    ids = np.arange(spec.n_samples, dtype=np.int64)
    chunks = [ids[k:k + chunk_size] for k in range(0, ids.size, chunk_size)]
    p = params.kernel_vector()
    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(lambda c: _run_chunk(spec, params, c, p), chunks))
    else:
        parts = [_run_chunk(spec, params, c, p) for c in chunks]

    s = {k: np.concatenate([pt[0][k] for pt in parts]) for k in _DIMENSIONS}
    out_f = np.concatenate([pt[1] for pt in parts])
    out_i = np.concatenate([pt[2] for pt in parts])
    hi0 = np.concatenate([pt[3] for pt in parts])

    bad = np.flatnonzero(out_i[:, 0] != _kernels.STATUS_OK)
    if bad.size:
        sid = int(ids[bad[0]])
        if out_i[bad[0], 0] == _kernels.STATUS_DEAD:
            raise AlreadyDead(f"scenario {sid}: cell starts at end of life")
        raise NonTerminating(f"scenario {sid}: no end of life within the throughput guard", scenario_id=sid)

    res_final = out_f[:, 2]
    v_max, v_min = observed_voltages(params, s["soc_min"], s["soc_max"], s["i_charge"], s["i_discharge"], res_final)
    logger.debug("campaign of %d scenarios done", spec.n_samples)
    return CampaignTable({
        "scenario_id": ids,
        "soc_min": s["soc_min"],
        "soc_max": s["soc_max"],
        "i_charge_A": s["i_charge"],
        "i_discharge_A": s["i_discharge"],
        "initial_efc": s["initial_efc"],
        "hi_initial": hi0,
        "rul_hours": out_f[:, 4],
        "v_max": v_max,
        "v_min": v_min,
    })


def run_campaign(spec, params, threads=1):
    """Run the campaign and return one :class:`ScenarioRecord` per scenario, sorted by id."""
    return simulate_campaign(spec, params, threads=threads).to_records()


def load_spec(path, params=None):
    with open(path) as fh:
        return SamplingSpec.from_dict(json.load(fh), params=params)
