"""RUL targets turned into box constraints on operating currents and voltage.

A campaign is sliced into voltage levels. For each level a surface predicts
RUL over (charge current, discharge current); a box anchored at the lowest
currents is then grown until its edge touches the RUL target.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cell import CellParams
from .errors import AlreadyDead, Infeasible, ParamError, RankDeficient
from .montecarlo import SamplingSpec, as_table, sample_inputs, simulate_campaign
from .stats import FittedSurface, fit_arrays

logger = logging.getLogger(__name__)

N_LEVELS = 9
GRID_POINTS = 32
SCALE_RTOL = 1e-3
MAX_BISECT = 40


@dataclass(frozen=True)
class RulTarget:
    t_hours: float

    def __post_init__(self):
        if not (self.t_hours > 0 and math.isfinite(self.t_hours)):
            raise ParamError(f"RUL target must be positive and finite, got {self.t_hours}")


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box of admissible operating bounds.

    The box spans ``[i_charge_min, i_charge_max] x [i_discharge_min,
    i_discharge_max]`` in amperes with charge voltage capped at
    ``v_max_bound``. An infeasible region has ``feasible=False`` and zero
    extent.
    """

    i_charge_min: float
    i_charge_max: float
    i_discharge_min: float
    i_discharge_max: float
    v_max_bound: float
    v_min_domain: float
    t_hours: float
    hi: float | None = None
    scale: float = 1.0
    feasible: bool = True

    @property
    def i_length(self):
        return self.i_discharge_max - self.i_discharge_min

    @property
    def i_charge_length(self):
        return self.i_charge_max - self.i_charge_min

    @property
    def v_width(self):
        return max(0.0, self.v_max_bound - self.v_min_domain) if self.feasible else 0.0

    def contains(self, other, tol=1e-12):
        """True when ``other`` lies inside this box (empty boxes are inside everything)."""
        if not other.feasible:
            return True
        if not self.feasible:
            return False
        return (
            other.i_charge_max <= self.i_charge_max + tol
            and other.i_discharge_max <= self.i_discharge_max + tol
            and other.i_charge_min >= self.i_charge_min - tol
            and other.i_discharge_min >= self.i_discharge_min - tol
            and other.v_max_bound <= self.v_max_bound + tol
        )

    @classmethod
    def empty(cls, domain_ch, domain_dis, v_min_domain, t_hours, hi=None):
        return cls(
            i_charge_min=domain_ch[0], i_charge_max=domain_ch[0],
            i_discharge_min=domain_dis[0], i_discharge_max=domain_dis[0],
            v_max_bound=v_min_domain, v_min_domain=v_min_domain,
            t_hours=t_hours, hi=hi, scale=0.0, feasible=False,
        )

    def to_dict(self):
        d = asdict(self)
        d.update(i_length=self.i_length, i_charge_length=self.i_charge_length, v_width=self.v_width)
        return d

    @classmethod
    def from_dict(cls, d):
        fields = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in fields})


@dataclass
class SurfaceFamily:
    """RUL surfaces over (i_charge, i_discharge), one per voltage level.

    ``surfaces[k]`` may be ``None`` when its slab held too few scenarios.
    """

    levels: list
    surfaces: list
    i_charge_range: tuple
    i_discharge_range: tuple
    v_min_domain: float
    hi: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "levels": list(self.levels),
            "surfaces": [None if s is None else s.to_dict() for s in self.surfaces],
            "i_charge_range": list(self.i_charge_range),
            "i_discharge_range": list(self.i_discharge_range),
            "v_min_domain": self.v_min_domain,
            "hi": self.hi,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            levels=[float(v) for v in d["levels"]],
            surfaces=[None if s is None else FittedSurface.from_dict(s) for s in d["surfaces"]],
            i_charge_range=tuple(d["i_charge_range"]),
            i_discharge_range=tuple(d["i_discharge_range"]),
            v_min_domain=float(d["v_min_domain"]),
            hi=d.get("hi"),
            meta=dict(d.get("meta", {})),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def voltage_levels(table, params, n_levels=N_LEVELS):
    """Lower edges and width of the voltage slabs.

    The slabs tile the charge-voltage range reachable at every charge current
    of the campaign, so each slab holds scenarios across the full current
    domain. Falls back to the observed range when that common support is empty.
    """
    smax = table["soc_max"]
    ich = table["i_charge"]
    lo = params.ocv(float(smax.min())) + float(ich.max()) * params.r_eol
    hi = params.ocv(float(smax.max())) + float(ich.min()) * params.r_eol
    if not hi > lo:
        lo, hi = float(table["v_max"].min()), float(table["v_max"].max())
    h = (hi - lo) / n_levels
    return [lo + k * h for k in range(n_levels)], h


def build_surface_family(records, params=None, degree=3, n_levels=N_LEVELS, i_charge_range=None,
                         i_discharge_range=None, hi=None):
    """Fit one ln(RUL) surface per voltage slab.

    The surface for level ``v`` is fitted on scenarios whose charge voltage lies
    in ``[v, v + h]``. Evaluating it as if the bound were ``v`` is conservative
    because RUL falls with charge voltage.
    """
    params = params or CellParams()
    table = as_table(records)
    ich, idis, vmax, y = table["i_charge"], table["i_discharge"], table["v_max"], table["ln_rul"]
    ch = tuple(i_charge_range) if i_charge_range is not None else (float(ich.min()), float(ich.max()))
    dis = tuple(i_discharge_range) if i_discharge_range is not None else (float(idis.min()), float(idis.max()))
    levels, h = voltage_levels(table, params, n_levels)
    surfaces = []
    for k, v in enumerate(levels):
        upper = v + h
        m = (vmax >= v) & (vmax <= upper if k < n_levels - 1 else vmax <= upper + 1e-12)
        try:
            s = fit_arrays(ich[m], idis[m], y[m], degree, ("i_charge", "i_discharge"), "ln_rul", (ch, dis))
        except RankDeficient:
            logger.debug("voltage level %d (%.4f V) has too few scenarios", k, v)
            s = None
        surfaces.append(s)
    return SurfaceFamily(
        levels=levels, surfaces=surfaces, i_charge_range=ch, i_discharge_range=dis,
        v_min_domain=float(table["v_min"].min()), hi=hi,
        meta={"degree": degree, "slab_width": h, "n_records": len(table)},
    )


def _threshold(surface, target, margin):
    base = math.log(target.t_hours) if surface.response == "ln_rul" else target.t_hours
    return base + margin


def feasibility(surface, point, target, margin=0.0):
    """Whether predicted RUL at ``point`` meets ``target``.

    ``margin`` is added to the threshold in the surface's response units.
    Raises :class:`~hirul.errors.OutOfDomain` outside the surface domain.
    """
    return bool(surface.predict(np.asarray(point, dtype=np.float64).reshape(1, 2))[0] >= _threshold(surface, target, margin))


def _unit_grid(n=GRID_POINTS):
    g = np.linspace(0.0, 1.0, n)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _box_points(ch, dis, scale, unit):
    return np.column_stack([
        ch[0] + scale * (ch[1] - ch[0]) * unit[:, 0],
        dis[0] + scale * (dis[1] - dis[0]) * unit[:, 1],
    ])


def box_is_inner(family, box, target, margin_sigmas=0.0, n=GRID_POINTS):
    """Check every point of an ``n x n`` grid over the box against the target."""
    if not box.feasible:
        return True
    k = int(np.argmin(np.abs(np.asarray(family.levels) - box.v_max_bound)))
    surf = family.surfaces[k]
    g = np.linspace(0.0, 1.0, n)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([
        box.i_charge_min + box.i_charge_length * gx.ravel(),
        box.i_discharge_min + box.i_length * gy.ravel(),
    ])
    return bool(np.all(surf.predict(pts) >= _threshold(surf, target, margin_sigmas * surf.residual_rms)))


def build_box(family, target, margin_sigmas=0.0):
    """Largest anchored box meeting ``target``, voltage first, currents second.

    Stage one picks the highest voltage level whose lowest-current corner is
    feasible. Stage two bisects a common scale on both current spans, checking
    a 32 x 32 grid, to relative tolerance 1e-3.

    Parameters
    ----------
    margin_sigmas : float
        Safety margin in multiples of each surface's residual RMS.

    Raises
    ------
    Infeasible
        If no level is feasible even at the lowest currents.
    """
    if not isinstance(target, RulTarget):
        target = RulTarget(float(target))
    ch, dis = family.i_charge_range, family.i_discharge_range
    corner = np.array([[ch[0], dis[0]]])
    unit = _unit_grid()

    chosen = None
    for k in range(len(family.levels) - 1, -1, -1):
        surf = family.surfaces[k]
        if surf is None:
            continue
        thr = _threshold(surf, target, margin_sigmas * surf.residual_rms)
        if surf.predict(corner)[0] >= thr:
            chosen = (family.levels[k], surf, thr)
            break
    if chosen is None:
        raise Infeasible(f"no operating point reaches {target.t_hours} h")
    v_bound, surf, thr = chosen

    def ok(s):
        return bool(np.all(surf.predict(_box_points(ch, dis, s, unit)) >= thr))

    if ok(1.0):
        s = 1.0
    else:
        a, b = 0.0, 1.0
        for _ in range(MAX_BISECT):
            mid = 0.5 * (a + b)
            if ok(mid):
                a = mid
            else:
                b = mid
            if b - a <= SCALE_RTOL * b:
                break
        s = a
    return BoxRegion(
        i_charge_min=ch[0], i_charge_max=ch[0] + s * (ch[1] - ch[0]),
        i_discharge_min=dis[0], i_discharge_max=dis[0] + s * (dis[1] - dis[0]),
        v_max_bound=float(v_bound), v_min_domain=family.v_min_domain,
        t_hours=target.t_hours, hi=family.hi, scale=s, feasible=True,
    )


def build_box_or_empty(family, target, margin_sigmas=0.0):
    """Like :func:`build_box` but returns an empty box instead of raising."""
    try:
        return build_box(family, target, margin_sigmas)
    except Infeasible:
        t = target.t_hours if isinstance(target, RulTarget) else float(target)
        return BoxRegion.empty(family.i_charge_range, family.i_discharge_range, family.v_min_domain, t, family.hi)


def contour_grid(surface, n=64):
    """Regular grid of predicted RUL over the surface domain, for contour plots."""
    (a0, b0), (a1, b1) = surface.domain
    gx, gy = np.meshgrid(np.linspace(a0, b0, n), np.linspace(a1, b1, n), indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[:, 0], pts[:, 1], surface.predict_rul(pts)


def contour_csv(surface, n=64, comment=None):
    x, y, r = contour_grid(surface, n)
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(surface.inputs) + ["predicted_rul_hours"])
    for row in zip(x, y, r):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


@dataclass(frozen=True)
class SweepEntry:
    hi: float
    initial_efc: float
    v_width: float
    i_length: float
    i_charge_length: float
    feasible: bool
    box: BoxRegion


def hi_sweep(params, spec, target, inner_samples=2000, degree=3, margin_sigmas=2.0, threads=1):
    """Box size against health indicator.

    Each of ``spec.n_samples`` scenarios supplies one initial age drawn from
    ``spec.initial_efc_range``. For every age an inner campaign of
    ``inner_samples`` scenarios (same seed, so all ages share operating
    draws) is simulated, surfaces are rebuilt and a box is sized. Ages that
    cannot meet the target yield empty boxes. Entries are sorted by scenario.
    """
    from .cell import health_indicator, state_from_efc

    if not isinstance(target, RulTarget):
        target = RulTarget(float(target))
    ages = sample_inputs(spec, np.arange(spec.n_samples))["initial_efc"]
    out = []
    for efc in ages:
        efc = float(efc)
        hi = health_indicator(state_from_efc(efc, params), params)
        inner = spec.replace(n_samples=inner_samples, initial_efc_range=(efc, efc))
        try:
            table = simulate_campaign(inner, params, threads=threads)
        except AlreadyDead:
            box = BoxRegion.empty(spec.i_charge_range, spec.i_discharge_range, 0.0, target.t_hours, hi)
        else:
            fam = build_surface_family(table, params, degree, i_charge_range=spec.i_charge_range,
                                       i_discharge_range=spec.i_discharge_range, hi=hi)
            box = build_box_or_empty(fam, target, margin_sigmas)
        out.append(SweepEntry(hi, efc, box.v_width, box.i_length if box.feasible else 0.0,
                              box.i_charge_length if box.feasible else 0.0, box.feasible, box))
    return out


SWEEP_COLUMNS = ("hi", "initial_efc", "v_width", "i_length", "i_charge_length", "feasible",
                 "v_max_bound", "i_charge_max", "i_discharge_max")


def sweep_csv(entries, comment=None):
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for e in entries:
        w.writerow([repr(e.hi), repr(e.initial_efc), repr(e.v_width), repr(e.i_length), repr(e.i_charge_length),
                    int(e.feasible), repr(e.box.v_max_bound), repr(e.box.i_charge_max), repr(e.box.i_discharge_max)])
    return buf.getvalue()


def decile_medians(hi, values, n_bins=10):
    """Medians of ``values`` in equal-width HI bins over [0, 1]; empty bins give NaN."""
    hi = np.asarray(hi, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    idx = np.minimum((hi * n_bins).astype(int), n_bins - 1)
    return np.array([np.median(values[idx == b]) if np.any(idx == b) else np.nan for b in range(n_bins)])


def is_monotone_in_bins(medians, rtol=0.05):
    """No bin median exceeds the next non-empty higher bin's median by more than ``rtol``."""
    m = [v for v in medians if not np.isnan(v)]
    return all(a <= b * (1.0 + rtol) + 1e-12 for a, b in zip(m, m[1:]))


@dataclass(frozen=True)
class BatteryConstraints:
    """Pack-level bounds handed to the OPF (kW and per-unit voltage)."""

    p_ch_max_kw: float
    p_disc_max_kw: float
    v_bus_max_pu: float

    def to_dict(self):
        return asdict(self)


def box_to_grid_constraints(box, params, n_cells):
    """Scale a cell-level box to a pack of ``n_cells`` in series.

    An empty box forces the battery idle and leaves the voltage bound open.
    """
    if n_cells < 1:
        raise ParamError("n_cells must be >= 1")
    if not box.feasible:
        return BatteryConstraints(0.0, 0.0, math.inf)
    k = n_cells * params.nominal_voltage / 1000.0
    return BatteryConstraints(
        p_ch_max_kw=k * box.i_charge_max,
        p_disc_max_kw=k * box.i_discharge_max,
        v_bus_max_pu=box.v_max_bound / params.nominal_voltage,
    )


def campaign_family(spec, params, degree=3, threads=1, hi=None):
    """Simulate ``spec`` and fit its surface family over the spec's current ranges."""
    table = simulate_campaign(spec, params, threads=threads)
    fam = build_surface_family(table, params, degree, i_charge_range=spec.i_charge_range,
                               i_discharge_range=spec.i_discharge_range, hi=hi)
    return table, fam


__all__ = [
    "BatteryConstraints", "BoxRegion", "RulTarget", "SamplingSpec", "SurfaceFamily", "SweepEntry",
    "box_is_inner", "box_to_grid_constraints", "build_box", "build_box_or_empty", "build_surface_family",
    "campaign_family", "contour_csv", "contour_grid", "decile_medians", "feasibility", "hi_sweep",
    "is_monotone_in_bins", "sweep_csv", "voltage_levels",
]
