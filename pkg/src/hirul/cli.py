"""Command-line front end.

Every run writes ``manifest.json`` to the output directory before any other
file; CSV outputs carry a ``# manifest: <hash>`` comment line.
Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import errors
from .cell import CellParams, OperatingLimits, state_from_efc, simulate_to_eol, health_indicator
from .montecarlo import CampaignTable, SamplingSpec, simulate_campaign
from .presets import DEFAULT_SEED, FIG5_INNER_SAMPLES, MARGIN_SIGMAS, PRESETS, SURFACE_DEGREE, sampling_preset, table2_config

logger = logging.getLogger("hirul")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

CONFIG_ERRORS = (
    errors.ParamError, errors.ParseError, errors.SchemaError, errors.ValidationError,
    errors.MissingConstraints, errors.DegenerateInput, errors.UnknownBus, json.JSONDecodeError,
    FileNotFoundError, IsADirectoryError, KeyError, TypeError, ValueError,
)


class ConfigError(Exception):
    pass


def _tool_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_json(path):
    if path is None:
        return {}
    with open(path) as fh:
        d = json.load(fh)
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return d


def _params(cfg):
    return CellParams.from_dict(cfg["params"]) if "params" in cfg else CellParams()


class Run:
    """Output directory plus manifest bookkeeping for one subcommand."""

    def __init__(self, args, inputs):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        hashes = {name: _sha256(p) for name, p in inputs.items() if p is not None}
        options = {k: v for k, v in sorted(vars(args).items())
                   if k not in ("func", "out", "threads", "verbose") and not callable(v)}
        core = {
            "subcommand": args.command,
            "config": str(args.config) if args.config else None,
            "seed": args.seed,
            "tool_version": _tool_version(),
            "input_hashes": hashes,
            "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()},
        }
        self.hash = hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]
        manifest = dict(core, output_dir=str(self.out), manifest_hash=self.hash)
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @property
    def comment(self):
        return f"manifest: {self.hash}"

    def write(self, name, text):
        path = self.out / name
        path.write_text(text)
        logger.info("wrote %s", path)
        return path

    def write_json(self, name, obj):
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite(x):
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------- subcommands

def cmd_cycle_sim(args):
    """Simulate one cell to end of life.

    Config keys: ``soc_min``, ``soc_max``, ``i_charge``, ``i_discharge``
    (amperes, or C-rates with ``"current_unit": "C"``), ``initial_efc`` and
    optional ``params``.
    """
    cfg = _load_json(args.config)
    params = _params(cfg)
    unit = cfg.get("current_unit", "A")
    scale = params.nominal_capacity if unit == "C" else 1.0
    if unit not in ("A", "C"):
        raise ConfigError("current_unit must be 'A' or 'C'")
    limits = OperatingLimits(
        soc_min=float(cfg.get("soc_min", 0.0)), soc_max=float(cfg.get("soc_max", 1.0)),
        i_charge=float(cfg.get("i_charge", 1.0)) * scale, i_discharge=float(cfg.get("i_discharge", 1.0)) * scale,
    ).validate()
    efc = float(cfg.get("initial_efc", 0.0))
    if "initial_capacity" in cfg:
        from .cell import CellState, resistance_for_capacity
        cap = float(cfg["initial_capacity"])
        state = CellState(soc=limits.soc_min, capacity=cap, resistance=resistance_for_capacity(cap, params), efc=efc)
    else:
        state = state_from_efc(efc, params)
        state = type(state)(soc=limits.soc_min, capacity=state.capacity, resistance=state.resistance, efc=state.efc)
    run = Run(args, {"config": args.config})
    res = simulate_to_eol(state, params, limits)
    fs = res.final_state
    run.write_json("rul.json", {
        "rul_hours": res.rul_hours,
        "v_max_observed": res.v_max_observed,
        "v_min_observed": res.v_min_observed,
        "n_half_cycles": res.n_half_cycles,
        "initial_hi": health_indicator(state, params),
        "final_state": {"soc": fs.soc, "capacity": fs.capacity, "resistance": fs.resistance, "efc": fs.efc},
        "efc_cycled": fs.efc - state.efc,
        "manifest_hash": run.hash,
    })
    print(f"RUL {res.rul_hours:.6g} h, {fs.efc - state.efc:.6g} EFC cycled")
    return EXIT_OK


def _sampling_from_args(args, cfg, params):
    if args.preset:
        spec = sampling_preset(args.preset, args.seed)
    elif "sampling" in cfg:
        spec = SamplingSpec.from_dict(dict(cfg["sampling"], master_seed=args.seed), params=params)
    else:
        raise ConfigError("give --preset or a config with a 'sampling' section")
    if args.n_samples is not None:
        spec = SamplingSpec.from_dict(dict(spec.to_dict(), n_samples=args.n_samples))
    return spec


def cmd_mc(args):
    cfg = _load_json(args.config)
    params = _params(cfg)
    spec = _sampling_from_args(args, cfg, params)
    run = Run(args, {"config": args.config})
    table = simulate_campaign(spec, params, threads=args.threads)
    run.write("campaign.csv", table.to_csv(run.comment))
    print(f"{len(table)} scenarios")
    return EXIT_OK


def cmd_analyze(args):
    from .region import build_surface_family
    from .stats import correlation_csv, correlation_table, fit_surface

    cfg = _load_json(args.config)
    params = _params(cfg)
    table = CampaignTable.from_csv(Path(args.campaign).read_text())
    if len(table) < 3:
        raise ConfigError(f"campaign has {len(table)} rows, need at least 3")
    run = Run(args, {"config": args.config, "campaign": args.campaign})
    reports = correlation_table(table)
    run.write("correlation.csv", correlation_csv(reports, run.comment))
    inputs, response = args.inputs, args.response
    if inputs is None:
        # current-resolved campaigns get ln(RUL) over (V_max, I_dis); fixed-current ones RUL over voltages
        varied = np.ptp(table["i_discharge"]) > 0
        inputs = ["v_max", "i_discharge"] if varied else ["v_max", "v_min"]
        response = response or ("ln_rul" if varied else "rul")
    surf = fit_surface(table, inputs, response or "ln_rul", args.degree)
    run.write("surface.json", surf.to_json() + "\n")
    if np.ptp(table["i_charge"]) > 0 and np.ptp(table["i_discharge"]) > 0:
        fam = build_surface_family(table, params, SURFACE_DEGREE)
        run.write("family.json", fam.to_json() + "\n")
    for r in reports:
        print(f"{r.variable}: r={r.pearson_r:+.4f} p={r.p_value:.3g} n={r.n}")
    return EXIT_OK


def cmd_box(args):
    from .region import SurfaceFamily, RulTarget, box_to_grid_constraints, build_box_or_empty, campaign_family, contour_csv
    from .cell import efc_from_hi

    cfg = _load_json(args.config)
    params = _params(cfg)
    target = RulTarget(args.t_hours)
    if args.family:
        fam = SurfaceFamily.from_json(Path(args.family).read_text())
        run = Run(args, {"config": args.config, "family": args.family})
    else:
        if args.hi is None and args.efc is None:
            raise ConfigError("give --family, --hi or --efc")
        efc = efc_from_hi(args.hi, params) if args.efc is None else args.efc
        hi = health_indicator(state_from_efc(efc, params), params)
        spec = sampling_preset("fig3", args.seed, initial_efc_range=(efc, efc))
        if args.n_samples is not None:
            spec = spec.replace(n_samples=args.n_samples)
        run = Run(args, {"config": args.config})
        _, fam = campaign_family(spec, params, SURFACE_DEGREE, threads=args.threads, hi=hi)
        run.write("family.json", fam.to_json() + "\n")
    box = build_box_or_empty(fam, target, args.margin)
    out = box.to_dict()
    out["grid_constraints"] = box_to_grid_constraints(box, params, args.n_cells).to_dict() if box.feasible else None
    out["status"] = "feasible" if box.feasible else "infeasible"
    out["manifest_hash"] = run.hash
    run.write_json("box.json", out)
    k = max(range(len(fam.levels)), key=lambda j: (fam.surfaces[j] is not None, -abs(fam.levels[j] - box.v_max_bound)))
    if fam.surfaces[k] is not None:
        run.write("contour.csv", contour_csv(fam.surfaces[k], comment=run.comment))
    if box.feasible:
        print(f"box: I_ch <= {box.i_charge_max:.4f} A, I_dis <= {box.i_discharge_max:.4f} A, V_max <= {box.v_max_bound:.4f} V")
    else:
        print(f"infeasible: no operating point reaches {target.t_hours} h")
    return EXIT_OK


def cmd_hi_sweep(args):
    from .region import RulTarget, hi_sweep, sweep_csv

    cfg = _load_json(args.config)
    params = _params(cfg)
    spec = sampling_preset("fig5", args.seed)
    if args.n_samples is not None:
        spec = spec.replace(n_samples=args.n_samples)
    run = Run(args, {"config": args.config})
    entries = hi_sweep(params, spec, RulTarget(args.t_hours), args.inner_samples, SURFACE_DEGREE,
                       args.margin, threads=args.threads)
    run.write("sweep.csv", sweep_csv(entries, run.comment))
    print(f"{len(entries)} health states, {sum(e.feasible for e in entries)} feasible")
    return EXIT_OK


def cmd_opf(args):
    from .case import BatteryDevice, load_case, load_case39
    from .experiment import size_batteries
    from .opf import CASE1, CASE2, build_problem, comparison_csv, comparison_rows, solve_opf, verify_rul
    from .region import BatteryConstraints

    cfg = table2_config(**_load_json(args.config).get("experiment", {})) if args.config else table2_config()
    params = _params(_load_json(args.config))
    case = load_case(args.case) if args.case else load_case39()
    modes = [CASE1, CASE2] if args.mode == "both" else [args.mode]
    run = Run(args, {"config": args.config, "case": args.case})
    if cfg.get("size_batteries", True):
        devices, _, _ = size_batteries(cfg, params, args.seed, args.threads)
    else:
        devices = []
        for b in cfg["batteries"]:
            cons = b.get("constraints")
            plate = b.get("nameplate")
            efc = float(b.get("initial_efc", 0.0))
            devices.append(BatteryDevice(
                bus=int(b["bus"]), n_cells=int(b.get("n_cells", 1500)), initial_efc=efc,
                hi=health_indicator(state_from_efc(efc, params), params),
                constraints=BatteryConstraints(**cons) if cons else None,
                nameplate=BatteryConstraints(**plate) if plate else None,
            ))
    sols, ruls = {}, {}
    soc_range = sampling_preset(cfg.get("sampling", "fig3"), args.seed).soc_max_range
    for mode in modes:
        sol = solve_opf(build_problem(case, devices, mode))
        sols[mode], ruls[mode] = sol, verify_rul(sol, devices, params, soc_max_range=soc_range)
        d = sol.to_dict()
        d["realized_rul_hours"] = [_finite(r) for r in ruls[mode]]
        d["batteries"] = [dev.to_dict() for dev in devices]
        d["manifest_hash"] = run.hash
        run.write_json(f"solution_{mode}.json", d)
        run.write(f"bus_{mode}.csv", sol.bus_csv(run.comment))
        run.write(f"gen_{mode}.csv", sol.gen_csv(run.comment))
        flag = "" if sol.converged else " (NOT converged)"
        print(f"{mode}: cost {sol.objective:.4f} $/h{flag}; RUL " + ", ".join(f"{r:.1f}" for r in ruls[mode]))
    if len(modes) == 2:
        rows = comparison_rows(sols[CASE1], sols[CASE2], devices, ruls[CASE1], ruls[CASE2])
        run.write("comparison.csv", comparison_csv(rows, run.comment))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for campaigns")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hirul", description="Health-informed RUL-constrained battery dispatch toolkit.",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("cycle-sim", parents=[common], help="simulate one cell to end of life")
    s.set_defaults(func=cmd_cycle_sim)

    s = sub.add_parser("mc", parents=[common], help="run a Monte Carlo campaign")
    s.add_argument("--preset", choices=PRESETS)
    s.add_argument("--n-samples", type=int)
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("analyze", parents=[common], help="correlations and surface fits of a campaign")
    s.add_argument("campaign", type=Path, help="campaign CSV")
    s.add_argument("--inputs", nargs=2, metavar=("X0", "X1"), help="surface inputs (default picks by campaign)")
    s.add_argument("--response", choices=["ln_rul", "rul"])
    s.add_argument("--degree", type=int, default=2)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("box", parents=[common], help="size the box region for an RUL target")
    s.add_argument("--family", type=Path, help="surface family JSON from 'analyze' or 'box'")
    s.add_argument("--hi", type=float, help="health indicator; rebuilds surfaces at that age")
    s.add_argument("--efc", type=float, help="initial equivalent full cycles instead of --hi")
    s.add_argument("--t-hours", type=float, default=120.0)
    s.add_argument("--margin", type=float, default=MARGIN_SIGMAS, help="safety margin in residual RMS units")
    s.add_argument("--n-cells", type=int, default=1500)
    s.add_argument("--n-samples", type=int)
    s.set_defaults(func=cmd_box)

    s = sub.add_parser("hi-sweep", parents=[common], help="box size against health indicator")
    s.add_argument("--t-hours", type=float, default=120.0)
    s.add_argument("--n-samples", type=int)
    s.add_argument("--inner-samples", type=int, default=FIG5_INNER_SAMPLES)
    s.add_argument("--margin", type=float, default=MARGIN_SIGMAS)
    s.set_defaults(func=cmd_hi_sweep)

    s = sub.add_parser("opf", parents=[common], help="two-case OPF with batteries")
    s.add_argument("--case", type=Path, help="MATPOWER case file (default: bundled case39)")
    s.add_argument("--mode", choices=["case1", "case2", "both"], default="both")
    s.set_defaults(func=cmd_opf)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except errors.HirulError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
