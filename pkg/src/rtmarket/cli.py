"""Command-line front end with one subcommand per workflow."""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import re
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, dp
from .core import DemandProfile, MarketParams, Trajectory
from .dynamics import Model, SimulationConfig, simulate

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_DIVERGED = 2
EXIT_VERIFICATION_FAILED = 3

MAX_GRID_POINTS = 1_000_000

FLOAT_KEYS = ("alpha", "beta", "gamma", "rho", "d", "mu", "amplitude", "lambda0", "lambda1", "epsilon")
CONFIG_KEYS = FLOAT_KEYS + ("model", "demand", "horizon", "emit")
TRAJECTORY_HEADER = ["k", "lambda", "u", "d", "x"]


class InputError(ValueError):
    """Bad user input; reported on stderr with exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_INPUT, f"{self.prog}: error: {message}\n")


# --- configuration --------------------------------------------------------------


def read_config(path) -> dict:
    """Flat ``key = value`` file; a section header is optional and ignored.

    Returns {key: (raw string, line number)}.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from exc
    lines = text.splitlines()
    first = next((ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    offset = 0
    if not first.startswith("["):
        text = "[run]\n" + text
        offset = 1
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.DuplicateOptionError as exc:
        raise InputError(f"{path}: line {exc.lineno - offset}: field '{exc.option}' given twice") from exc
    except configparser.ParsingError as exc:
        where = ", ".join(f"line {lineno - offset}: {line.strip()}" for lineno, line in exc.errors)
        raise InputError(f"{path}: cannot parse {where}") from exc
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from exc
    key_lines = {}
    for number, line in enumerate(lines, start=1):
        match = re.match(r"\s*([^\s=:#;\[]+)\s*[=:]", line)
        if match:
            key_lines.setdefault(match.group(1).lower(), number)
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            line = key_lines.get(key)
            if key not in CONFIG_KEYS:
                raise InputError(f"{path}: line {line}: unknown field '{key}'")
            values[key] = (raw.strip(), line)
    return values


def _convert(key: str, raw, source: str):
    try:
        if key == "horizon":
            number = float(raw)
            if not number.is_integer():
                raise ValueError
            return int(number)
        if key in FLOAT_KEYS:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise InputError(f"{source}: field '{key}': cannot use {raw!r}") from None
    return str(raw)


def collect_settings(args, keys=CONFIG_KEYS) -> dict:
    """Config file values overridden by any flag given on the command line."""
    settings, sources = {}, {}
    if getattr(args, "config", None):
        for key, (raw, line) in read_config(args.config).items():
            source = f"{args.config}: line {line}"
            settings[key] = _convert(key, raw, source)
            sources[key] = source
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = _convert(key, value, "command line")
            sources[key] = "command line"
    settings["_sources"] = sources
    return settings


def _field_error(settings: dict, exc: Exception) -> InputError:
    message = str(exc)
    for key, source in settings["_sources"].items():
        if re.search(rf"\b{key}\b", message):
            return InputError(f"{source}: field '{key}': {message}")
    return InputError(message)


def build_params(settings: dict) -> MarketParams:
    try:
        if "epsilon" in settings:
            if "alpha" in settings:
                raise InputError("give either epsilon or alpha, not both")
            beta = settings.get("beta", settings.get("gamma", 1.0))
            return MarketParams(alpha=settings["epsilon"] * beta, beta=beta,
                                gamma=settings.get("gamma"), rho=settings.get("rho", 0.0))
        if "alpha" not in settings:
            raise InputError("field 'alpha' is required")
        return MarketParams(alpha=settings["alpha"], beta=settings.get("beta"),
                            gamma=settings.get("gamma"), rho=settings.get("rho", 0.0))
    except InputError:
        raise
    except ValueError as exc:
        raise _field_error(settings, exc) from exc


def build_model(settings: dict) -> Model:
    try:
        return Model(settings.get("model", Model.PRICE_MEMORY.value))
    except ValueError:
        choices = ", ".join(m.value for m in Model)
        raise InputError(f"field 'model': {settings['model']!r} is not one of {choices}") from None


def build_demand(settings: dict, params: MarketParams) -> DemandProfile:
    kind = settings.get("demand") or ("sinusoid" if "mu" in settings else "constant")
    try:
        if kind == "constant":
            return DemandProfile.constant(settings.get("d", 1.0))
        if kind == "sinusoid":
            if "mu" not in settings:
                raise InputError("field 'mu' is required for sinusoidal demand")
            return DemandProfile.sinusoid(settings["mu"], settings.get("amplitude", 0.0), params.alpha)
    except InputError:
        raise
    except ValueError as exc:
        raise _field_error(settings, exc) from exc
    raise InputError(f"field 'demand': {kind!r} is not one of constant, sinusoid")


def linear_marginal_value_inverse(params: MarketParams, d: float):
    """Affine demand curve through the equilibrium (2*alpha*d, d) with slope -1/(2*beta)."""
    anchor = 2.0 * params.alpha * d

    def inverse(price: float) -> float:
        return d + (anchor - price) / (2.0 * params.beta)

    return inverse


def build_simulation(settings: dict) -> SimulationConfig:
    params = build_params(settings)
    model = build_model(settings)
    demand = build_demand(settings, params)
    inverse = None
    if model is Model.STATIC:
        if demand.kind != "constant":
            raise InputError("the static model runs with constant demand only")
        inverse = linear_marginal_value_inverse(params, demand.d)
    lambda0 = settings.get("lambda0", 0.0)
    try:
        return SimulationConfig(model, params, demand, lambda0, settings.get("lambda1", lambda0),
                                settings.get("horizon", 500), inverse)
    except ValueError as exc:
        raise _field_error(settings, exc) from exc


# --- serialization --------------------------------------------------------------


def _fmt(value: float) -> str:
    return "%.17g" % value


def write_trajectory_csv(path, trajectory: Trajectory, closed_form: Optional[np.ndarray] = None):
    header = TRAJECTORY_HEADER + (["closed_form_lambda"] if closed_form is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for k in range(len(trajectory)):
            row = [str(k)] + [_fmt(s[k]) for s in (trajectory.price, trajectory.consumption,
                                                    trajectory.demand, trajectory.backlog)]
            if closed_form is not None:
                row.append(_fmt(closed_form[k]))
            writer.writerow(row)


def read_trajectory_csv(path):
    """Inverse of :func:`write_trajectory_csv`; returns (Trajectory, closed form or None)."""
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    header, body = rows[0], rows[1:]
    columns = {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}
    trajectory = Trajectory(columns["lambda"], columns["u"], columns["d"], columns["x"])
    return trajectory, columns.get("closed_form_lambda")


def _json_number(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return _json_number(obj)


def dump_json(obj, handle):
    json.dump(_clean(obj), handle, indent=2, allow_nan=False)
    handle.write("\n")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        dump_json(obj, handle)


# --- reports --------------------------------------------------------------------


def _stability(model: Model, params: MarketParams):
    if model is Model.STATIC:
        return None
    return analysis.stability_report(model, params).as_dict()


def _limiting(model: Model, params: MarketParams, demand: DemandProfile):
    if model is not Model.PRICE_MEMORY or demand.kind != "sinusoid" or params.epsilon >= 0.5:
        return None
    return analysis.limiting_sinusoid(params.epsilon, demand.mu, demand.amplitude).as_dict()


def _fixed_point(params: MarketParams, demand: DemandProfile):
    if demand.kind != "constant":
        return None
    price, energy = analysis.fixed_point(params.alpha, demand.d)
    return {"price": price, "consumption": energy}


def _demand_dict(demand: DemandProfile) -> dict:
    return {"kind": demand.kind, "d": demand.d if demand.kind == "constant" else None,
            "mu": demand.mu if demand.kind == "sinusoid" else None,
            "amplitude": demand.amplitude if demand.kind == "sinusoid" else None}


def run_summary(config: SimulationConfig, trajectory: Trajectory, closed) -> dict:
    return {
        "model": config.model.value,
        "params": config.params.as_dict(),
        "demand": _demand_dict(config.demand),
        "lambda0": config.lambda0,
        "lambda1": config.lambda1,
        "horizon": config.horizon,
        "steps": len(trajectory),
        "stability": _stability(config.model, config.params),
        "fixed_point": _fixed_point(config.params, config.demand),
        "diverged": trajectory.diverged,
        "overflow": trajectory.overflow,
        "final": {"lambda": trajectory.price[-1], "u": trajectory.consumption[-1]},
        "closed_form": None if closed is None else closed.as_dict(),
        "limiting_sinusoid": _limiting(config.model, config.params, config.demand),
    }


def analysis_report(model: Model, params: MarketParams, demand: DemandProfile) -> dict:
    coefficients = None
    if model is Model.PRICE_MEMORY and demand.kind == "sinusoid":
        e0, e1, e2 = analysis.sinusoid_particular(params.epsilon, demand.mu, demand.amplitude)
        coefficients = {"e0": e0, "e1": e1, "e2": e2}
    return {
        "model": model.value,
        "params": params.as_dict(),
        "demand": _demand_dict(demand),
        "stability": _stability(model, params),
        "fixed_point": _fixed_point(params, demand),
        "e_coefficients": coefficients,
        "limiting_sinusoid": _limiting(model, params, demand),
    }


# --- commands -------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def cmd_simulate(args) -> int:
    settings = collect_settings(args)
    config = build_simulation(settings)
    emit = settings.get("emit", "both")
    if emit not in ("csv", "json", "both"):
        raise InputError(f"field 'emit': {emit!r} is not one of csv, json, both")
    out = _out_dir(args)
    trajectory = simulate(config)
    closed = analysis.closed_form_for(config.model, config.params, config.demand,
                                      config.lambda0, config.lambda1)
    closed_values = None if closed is None else closed.evaluate(np.arange(len(trajectory)))
    if emit in ("csv", "both"):
        write_trajectory_csv(out / "trajectory.csv", trajectory, closed_values)
    if emit in ("json", "both"):
        write_json(out / "summary.json", run_summary(config, trajectory, closed))
    if trajectory.diverged:
        print(f"diverged after {len(trajectory)} steps", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_analyze(args) -> int:
    settings = collect_settings(args)
    params = build_params(settings)
    model = build_model(settings)
    if model is Model.STATIC:
        raise InputError("analyze covers the price-memory and pc-memory models")
    demand = build_demand(settings, params)
    report = analysis_report(model, params, demand)
    if args.out:
        write_json(_out_dir(args) / "analysis.json", report)
    else:
        dump_json(report, sys.stdout)
    return EXIT_OK


def parse_grid(text: str, name: str) -> list:
    """``a,b,c`` lists values; ``start:stop:count`` is an inclusive linear range."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError
            if count > MAX_GRID_POINTS:
                raise InputError(f"{name} grid has {count} points, limit is {MAX_GRID_POINTS}")
            values = np.linspace(float(start), float(stop), count).tolist()
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except InputError:
        raise
    except ValueError:
        raise InputError(f"{name} grid: cannot parse {text!r}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise InputError(f"{name} grid: need finite values, got {text!r}")
    return values


def cmd_sweep(args) -> int:
    if args.epsilon_grid is not None:
        if any(g is not None for g in (args.alpha_grid, args.gamma_grid, args.rho_grid)):
            raise InputError("use --epsilon-grid alone or the alpha/gamma/rho grids")
        values = parse_grid(args.epsilon_grid, "epsilon")
        if any(v <= 0 for v in values):
            raise InputError("epsilon grid: values must be > 0")
        columns = ["epsilon"]
        points = analysis.stability_sweep_epsilon(values, steps=args.steps)
    else:
        if any(g is None for g in (args.alpha_grid, args.gamma_grid, args.rho_grid)):
            raise InputError("give --epsilon-grid or all of --alpha-grid, --gamma-grid, --rho-grid")
        grids = [parse_grid(args.alpha_grid, "alpha"), parse_grid(args.gamma_grid, "gamma"),
                 parse_grid(args.rho_grid, "rho")]
        if math.prod(len(set(g)) for g in grids) > MAX_GRID_POINTS:
            raise InputError(f"sweep grid exceeds {MAX_GRID_POINTS} points")
        if min(grids[0]) <= 0 or min(grids[1]) <= 0 or min(grids[2]) < 0:
            raise InputError("need alpha > 0, gamma > 0 and rho >= 0 on the whole grid")
        columns = ["alpha", "gamma", "rho"]
        points = analysis.stability_sweep_pc(*grids, steps=args.steps)
    header = columns + ["analytic_stable", "empirical_stable", "spectral_radius"]
    rows = [[_fmt(p.coords[c]) for c in columns]
            + [str(p.analytic_stable).lower(), str(p.empirical_stable).lower(), _fmt(p.spectral_radius)]
            for p in points]
    if args.out:
        handle = open(_out_dir(args) / "sweep.csv", "w", newline="", encoding="utf-8")
    else:
        handle = sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if handle is not sys.stdout:
            handle.close()
    return EXIT_OK if all(p.agrees for p in points) else EXIT_VERIFICATION_FAILED


def _verify_cases(args):
    if args.suite == "worked":
        return [(dp.InventoryProblem((1.0, 1.0, 1.0), (3.0, 4.0, 4.0), beta=4.0), 3.0)]
    if args.suite == "constant":
        return [(dp.InventoryProblem((1.0, 2.0, 0.5, 1.5), (3.0, 3.0, 3.0, 3.0), beta=4.0), 3.0)]
    if not 2 <= args.max_horizon <= 8:
        raise InputError("--max-horizon must be between 2 and 8")
    if args.instances < 1:
        raise InputError("--instances must be >= 1")
    rng = np.random.default_rng(args.seed)
    return [dp.random_instance(rng, args.max_horizon) for _ in range(args.instances)]


def cmd_verify_dp(args) -> int:
    if args.grid_steps < 100:
        raise InputError("--grid-steps must be >= 100")
    grid = dp.default_oracle_grid(args.grid_steps)
    results = [dp.compare_with_oracle(problem, prior, grid, belief=args.belief)
               for problem, prior in _verify_cases(args)]
    report = {
        "suite": args.suite,
        "belief": args.belief,
        "grid": {"x_min": grid.x_min, "x_steps": grid.x_steps, "u_max": grid.u_max,
                 "u_steps": grid.u_steps, "cell": grid.cell},
        "passed": sum(r.passed for r in results),
        "total": len(results),
        "instances": [r.as_dict() for r in results],
    }
    if args.out:
        write_json(_out_dir(args) / "verify_dp.json", report)
    else:
        dump_json(report, sys.stdout)
    return EXIT_OK if report["passed"] == report["total"] else EXIT_VERIFICATION_FAILED


# --- argument parsing -----------------------------------------------------------


def _add_param_flags(parser):
    parser.add_argument("--config", help="flat key = value file; flags override it")
    parser.add_argument("--model", help="static, price-memory or pc-memory")
    for key in ("alpha", "beta", "gamma", "rho", "mu", "amplitude", "d", "lambda0", "lambda1"):
        parser.add_argument(f"--{key}")
    parser.add_argument("--demand", help="constant or sinusoid (default: sinusoid when --mu is given)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rtmarket", description="Real-time electricity market price dynamics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run the closed loop and write trajectory.csv and summary.json")
    _add_param_flags(sim)
    sim.add_argument("--horizon")
    sim.add_argument("--emit", help="csv, json or both")
    sim.add_argument("--out", default=".")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="stability report as JSON")
    _add_param_flags(ana)
    ana.add_argument("--epsilon", help="alpha/beta; alpha is derived from it")
    ana.add_argument("--out")
    ana.set_defaults(func=cmd_analyze)

    swp = sub.add_parser("sweep", help="analytic vs. simulated stability over a grid")
    swp.add_argument("--epsilon-grid")
    swp.add_argument("--alpha-grid")
    swp.add_argument("--gamma-grid")
    swp.add_argument("--rho-grid")
    swp.add_argument("--steps", type=int, default=2000)
    swp.add_argument("--out")
    swp.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify-dp", help="closed-form schedule vs. backward-induction oracle")
    ver.add_argument("--suite", choices=("random", "worked", "constant"), default="random")
    ver.add_argument("--instances", type=int, default=50)
    ver.add_argument("--max-horizon", type=int, default=6)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--grid-steps", type=int, default=2000)
    ver.add_argument("--belief", choices=("current", "previous"), default="current")
    ver.add_argument("--out")
    ver.set_defaults(func=cmd_verify_dp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
