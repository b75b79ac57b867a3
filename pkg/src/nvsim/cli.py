"""Command-line front end.

Six subcommands: ``simulate`` runs a single-setting scenario (coherence
curves, revival scans, initialization extraction), ``sweep`` runs swept
scenarios (one axis, or an error grid), ``pumpprobe`` runs the optical
reset study, ``predict`` evaluates the closed-form reinitialisation
model, ``fit`` refits a CSV table, and ``reproduce`` runs one of the
bundled figure scenarios by id.

Artifacts per scenario: one RFC-4180 CSV per variant, a JSON summary
(fit parameters, per-variant seeds, the config digest) and the effective
config the digest is computed from.  Reruns with the same inputs are
byte-identical; nothing in an artifact depends on time, host or path.

Exit codes: 0 success, 2 configuration or schema violation, 3 attempt
budget exceeded (NVSIM_BUDGET), 4 fit failure under --strict.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as config_mod
from . import datasets
from .analytic import BlokParams, blok_decay_constant, revival_curve
from .attempt import AttemptSequence
from .errors import BudgetExceededError, ConfigError, FitDataError
from .fitting import fit_exponential, fit_saturation, fit_stretched_exp
from .montecarlo import (
    RunSpec,
    apply_axis,
    blok_estimate,
    geometric_grid,
    simulate_curve,
    sweep,
)
from .optical import branching_from_measurement, pump_probe_curve
from .physics import TWO_PI
from .units import parse_frequency, parse_time

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_BUDGET = 3
EXIT_FIT = 4

_COMMAND_MODES = {
    "simulate": ("curves", "revival", "pinit"),
    "sweep": ("sweep", "grid"),
    "pumpprobe": ("pumpprobe",),
}


# ---------------------------------------------------------------------------
# formatting helpers
# ---------------------------------------------------------------------------

def _fmt_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(cell) for cell in row])


def _jsonable(value):
    if isinstance(value, dict):
        return {key: _jsonable(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _write_json(path: str, payload: dict):
    with open(path, "w", newline="") as handle:
        json.dump(_jsonable(payload), handle, sort_keys=True, indent=2)
        handle.write("\n")


def _fit_payload(fit) -> dict:
    return {
        "model": fit.model,
        "params": {key: float(val) for key, val in fit.params.items()},
        "errors": {key: float(val) for key, val in fit.errors.items()},
        "cost": float(fit.cost),
        "n_points": fit.n_points,
        "converged": bool(fit.converged),
    }


def _stem(scenario) -> str:
    if scenario.label:
        return scenario.label
    base = os.path.basename(scenario.source)
    return base[:-5] if base.endswith(".toml") else (base or "scenario")


def _tag(stem: str, name: str) -> str:
    return f"{stem}/{name}" if name else stem


def _csv_name(stem: str, name: str) -> str:
    return f"{stem}_{name}.csv" if name else f"{stem}.csv"


# ---------------------------------------------------------------------------
# scenario drivers
# ---------------------------------------------------------------------------

def _drive_curves(run, stem, out_dir):
    curve = simulate_curve(run.plan.runspec)
    fit = fit_stretched_exp(curve)
    csv_name = _csv_name(stem, run.name)
    _write_csv(
        os.path.join(out_dir, csv_name),
        ("n", "coherence", "std_err"),
        zip(curve.n.tolist(), curve.coherence.tolist(), curve.std_err.tolist()),
    )
    line = (
        f"{_tag(stem, run.name)}: n_1e {fit.params['n_1e']:.6g}"
        f" +- {fit.errors['n_1e']:.3g},"
        f" exponent {fit.params['exponent']:.4g},"
        f" amplitude {fit.params['amplitude']:.4g}"
    )
    payload = {
        "csv": csv_name,
        "master_seed": run.plan.runspec.master_seed,
        "fit": _fit_payload(fit),
    }
    return payload, line, fit.converged


def _drive_sweep(run, stem, out_dir):
    plan = run.plan
    points = sweep(plan.runspec, plan.axis, plan.values, power_map=plan.power_map)
    csv_name = _csv_name(stem, run.name)
    _write_csv(
        os.path.join(out_dir, csv_name),
        (plan.axis, "n_1e", "n_err", "exponent", "exponent_err", "amplitude", "converged"),
        [
            (p.value, p.n_one_over_e, p.n_err, p.exponent, p.exponent_err, p.amplitude, p.converged)
            for p in points
        ],
    )
    payload = {
        "csv": csv_name,
        "axis": plan.axis,
        "master_seed": plan.runspec.master_seed,
    }
    converged = all(p.converged for p in points)
    if plan.axis == "power":
        sat = fit_saturation(
            [p.value for p in points],
            [p.n_one_over_e for p in points],
            [max(p.n_err, 1e-9) for p in points],
        )
        payload["saturation"] = _fit_payload(sat)
        converged = converged and sat.converged
        line = (
            f"{_tag(stem, run.name)}: n_sat {sat.params['n_sat']:.6g}"
            f" +- {sat.errors['n_sat']:.3g},"
            f" p_sat {sat.params['p_sat']:.4g} W"
        )
    else:
        top = max(points, key=lambda p: p.n_one_over_e)
        line = (
            f"{_tag(stem, run.name)}: best n_1e {top.n_one_over_e:.6g}"
            f" at {plan.axis} {top.value:.6g}"
        )
    return payload, line, converged


def _drive_grid(run, stem, out_dir):
    plan = run.plan
    rows = []
    best = None
    converged = True
    for y in plan.y_values:
        for x in plan.x_values:
            spec = apply_axis(plan.template, plan.x_axis, x)
            spec = apply_axis(spec, plan.y_axis, y)
            estimate = blok_estimate(spec)
            if not math.isfinite(estimate):
                estimate = 1e4  # layouts that never pump decay by other channels
            n_max = max(int(math.ceil(plan.span_factor * estimate)), 8)
            spec = replace(spec, n_attempts=geometric_grid(n_max, plan.n_points))
            fit = fit_stretched_exp(simulate_curve(spec))
            n_1e = fit.params["n_1e"]
            rows.append((x, y, n_1e, fit.errors["n_1e"], fit.params["exponent"], fit.converged))
            converged = converged and fit.converged
            if best is None or n_1e > best[2]:
                best = (x, y, n_1e)
    csv_name = _csv_name(stem, run.name)
    _write_csv(
        os.path.join(out_dir, csv_name),
        (plan.x_axis, plan.y_axis, "n_1e", "n_err", "exponent", "converged"),
        rows,
    )
    payload = {
        "csv": csv_name,
        "master_seed": plan.template.master_seed,
        "best": {plan.x_axis: best[0], plan.y_axis: best[1], "n_1e": best[2]},
    }
    line = (
        f"{_tag(stem, run.name)}: best n_1e {best[2]:.6g}"
        f" at {plan.x_axis} {best[0]:.4g}, {plan.y_axis} {best[1]:.4g}"
    )
    return payload, line, converged


def _drive_revival(run, stem, out_dir):
    plan = run.plan
    delays = plan.delays()
    curve = revival_curve(
        plan.spin,
        plan.field,
        plan.sequence,
        delays,
        n_attempts=plan.n_attempts,
        p_init=plan.p_init,
        amplitude=plan.amplitude,
    )
    csv_name = _csv_name(stem, run.name)
    _write_csv(os.path.join(out_dir, csv_name), ("delay", "coherence"), zip(delays.tolist(), curve.tolist()))
    window = (delays >= 0.5 * plan.period) & (delays <= 1.25 * plan.period)
    idx = int(np.flatnonzero(window)[np.argmax(curve[window])])
    payload = {
        "csv": csv_name,
        "period": plan.period,
        "revival_delay": float(delays[idx]),
        "revival_coherence": float(curve[idx]),
        "amplitude": plan.amplitude,
    }
    line = (
        f"{_tag(stem, run.name)}: revival at {delays[idx]:.6g} s"
        f" (period {plan.period:.6g} s), coherence {curve[idx]:.4g}"
    )
    return payload, line, True


def _revival_model(plan, duration):
    # Reference layout for the analytic model: the scanned delay is an
    # argument of revival_curve, so the sequence itself sits at T = 0.
    return AttemptSequence.standard(
        plan.sequence.inter_pulse_delay,
        alpha=plan.sequence.alpha,
        has_middle_pi=plan.sequence.has_middle_pi,
        post_repump_delay=0.0,
        repump_duration=duration,
        attempt_duration=None,
    )


def _fit_pinit(plan, duration, delays, data, err):
    from scipy.optimize import least_squares

    reference = _revival_model(plan, duration)

    def predict(theta):
        amplitude, log_p = theta
        return amplitude * revival_curve(
            plan.spin,
            plan.field,
            reference,
            delays,
            n_attempts=plan.n_attempts,
            p_init=10.0**log_p,
            amplitude=1.0,
        )

    def residuals(theta):
        return (predict(theta) - data) / err

    start = np.array([max(float(data.max()), 1e-3), -3.0])
    result = least_squares(residuals, start, bounds=([0.0, -6.0], [1.5, 0.0]))
    amplitude, log_p = result.x
    p_fit = 10.0**log_p
    dof = max(data.size - 2, 1)
    try:
        cov = np.linalg.pinv(result.jac.T @ result.jac) * (2.0 * result.cost / dof)
        p_err = math.log(10.0) * p_fit * math.sqrt(max(cov[1, 1], 0.0))
    except np.linalg.LinAlgError:
        p_err = math.nan
    return float(amplitude), float(p_fit), float(p_err), bool(result.success)


def _drive_pinit(run, stem, out_dir):
    plan = run.plan
    delays = plan.delays()
    summary_rows = []
    details = []
    lines = []
    converged = True
    for index, (duration, truth) in enumerate(zip(plan.repump_durations, plan.p_init_truth)):
        data = np.empty_like(delays)
        err = np.empty_like(delays)
        noise = replace(plan.noise, p_init=truth)
        for j, delay in enumerate(delays):
            seq = AttemptSequence.standard(
                plan.sequence.inter_pulse_delay,
                alpha=plan.sequence.alpha,
                has_middle_pi=plan.sequence.has_middle_pi,
                post_repump_delay=float(delay),
                repump_duration=duration,
                attempt_duration=None,
            )
            spec = RunSpec(
                spin=plan.spin,
                field=plan.field,
                sequence=seq,
                noise=noise,
                n_attempts=(plan.n_attempts,),
                n_trials=plan.n_trials,
                master_seed=plan.master_seed,
                include_intrinsic_decay=False,
            )
            curve = simulate_curve(spec)
            data[j] = curve.coherence[0]
            err[j] = max(float(curve.std_err[0]), 1e-4)
        amplitude, p_fit, p_err, ok = _fit_pinit(plan, duration, delays, data, err)
        converged = converged and ok
        scan_name = f"{stem}_scan{index}.csv"
        _write_csv(
            os.path.join(out_dir, scan_name),
            ("delay", "coherence", "std_err"),
            zip(delays.tolist(), data.tolist(), err.tolist()),
        )
        summary_rows.append((duration, truth, p_fit, p_err, amplitude))
        details.append(
            {
                "scan_csv": scan_name,
                "repump_duration": duration,
                "p_init_truth": truth,
                "p_init_fit": p_fit,
                "p_init_err": p_err,
                "amplitude": amplitude,
                "converged": ok,
            }
        )
        lines.append(
            f"{_tag(stem, run.name)}: repump {duration:.3g} s ->"
            f" p_init {p_fit:.3g} +- {p_err:.2g} (truth {truth:.3g})"
        )
    csv_name = _csv_name(stem, run.name)
    _write_csv(
        os.path.join(out_dir, csv_name),
        ("repump_duration", "p_init_truth", "p_init_fit", "p_init_err", "amplitude"),
        summary_rows,
    )
    payload = {
        "csv": csv_name,
        "master_seed": plan.master_seed,
        "durations": details,
    }
    return payload, "\n".join(lines), converged


def _drive_pumpprobe(run, stem, out_dir):
    plan = run.plan
    curve = pump_probe_curve(
        plan.model,
        plan.pulse,
        plan.delays,
        trials=plan.trials,
        master_seed=plan.master_seed,
        probe_window=plan.probe_window,
        window_average=plan.window_average,
        initial=plan.initial,
        dt=plan.dt,
    )
    csv_name = _csv_name(stem, run.name)
    _write_csv(
        os.path.join(out_dir, csv_name),
        ("delay", "f0", "std_err"),
        zip(curve.delay.tolist(), curve.f0.tolist(), curve.std_err.tolist()),
    )
    meta = curve.metadata
    rise = fit_exponential(curve.delay, curve.f0, np.maximum(curve.std_err, 1e-6), direction="rise")
    payload = {
        "csv": csv_name,
        "master_seed": plan.master_seed,
        "p_singlet": meta["p_singlet"],
        "p_double": meta["p_double"],
        "mean_excitations": meta["mean_excitations"],
        "f_zero": meta["f_zero"],
        "asymptote": meta["asymptote"],
        "rise": _fit_payload(rise),
    }
    for mode in ("single", "jump"):
        try:
            ratios = branching_from_measurement(
                meta["p_singlet"],
                meta["asymptote"],
                mode=mode,
                model=plan.model,
                pulse=plan.pulse,
                trials=plan.trials,
                master_seed=plan.master_seed,
            )
            payload[f"branching_b0_{mode}"] = float(ratios[0])
            payload[f"branching_{mode}"] = [float(b) for b in ratios]
        except ValueError as exc:
            payload[f"branching_b0_{mode}"] = None
            payload[f"branching_b0_{mode}_error"] = str(exc)
    b0s = payload.get("branching_b0_single")
    b0j = payload.get("branching_b0_jump")
    line = (
        f"{_tag(stem, run.name)}: p_singlet {meta['p_singlet']:.4g},"
        f" p_double {meta['p_double']:.4g},"
        f" rise {rise.params['timescale']:.4g} s,"
        f" b0 single {b0s if b0s is None else format(b0s, '.4g')}"
        f" / jump {b0j if b0j is None else format(b0j, '.4g')}"
    )
    return payload, line, rise.converged


_DRIVERS = {
    config_mod.CurvePlan: _drive_curves,
    config_mod.SweepPlan: _drive_sweep,
    config_mod.GridPlan: _drive_grid,
    config_mod.RevivalPlan: _drive_revival,
    config_mod.PInitPlan: _drive_pinit,
    config_mod.PumpProbePlan: _drive_pumpprobe,
}


def _run_scenario(scenario, out_dir: str, strict: bool) -> int:
    os.makedirs(out_dir, exist_ok=True)
    stem = _stem(scenario)
    effective = scenario.effective_text()
    digest = config_mod.document_digest(effective)
    with open(os.path.join(out_dir, f"{stem}_effective.toml"), "w", newline="") as handle:
        handle.write(effective)

    variants = {}
    all_converged = True
    for run in scenario.runs():
        driver = _DRIVERS[type(run.plan)]
        payload, line, converged = driver(run, stem, out_dir)
        payload["digest"] = digest
        variants[run.name or "base"] = payload
        all_converged = all_converged and converged
        print(line)

    summary = {
        "label": scenario.label,
        "mode": scenario.mode,
        "digest": digest,
        "schema": config_mod.SCHEMA_ID,
        "variants": variants,
    }
    _write_json(os.path.join(out_dir, f"{stem}_summary.json"), summary)
    if strict and not all_converged:
        print("error: fit did not converge (--strict)", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _load_for(command: str, args) -> "config_mod.Scenario":
    scenario = config_mod.load_path(args.config, seed=args.seed, trials=args.trials)
    allowed = _COMMAND_MODES[command]
    if scenario.mode not in allowed:
        raise ConfigError(
            f"{scenario.source}: mode {scenario.mode!r} is driven by another "
            f"subcommand; {command} handles: {', '.join(allowed)}"
        )
    return scenario


def _cmd_scenario(command: str, args) -> int:
    scenario = _load_for(command, args)
    return _run_scenario(scenario, args.out_dir, args.strict)


def _cmd_predict(args) -> int:
    if args.model != "blok":
        raise ConfigError(f"unknown model {args.model!r}; available: blok")
    tau = parse_time(args.tau, path="--tau")
    dw = TWO_PI * parse_frequency(args.dw, path="--dw")
    params = BlokParams(tau=tau, delta_omega=dw, p_one=args.p1)
    n_1e = blok_decay_constant(params)
    print(
        f"blok: tau {tau:.6g} s, delta_omega {dw / TWO_PI:.6g} Hz,"
        f" p1 {args.p1:.6g} -> n_1e {n_1e:.6g}"
    )
    return EXIT_OK


def _read_xy_csv(path: str):
    rows = []
    with open(path, newline="") as handle:
        for record in csv.reader(handle):
            if not record:
                continue
            try:
                rows.append([float(cell) for cell in record[:3]])
            except ValueError:
                continue  # header or comment row
    if not rows:
        raise FitDataError(f"{path}: no numeric rows")
    columns = list(zip(*rows))
    x = np.asarray(columns[0])
    y = np.asarray(columns[1]) if len(columns) > 1 else None
    if y is None:
        raise FitDataError(f"{path}: need at least two columns")
    sigma = np.asarray(columns[2]) if len(columns) > 2 else None
    return x, y, sigma


def _cmd_fit(args) -> int:
    x, y, sigma = _read_xy_csv(args.data)
    if args.model == "stretched":
        fit = fit_stretched_exp(x, y, sigma)
        line = (
            f"stretched: amplitude {fit.params['amplitude']:.6g},"
            f" n_1e {fit.params['n_1e']:.6g} +- {fit.errors['n_1e']:.3g},"
            f" exponent {fit.params['exponent']:.6g} +- {fit.errors['exponent']:.3g}"
        )
    elif args.model == "saturation":
        fit = fit_saturation(x, y, sigma)
        line = (
            f"saturation: n_sat {fit.params['n_sat']:.6g} +- {fit.errors['n_sat']:.3g},"
            f" p_sat {fit.params['p_sat']:.6g} +- {fit.errors['p_sat']:.3g}"
        )
    else:
        fit = fit_exponential(x, y, sigma, direction=args.direction)
        line = (
            f"exponential ({args.direction}): amplitude {fit.params['amplitude']:.6g},"
            f" timescale {fit.params['timescale']:.6g} +- {fit.errors['timescale']:.3g},"
            f" offset {fit.params['offset']:.6g}"
        )
    print(line + ("" if fit.converged else "  [not converged]"))
    if args.out_dir is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        base = os.path.basename(args.data)
        stem = base[:-4] if base.endswith(".csv") else base
        _write_json(os.path.join(args.out_dir, f"{stem}_fit.json"), _fit_payload(fit))
    if args.strict and not fit.converged:
        print("error: fit did not converge (--strict)", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    text = datasets.figure_source(args.figure)
    scenario = config_mod.loads(
        text, source=f"{args.figure}.toml", seed=args.seed, trials=args.trials
    )
    return _run_scenario(scenario, args.out_dir, args.strict)


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_common(parser, with_config: bool):
    if with_config:
        parser.add_argument("--config", required=True, help="scenario TOML file")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--trials", type=int, default=None, help="override the trial count")
    parser.add_argument("--out-dir", default=".", help="artifact directory (default: .)")
    parser.add_argument("--strict", action="store_true", help="fit failures exit nonzero")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="compute threads (clamped to the machine limit); results do not depend on it",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvsim",
        description="Nuclear-memory dephasing under repeated entangling attempts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for command, modes in _COMMAND_MODES.items():
        p = sub.add_parser(command, help=f"run a scenario (mode: {', '.join(modes)})")
        _add_common(p, with_config=True)

    p = sub.add_parser("predict", help="closed-form reinitialisation decay constant")
    p.add_argument("--model", default="blok")
    p.add_argument("--tau", required=True, help='mean reset time, e.g. "52 ns"')
    p.add_argument("--dw", required=True, help='splitting (ordinary), e.g. "376.5 kHz"')
    p.add_argument("--p1", type=float, required=True, help="pump probability per attempt")

    p = sub.add_parser("fit", help="refit a CSV table (x, y[, sigma] columns)")
    p.add_argument("--model", choices=("stretched", "saturation", "exponential"), required=True)
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--direction", choices=("decay", "rise"), default="decay")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("reproduce", help="run a bundled figure scenario")
    p.add_argument("figure", choices=datasets.FIGURE_IDS)
    _add_common(p, with_config=False)

    return parser


def _apply_threads(args) -> None:
    threads = getattr(args, "threads", None)
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    import numba

    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_threads(args)
        if args.command in _COMMAND_MODES:
            return _cmd_scenario(args.command, args)
        if args.command == "predict":
            return _cmd_predict(args)
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_reproduce(args)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except FitDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
