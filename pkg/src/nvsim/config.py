"""Scenario files: validation, variant expansion and run plans.

A scenario is one TOML document with a versioned schema id, a ``mode``
selecting the driver, the physical sections the mode needs ([spin],
[field], [sequence], [noise], [run], ...) and optional [variants.<name>]
override trees that are deep-merged onto the base document and
re-validated.  Physical quantities carry explicit unit suffixes
("52 ns", "62.4 kHz") or are plain numbers in base units (seconds,
hertz, gauss, watts, radians).  Frequencies are ordinary, not angular;
the factor 2 pi enters exactly once, when model objects are built.

Validation happens in two stages.  :func:`loads` / :func:`load_path`
canonicalize the document: unknown keys are rejected with their dotted
path, quantities are parsed, defaults are filled in and cross-field
rules checked.  :meth:`Scenario.runs` then materializes every variant
into the mode's plan object, resolving the symbolic values ("larmor",
"phase_match", "packed", detuning_from_t2_star) against the spin and
field at hand.  The resolved numbers are written back into an effective
document whose emitted text defines the artifact digest; re-ingesting
that text builds identical model objects.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass

import numpy as np
import tomli

from .attempt import AttemptSequence, NoiseModel, detuning_width_from_t2_star
from .errors import ConfigError
from .montecarlo import (
    NUCLEAR_STATES,
    SWEEP_AXES,
    PowerMap,
    RunSpec,
    geometric_grid,
)
from .optical import OpticalLevelModel, PulseEnvelope, isc_rate_from_lifetimes
from .physics import (
    TWO_PI,
    ElectronState,
    FieldParams,
    NuclearSpinParams,
    delta_omega,
    phase_match_delay,
)
from .units import parse_angle, parse_quantity

__all__ = [
    "MODES",
    "SCHEMA_ID",
    "CurvePlan",
    "GridPlan",
    "PInitPlan",
    "PumpProbePlan",
    "RevivalPlan",
    "Run",
    "Scenario",
    "SweepPlan",
    "document_digest",
    "emit_toml",
    "load_path",
    "loads",
]

SCHEMA_ID = "nvsim-scenario/1"

MODES = ("curves", "sweep", "grid", "revival", "pinit", "pumpprobe")

_BARE_KEY = re.compile(r"[A-Za-z0-9_-]+\Z")

# Key registries per section: name -> value kind.  Kinds cover the unit
# dimensions plus the three symbolic forms ("ipd" also admits "larmor"
# and "phase_match", "duration" admits "packed", "rawlist" is
# canonicalized later once the sweep axis is known).
_SECTION_KEYS = {
    "spin": {
        "table": "str",
        "label": "str",
        "delta_omega": "frequency",
        "a_par": "frequency",
        "a_perp": "frequency",
        "t2_star": "time",
        "t2_hahn": "time",
        "shift_approximation": "bool",
    },
    "field": {
        "magnitude": "field",
    },
    "sequence": {
        "alpha": "angle",
        "middle_pi": "bool",
        "inter_pulse_delay": "ipd",
        "post_repump_delay": "time",
        "repump_duration": "time",
        "attempt_duration": "duration",
    },
    "noise": {
        "tau": "time",
        "p_mw": "float",
        "p_init": "float",
        "sigma_tau_qs": "time",
        "sigma_tau_qs_relative": "float",
        "sigma_detuning_qs": "frequency",
        "detuning_from_t2_star": "bool",
        "p_depol": "float",
        "center_pump_phase": "bool",
    },
    "run": {
        "n_max": "int",
        "n_points": "int",
        "n_trials": "int",
        "master_seed": "int",
        "echo_count": "int",
        "initial_nuclear_state": "str",
        "include_intrinsic_decay": "bool",
    },
    "sweep": {
        "axis": "str",
        "values": "rawlist",
        "power_map": {"tau_min": "time", "p_sat": "power"},
    },
    "grid": {
        "x_axis": "str",
        "x_values": "rawlist",
        "y_axis": "str",
        "y_values": "rawlist",
        "span_factor": "float",
        "n_points": "int",
    },
    "revival": {
        "n_attempts": "int",
        "p_init": "float",
        "span_periods": "float",
        "points": "int",
        "amplitude": "float",
    },
    "pinit": {
        "repump_durations": "timelist",
        "p_init_truth": "floatlist",
        "n_attempts": "int",
        "span_periods": "float",
        "points": "int",
        "n_trials": "int",
        "master_seed": "int",
    },
    "optical": {
        "t_ex": "time",
        "t_eprime": "time",
        "t_singlet": "time",
        "branching": "ratios",
        "gamma_es": "frequency",
        "gamma_xs": "frequency",
        "strain_shift": "frequency",
    },
    "pulse": {
        "shape": "str",
        "width": "time",
        "area": "float",
        "start": "time",
    },
    "pumpprobe": {
        "delay_min": "time",
        "delay_max": "time",
        "delay_points": "int",
        "probe_window": "time",
        "window_average": "bool",
        "trials": "int",
        "master_seed": "int",
        "initial": "str",
        "dt": "time",
    },
}

_MODE_SECTIONS = {
    "curves": frozenset({"spin", "field", "sequence", "noise", "run"}),
    "sweep": frozenset({"spin", "field", "sequence", "noise", "run", "sweep"}),
    "grid": frozenset({"spin", "field", "sequence", "noise", "run", "grid"}),
    "revival": frozenset({"spin", "field", "sequence", "revival"}),
    "pinit": frozenset({"spin", "field", "sequence", "noise", "pinit"}),
    "pumpprobe": frozenset({"optical", "pulse", "pumpprobe"}),
}

# Dimension of sweep/grid axis values as written in the file.  Axes not
# listed here take plain numbers.
_AXIS_DIMENSION = {
    "tau": "time",
    "power": "power",
    "field": "field",
    "delta_omega": "frequency",
}

_GRID_AXES = ("tau", "p_mw", "p_init", "delta_omega", "field")

_INITIAL_STATES = {"ms0": ElectronState.MS0, "ms-1": ElectronState.MS_MINUS1}


# ---------------------------------------------------------------------------
# scalar conversion
# ---------------------------------------------------------------------------

def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


_BASE_UNIT = {"time": "s", "frequency": "Hz", "field": "G", "power": "W"}
_UNIT_HINT = {"time": "52 ns", "frequency": "62.4 kHz", "field": "414 G", "power": "30 nW"}


def _parse_suffixed(value, dimension: str, path: str) -> float:
    # Scenario files must spell units out; a bare number is ambiguous
    # between conventions.  Programmatic callers build plans from floats
    # directly and never pass through here.
    bare = not isinstance(value, str)
    if not bare:
        try:
            float(value)
            bare = True
        except ValueError:
            bare = False
    if bare:
        _fail(
            path,
            f'{dimension} values need a unit suffix, e.g. "{_UNIT_HINT[dimension]}"; got {value!r}',
        )
    return parse_quantity(value, dimension, path)


def _quantity_text(value: float, dimension: str) -> str:
    # Base-unit serialization; repr() keeps the float exact on re-parse.
    return f"{value!r} {_BASE_UNIT[dimension]}"


def _convert(kind: str, value, path: str):
    if kind == "str":
        if not isinstance(value, str):
            _fail(path, f"expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            _fail(path, f"expected true or false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(path, f"expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(path, f"expected a number, got {value!r}")
        return float(value)
    if kind == "angle":
        return parse_angle(value, path)
    if kind in ("time", "frequency", "field", "power"):
        return _parse_suffixed(value, kind, path)
    if kind == "ipd":
        if value in ("larmor", "phase_match"):
            return value
        return _parse_suffixed(value, "time", path)
    if kind == "duration":
        if value == "packed":
            return value
        return _parse_suffixed(value, "time", path)
    if kind == "ratios":
        if not isinstance(value, list) or len(value) != 3:
            _fail(path, f"expected three branching ratios, got {value!r}")
        ratios = [_convert("float", item, f"{path}[{i}]") for i, item in enumerate(value)]
        if any(r < 0.0 for r in ratios) or sum(ratios) <= 0.0:
            _fail(path, f"branching ratios must be >= 0 with a positive sum, got {ratios}")
        return ratios
    if kind == "timelist":
        if not isinstance(value, list) or not value:
            _fail(path, f"expected a non-empty list of times, got {value!r}")
        return [_parse_suffixed(item, "time", f"{path}[{i}]") for i, item in enumerate(value)]
    if kind == "floatlist":
        if not isinstance(value, list) or not value:
            _fail(path, f"expected a non-empty list of numbers, got {value!r}")
        return [_convert("float", item, f"{path}[{i}]") for i, item in enumerate(value)]
    if kind == "rawlist":
        if not isinstance(value, list) or not value:
            _fail(path, f"expected a non-empty list, got {value!r}")
        return list(value)
    raise AssertionError(f"unhandled kind {kind!r}")


def _convert_section(name: str, raw, registry: dict, path_prefix: str = "") -> dict:
    path = f"{path_prefix}{name}"
    if not isinstance(raw, dict):
        _fail(path, "expected a table")
    out = {}
    for key, value in raw.items():
        key_path = f"{path}.{key}"
        if key not in registry:
            known = ", ".join(sorted(registry))
            _fail(key_path, f"unknown key; known keys: {known}")
        kind = registry[key]
        if isinstance(kind, dict):
            out[key] = _convert_section(key, value, kind, f"{path}.")
        else:
            out[key] = _convert(kind, value, key_path)
    return out


def _require(section: dict, name: str, keys, path: str):
    missing = [key for key in keys if key not in section]
    if missing:
        _fail(f"{path}{name}", f"missing required key(s): {', '.join(missing)}")


def _default(section: dict, key: str, value):
    if key not in section:
        section[key] = value


# ---------------------------------------------------------------------------
# document canonicalization
# ---------------------------------------------------------------------------

def _canonical_document(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a table")
    for key in raw:
        if key not in ("schema", "mode", "label") and key not in _SECTION_KEYS:
            known = "schema, mode, label, " + ", ".join(sorted(_SECTION_KEYS))
            _fail(key, f"unknown top-level key; known keys: {known}")
    schema = raw.get("schema")
    if schema != SCHEMA_ID:
        _fail("schema", f"expected {SCHEMA_ID!r}, got {schema!r}")
    mode = raw.get("mode")
    if mode not in MODES:
        _fail("mode", f"expected one of {', '.join(MODES)}, got {mode!r}")
    label = raw.get("label")
    if label is not None and not isinstance(label, str):
        _fail("label", f"expected a string, got {label!r}")

    allowed = _MODE_SECTIONS[mode]
    document = {"schema": schema, "mode": mode}
    if label is not None:
        document["label"] = label
    for name in _SECTION_KEYS:
        if name in raw:
            if name not in allowed:
                _fail(name, f"section is not used by mode {mode!r}")
            document[name] = _convert_section(name, raw[name], _SECTION_KEYS[name])
    missing = [name for name in sorted(allowed) if name not in document]
    if missing:
        raise ConfigError(f"mode {mode!r} requires section(s): {', '.join(missing)}")

    if "spin" in document:
        _check_spin(document["spin"])
    if "sequence" in document:
        _check_sequence(document["sequence"], mode)
    if "noise" in document:
        _check_noise(document["noise"])
    if "run" in document:
        _check_run(document["run"], mode)
    if mode == "sweep":
        _check_sweep(document["sweep"])
    if mode == "grid":
        _check_grid(document["grid"])
    if mode == "revival":
        _check_revival(document["revival"])
    if mode == "pinit":
        _check_pinit(document["pinit"])
    if mode == "pumpprobe":
        _check_optical(document["optical"])
        _check_pulse(document["pulse"])
        _check_pumpprobe(document["pumpprobe"])
    return document


def _check_spin(section: dict):
    if "table" in section:
        extras = sorted(set(section) - {"table"})
        if extras:
            _fail("spin.table", f"exclusive with explicit spin key(s): {', '.join(extras)}")
        return
    _require(section, "", ("t2_star",), "spin")
    has_split = "delta_omega" in section
    has_hyperfine = "a_par" in section or "a_perp" in section
    if has_hyperfine and ("a_par" not in section or "a_perp" not in section):
        _fail("spin", "a_par and a_perp must be given together")
    if has_split == has_hyperfine:
        _fail("spin", "give exactly one coupling: delta_omega, or a_par with a_perp")
    _default(section, "label", "spin")
    _default(section, "t2_hahn", 60e-3)
    _default(section, "shift_approximation", True)


def _check_sequence(section: dict, mode: str):
    _require(section, "", ("alpha", "middle_pi", "inter_pulse_delay", "repump_duration", "attempt_duration"), "")
    _default(section, "post_repump_delay", 0.0)
    if mode == "pinit" and section["attempt_duration"] != "packed":
        # A fixed total duration absorbs the scanned delay into the idle
        # padding, so the failure-branch exposure would not change at all.
        _fail("sequence.attempt_duration", 'mode "pinit" requires "packed" attempts')


def _check_noise(section: dict):
    _require(section, "", ("tau",), "noise")
    _default(section, "p_mw", 0.0)
    _default(section, "p_init", 0.0)
    _default(section, "sigma_tau_qs", 0.0)
    _default(section, "sigma_tau_qs_relative", 0.0)
    _default(section, "detuning_from_t2_star", False)
    _default(section, "p_depol", 0.0)
    _default(section, "center_pump_phase", True)
    if section["detuning_from_t2_star"]:
        if "sigma_detuning_qs" in section:
            _fail("noise.sigma_detuning_qs", "exclusive with detuning_from_t2_star")
    else:
        _default(section, "sigma_detuning_qs", 0.0)


def _check_run(section: dict, mode: str):
    if mode == "grid":
        for key in ("n_max", "n_points"):
            if key in section:
                _fail(f"run.{key}", "the [grid] section sizes grid-mode runs")
    else:
        _require(section, "", ("n_max",), "run")
        _default(section, "n_points", 24)
        if section["n_max"] < 1:
            _fail("run.n_max", f"must be >= 1, got {section['n_max']}")
        if section["n_points"] < 2:
            _fail("run.n_points", f"must be >= 2, got {section['n_points']}")
    _default(section, "n_trials", 2000)
    _default(section, "master_seed", 0)
    _default(section, "echo_count", 0)
    _default(section, "initial_nuclear_state", "superposition")
    _default(section, "include_intrinsic_decay", True)
    if section["echo_count"] not in (0, 1, 2):
        _fail("run.echo_count", f"must be 0, 1 or 2, got {section['echo_count']}")
    if section["initial_nuclear_state"] not in NUCLEAR_STATES:
        _fail("run.initial_nuclear_state", f"expected one of {', '.join(NUCLEAR_STATES)}")


def _axis_values(axis: str, values: list, path: str) -> list:
    dimension = _AXIS_DIMENSION.get(axis)
    out = []
    for i, item in enumerate(values):
        where = f"{path}[{i}]"
        if dimension is None:
            out.append(_convert("float", item, where))
        else:
            out.append(_parse_suffixed(item, dimension, where))
    return out


def _check_sweep(section: dict):
    _require(section, "", ("axis", "values"), "sweep")
    axis = section["axis"]
    if axis not in SWEEP_AXES:
        _fail("sweep.axis", f"expected one of {', '.join(SWEEP_AXES)}, got {axis!r}")
    section["values"] = _axis_values(axis, section["values"], "sweep.values")
    if axis == "power":
        if "power_map" not in section:
            _fail("sweep.power_map", 'required for axis "power"')
        _require(section["power_map"], "", ("tau_min", "p_sat"), "sweep.power_map.")
    elif "power_map" in section:
        _fail("sweep.power_map", f'only used by axis "power", not {axis!r}')


def _check_grid(section: dict):
    _require(section, "", ("x_axis", "x_values", "y_axis", "y_values", "span_factor", "n_points"), "grid")
    for key in ("x_axis", "y_axis"):
        if section[key] not in _GRID_AXES:
            _fail(f"grid.{key}", f"expected one of {', '.join(_GRID_AXES)}, got {section[key]!r}")
    if section["x_axis"] == section["y_axis"]:
        _fail("grid.y_axis", "x_axis and y_axis must differ")
    section["x_values"] = _axis_values(section["x_axis"], section["x_values"], "grid.x_values")
    section["y_values"] = _axis_values(section["y_axis"], section["y_values"], "grid.y_values")
    if section["span_factor"] <= 0.0:
        _fail("grid.span_factor", "must be positive")
    if section["n_points"] < 2:
        _fail("grid.n_points", "must be >= 2")


def _check_revival(section: dict):
    _require(section, "", ("n_attempts", "p_init", "span_periods", "points"), "revival")
    _default(section, "amplitude", 1.0)
    if section["n_attempts"] < 1:
        _fail("revival.n_attempts", "must be >= 1")
    if not 0.0 <= section["p_init"] <= 1.0:
        _fail("revival.p_init", "must be in [0, 1]")
    if section["span_periods"] <= 0.0:
        _fail("revival.span_periods", "must be positive")
    if section["points"] < 2:
        _fail("revival.points", "must be >= 2")


def _check_pinit(section: dict):
    _require(
        section, "",
        ("repump_durations", "p_init_truth", "n_attempts", "span_periods", "points", "n_trials"),
        "pinit",
    )
    _default(section, "master_seed", 0)
    durations = section["repump_durations"]
    truths = section["p_init_truth"]
    if len(durations) != len(truths):
        _fail("pinit.p_init_truth", f"length {len(truths)} does not match repump_durations ({len(durations)})")
    for i, p in enumerate(truths):
        if not 0.0 <= p <= 1.0:
            _fail(f"pinit.p_init_truth[{i}]", "must be in [0, 1]")
    if section["n_attempts"] < 1:
        _fail("pinit.n_attempts", "must be >= 1")
    if section["span_periods"] <= 0.0:
        _fail("pinit.span_periods", "must be positive")
    if section["points"] < 2:
        _fail("pinit.points", "must be >= 2")
    if section["n_trials"] < 2:
        _fail("pinit.n_trials", "must be >= 2")


def _check_optical(section: dict):
    _require(section, "", ("t_ex", "t_eprime", "t_singlet", "branching"), "optical")
    _default(section, "gamma_xs", 0.0)


def _check_pulse(section: dict):
    _require(section, "", ("shape",), "pulse")
    shape = section["shape"]
    if shape not in ("square", "gaussian"):
        _fail("pulse.shape", f'expected "square" or "gaussian", got {shape!r}')
    _default(section, "width", 2.0e-9 if shape == "square" else 2.6e-9)
    _default(section, "area", 3.0)
    _default(section, "start", 0.0)


def _check_pumpprobe(section: dict):
    _require(section, "", ("delay_max", "delay_points"), "pumpprobe")
    _default(section, "delay_min", 0.0)
    _default(section, "probe_window", 40e-9)
    _default(section, "window_average", False)
    _default(section, "trials", 20000)
    _default(section, "master_seed", 0)
    _default(section, "initial", "ms-1")
    if section["delay_min"] < 0.0 or section["delay_max"] < section["delay_min"]:
        _fail("pumpprobe.delay_max", "need 0 <= delay_min <= delay_max")
    if section["delay_points"] < 1:
        _fail("pumpprobe.delay_points", "must be >= 1")
    if section["trials"] < 1:
        _fail("pumpprobe.trials", "must be >= 1")
    if section["initial"] not in _INITIAL_STATES:
        _fail("pumpprobe.initial", f'expected "ms0" or "ms-1", got {section["initial"]!r}')


# ---------------------------------------------------------------------------
# materialization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePlan:
    runspec: RunSpec


@dataclass(frozen=True)
class SweepPlan:
    runspec: RunSpec
    axis: str
    values: tuple[float, ...]
    power_map: PowerMap | None


@dataclass(frozen=True)
class GridPlan:
    """Template run plus two error axes; grids are sized per point."""

    template: RunSpec
    x_axis: str
    x_values: tuple[float, ...]
    y_axis: str
    y_values: tuple[float, ...]
    span_factor: float
    n_points: int


@dataclass(frozen=True)
class RevivalPlan:
    spin: NuclearSpinParams
    field: FieldParams
    sequence: AttemptSequence
    n_attempts: int
    p_init: float
    span_periods: float
    points: int
    amplitude: float

    @property
    def period(self) -> float:
        return TWO_PI / delta_omega(self.spin, self.field)

    def delays(self) -> np.ndarray:
        return np.linspace(0.0, self.span_periods * self.period, self.points)


@dataclass(frozen=True)
class PInitPlan:
    spin: NuclearSpinParams
    field: FieldParams
    sequence: AttemptSequence
    noise: NoiseModel
    repump_durations: tuple[float, ...]
    p_init_truth: tuple[float, ...]
    n_attempts: int
    span_periods: float
    points: int
    n_trials: int
    master_seed: int

    @property
    def period(self) -> float:
        return TWO_PI / delta_omega(self.spin, self.field)

    def delays(self) -> np.ndarray:
        return np.linspace(0.0, self.span_periods * self.period, self.points)


@dataclass(frozen=True)
class PumpProbePlan:
    model: OpticalLevelModel
    pulse: PulseEnvelope
    delays: tuple[float, ...]
    probe_window: float
    window_average: bool
    trials: int
    master_seed: int
    initial: ElectronState
    dt: float | None


def _expand_spin_section(section: dict) -> dict:
    """Resolve a table reference into the explicit canonical form."""
    if "table" not in section:
        return section
    from . import datasets

    row = datasets.spin_row(section["table"])
    return {
        "label": section["table"],
        "delta_omega": row["delta_omega"],
        "t2_star": row["t2_star"],
        "t2_hahn": 60e-3,
        "shift_approximation": True,
    }


def _build_spin(section: dict) -> NuclearSpinParams:
    section = _expand_spin_section(section)
    common = {
        "label": section["label"],
        "t2_star": section["t2_star"],
        "t2_hahn": section["t2_hahn"],
        "shift_approximation": section["shift_approximation"],
    }
    if "delta_omega" in section:
        return NuclearSpinParams(delta_omega=TWO_PI * section["delta_omega"], **common)
    return NuclearSpinParams(
        a_par=TWO_PI * section["a_par"], a_perp=TWO_PI * section["a_perp"], **common
    )


def _build_field(section: dict) -> FieldParams:
    return FieldParams.from_gauss(section["magnitude"])


def _build_sequence(section: dict, spin: NuclearSpinParams, field: FieldParams) -> AttemptSequence:
    ipd = section["inter_pulse_delay"]
    if ipd == "larmor":
        ipd = field.larmor_period
    elif ipd == "phase_match":
        ipd = phase_match_delay(spin, field)
    duration = section["attempt_duration"]
    return AttemptSequence.standard(
        ipd,
        alpha=section["alpha"],
        has_middle_pi=section["middle_pi"],
        post_repump_delay=section["post_repump_delay"],
        repump_duration=section["repump_duration"],
        attempt_duration=None if duration == "packed" else duration,
    )


def _build_noise(section: dict, spin: NuclearSpinParams) -> NoiseModel:
    if section["detuning_from_t2_star"]:
        sigma_det = detuning_width_from_t2_star(spin.t2_star)
    else:
        sigma_det = TWO_PI * section["sigma_detuning_qs"]
    return NoiseModel(
        tau=section["tau"],
        p_mw=section["p_mw"],
        p_init=section["p_init"],
        sigma_tau_qs=section["sigma_tau_qs"],
        sigma_tau_qs_relative=section["sigma_tau_qs_relative"],
        sigma_detuning_qs=sigma_det,
        p_depol=section["p_depol"],
        center_pump_phase=section["center_pump_phase"],
    )


def _build_runspec(document: dict, n_attempts: tuple[int, ...]) -> RunSpec:
    spin = _build_spin(document["spin"])
    field = _build_field(document["field"])
    run = document["run"]
    return RunSpec(
        spin=spin,
        field=field,
        sequence=_build_sequence(document["sequence"], spin, field),
        noise=_build_noise(document["noise"], spin),
        n_attempts=n_attempts,
        n_trials=run["n_trials"],
        echo_count=run["echo_count"],
        master_seed=run["master_seed"],
        initial_nuclear_state=run["initial_nuclear_state"],
        include_intrinsic_decay=run["include_intrinsic_decay"],
    )


def _build_optical(section: dict) -> OpticalLevelModel:
    ratios = section["branching"]
    total = sum(ratios)
    normalized = (ratios[0] / total, ratios[1] / total, ratios[2] / total)
    strain = section.get("strain_shift")
    if "gamma_es" in section:
        return OpticalLevelModel(
            t_ex=section["t_ex"],
            t_eprime=section["t_eprime"],
            gamma_es=TWO_PI * section["gamma_es"],
            t_singlet=section["t_singlet"],
            branching=normalized,
            gamma_xs=TWO_PI * section["gamma_xs"],
            strain_shift=strain,
        )
    return OpticalLevelModel(
        t_ex=section["t_ex"],
        t_eprime=section["t_eprime"],
        gamma_es=isc_rate_from_lifetimes(section["t_ex"], section["t_eprime"]),
        t_singlet=section["t_singlet"],
        branching=normalized,
        gamma_xs=TWO_PI * section["gamma_xs"],
        strain_shift=strain,
    )


def _build_pulse(section: dict) -> PulseEnvelope:
    return PulseEnvelope.calibrated_pi(
        section["width"],
        area=section["area"],
        shape=section["shape"],
        start=section["start"],
    )


def _materialize(document: dict):
    """Build the mode's plan; return (plan, effective document).

    The effective document is the canonical one with the symbolic values
    resolved: a spin table reference becomes the explicit row, and the
    timing symbols become the seconds they resolved to.  Values that a
    re-ingest would recompute identically from other keys (a detuning
    width tied to t2_star, a crossing rate derived from the lifetimes,
    "packed" attempts in a mode that re-packs them per point) stay
    symbolic, so emitted text always rebuilds bit-identical models.
    """
    mode = document["mode"]
    effective = {"schema": document["schema"], "mode": mode}
    if "label" in document:
        effective["label"] = document["label"]

    if mode == "pumpprobe":
        model = _build_optical(document["optical"])
        pulse = _build_pulse(document["pulse"])
        pp = document["pumpprobe"]
        delays = np.linspace(pp["delay_min"], pp["delay_max"], pp["delay_points"])
        plan = PumpProbePlan(
            model=model,
            pulse=pulse,
            delays=tuple(float(d) for d in delays),
            probe_window=pp["probe_window"],
            window_average=pp["window_average"],
            trials=pp["trials"],
            master_seed=pp["master_seed"],
            initial=_INITIAL_STATES[pp["initial"]],
            dt=pp.get("dt"),
        )
        effective["optical"] = dict(document["optical"])
        effective["pulse"] = dict(document["pulse"])
        effective["pumpprobe"] = dict(pp)
        return plan, effective

    spin = _build_spin(document["spin"])
    field = _build_field(document["field"])
    sequence = _build_sequence(document["sequence"], spin, field)
    effective["spin"] = _expand_spin_section(document["spin"])
    effective["field"] = dict(document["field"])
    effective_seq = dict(document["sequence"])
    effective_seq["inter_pulse_delay"] = sequence.inter_pulse_delay
    if not (mode == "pinit" and document["sequence"]["attempt_duration"] == "packed"):
        effective_seq["attempt_duration"] = sequence.attempt_duration
    effective["sequence"] = effective_seq

    if mode == "revival":
        rv = document["revival"]
        plan = RevivalPlan(
            spin=spin,
            field=field,
            sequence=sequence,
            n_attempts=rv["n_attempts"],
            p_init=rv["p_init"],
            span_periods=rv["span_periods"],
            points=rv["points"],
            amplitude=rv["amplitude"],
        )
        effective["revival"] = dict(rv)
        return plan, effective

    noise = _build_noise(document["noise"], spin)
    effective["noise"] = dict(document["noise"])

    if mode == "pinit":
        pi = document["pinit"]
        plan = PInitPlan(
            spin=spin,
            field=field,
            sequence=sequence,
            noise=noise,
            repump_durations=tuple(pi["repump_durations"]),
            p_init_truth=tuple(pi["p_init_truth"]),
            n_attempts=pi["n_attempts"],
            span_periods=pi["span_periods"],
            points=pi["points"],
            n_trials=pi["n_trials"],
            master_seed=pi["master_seed"],
        )
        effective["pinit"] = dict(pi)
        return plan, effective

    run = document["run"]
    if mode == "grid":
        spec = _build_runspec(document, (1,))
        gd = document["grid"]
        plan = GridPlan(
            template=spec,
            x_axis=gd["x_axis"],
            x_values=tuple(_to_model_units(gd["x_axis"], v) for v in gd["x_values"]),
            y_axis=gd["y_axis"],
            y_values=tuple(_to_model_units(gd["y_axis"], v) for v in gd["y_values"]),
            span_factor=gd["span_factor"],
            n_points=gd["n_points"],
        )
        effective["run"] = dict(run)
        effective["grid"] = dict(gd)
        return plan, effective

    grid = geometric_grid(run["n_max"], run["n_points"])
    spec = _build_runspec(document, grid)
    effective["run"] = dict(run)

    if mode == "curves":
        return CurvePlan(runspec=spec), effective

    sw = document["sweep"]
    power_map = None
    if sw["axis"] == "power":
        power_map = PowerMap(tau_min=sw["power_map"]["tau_min"], p_sat=sw["power_map"]["p_sat"])
    plan = SweepPlan(
        runspec=spec,
        axis=sw["axis"],
        values=tuple(_to_model_units(sw["axis"], v) for v in sw["values"]),
        power_map=power_map,
    )
    effective["sweep"] = {key: (dict(val) if isinstance(val, dict) else val) for key, val in sw.items()}
    return plan, effective


def _to_model_units(axis: str, value: float) -> float:
    # Canonical axis values are ordinary Hz for delta_omega; the model
    # wants rad/s.  Every other axis is already in base units.
    if axis == "delta_omega":
        return TWO_PI * value
    return float(value)


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Run:
    """One executable variant: its plan and its resolved document."""

    name: str
    plan: object
    document: dict


@dataclass(frozen=True)
class Scenario:
    mode: str
    label: str | None
    source: str
    base: dict
    variants: tuple[tuple[str, dict], ...]

    def runs(self) -> tuple[Run, ...]:
        """Materialize every variant (the bare document if there are none)."""
        out = []
        if not self.variants:
            plan, effective = self._materialize_named("", self.base)
            return (Run(name="", plan=plan, document=effective),)
        for name, document in self.variants:
            plan, effective = self._materialize_named(name, document)
            out.append(Run(name=name, plan=plan, document=effective))
        return tuple(out)

    def _materialize_named(self, name: str, document: dict):
        try:
            return _materialize(document)
        except ConfigError:
            raise
        except ValueError as exc:
            where = f"variant {name!r} of {self.source}" if name else self.source
            raise ConfigError(f"{where}: {exc}") from exc

    def effective_document(self) -> dict:
        _, effective = self._materialize_named("", self.base)
        effective = _present_document(effective)
        if self.variants:
            effective["variants"] = {
                name: _present_document(self._materialize_named(name, document)[1])
                for name, document in self.variants
            }
        return effective

    def effective_text(self) -> str:
        return emit_toml(self.effective_document())

    def digest(self) -> str:
        return document_digest(self.effective_text())


def _present_value(kind, value):
    if isinstance(kind, dict):
        return {key: _present_value(kind.get(key), item) for key, item in value.items()}
    if kind in _BASE_UNIT:
        return _quantity_text(value, kind)
    if kind in ("ipd", "duration"):
        return value if isinstance(value, str) else _quantity_text(value, "time")
    if kind == "timelist":
        return [_quantity_text(item, "time") for item in value]
    return value


def _present_document(document: dict) -> dict:
    """Effective document with dimensioned values spelled as unit strings.

    Serialization is in base units with repr() mantissas, so re-ingesting
    the emitted text reproduces the same floats bit for bit.
    """
    out = {}
    for name, section in document.items():
        registry = _SECTION_KEYS.get(name)
        if registry is None:
            out[name] = section
            continue
        presented = {
            key: _present_value(registry.get(key), item) for key, item in section.items()
        }
        if name == "sweep":
            dimension = _AXIS_DIMENSION.get(section["axis"])
            if dimension is not None:
                presented["values"] = [
                    _quantity_text(item, dimension) for item in section["values"]
                ]
        if name == "grid":
            for axis_key, values_key in (("x_axis", "x_values"), ("y_axis", "y_values")):
                dimension = _AXIS_DIMENSION.get(section[axis_key])
                if dimension is not None:
                    presented[values_key] = [
                        _quantity_text(item, dimension) for item in section[values_key]
                    ]
        out[name] = presented
    return out


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _apply_overrides(raw: dict, seed: int | None, trials: int | None) -> dict:
    if seed is None and trials is None:
        return raw
    mode = raw.get("mode")
    section_name = {
        "curves": "run",
        "sweep": "run",
        "grid": "run",
        "pinit": "pinit",
        "pumpprobe": "pumpprobe",
    }.get(mode)
    if section_name is None:
        return raw
    out = dict(raw)
    section = dict(out.get(section_name, {}))
    if seed is not None:
        section["master_seed"] = int(seed)
    if trials is not None:
        section["trials" if section_name == "pumpprobe" else "n_trials"] = int(trials)
    out[section_name] = section
    return out


def loads(text: str, *, source: str = "<string>", seed: int | None = None, trials: int | None = None) -> Scenario:
    """Parse, validate and expand one scenario document.

    ``seed`` and ``trials`` are command-line overrides; they take
    precedence over the file everywhere, including inside variants.
    """
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    variants_raw = raw.pop("variants", None)
    if variants_raw is not None and not isinstance(variants_raw, dict):
        raise ConfigError(f"{source}: variants: expected tables [variants.<name>]")

    try:
        base = _canonical_document(_apply_overrides(raw, seed, trials))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    variants = []
    if variants_raw:
        for name, override in variants_raw.items():
            if not isinstance(override, dict):
                raise ConfigError(f"{source}: variants.{name}: expected a table")
            if not _BARE_KEY.match(name):
                raise ConfigError(
                    f"{source}: variants.{name}: names must use [A-Za-z0-9_-] only"
                )
            merged = _apply_overrides(_deep_merge(raw, override), seed, trials)
            try:
                variants.append((name, _canonical_document(merged)))
            except ConfigError as exc:
                raise ConfigError(f"{source}: variants.{name}: {exc}") from None

    scenario = Scenario(
        mode=base["mode"],
        label=base.get("label"),
        source=source,
        base=base,
        variants=tuple(variants),
    )
    scenario.runs()  # fail on unbuildable documents at load time
    return scenario


def load_path(path, *, seed: int | None = None, trials: int | None = None) -> Scenario:
    import os

    with open(path, "rb") as handle:
        text = handle.read().decode("utf-8")
    return loads(text, source=os.path.basename(str(path)), seed=seed, trials=trials)


# ---------------------------------------------------------------------------
# deterministic emission
# ---------------------------------------------------------------------------

def _emit_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        import json

        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit_scalar(item) for item in value) + "]"
    raise ConfigError(f"cannot emit value of type {type(value).__name__}")


def _emit_key(key: str) -> str:
    if _BARE_KEY.match(key):
        return key
    import json

    return json.dumps(key)


def _emit_table(prefix: list, mapping: dict, lines: list):
    scalars = sorted(key for key, val in mapping.items() if not isinstance(val, dict))
    tables = sorted(key for key, val in mapping.items() if isinstance(val, dict))
    for key in scalars:
        lines.append(f"{_emit_key(key)} = {_emit_scalar(mapping[key])}")
    for key in tables:
        header = prefix + [key]
        if lines:
            lines.append("")
        lines.append("[" + ".".join(_emit_key(part) for part in header) + "]")
        _emit_table(header, mapping[key], lines)


def emit_toml(document: dict) -> str:
    """Serialize a document with sorted keys; reparses to the same tree."""
    lines: list = []
    _emit_table([], document, lines)
    return "\n".join(lines) + "\n"


def document_digest(text: str) -> str:
    """Sixteen hex digits identifying an effective document."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
