"""Access to the bundled data tables of the working sample.

Three reference tables ship with the package: the carbon-13 spin table
(splittings and dephasing times), the optical-cycle table (lifetimes,
crossing rate, singlet branching, per-strain pump-probe rows), and the
published working-point numbers the acceptance suite checks against.
Seven ready-made scenario files live next to them and drive the
``reproduce`` command.

Quantities in the TOML sources carry unit suffixes ("62.4 kHz", "9.9 ms").
Accessors here return base SI units, with frequencies converted to
angular (rad/s) wherever the consuming API expects them; the raw
documents are available through :func:`reference_values` and
:func:`optical_reference` for callers that want the quoted strings and
error bars.
"""

from __future__ import annotations

from importlib import resources

import tomli

from .errors import ConfigError
from .optical import OpticalLevelModel
from .physics import TWO_PI, FieldParams, NuclearSpinParams
from .units import parse_field, parse_frequency, parse_time

__all__ = [
    "FIGURE_IDS",
    "default_optical_model",
    "figure_config",
    "figure_source",
    "optical_reference",
    "optical_rows",
    "reference_values",
    "spin_labels",
    "spin_params",
    "spin_row",
    "spin_table",
    "working_field",
]

FIGURE_IDS = ("fig1d", "fig2", "fig3a", "fig3b", "fig4a", "fig4b", "fig5b")

_SPIN_SCHEMA = "nvsim-spins/1"
_OPTICAL_SCHEMA = "nvsim-optical/1"
_REFERENCE_SCHEMA = "nvsim-reference/1"


def _data_file(*parts: str):
    node = resources.files("nvsim") / "data"
    for part in parts:
        node = node / part
    return node


def _load(schema: str, *parts: str) -> dict:
    name = "/".join(parts)
    with _data_file(*parts).open("rb") as handle:
        document = tomli.load(handle)
    found = document.get("schema")
    if found != schema:
        raise ConfigError(f"{name}: expected schema {schema!r}, found {found!r}")
    return document


def spin_labels() -> tuple[str, ...]:
    """Labels of the bundled spins, strongest splitting first."""
    document = _load(_SPIN_SCHEMA, "spins.toml")
    return tuple(key for key in document if key != "schema")


def spin_row(label: str) -> dict:
    """One bundled spin row in base units (ordinary Hz, seconds)."""
    document = _load(_SPIN_SCHEMA, "spins.toml")
    try:
        row = document[label]
    except KeyError:
        known = ", ".join(key for key in document if key != "schema")
        raise ConfigError(f"unknown spin {label!r}; bundled spins: {known}") from None
    return {
        "delta_omega": parse_frequency(row["delta_omega"], path=f"{label}.delta_omega"),
        "t2_star": parse_time(row["t2_star"], path=f"{label}.t2_star"),
        "t2_star_err": parse_time(row["t2_star_err"], path=f"{label}.t2_star_err"),
    }


def spin_params(label: str) -> NuclearSpinParams:
    """One bundled spin as simulation-ready parameters.

    The table quotes ordinary splittings; the returned ``delta_omega``
    is angular (rad/s).
    """
    row = spin_row(label)
    return NuclearSpinParams.from_delta_omega(
        label=label,
        delta_omega=TWO_PI * row["delta_omega"],
        t2_star=row["t2_star"],
    )


def spin_table() -> dict[str, NuclearSpinParams]:
    return {label: spin_params(label) for label in spin_labels()}


def optical_reference() -> dict:
    """Raw optical table: [model] section plus per-strain [[rows]]."""
    return _load(_OPTICAL_SCHEMA, "optical.toml")


def default_optical_model() -> OpticalLevelModel:
    """Strain-averaged level model from the bundled [model] section."""
    section = optical_reference()["model"]
    ratios = section["branching"]
    return OpticalLevelModel.from_lifetimes(
        t_ex=parse_time(section["t_ex"], path="model.t_ex"),
        t_eprime=parse_time(section["t_eprime"], path="model.t_eprime"),
        t_singlet=parse_time(section["t_singlet"], path="model.t_singlet"),
        branching=(ratios[0], ratios[1], ratios[2]),
    )


def optical_rows() -> tuple[dict, ...]:
    """Per-strain pump-probe rows with quantities in base units.

    ``branching_b0`` stays a ratio against 1 : 1 for the other two
    channels, matching how the rows were measured.
    """
    rows = []
    for index, row in enumerate(optical_reference()["rows"]):
        where = f"rows[{index}]"
        rows.append(
            {
                "strain_shift": parse_frequency(row["strain_shift"], path=f"{where}.strain_shift"),
                "lifetime": parse_time(row["lifetime"], path=f"{where}.lifetime"),
                "lifetime_err": parse_time(row["lifetime_err"], path=f"{where}.lifetime_err"),
                "p_singlet": float(row["p_singlet"]),
                "p_singlet_err": float(row["p_singlet_err"]),
                "branching_b0": float(row["branching_b0"]),
                "branching_b0_err": float(row["branching_b0_err"]),
            }
        )
    return tuple(rows)


def reference_values() -> dict:
    """Published working-point numbers, as quoted (strings keep units)."""
    return _load(_REFERENCE_SCHEMA, "reference.toml")


def working_field(high: bool = False) -> FieldParams:
    """The measurement field, or the tenfold projection when ``high``."""
    section = reference_values()["field"]
    key = "high_field_magnitude" if high else "magnitude"
    return FieldParams.from_gauss(parse_field(section[key], path=f"field.{key}"))


def figure_source(fig_id: str) -> str:
    """TOML text of one bundled scenario."""
    if fig_id not in FIGURE_IDS:
        raise ConfigError(f"unknown figure id {fig_id!r}; bundled: {', '.join(FIGURE_IDS)}")
    return _data_file("figures", f"{fig_id}.toml").read_text("utf-8")


def figure_config(fig_id: str):
    """Parsed and validated scenario for one bundled figure."""
    from . import config

    return config.loads(figure_source(fig_id), source=f"{fig_id}.toml")
