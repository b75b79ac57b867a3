"""Parsing and formatting of quantities with unit suffixes.

Scenario files write physical values the way lab notebooks do ("177 ns",
"62.4 kHz", "4.14 kG", "30 nW", "pi/2").  Parsers return plain floats in
the base unit of each dimension: seconds, hertz (ordinary frequency, not
angular), gauss, watts, radians.  Angular conversion happens at the
physics boundary, never here.
"""

from __future__ import annotations

import math
import re

from .errors import ConfigError

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY_RE = re.compile(rf"^\s*({_NUMBER})\s*([A-Za-zµ]*)\s*$")
_PI_RE = re.compile(rf"^\s*({_NUMBER})?\s*\*?\s*pi\s*(?:/\s*({_NUMBER}))?\s*$")

_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12}
_FREQUENCY = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_FIELD = {"G": 1.0, "kG": 1e3, "mG": 1e-3, "T": 1e4}
_POWER = {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "µW": 1e-6, "nW": 1e-9, "pW": 1e-12}

_SCALES = {
    "time": _TIME,
    "frequency": _FREQUENCY,
    "field": _FIELD,
    "power": _POWER,
}


def parse_quantity(value, dimension: str, path: str | None = None) -> float:
    """Float in base units from a number or a suffixed string."""
    scales = _SCALES[dimension]
    if isinstance(value, bool):
        raise ConfigError(f"expected a {dimension}, got a boolean", path)
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a {dimension}, got {type(value).__name__}", path)
    match = _QUANTITY_RE.match(value)
    if match is None:
        raise ConfigError(f"cannot parse {value!r} as a {dimension}", path)
    number, suffix = match.groups()
    if suffix == "":
        return float(number)
    if suffix not in scales:
        known = ", ".join(sorted(scales))
        raise ConfigError(
            f"unknown {dimension} unit {suffix!r} in {value!r} (known: {known})", path
        )
    return float(number) * scales[suffix]


def parse_time(value, path: str | None = None) -> float:
    return parse_quantity(value, "time", path)


def parse_frequency(value, path: str | None = None) -> float:
    return parse_quantity(value, "frequency", path)


def parse_field(value, path: str | None = None) -> float:
    return parse_quantity(value, "field", path)


def parse_power(value, path: str | None = None) -> float:
    return parse_quantity(value, "power", path)


def parse_angle(value, path: str | None = None) -> float:
    """Radians from a number or a pi expression like "pi/2" or "0.5 pi"."""
    if isinstance(value, bool):
        raise ConfigError("expected an angle, got a boolean", path)
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected an angle, got {type(value).__name__}", path)
    match = _PI_RE.match(value)
    if match is not None:
        coefficient, divisor = match.groups()
        angle = math.pi * (float(coefficient) if coefficient else 1.0)
        if divisor is not None:
            angle /= float(divisor)
        return angle
    match = _QUANTITY_RE.match(value)
    if match is not None and match.group(2) in ("", "rad"):
        return float(match.group(1))
    raise ConfigError(f"cannot parse {value!r} as an angle", path)


def format_quantity(value: float, dimension: str) -> str:
    """Readable suffixed form, chosen so the value is in [1, 1000)."""
    if value == 0.0:
        base = {"time": "s", "frequency": "Hz", "field": "G", "power": "W"}
        return f"0 {base[dimension]}"
    scales = _SCALES[dimension]
    best = min(scales.items(), key=lambda kv: _badness(abs(value) / kv[1]))
    scaled = value / best[1]
    return f"{scaled:.12g} {best[0]}"


def _badness(magnitude: float) -> tuple:
    in_window = 1.0 <= magnitude < 1000.0
    return (not in_window, abs(math.log10(magnitude)) if magnitude > 0 else math.inf)
