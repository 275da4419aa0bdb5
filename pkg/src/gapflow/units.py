"""Quantity parsing for scenario files.

Internally everything is SI (m, s, veh/m, veh/s).  Scenario files declare
units per field ("1200 veh/h", "10 m", "0.25 1/s"); bare numbers are taken
as SI.  Mixing conventions silently is the classic failure mode for this
kind of model, hence the explicit table.
"""

from __future__ import annotations

from .errors import UnitError

# unit token -> (dimension, factor to SI)
_UNITS = {
    "m": ("length", 1.0),
    "km": ("length", 1000.0),
    "s": ("time", 1.0),
    "min": ("time", 60.0),
    "h": ("time", 3600.0),
    "m/s": ("speed", 1.0),
    "km/h": ("speed", 1000.0 / 3600.0),
    "veh/m": ("density", 1.0),
    "veh/km": ("density", 1.0 / 1000.0),
    "veh/s": ("flow", 1.0),
    "veh/min": ("flow", 1.0 / 60.0),
    "veh/h": ("flow", 1.0 / 3600.0),
    "1/s": ("rate", 1.0),
    "-": ("dimensionless", 1.0),
}


def parse_quantity(value, expect=None, field=""):
    """Convert a scenario value to SI float.

    ``value`` may be a number (assumed SI) or a string ``"<number> <unit>"``.
    ``expect`` optionally names the required dimension and raises UnitError
    on mismatch.
    """
    if isinstance(value, bool):
        raise UnitError(f"{field}: boolean is not a quantity")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise UnitError(f"{field}: cannot parse quantity from {value!r}")
    parts = value.split()
    if len(parts) == 1:
        try:
            return float(parts[0])
        except ValueError as exc:
            raise UnitError(f"{field}: bad number in {value!r}") from exc
    if len(parts) != 2:
        raise UnitError(f"{field}: expected '<number> <unit>', got {value!r}")
    num, unit = parts
    try:
        mag = float(num)
    except ValueError as exc:
        raise UnitError(f"{field}: bad number in {value!r}") from exc
    if unit not in _UNITS:
        raise UnitError(f"{field}: unknown unit {unit!r}")
    dim, factor = _UNITS[unit]
    if expect is not None and dim != expect:
        raise UnitError(f"{field}: expected a {expect}, got {unit!r} ({dim})")
    return mag * factor
