"""Unit handling at the configuration boundary.

Everything inside the library runs in linear units: watts for powers and
plain ratios for gains.  dB / dBm spellings are accepted only when configs
and CLI flags are parsed, and converted exactly once here.
"""

from __future__ import annotations

import math


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(value: float) -> float:
    if value <= 0:
        raise ValueError("dB conversion needs a positive linear value")
    return 10.0 * math.log10(value)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError("dBm conversion needs a positive power")
    return 10.0 * math.log10(watts / 1e-3)


def parse_gain(text: str | float | int) -> float:
    """Parse a dimensionless gain: a linear number or a '<x> dB' string."""
    if isinstance(text, (int, float)):
        return float(text)
    token = text.strip().lower().replace("db", " db").split()
    if len(token) == 1:
        return float(token[0])
    if len(token) == 2 and token[1] == "db":
        return db_to_linear(float(token[0]))
    raise ValueError(f"cannot parse gain {text!r}; use a linear value or '<x> dB'")


def parse_power(text: str | float | int) -> float:
    """Parse a power into watts: a number (watts), '<x> dBm', '<x> mW' or '<x> W'."""
    if isinstance(text, (int, float)):
        return float(text)
    raw = text.strip().lower()
    for suffix, conv in (("dbm", dbm_to_watts), ("mw", lambda v: v * 1e-3), ("w", float)):
        if raw.endswith(suffix):
            return conv(float(raw[: -len(suffix)].strip()))
    try:
        return float(raw)
    except ValueError:
        raise ValueError(
            f"cannot parse power {text!r}; use watts, '<x> W', '<x> mW' or '<x> dBm'"
        ) from None
