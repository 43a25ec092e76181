"""SI quantity parsing and formatting.

Scenario files and table fixtures carry human-readable quantities like
"4.7mH", "345kHz", "2.1uA" or "16.2ft". Everything internal is plain SI
(henries, farads, hertz, volts, amperes, ohms, seconds); feet and dB pass
through unscaled.
"""

from __future__ import annotations

import re

_PREFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "µ": 1e-6,
    "m": 1e-3,
    "": 1.0,
    "k": 1e3,
    "K": 1e3,
    "M": 1e6,
    "G": 1e9,
}

# unit symbol -> canonical dimension name
_UNITS = {
    "H": "inductance",
    "F": "capacitance",
    "Hz": "frequency",
    "V": "voltage",
    "A": "current",
    "Ohm": "resistance",
    "ohm": "resistance",
    "Ω": "resistance",
    "s": "time",
    "ft": "distance",
    "dB": "level",
    "W": "power",
    "Pa": "pressure",
    "V/Pa": "sensitivity",
}

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY_RE = re.compile(
    rf"^\s*({_NUMBER})\s*({'|'.join(sorted(_PREFIXES, key=len, reverse=True))})?"
    rf"({'|'.join(sorted(_UNITS, key=len, reverse=True))})\s*$"
)


class UnitError(ValueError):
    """Raised for malformed quantities or unit/dimension mismatches."""


def parse_quantity(text: str | float | int, dimension: str | None = None) -> float:
    """Parse "4.7mH" style text into an SI float.

    Bare numbers (str or numeric) are taken as already-SI values. When
    `dimension` is given, the unit symbol must match it.
    """
    if isinstance(text, (int, float)):
        return float(text)
    if not isinstance(text, str):
        raise UnitError(f"cannot parse quantity from {text!r}")
    stripped = text.strip()
    try:
        return float(stripped)
    except ValueError:
        pass
    match = _QUANTITY_RE.match(stripped)
    if match is None:
        raise UnitError(f"malformed quantity {text!r}")
    value, prefix, unit = match.groups()
    parsed_dim = _UNITS[unit]
    if dimension is not None and parsed_dim != dimension:
        raise UnitError(f"expected a {dimension} but got {text!r} ({parsed_dim})")
    # dB and ft carry no SI prefix scaling in practice; reject "kdB" etc.
    if parsed_dim in ("level", "distance") and prefix not in ("", None):
        raise UnitError(f"prefix not allowed on {unit}: {text!r}")
    scale = _PREFIXES[prefix or ""]
    return float(value) * scale


def format_si(value: float, unit: str, digits: int = 4) -> str:
    """Render an SI value with an engineering prefix, e.g. 4.7e-3 H -> '4.7mH'."""
    if value == 0:
        return f"0{unit}"
    magnitude = abs(value)
    for prefix, scale in (("G", 1e9), ("M", 1e6), ("k", 1e3), ("", 1.0),
                          ("m", 1e-3), ("u", 1e-6), ("n", 1e-9), ("p", 1e-12),
                          ("f", 1e-15)):
        if magnitude >= scale:
            scaled = value / scale
            return f"{scaled:.{digits}g}{prefix}{unit}"
    return f"{value:.{digits}g}{unit}"
