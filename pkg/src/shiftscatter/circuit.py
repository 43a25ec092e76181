"""Reactance-network math for the tag oscillators.

Pure functions over value-semantic dataclasses: series/parallel combination,
effective-tank reduction for the two oscillator topologies, resonance, the
tuning inverse, and the varactor/JFET element models. Everything is SI
(henries, farads, hertz, volts, ohms) and double precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

__all__ = [
    "Topology",
    "OscillatorDesign",
    "TankReduction",
    "VaractorModel",
    "JfetModel",
    "CircuitError",
    "PinchOffError",
    "series_capacitance",
    "parallel_capacitance",
    "parallel_inductance",
    "reduce_tank",
    "resonant_frequency",
    "required_capacitance",
    "varactor_capacitance",
    "jfet_resistance",
]


class CircuitError(ValueError):
    """Invalid argument or infeasible network value."""


class PinchOffError(CircuitError):
    """JFET driven at or below pinch-off: the switch is effectively open."""


class Topology(enum.Enum):
    ESCO_DRAIN = "esco_drain"
    MCO_GATE = "mco_gate"


@dataclass(frozen=True)
class OscillatorDesign:
    """Component network that fixes a tag's oscillation frequency.

    `c_jfet` is the effective parasitic capacitance looking into the
    antenna-side switch; it cannot be measured directly on hardware, so it is
    a model parameter (default 10 pF) that per-tag calibration may override.
    `c_shift` is the optional extra tuning capacitor at the switch gate;
    `r_adjust` is the current-limiting resistor and exists only for the
    gate-output topology.
    """

    topology: Topology
    l1: float
    l2: float
    c1: float
    c2: float
    c_blocking: float
    c_shift: float | None = None
    c_jfet: float = 10e-12
    r_adjust: float | None = None

    def __post_init__(self):
        for name in ("l1", "l2", "c1", "c2", "c_blocking", "c_jfet"):
            value = getattr(self, name)
            if not (value > 0) or not math.isfinite(value):
                raise CircuitError(f"{name} must be strictly positive, got {value!r}")
        if self.c_shift is not None and not (self.c_shift > 0):
            raise CircuitError(f"c_shift must be absent or positive, got {self.c_shift!r}")
        if self.topology is Topology.MCO_GATE:
            if self.r_adjust is None or not (self.r_adjust > 0):
                raise CircuitError("gate-output designs require a positive r_adjust")
        elif self.r_adjust is not None:
            raise CircuitError("r_adjust is only meaningful for the gate-output topology")

    def with_values(self, **kwargs) -> "OscillatorDesign":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class TankReduction:
    """Equivalent single-LC tank and its resonant frequency."""

    l_eq: float
    c_eq: float
    f_resonant: float


@dataclass(frozen=True)
class VaractorModel:
    """Junction-diode capacitance curve C(v) = C0 / (1 + v/Vj)^gamma.

    The part is only named in the source material; the curve shape is a model
    decision. gamma ~ 0.5 is an abrupt junction, gamma ~ 2 a hyperabrupt one.
    """

    c_zero_bias: float
    junction_potential: float = 0.7
    grading_exponent: float = 0.5

    def __post_init__(self):
        if not (self.c_zero_bias > 0):
            raise CircuitError("c_zero_bias must be positive")
        if not (self.junction_potential > 0):
            raise CircuitError("junction_potential must be positive")
        if not (self.grading_exponent > 0):
            raise CircuitError("grading_exponent must be positive")


@dataclass(frozen=True)
class JfetModel:
    """Triode-region switch resistance vs gate voltage.

    Affine within +/-0.2 V of zero (the intended drive window); below the
    window it stays affine down to pinch-off, above it it decays smoothly so
    the resistance never goes negative. Gate current is not modeled: it has
    no consumer in the simulation (it only sets the hundreds-of-nA drive cost
    in the source material) and is deliberately left out of the fields.
    """

    v_pinchoff: float = -1.9
    r_on: float = 500.0
    triode_slope: float = 1000.0

    LINEAR_WINDOW = 0.2

    def __post_init__(self):
        if not (self.v_pinchoff < 0):
            raise CircuitError("v_pinchoff must be negative")
        if not (self.r_on > 0) or not (self.triode_slope > 0):
            raise CircuitError("r_on and triode_slope must be positive")


def _check_positive(values: Iterable[float], what: str):
    empty = True
    for v in values:
        empty = False
        if not (v > 0):
            raise CircuitError(f"{what} must all be strictly positive, got {v!r}")
    if empty:
        raise CircuitError(f"{what}: empty list")


def series_capacitance(caps: Sequence[float]) -> float:
    """Series combination: 1 / sum(1/c)."""
    _check_positive(caps, "series capacitances")
    return 1.0 / sum(1.0 / c for c in caps)


def parallel_capacitance(caps: Sequence[float]) -> float:
    """Parallel combination: sum(c)."""
    _check_positive(caps, "parallel capacitances")
    return float(sum(caps))


def parallel_inductance(a: float, b: float) -> float:
    """Two-branch parallel inductance a*b/(a+b); inf means an open branch."""
    if not (a > 0) or not (b > 0):
        raise CircuitError(f"inductances must be strictly positive, got {a!r}, {b!r}")
    if math.isinf(a):
        return b
    if math.isinf(b):
        return a
    return a * b / (a + b)


def resonant_frequency(l: float, c: float) -> float:
    """LC resonance 1 / (2*pi*sqrt(l*c))."""
    if not (l > 0) or not (c > 0):
        raise CircuitError(f"l and c must be strictly positive, got {l!r}, {c!r}")
    return 1.0 / (2.0 * math.pi * math.sqrt(l * c))


def required_capacitance(target_f: float, l: float) -> float:
    """Inverse of resonant_frequency: the c that tunes inductance l to target_f."""
    if not (target_f > 0) or not (l > 0):
        raise CircuitError(f"target_f and l must be strictly positive, got {target_f!r}, {l!r}")
    return 1.0 / ((2.0 * math.pi * target_f) ** 2 * l)


def gate_branch_capacitance(design: OscillatorDesign) -> float:
    """The switch-gate series element C0 = C_blocking in series with (C_JFET || C_shift)."""
    branch = design.c_jfet if design.c_shift is None else parallel_capacitance(
        [design.c_jfet, design.c_shift])
    return series_capacitance([design.c_blocking, branch])


def reduce_tank(design: OscillatorDesign,
                l1_override: float | None = None,
                c1_extra: float = 0.0,
                c2_extra: float = 0.0) -> TankReduction:
    """Collapse the oscillator network to one equivalent LC tank.

    Gate-output: the blocking/parasitic/shift network forms C0 in series with
    C1 and C2, all parallel with L1 (a Clapp-style tank, so the small C0
    dominates and small shifts at the gate move the frequency a lot).
    Drain-output: C1 and C2 in series form the tank capacitance, with the
    series pair (C_JFET, C_blocking) as a parallel parasitic branch across it.

    The `*_extra` hooks add sensor capacitance in parallel with C1/C2 and
    `l1_override` substitutes the sensor-loaded effective L1; they exist so
    the sensor couplings reuse this single reduction.
    """
    if c1_extra < 0 or c2_extra < 0:
        raise CircuitError("sensor capacitance contributions cannot be negative")
    c1 = design.c1 + c1_extra
    c2 = design.c2 + c2_extra
    l_eq = design.l1 if l1_override is None else l1_override
    if not (l_eq > 0):
        raise CircuitError(f"effective inductance must be positive, got {l_eq!r}")
    if design.topology is Topology.MCO_GATE:
        c0 = gate_branch_capacitance(design)
        c_eq = series_capacitance([c0, c1, c2])
    else:
        divider = series_capacitance([c1, c2])
        parasitic = series_capacitance([design.c_jfet, design.c_blocking])
        c_eq = parallel_capacitance([divider, parasitic])
    return TankReduction(l_eq=l_eq, c_eq=c_eq, f_resonant=resonant_frequency(l_eq, c_eq))


def varactor_capacitance(model: VaractorModel, v: float) -> float:
    """Capacitance at reverse bias v; strictly decreasing, defined for v > -Vj."""
    if v <= -model.junction_potential:
        raise CircuitError(
            f"varactor bias {v} V at or below -Vj ({-model.junction_potential} V)")
    return model.c_zero_bias / (1.0 + v / model.junction_potential) ** model.grading_exponent


def jfet_resistance(model: JfetModel, v_gs: float) -> float:
    """Switch channel resistance at gate-source voltage v_gs.

    Affine r_on - slope*v_gs through the +/-0.2 V drive window and on down to
    pinch-off; above +0.2 V the affine line is continued by an exponential of
    matching slope so the value stays positive (saturating, monotone).
    """
    if v_gs <= model.v_pinchoff:
        raise PinchOffError(f"v_gs {v_gs} V at or below pinch-off {model.v_pinchoff} V")
    w = model.LINEAR_WINDOW
    if v_gs <= w:
        return model.r_on - model.triode_slope * v_gs
    r_edge = model.r_on - model.triode_slope * w
    if r_edge <= 0:
        raise CircuitError("affine window leaves no positive resistance headroom")
    # slope-continuous positive decay beyond the window
    return r_edge * math.exp(-model.triode_slope * (v_gs - w) / r_edge)
