"""Tag-side simulation: sensor couplings, interaction scripts, power gating.

A tag is an oscillator design plus one sensor model. Sensors perturb the
tank: buttons short inductors out of the parallel branch, barcode teeth add
capacitance at a chosen node, and the microphone-varactor pair converts
voltage into capacitance across C2. `frequency_track` turns a timed script
into the instantaneous oscillation frequency at the channel sample rate,
gated by a startup-power feasibility model of the harvester.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .circuit import (
    CircuitError,
    OscillatorDesign,
    Topology,
    VaractorModel,
    gate_branch_capacitance,
    parallel_inductance,
    reduce_tank,
    required_capacitance,
    varactor_capacitance,
)

__all__ = [
    "Button",
    "AttachNode",
    "InductiveButtons",
    "CapacitiveBarcode",
    "AudioVaractor",
    "SensorModel",
    "TagConfig",
    "ButtonPress",
    "ButtonRelease",
    "SwipeTooth",
    "AudioWaveform",
    "TouchTeg",
    "InteractionScript",
    "FrequencyTrack",
    "ConstantDc",
    "TegTouch",
    "PowerSupply",
    "ScriptError",
    "CalibrationError",
    "idle_frequency",
    "event_frequency",
    "frequency_track",
    "power_gate",
    "calibrate_sensor",
]

DEVIATION_BOUND = 70e3          # hard cap on |f - f0| for any active sample
TRANSITION_TAU = 2e-3           # first-order smoothing between discrete levels
MIN_TOOTH_SEPARATION = 0.5e-12  # farads, construction-time separability floor
MIN_SHIFT_SEPARATION = 2e3      # hertz, post-calibration separability floor


class ScriptError(ValueError):
    """Malformed or conflicting interaction script."""


class CalibrationError(ValueError):
    """Sensor calibration targets unreachable with positive components."""


class Button(enum.Enum):
    NONE = "none"
    UP = "up"
    DOWN = "down"


class AttachNode(enum.Enum):
    C1 = "c1"
    C2 = "c2"
    MID = "mid"


@dataclass(frozen=True)
class InductiveButtons:
    """Two series inductors across L1; pressing a button shorts one of them."""

    l11: float
    l12: float
    buttons: Button = Button.NONE

    def __post_init__(self):
        if not (self.l11 > 0) or not (self.l12 > 0):
            raise CircuitError("l11 and l12 must be positive")


@dataclass(frozen=True)
class CapacitiveBarcode:
    """Ordered copper teeth; touching tooth k adds tooth_caps[k] at attach_node.

    The mid node sits between C1 and C2, which the finger couples to ground,
    so electrically it loads the C2 side of the divider.
    """

    tooth_caps: tuple[float, ...]
    attach_node: AttachNode = AttachNode.MID

    def __post_init__(self):
        if not self.tooth_caps:
            raise CircuitError("barcode needs at least one tooth")
        if any(not (c > 0) for c in self.tooth_caps):
            raise CircuitError("tooth capacitances must be positive")
        caps = sorted(self.tooth_caps)
        for a, b in zip(caps, caps[1:]):
            if b - a < MIN_TOOTH_SEPARATION:
                raise CircuitError(
                    f"tooth capacitances closer than {MIN_TOOTH_SEPARATION*1e12:.1f} pF "
                    "are not separable")


@dataclass(frozen=True)
class AudioVaractor:
    """Microphone in parallel with a varactor, the pair placed across C2.

    The varactor idles at bias_voltage and the microphone swings the bias by
    mic_sensitivity volts per pascal. blocking_caps keeps the microphone's
    charge path out of the tank and is carried as data only.
    """

    varactor: VaractorModel
    mic_sensitivity: float
    blocking_caps: float = 10e-9
    bias_voltage: float = 2.0

    def __post_init__(self):
        if not (self.mic_sensitivity > 0):
            raise CircuitError("mic_sensitivity must be positive")
        if not (self.blocking_caps > 0):
            raise CircuitError("blocking_caps must be positive")
        if self.bias_voltage <= -self.varactor.junction_potential:
            raise CircuitError("bias_voltage must keep the varactor above -Vj")


SensorModel = Union[InductiveButtons, CapacitiveBarcode, AudioVaractor, None]


@dataclass(frozen=True)
class TagConfig:
    tag_id: str
    design: OscillatorDesign
    sensor: SensorModel
    startup_voltage: float
    startup_current: float
    channel_center: float
    modulation_depth: float = 0.5

    def __post_init__(self):
        if not self.tag_id:
            raise CircuitError("tag_id must be non-empty")
        if not (100e3 <= self.channel_center <= 1e6):
            raise CircuitError(
                f"channel_center {self.channel_center} Hz outside the 100 kHz - 1 MHz band")
        if not (self.startup_voltage > 0) or not (self.startup_current > 0):
            raise CircuitError("startup voltage and current must be positive")
        if not (0.0 <= self.modulation_depth <= 1.0):
            raise CircuitError("modulation_depth must be within [0, 1]")

    def with_values(self, **kwargs) -> "TagConfig":
        return replace(self, **kwargs)


# ---------------------------------------------------------------------------
# scripts

@dataclass(frozen=True)
class ButtonPress:
    button: Button
    t: float


@dataclass(frozen=True)
class ButtonRelease:
    button: Button
    t: float


@dataclass(frozen=True)
class SwipeTooth:
    tooth: int
    t_start: float
    t_end: float
    cap_jitter: float = 0.0     # farads, per-event finger-variation term


@dataclass(frozen=True)
class AudioWaveform:
    samples: np.ndarray         # pascals at `rate`
    rate: float
    t_start: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.rate <= 0:
            raise ScriptError("audio rate must be positive")

    @property
    def t_end(self) -> float:
        return self.t_start + len(self.samples) / self.rate


@dataclass(frozen=True)
class TouchTeg:
    t_start: float
    duration: float


ScriptEvent = Union[ButtonPress, ButtonRelease, SwipeTooth, AudioWaveform, TouchTeg]


def _event_start(ev: ScriptEvent) -> float:
    return ev.t if isinstance(ev, (ButtonPress, ButtonRelease)) else ev.t_start


@dataclass(frozen=True)
class InteractionScript:
    """Timed per-tag events, validated to be ordered and non-conflicting.

    Sensor events (button intervals, teeth) must not overlap each other;
    audio waveforms and TEG touches are exempt (a finger can hold the
    thermoelectric pad while the other hand interacts).
    """

    events: tuple[ScriptEvent, ...] = ()

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        starts = [_event_start(ev) for ev in events]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ScriptError("script events must be time-ordered")
        self._check_sensor_conflicts()

    def _check_sensor_conflicts(self):
        intervals = self.sensor_intervals(allow_open=True)
        for (s1, a1, b1), (s2, a2, b2) in zip(intervals, intervals[1:]):
            if a2 < b1 - 1e-12:
                raise ScriptError(
                    f"sensor events overlap: {s1} [{a1}, {b1}) and {s2} [{a2}, {b2})")

    def sensor_intervals(self, allow_open: bool = False,
                         until: float = math.inf) -> list[tuple]:
        """Resolve press/release pairs and teeth into (state, t0, t1) triples."""
        intervals = []
        pressed: tuple[Button, float] | None = None
        for ev in self.events:
            if isinstance(ev, ButtonPress):
                if ev.button is Button.NONE:
                    raise ScriptError("cannot press Button.NONE")
                if pressed is not None:
                    raise ScriptError(
                        f"button {ev.button.value} pressed at {ev.t} while "
                        f"{pressed[0].value} is still held")
                pressed = (ev.button, ev.t)
            elif isinstance(ev, ButtonRelease):
                if pressed is None or pressed[0] is not ev.button:
                    raise ScriptError(
                        f"release of {ev.button.value} at {ev.t} without a matching press")
                intervals.append((pressed[0], pressed[1], ev.t))
                pressed = None
            elif isinstance(ev, SwipeTooth):
                if ev.t_end <= ev.t_start:
                    raise ScriptError("swipe tooth interval must have positive length")
                intervals.append((ev, ev.t_start, ev.t_end))
        if pressed is not None:
            if not allow_open and math.isinf(until):
                raise ScriptError(f"button {pressed[0].value} never released")
            intervals.append((pressed[0], pressed[1], until))
        return sorted(intervals, key=lambda iv: iv[1])

    def audio_events(self) -> list[AudioWaveform]:
        return [ev for ev in self.events if isinstance(ev, AudioWaveform)]

    def touch_events(self) -> list[TouchTeg]:
        return [ev for ev in self.events if isinstance(ev, TouchTeg)]


# ---------------------------------------------------------------------------
# power supplies

@dataclass(frozen=True)
class ConstantDc:
    voltage: float
    current: float

    def __post_init__(self):
        if not (self.voltage > 0) or not (self.current > 0):
            raise CircuitError("supply voltage and current must be positive")


@dataclass(frozen=True)
class TegTouch:
    """Thermoelectric finger-touch pulse: double exponential scaled to the peaks.

    Defaults follow the measured one-second touch (0.4 V, 2.5 uA peaks).
    touch_starts lists when touches begin; each contributes one pulse and
    overlapping pulses add.
    """

    peak_voltage: float = 0.4
    peak_current: float = 2.5e-6
    rise_tau: float = 0.2
    decay_tau: float = 1.5
    touch_starts: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not (self.peak_voltage > 0) or not (self.peak_current > 0):
            raise CircuitError("TEG peaks must be positive")
        if not (0 < self.rise_tau < self.decay_tau):
            raise CircuitError("need 0 < rise_tau < decay_tau")

    def _pulse_norm(self) -> float:
        t_star = (math.log(self.decay_tau / self.rise_tau)
                  * self.rise_tau * self.decay_tau / (self.decay_tau - self.rise_tau))
        return math.exp(-t_star / self.decay_tau) - math.exp(-t_star / self.rise_tau)

    def envelope(self, t: np.ndarray) -> np.ndarray:
        """Unit-peak pulse envelope summed over touches."""
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros_like(t)
        for t0 in self.touch_starts:
            tau = t - t0
            mask = tau >= 0
            out[mask] += (np.exp(-tau[mask] / self.decay_tau)
                          - np.exp(-tau[mask] / self.rise_tau))
        return out / self._pulse_norm()


PowerSupply = Union[ConstantDc, TegTouch]


def _supply_vi(supply: PowerSupply, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=np.float64)
    if isinstance(supply, ConstantDc):
        return (np.full_like(t, supply.voltage), np.full_like(t, supply.current))
    env = supply.envelope(t)
    return supply.peak_voltage * env, supply.peak_current * env


def power_gate(tag: TagConfig, supply: PowerSupply, t: float) -> bool:
    """True iff the supply meets the tag's startup voltage AND current at t."""
    v, i = _supply_vi(supply, np.array([t]))
    return bool(v[0] >= tag.startup_voltage and i[0] >= tag.startup_current)


def power_gate_mask(tag: TagConfig, supply: PowerSupply | None,
                    n: int, rate: float) -> np.ndarray:
    if supply is None:
        return np.ones(n, dtype=bool)
    if isinstance(supply, ConstantDc):
        on = (supply.voltage >= tag.startup_voltage
              and supply.current >= tag.startup_current)
        return np.full(n, on, dtype=bool)
    v, i = _supply_vi(supply, np.arange(n) / rate)
    return (v >= tag.startup_voltage) & (i >= tag.startup_current)


# ---------------------------------------------------------------------------
# frequency evaluation

@dataclass(frozen=True)
class FrequencyTrack:
    """Instantaneous oscillation frequency vs time for one tag.

    Samples are offsets from the carrier in hertz; active_mask marks where
    the power gate allows the oscillator to run (inactive samples emit
    nothing when synthesized).
    """

    sample_rate: float
    f0: float
    samples: np.ndarray
    active_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "active_mask", np.asarray(self.active_mask, dtype=bool))
        if len(self.samples) != len(self.active_mask):
            raise ValueError("samples and active_mask lengths differ")
        if self.active_mask.any():
            hi = float(np.max(self.samples, initial=-np.inf, where=self.active_mask))
            lo = float(np.min(self.samples, initial=np.inf, where=self.active_mask))
            worst = max(abs(hi - self.f0), abs(lo - self.f0))
            if worst > DEVIATION_BOUND:
                raise ValueError(
                    f"active samples stray {worst:.0f} Hz from f0, beyond the "
                    f"{DEVIATION_BOUND:.0f} Hz deviation bound")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def _audio_c2_extra(sensor: AudioVaractor, pressure) -> np.ndarray | float:
    v = sensor.bias_voltage + sensor.mic_sensitivity * np.asarray(pressure, dtype=np.float64)
    vj = sensor.varactor.junction_potential
    if np.any(v <= -vj):
        raise CircuitError("audio swing drives the varactor below -Vj")
    return sensor.varactor.c_zero_bias / (1.0 + v / vj) ** sensor.varactor.grading_exponent


def _rest_tank(tag: TagConfig):
    sensor = tag.sensor
    if isinstance(sensor, InductiveButtons):
        l_eq = parallel_inductance(tag.design.l1, sensor.l11 + sensor.l12)
        return reduce_tank(tag.design, l1_override=l_eq)
    if isinstance(sensor, CapacitiveBarcode):
        return reduce_tank(tag.design)
    if isinstance(sensor, AudioVaractor):
        return reduce_tank(tag.design, c2_extra=float(_audio_c2_extra(sensor, 0.0)))
    return reduce_tank(tag.design)


def idle_frequency(tag: TagConfig) -> float:
    """Oscillation frequency with the sensor at rest."""
    return _rest_tank(tag).f_resonant


def _barcode_extra(tag: TagConfig, tooth: int, extra_cap: float) -> tuple[float, float]:
    sensor = tag.sensor
    if not (0 <= tooth < len(sensor.tooth_caps)):
        raise CircuitError(f"tooth index {tooth} out of range")
    add = sensor.tooth_caps[tooth] + extra_cap
    if add <= 0:
        raise CircuitError("jitter drove tooth capacitance non-positive")
    if sensor.attach_node is AttachNode.C1:
        return add, 0.0
    return 0.0, add   # C2 and MID both load the C2 side


def event_frequency(tag: TagConfig, state, *, extra_cap: float = 0.0) -> float:
    """Frequency while the sensor holds `state`.

    state: a Button for inductive tags, a tooth index for barcode tags, a
    pressure in pascals for audio tags, or None for rest. extra_cap adds
    per-event capacitance jitter to a barcode tooth.
    """
    sensor = tag.sensor
    if state is None:
        return idle_frequency(tag)
    if isinstance(sensor, InductiveButtons):
        if not isinstance(state, Button):
            raise CircuitError(f"expected a Button state, got {state!r}")
        if state is Button.NONE:
            return idle_frequency(tag)
        shorted_branch = sensor.l12 if state is Button.UP else sensor.l11
        l_eq = parallel_inductance(tag.design.l1, shorted_branch)
        return reduce_tank(tag.design, l1_override=l_eq).f_resonant
    if isinstance(sensor, CapacitiveBarcode):
        if not isinstance(state, (int, np.integer)):
            raise CircuitError(f"expected a tooth index, got {state!r}")
        c1_extra, c2_extra = _barcode_extra(tag, int(state), extra_cap)
        return reduce_tank(tag.design, c1_extra=c1_extra, c2_extra=c2_extra).f_resonant
    if isinstance(sensor, AudioVaractor):
        pressure = float(state)
        return reduce_tank(tag.design,
                           c2_extra=float(_audio_c2_extra(sensor, pressure))).f_resonant
    raise CircuitError(f"tag {tag.tag_id} has no sensor to drive with {state!r}")


def _audio_track_segment(tag: TagConfig, ev: AudioWaveform, times: np.ndarray) -> np.ndarray:
    pressure = np.interp(times, ev.t_start + np.arange(len(ev.samples)) / ev.rate,
                         ev.samples, left=0.0, right=0.0)
    c2x = _audio_c2_extra(tag.sensor, pressure)
    design = tag.design
    if design.topology is Topology.MCO_GATE:
        inv = (1.0 / gate_branch_capacitance(design) + 1.0 / design.c1
               + 1.0 / (design.c2 + c2x))
        c_eq = 1.0 / inv
    else:
        divider = 1.0 / (1.0 / design.c1 + 1.0 / (design.c2 + c2x))
        c_eq = divider + 1.0 / (1.0 / design.c_jfet + 1.0 / design.c_blocking)
    return 1.0 / (2.0 * np.pi * np.sqrt(design.l1 * c_eq))


def _relax_to_levels(breaks: list[tuple[int, float]], n: int, y0: float,
                     rate: float) -> np.ndarray:
    """Exact first-order relaxation toward a stepped target.

    Same recursion as y[k] = y[k-1] + alpha*(target - y[k-1]) with
    alpha = 1 - exp(-1/(rate*tau)), but evaluated in closed form per
    segment; the exponential is truncated once the residual falls below
    a tenth of a hertz, so cost scales with the number of edges.
    """
    ln_decay = -1.0 / (rate * TRANSITION_TAU)
    n_settle = int(14 * TRANSITION_TAU * rate)
    out = np.empty(n)
    y_prev = y0
    for idx, (i0, level) in enumerate(breaks):
        i1 = breaks[idx + 1][0] if idx + 1 < len(breaks) else n
        if i1 <= i0:
            continue
        m = min(i1 - i0, n_settle)
        if y_prev == level:
            out[i0:i1] = level
        else:
            ramp = (y_prev - level) * np.exp(ln_decay * np.arange(1, m + 1))
            out[i0:i0 + m] = level + ramp
            out[i0 + m:i1] = level
        y_prev = float(out[i1 - 1])
    return out


def frequency_track(tag: TagConfig, script: InteractionScript, duration: float,
                    rate: float, supply: PowerSupply | None = None) -> FrequencyTrack:
    """Evaluate the script into an instantaneous-frequency track.

    Discrete events step the frequency through a 2 ms first-order transition;
    audio events are written sample-accurately (the waveform itself carries
    the dynamics). The active mask is the pointwise power gate.
    """
    if duration <= 0:
        raise ScriptError("duration must be positive")
    if rate < 2 * DEVIATION_BOUND:
        raise ScriptError(f"track rate {rate} Hz under twice the deviation bandwidth")
    n = int(round(duration * rate))
    f_idle = idle_frequency(tag)

    def clip_index(t: float) -> int:
        return max(0, min(n, int(round(t * rate))))

    # stepped target as breakpoints: (start index, level)
    breaks: list[tuple[int, float]] = [(0, f_idle)]
    for state, t0, t1 in script.sensor_intervals(until=duration):
        if t0 >= duration:
            raise ScriptError(f"event at {t0} s starts beyond the {duration} s track")
        if isinstance(state, SwipeTooth):
            f_ev = event_frequency(tag, state.tooth, extra_cap=state.cap_jitter)
        else:
            f_ev = event_frequency(tag, state)
        i0, i1 = clip_index(t0), clip_index(t1)
        while breaks and breaks[-1][0] >= i0:
            breaks.pop()
        breaks.append((i0, f_ev))
        if i1 < n:
            breaks.append((i1, f_idle))
    samples = _relax_to_levels(breaks, n, f_idle, rate)

    for ev in script.audio_events():
        if not isinstance(tag.sensor, AudioVaractor):
            raise ScriptError(f"tag {tag.tag_id} cannot play audio events")
        i0, i1 = clip_index(ev.t_start), clip_index(ev.t_end)
        if i0 >= n:
            raise ScriptError(f"audio event at {ev.t_start} s beyond the track")
        times = np.arange(i0, i1) / rate
        samples[i0:i1] = _audio_track_segment(tag, ev, times)

    if isinstance(supply, TegTouch) and script.touch_events():
        supply = replace(supply, touch_starts=tuple(
            ev.t_start for ev in script.touch_events()))
    mask = power_gate_mask(tag, supply, n, rate)
    return FrequencyTrack(sample_rate=rate, f0=f_idle, samples=samples,
                          active_mask=mask)


# ---------------------------------------------------------------------------
# calibration

def _retune_idle(design: OscillatorDesign, f_target: float) -> OscillatorDesign:
    """Closed-form retune of the free capacitor so the rest tank hits f_target."""
    c_eq = required_capacitance(f_target, design.l1)
    if design.topology is Topology.MCO_GATE:
        inv_c0 = 1.0 / c_eq - 1.0 / design.c1 - 1.0 / design.c2
        if inv_c0 <= 0:
            raise CalibrationError(
                f"idle target {f_target:.0f} Hz needs C_eq {c_eq*1e12:.2f} pF, "
                "unreachable below the series chain bound")
        c0 = 1.0 / inv_c0
        inv_branch = 1.0 / c0 - 1.0 / design.c_blocking
        if inv_branch <= 0:
            raise CalibrationError(
                f"idle target {f_target:.0f} Hz needs C0 above C_blocking")
        branch = 1.0 / inv_branch
        c_shift = branch - design.c_jfet
        if c_shift <= 0:
            raise CalibrationError(
                f"idle target {f_target:.0f} Hz leaves no positive c_shift")
        return design.with_values(c_shift=c_shift)
    parasitic = 1.0 / (1.0 / design.c_jfet + 1.0 / design.c_blocking)
    divider = c_eq - parasitic
    if divider <= 0:
        raise CalibrationError(f"idle target {f_target:.0f} Hz below the parasitic branch")
    inv_c2 = 1.0 / divider - 1.0 / design.c1
    if inv_c2 <= 0:
        raise CalibrationError(f"idle target {f_target:.0f} Hz unreachable via c2")
    return design.with_values(c2=1.0 / inv_c2)


def _calibrate_buttons(tag: TagConfig, targets: dict) -> TagConfig:
    f_idle = targets.get("idle")
    f_up = targets.get(Button.UP)
    f_down = targets.get(Button.DOWN)
    if f_idle is None or f_up is None or f_down is None:
        raise CalibrationError("button calibration needs idle, up and down targets")
    c_eq = _rest_tank(tag).c_eq
    l_a = required_capacitance(f_idle, c_eq)   # same closed form: L = 1/((2pi f)^2 C)
    l_b = required_capacitance(f_up, c_eq)
    l_c = required_capacitance(f_down, c_eq)
    if not (l_a > l_b and l_a > l_c):
        raise CalibrationError(f"idle target {f_idle:.0f} Hz must be the lowest frequency")
    if l_a >= l_b + l_c:
        raise CalibrationError("targets incompatible: idle branch inductance "
                               "exceeds the sum of the shorted branches")

    def residual(x):   # x = 1/L1
        u = 1.0 / l_c - x      # 1/L11
        v = 1.0 / l_b - x      # 1/L12
        return x + (u * v) / (u + v) - 1.0 / l_a

    hi = min(1.0 / l_b, 1.0 / l_c) * (1.0 - 1e-12)
    x = brentq(residual, 1e-12, hi, xtol=1e-15, rtol=1e-14)
    l1 = 1.0 / x
    l11 = 1.0 / (1.0 / l_c - x)
    l12 = 1.0 / (1.0 / l_b - x)
    sensor = replace(tag.sensor, l11=l11, l12=l12)
    return tag.with_values(design=tag.design.with_values(l1=l1), sensor=sensor)


def _calibrate_barcode(tag: TagConfig, targets: dict) -> TagConfig:
    f_idle = targets.get("idle", idle_frequency(tag))
    design = _retune_idle(tag.design, f_idle)
    tooth_targets = sorted((k, f) for k, f in targets.items() if isinstance(k, int))
    caps = list(tag.sensor.tooth_caps)
    c0 = (gate_branch_capacitance(design) if design.topology is Topology.MCO_GATE
          else None)
    for tooth, f_t in tooth_targets:
        if not (0 <= tooth < len(caps)):
            raise CalibrationError(f"tooth target index {tooth} out of range")
        if f_t >= f_idle:
            raise CalibrationError(
                f"tooth {tooth} target {f_t:.0f} Hz not below idle "
                f"{f_idle:.0f} Hz (teeth only add capacitance)")
        c_eq = required_capacitance(f_t, design.l1)
        if design.topology is Topology.MCO_GATE:
            inv_c2 = 1.0 / c_eq - 1.0 / c0 - 1.0 / design.c1
        else:
            parasitic = 1.0 / (1.0 / design.c_jfet + 1.0 / design.c_blocking)
            divider = c_eq - parasitic
            if divider <= 0:
                raise CalibrationError(f"tooth {tooth} target below the parasitic branch")
            inv_c2 = 1.0 / divider - 1.0 / design.c1
        if inv_c2 <= 0:
            raise CalibrationError(f"tooth {tooth} target {f_t:.0f} Hz unreachable")
        cap = 1.0 / inv_c2 - design.c2
        if cap <= 0:
            raise CalibrationError(
                f"tooth {tooth} target {f_t:.0f} Hz needs non-positive capacitance")
        caps[tooth] = cap
    sensor = replace(tag.sensor, tooth_caps=tuple(caps))
    out = tag.with_values(design=design, sensor=sensor)
    shifts = sorted(f_idle - event_frequency(out, k) for k in range(len(caps)))
    for a, b in zip(shifts, shifts[1:]):
        if b - a < MIN_SHIFT_SEPARATION:
            raise CalibrationError(
                f"calibrated tooth shifts separated by {b - a:.0f} Hz, "
                f"under the {MIN_SHIFT_SEPARATION:.0f} Hz decoder floor")
    return out


def _calibrate_audio(tag: TagConfig, targets: dict) -> TagConfig:
    f_idle = targets.get("idle")
    swings = sorted((p, f) for p, f in targets.items() if isinstance(p, float))
    if f_idle is None or len(swings) != 2:
        raise CalibrationError(
            "audio calibration needs an idle target plus two pressure-swing targets")
    (p_lo, f_lo), (p_hi, f_hi) = swings
    if not (p_lo == -p_hi and p_hi > 0):
        raise CalibrationError("pressure swing targets must be symmetric +/-amplitude")
    dev_plus = f_hi - f_idle
    dev_minus = f_idle - f_lo
    if dev_plus <= 0 or dev_minus <= 0:
        raise CalibrationError("audio targets must straddle the idle frequency")
    sensor: AudioVaractor = tag.sensor
    dv = sensor.mic_sensitivity * p_hi
    vj = sensor.varactor.junction_potential
    gamma = sensor.varactor.grading_exponent
    design = tag.design
    r_plus = dev_plus / f_idle
    r_minus = dev_minus / f_idle
    r_mean = 0.5 * (r_plus + r_minus)

    def rel_devs(vb: float, c0v: float) -> tuple[float, float]:
        model = VaractorModel(c0v, vj, gamma)
        def f_at(v):
            return reduce_tank(design, c2_extra=varactor_capacitance(model, v)).f_resonant
        fm = f_at(vb)
        return (f_at(vb + dv) - fm) / fm, (fm - f_at(vb - dv)) / fm

    def solve_scale(vb: float) -> float | None:
        # mean relative deviation is 0 at both tiny and huge varactor scale and
        # peaks in between; take the varactor-dominant (larger) root
        grid = np.logspace(math.log10(0.2e-12), math.log10(1e-6), 160)
        vals = [0.5 * sum(rel_devs(vb, c)) - r_mean for c in grid]
        for i in range(len(grid) - 1, 0, -1):
            if vals[i - 1] > 0 >= vals[i]:
                return brentq(lambda c: 0.5 * sum(rel_devs(vb, c)) - r_mean,
                              grid[i - 1], grid[i], rtol=1e-13)
        return None

    def asym(vb: float) -> float | None:
        c0v = solve_scale(vb)
        if c0v is None:
            return None
        d_plus, d_minus = rel_devs(vb, c0v)
        return d_plus * r_minus - d_minus * r_plus

    vb_grid = np.linspace(max(0.05, dv - vj + 0.05), 8.0, 25)
    best_vb, best_val = None, math.inf
    bracket = None
    prev = None
    for vb in vb_grid:
        val = asym(vb)
        if val is None:
            prev = None
            continue
        if abs(val) < best_val:
            best_vb, best_val = vb, abs(val)
        if prev is not None and prev[1] * val < 0:
            bracket = (prev[0], vb)
            break
        prev = (vb, val)
    if bracket is not None:
        vb = brentq(lambda v: asym(v), *bracket, rtol=1e-10)
    elif best_vb is not None:
        vb = best_vb
    else:
        raise CalibrationError("no varactor operating point reaches the deviation targets")
    c0v = solve_scale(vb)
    if c0v is None:
        raise CalibrationError("varactor scale solve failed at the chosen bias")

    model = VaractorModel(c0v, vj, gamma)
    f_now = reduce_tank(design, c2_extra=varactor_capacitance(model, vb)).f_resonant
    # L1 scales every frequency together, so relative deviations survive exactly
    design = design.with_values(l1=design.l1 * (f_now / f_idle) ** 2)
    sensor = replace(sensor, varactor=model, bias_voltage=vb)
    return tag.with_values(design=design, sensor=sensor)


def calibrate_sensor(tag: TagConfig, targets: Sequence[tuple]) -> TagConfig:
    """Solve component values so event_frequency hits each (state, hertz) target.

    States: "idle", Button.UP/DOWN, tooth indices (int), or signed pressure
    swings (float) for audio tags. Every target is forward-verified to within
    1 kHz; the first unreachable one is named in the error.
    """
    target_map = dict(targets)
    if not target_map:
        raise CalibrationError("no calibration targets given")
    if len(target_map) == 1 and "idle" in target_map:
        if abs(idle_frequency(tag) - target_map["idle"]) <= 1e3:
            return tag
        out = tag.with_values(design=_retune_idle(tag.design, target_map["idle"]))
    elif isinstance(tag.sensor, InductiveButtons):
        out = _calibrate_buttons(tag, target_map)
    elif isinstance(tag.sensor, CapacitiveBarcode):
        out = _calibrate_barcode(tag, target_map)
    elif isinstance(tag.sensor, AudioVaractor):
        out = _calibrate_audio(tag, target_map)
    else:
        raise CalibrationError(f"tag {tag.tag_id} has no calibratable sensor")
    for state, f_t in target_map.items():
        got = idle_frequency(out) if state == "idle" else event_frequency(out, state)
        if abs(got - f_t) > 1e3:
            raise CalibrationError(
                f"target {state!r} -> {f_t:.0f} Hz unreachable: calibrated tag "
                f"lands at {got:.0f} Hz")
    return out
