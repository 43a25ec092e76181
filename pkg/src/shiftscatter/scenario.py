"""Scenario files: the complete description of one simulated session.

A scenario is structured JSON with SI-unit suffix strings ("4.7mH",
"345kHz") anywhere a quantity appears. It names the channel conditions, the
tags (oscillator design, sensor, startup needs, supply, distance), optional
calibration targets applied at load, and the per-tag interaction scripts.
Loading validates everything and reports the JSON path of the first
violation. The scenario also knows its own ground truth: the event list a
perfect decoder would produce, which the simulate command writes into the
manifest as the oracle for decode tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import units
from .channel import AUDIO_BANDWIDTH, DISCRETE_BANDWIDTH, ChannelParams
from .circuit import CircuitError, OscillatorDesign, Topology, VaractorModel
from .decoders import TOUCH_WINDOW, TagBandSpec
from .tags import (
    AudioVaractor,
    AudioWaveform,
    Button,
    ButtonPress,
    ButtonRelease,
    CalibrationError,
    CapacitiveBarcode,
    ConstantDc,
    InductiveButtons,
    InteractionScript,
    PowerSupply,
    ScriptError,
    SwipeTooth,
    TagConfig,
    TegTouch,
    TouchTeg,
    calibrate_sensor,
    event_frequency,
    idle_frequency,
)

__all__ = ["Scenario", "TagEntry", "ScenarioError", "load_scenario",
           "load_scenario_file", "bundled_scenario_path", "bundled_scenario_names"]

CARRIER_NOTE = ("915 MHz carrier, 16 dBm amplified to 29 dBm, monostatic; "
                "recorded for provenance only, absolute power plays no role "
                "in the SNR-anchored channel model")

# script conventions the ground-truth grouping relies on
SWIPE_GROUP_GAP = 0.35     # seconds between tooth events that starts a new swipe


class ScenarioError(ValueError):
    """Scenario file invalid; message carries the JSON path."""


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


def _get(obj: dict, key: str, path: str, required=True, default=None):
    if key not in obj:
        if required:
            _fail(path, f"missing required key {key!r}")
        return default
    return obj[key]


def _qty(obj, key, path, dimension=None, required=True, default=None):
    raw = _get(obj, key, path, required, default)
    if raw is None:
        return None
    try:
        return units.parse_quantity(raw, dimension)
    except units.UnitError as exc:
        _fail(f"{path}.{key}", str(exc))


@dataclass(frozen=True)
class TagEntry:
    config: TagConfig
    supply: PowerSupply
    mode: str                                  # touch | swipe | id | audio
    distance: float
    channel_bandwidth: float
    digit_bands: dict[int, tuple[float, float]] = field(default_factory=dict)
    digits: tuple[int, ...] = ()               # tooth index -> digit value


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    channel: ChannelParams
    tags: dict[str, TagEntry]
    scripts: dict[str, InteractionScript]

    def band_specs(self) -> list[TagBandSpec]:
        specs = []
        for tag_id, entry in self.tags.items():
            cfg = entry.config
            center = cfg.channel_center
            if entry.mode == "audio":
                specs.append(TagBandSpec(tag_id, center, AUDIO_BANDWIDTH,
                                         landmarks={"idle": center}, mode="audio"))
                continue
            landmarks = {"idle": idle_frequency(cfg)}
            excursions = [abs(landmarks["idle"] - center)]
            if entry.mode == "touch":
                for label, state in (("up", Button.UP), ("down", Button.DOWN)):
                    f = event_frequency(cfg, state)
                    landmarks[label] = f
                    excursions.append(abs(f - center))
            elif isinstance(cfg.sensor, CapacitiveBarcode):
                for k in range(len(cfg.sensor.tooth_caps)):
                    excursions.append(abs(event_frequency(cfg, k) - center))
            for lo, hi in entry.digit_bands.values():
                excursions += [abs(lo - center), abs(hi - center)]
            bandwidth = max(DISCRETE_BANDWIDTH, max(excursions) + 2 * TOUCH_WINDOW)
            specs.append(TagBandSpec(tag_id, center, bandwidth,
                                     landmarks=landmarks,
                                     digit_bands=dict(entry.digit_bands),
                                     mode=entry.mode))
        return specs

    def ground_truth(self) -> list[dict]:
        events = []
        for tag_id, script in self.scripts.items():
            entry = self.tags[tag_id]
            cfg = entry.config
            if entry.mode == "touch":
                for state, t0, t1 in script.sensor_intervals(until=self.channel.duration):
                    label = state.value if isinstance(state, Button) else str(state)
                    events.append({"t": t0, "tag_id": tag_id,
                                   "kind": "touch_press", "payload": label})
                    events.append({"t": t1, "tag_id": tag_id,
                                   "kind": "touch_release", "payload": label})
            elif entry.mode in ("swipe", "id"):
                teeth = [ev for ev in script.events if isinstance(ev, SwipeTooth)]
                for group in _group_swipes(teeth):
                    if entry.mode == "swipe":
                        f_first = event_frequency(cfg, group[0].tooth)
                        f_last = event_frequency(cfg, group[-1].tooth)
                        direction = "right" if f_last > f_first else "left"
                        events.append({"t": group[0].t_start, "tag_id": tag_id,
                                       "kind": "swipe", "payload": direction})
                    else:
                        digits = "".join(str(entry.digits[ev.tooth]) for ev in group)
                        events.append({"t": group[0].t_start, "tag_id": tag_id,
                                       "kind": "id_read", "payload": digits})
            elif entry.mode == "audio":
                for ev in script.audio_events():
                    events.append({"t": ev.t_start, "tag_id": tag_id,
                                   "kind": "audio_segment", "payload": ""})
        events.sort(key=lambda e: (e["t"], e["tag_id"], e["kind"]))
        return events

    def audio_tones(self) -> dict[str, float]:
        """Dominant scripted tone per audio tag (for closed-loop checks)."""
        tones = {}
        for tag_id, script in self.scripts.items():
            if self.tags[tag_id].mode != "audio":
                continue
            for ev in script.audio_events():
                x = ev.samples - np.mean(ev.samples)
                if not len(x) or not np.any(x):
                    continue
                spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
                tones[tag_id] = float(np.fft.rfftfreq(len(x), 1 / ev.rate)[np.argmax(spec)])
        return tones


def _group_swipes(teeth: list[SwipeTooth]) -> list[list[SwipeTooth]]:
    groups = []
    for ev in teeth:
        if groups and ev.t_start - groups[-1][-1].t_end <= SWIPE_GROUP_GAP:
            groups[-1].append(ev)
        else:
            groups.append([ev])
    return groups


# ---------------------------------------------------------------------------
# parsing

def _parse_design(obj: dict, path: str) -> OscillatorDesign:
    topo_raw = _get(obj, "topology", path)
    try:
        topo = Topology(topo_raw)
    except ValueError:
        _fail(f"{path}.topology", f"unknown topology {topo_raw!r}")
    kwargs = dict(
        topology=topo,
        l1=_qty(obj, "l1", path, "inductance"),
        l2=_qty(obj, "l2", path, "inductance"),
        c1=_qty(obj, "c1", path, "capacitance"),
        c2=_qty(obj, "c2", path, "capacitance"),
        c_blocking=_qty(obj, "c_blocking", path, "capacitance"),
    )
    if "c_shift" in obj and obj["c_shift"] is not None:
        kwargs["c_shift"] = _qty(obj, "c_shift", path, "capacitance")
    if "c_jfet" in obj:
        kwargs["c_jfet"] = _qty(obj, "c_jfet", path, "capacitance")
    if "r_adjust" in obj and obj["r_adjust"] is not None:
        kwargs["r_adjust"] = _qty(obj, "r_adjust", path, "resistance")
    try:
        return OscillatorDesign(**kwargs)
    except CircuitError as exc:
        _fail(path, str(exc))


def _parse_sensor(obj: dict | None, path: str):
    if obj is None:
        return None
    kind = _get(obj, "type", path)
    try:
        if kind == "inductive_buttons":
            return InductiveButtons(l11=_qty(obj, "l11", path, "inductance"),
                                    l12=_qty(obj, "l12", path, "inductance"))
        if kind == "capacitive_barcode":
            caps = _get(obj, "tooth_caps", path)
            if not isinstance(caps, list) or not caps:
                _fail(f"{path}.tooth_caps", "need a non-empty list")
            parsed = tuple(units.parse_quantity(c, "capacitance") for c in caps)
            node_raw = obj.get("attach_node", "mid")
            from .tags import AttachNode
            try:
                node = AttachNode(node_raw)
            except ValueError:
                _fail(f"{path}.attach_node", f"unknown node {node_raw!r}")
            return CapacitiveBarcode(tooth_caps=parsed, attach_node=node)
        if kind == "audio_varactor":
            v = _get(obj, "varactor", path)
            vpath = f"{path}.varactor"
            model = VaractorModel(
                c_zero_bias=_qty(v, "c_zero_bias", vpath, "capacitance"),
                junction_potential=_qty(v, "junction_potential", vpath, "voltage",
                                        required=False, default=0.7),
                grading_exponent=float(_get(v, "grading_exponent", vpath,
                                            required=False, default=0.5)),
            )
            return AudioVaractor(
                varactor=model,
                mic_sensitivity=_qty(obj, "mic_sensitivity", path, "sensitivity"),
                blocking_caps=_qty(obj, "blocking_caps", path, "capacitance",
                                   required=False, default=10e-9),
                bias_voltage=_qty(obj, "bias_voltage", path, "voltage",
                                  required=False, default=2.0),
            )
    except units.UnitError as exc:
        _fail(path, str(exc))
    except CircuitError as exc:
        _fail(path, str(exc))
    _fail(f"{path}.type", f"unknown sensor type {kind!r}")


def _parse_supply(obj: dict, path: str) -> PowerSupply:
    kind = _get(obj, "type", path)
    try:
        if kind == "constant_dc":
            return ConstantDc(voltage=_qty(obj, "voltage", path, "voltage"),
                              current=_qty(obj, "current", path, "current"))
        if kind == "teg_touch":
            return TegTouch(
                peak_voltage=_qty(obj, "peak_voltage", path, "voltage",
                                  required=False, default=0.4),
                peak_current=_qty(obj, "peak_current", path, "current",
                                  required=False, default=2.5e-6),
                rise_tau=_qty(obj, "rise_tau", path, "time",
                              required=False, default=0.2),
                decay_tau=_qty(obj, "decay_tau", path, "time",
                               required=False, default=1.5),
            )
    except CircuitError as exc:
        _fail(path, str(exc))
    _fail(f"{path}.type", f"unknown supply type {kind!r}")


def _parse_calibration(obj: dict, mode: str, path: str) -> list[tuple]:
    targets: list[tuple] = []
    try:
        if "idle" in obj:
            targets.append(("idle", units.parse_quantity(obj["idle"], "frequency")))
        if mode == "touch":
            for label, state in (("up", Button.UP), ("down", Button.DOWN)):
                if label in obj:
                    targets.append((state, units.parse_quantity(obj[label], "frequency")))
        elif mode in ("swipe", "id"):
            for k, f in enumerate(obj.get("teeth", [])):
                targets.append((k, units.parse_quantity(f, "frequency")))
        elif mode == "audio":
            if "deviation" in obj:
                dev = units.parse_quantity(obj["deviation"], "frequency")
                amp = float(obj.get("amplitude", 1.0))
                idle = dict(targets).get("idle")
                if idle is None:
                    _fail(path, "audio calibration needs an idle target")
                targets.append((-amp, idle - dev))
                targets.append((amp, idle + dev))
    except units.UnitError as exc:
        _fail(path, str(exc))
    return targets


def _parse_script_events(raw: list, rate_hint: float, path: str) -> InteractionScript:
    events = []
    for i, ev in enumerate(raw):
        p = f"{path}[{i}]"
        kind = _get(ev, "event", p)
        try:
            if kind == "button_press":
                events.append(ButtonPress(Button(_get(ev, "button", p)),
                                          _qty(ev, "t", p, "time")))
            elif kind == "button_release":
                events.append(ButtonRelease(Button(_get(ev, "button", p)),
                                            _qty(ev, "t", p, "time")))
            elif kind == "swipe_tooth":
                events.append(SwipeTooth(
                    int(_get(ev, "tooth", p)),
                    _qty(ev, "start", p, "time"),
                    _qty(ev, "end", p, "time"),
                    cap_jitter=_qty(ev, "cap_jitter", p, "capacitance",
                                    required=False, default=0.0)))
            elif kind == "audio_tone":
                arate = _qty(ev, "audio_rate", p, "frequency",
                             required=False, default=48e3)
                freq = _qty(ev, "freq", p, "frequency")
                amp = float(_get(ev, "amplitude", p, required=False, default=1.0))
                dur = _qty(ev, "duration", p, "time")
                t = np.arange(int(round(dur * arate))) / arate
                samples = amp * np.sin(2 * np.pi * freq * t)
                events.append(AudioWaveform(samples, arate,
                                            _qty(ev, "start", p, "time")))
            elif kind == "audio_samples":
                samples = np.asarray(_get(ev, "samples", p), dtype=np.float64)
                events.append(AudioWaveform(samples,
                                            _qty(ev, "rate", p, "frequency"),
                                            _qty(ev, "start", p, "time")))
            elif kind == "touch_teg":
                events.append(TouchTeg(_qty(ev, "start", p, "time"),
                                       _qty(ev, "duration", p, "time")))
            else:
                _fail(p, f"unknown event kind {kind!r}")
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            _fail(p, str(exc))
    try:
        return InteractionScript(tuple(events))
    except ScriptError as exc:
        _fail(path, str(exc))


def load_scenario(doc: dict, name_hint: str = "scenario") -> Scenario:
    name = _get(doc, "name", name_hint, required=False, default=name_hint)
    seed = _get(doc, "seed", name, required=True)
    if not isinstance(seed, int):
        _fail(f"{name}.seed", "seed must be an integer (reproducibility is mandatory)")

    ch = _get(doc, "channel", name)
    sample_rate = _qty(ch, "sample_rate", f"{name}.channel", "frequency")
    duration = _qty(ch, "duration", f"{name}.channel", "time")
    anchors_raw = _get(ch, "snr_anchors", f"{name}.channel", required=False)
    if anchors_raw is None:
        anchors = None
    else:
        anchors = tuple(
            (units.parse_quantity(a["distance"], "distance"),
             units.parse_quantity(a["snr"], "level"))
            for a in anchors_raw)

    tags_raw = _get(doc, "tags", name)
    if not isinstance(tags_raw, list) or not tags_raw:
        _fail(f"{name}.tags", "need a non-empty tag list")
    entries: dict[str, TagEntry] = {}
    distances: dict[str, float] = {}
    bandwidths: dict[str, float] = {}
    for i, t in enumerate(tags_raw):
        tpath = f"{name}.tags[{i}]"
        tag_id = _get(t, "id", tpath)
        if tag_id in entries:
            _fail(tpath, f"duplicate tag id {tag_id!r}")
        mode = _get(t, "mode", tpath)
        if mode not in ("touch", "swipe", "id", "audio"):
            _fail(f"{tpath}.mode", f"unknown mode {mode!r}")
        design = _parse_design(_get(t, "design", tpath), f"{tpath}.design")
        sensor = _parse_sensor(_get(t, "sensor", tpath, required=False), f"{tpath}.sensor")
        startup = _get(t, "startup", tpath)
        try:
            config = TagConfig(
                tag_id=tag_id, design=design, sensor=sensor,
                startup_voltage=_qty(startup, "voltage", f"{tpath}.startup", "voltage"),
                startup_current=_qty(startup, "current", f"{tpath}.startup", "current"),
                channel_center=_qty(t, "channel_center", tpath, "frequency"),
                modulation_depth=float(_get(t, "modulation_depth", tpath,
                                            required=False, default=0.5)),
            )
        except CircuitError as exc:
            _fail(tpath, str(exc))
        cal = _get(t, "calibrate", tpath, required=False)
        if cal:
            targets = _parse_calibration(cal, mode, f"{tpath}.calibrate")
            try:
                config = calibrate_sensor(config, targets)
            except CalibrationError as exc:
                _fail(f"{tpath}.calibrate", str(exc))
        supply = _parse_supply(_get(t, "supply", tpath), f"{tpath}.supply")
        distance = _qty(t, "distance", tpath, "distance")
        default_bw = AUDIO_BANDWIDTH if mode == "audio" else DISCRETE_BANDWIDTH
        bw = _qty(t, "channel_bandwidth", tpath, "frequency",
                  required=False, default=default_bw)
        digit_bands = {}
        for d, pair in (_get(t, "digit_bands", tpath, required=False) or {}).items():
            digit_bands[int(d)] = (units.parse_quantity(pair[0], "frequency"),
                                   units.parse_quantity(pair[1], "frequency"))
        digits = tuple(int(d) for d in _get(t, "digits", tpath, required=False,
                                            default=()) or ())
        if mode == "id":
            if not digit_bands:
                _fail(tpath, "id-mode tags need digit_bands")
            n_teeth = len(sensor.tooth_caps) if isinstance(sensor, CapacitiveBarcode) else 0
            if len(digits) != n_teeth:
                _fail(f"{tpath}.digits",
                      f"need one digit per tooth ({n_teeth}), got {len(digits)}")
        entries[tag_id] = TagEntry(config=config, supply=supply, mode=mode,
                                   distance=distance, channel_bandwidth=bw,
                                   digit_bands=digit_bands, digits=digits)
        distances[tag_id] = distance
        bandwidths[tag_id] = bw

    try:
        kwargs = {}
        if anchors is not None:
            kwargs["snr_anchors"] = anchors
        if "carrier_leak_amplitude" in ch:
            kwargs["carrier_leak_amplitude"] = float(ch["carrier_leak_amplitude"])
        if "noise_floor_density_dbfs_hz" in ch:
            kwargs["noise_floor_density"] = float(ch["noise_floor_density_dbfs_hz"])
        channel = ChannelParams(sample_rate=sample_rate, duration=duration,
                                tag_distances=distances, tag_bandwidths=bandwidths,
                                **kwargs)
    except ValueError as exc:
        _fail(f"{name}.channel", str(exc))

    scripts_raw = _get(doc, "scripts", name, required=False, default={})
    scripts: dict[str, InteractionScript] = {}
    for tag_id, raw in scripts_raw.items():
        if tag_id not in entries:
            _fail(f"{name}.scripts.{tag_id}", "script references an unknown tag")
        scripts[tag_id] = _parse_script_events(raw, sample_rate,
                                               f"{name}.scripts.{tag_id}")
    for tag_id in entries:
        scripts.setdefault(tag_id, InteractionScript(()))

    return Scenario(name=name, seed=seed, channel=channel, tags=entries,
                    scripts=scripts)


def load_scenario_file(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: invalid JSON: {exc}") from exc
    return load_scenario(doc, name_hint=p.stem)


def bundled_scenario_path(name: str) -> Path:
    from importlib import resources
    base = resources.files("shiftscatter.data").joinpath("scenarios")
    p = Path(str(base.joinpath(f"{name}.json")))
    if not p.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return p


def bundled_scenario_names() -> list[str]:
    from importlib import resources
    base = Path(str(resources.files("shiftscatter.data").joinpath("scenarios")))
    return sorted(p.stem for p in base.glob("*.json"))
