"""Command-line harness: simulate, decode, plan, tune, table-check, acceptance.

Exit codes: 0 success, 2 validation error, 3 capacity or infeasible
component constraints, 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, units
from ._memtune import retain_heap
from .channel import ChannelError, ClippingError
from .circuit import (
    CircuitError,
    OscillatorDesign,
    Topology,
    gate_branch_capacitance,
    reduce_tank,
    required_capacitance,
)
from .decoders import BandSpecError, CapacityError, DecodeError, plan_channels, validate_plan
from .dsp import DspError
from .fileio import (
    FormatError,
    read_cf32,
    write_cf32,
    write_event_log,
    write_spectrogram_csv,
    write_wav,
)
from .pipeline import band_specs_from_json, decode_buffer, simulate_scenario
from .scenario import ScenarioError, bundled_scenario_names, bundled_scenario_path, load_scenario_file
from .tables import check_drain_table, load_gate_table, table_report_lines
from .tags import CalibrationError, ScriptError
from .decoders import DecodedEvent

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _resolve_scenario(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    try:
        return bundled_scenario_path(ref)
    except ScenarioError:
        raise ScenarioError(
            f"{ref!r} is neither a file nor a bundled scenario "
            f"(bundled: {', '.join(bundled_scenario_names())})")


def cmd_simulate(args) -> int:
    scenario = load_scenario_file(_resolve_scenario(args.scenario))
    sim = simulate_scenario(scenario, seed=args.seed)
    out = Path(args.out)
    write_cf32(out, sim.iq)
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(sim.manifest, indent=1) + "\n")
    print(f"wrote {out} ({len(sim.iq.samples)} samples @ "
          f"{sim.iq.sample_rate:.0f} Hz) and {manifest_path}")
    if args.report_dir:
        from .dsp import spectrogram
        from .report import render_spectrogram, render_tracks
        outdir = Path(args.report_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        specs = band_specs_from_json(sim.manifest["bands"])
        lo = min(b.observation_band()[0] for b in specs) - 10e3
        hi = max(b.observation_band()[1] for b in specs) + 10e3
        hop = 4096 if len(sim.iq.samples) > 4_000_000 else 1024
        spec = spectrogram(sim.iq, nfft=4096, hop=hop, band=(lo, hi))
        render_spectrogram(spec, outdir / "spectrogram.png",
                           title=f"{scenario.name}: synthesized IQ")
        render_tracks(spec, specs, outdir / "peak_tracks.png")
        print(f"report figures in {outdir}")
    return EXIT_OK


def _load_bands_file(path: Path) -> tuple[list, float]:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if "bands" not in doc:
        raise FormatError(f"{path}: no 'bands' key (pass a manifest or bands file)")
    if "sample_rate" not in doc:
        raise FormatError(f"{path}: no 'sample_rate' key for the cf32 sidecar rate")
    return band_specs_from_json(doc["bands"]), float(doc["sample_rate"])


def cmd_decode(args) -> int:
    bands, rate = _load_bands_file(Path(args.bands))
    iq = read_cf32(args.iq, rate)
    events, audio, spec = decode_buffer(iq, bands)
    if args.wav_dir:
        wav_dir = Path(args.wav_dir)
        wav_dir.mkdir(parents=True, exist_ok=True)
        renamed = []
        for e in events:
            if e.kind == "audio_segment" and e.tag_id in audio:
                wav_path = wav_dir / f"{e.tag_id}.wav"
                arate, samples = audio[e.tag_id]
                write_wav(wav_path, samples, int(arate))
                renamed.append(DecodedEvent(e.tag_id, e.timestamp, e.kind,
                                            wav_path.name, e.confidence))
            else:
                renamed.append(e)
        events = renamed
    write_event_log(args.events, events)
    print(f"wrote {len(events)} events to {args.events}")
    if args.spectrogram and spec is not None:
        write_spectrogram_csv(args.spectrogram, spec)
        print(f"wrote spectrogram CSV to {args.spectrogram}")
    if args.report_dir:
        from .report import render_decode_report
        written = render_decode_report(Path(args.report_dir), spec, bands,
                                       events, audio)
        print(f"report figures: {', '.join(str(w) for w in written)}")
    return EXIT_OK


def cmd_plan(args) -> int:
    try:
        doc = json.loads(Path(args.requests).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{args.requests}: invalid JSON: {exc}") from exc
    reqs = [(r["id"], r["kind"]) for r in doc.get("requests", [])]
    plan = plan_channels(reqs, guard=units.parse_quantity(
        doc.get("guard", 5e3), "frequency"))
    warnings = validate_plan(plan)
    out_doc = {
        "guard": plan.guard,
        "assignments": [{"id": t, "center": c, "bandwidth": b}
                        for t, c, b in plan.assignments],
        "warnings": warnings,
    }
    Path(args.out).write_text(json.dumps(out_doc, indent=1) + "\n")
    print(f"planned {len(plan.assignments)} channels -> {args.out}")
    for w in warnings:
        print(f"warning: {w}")
    return EXIT_OK


def _nearest_gate_row(target: float):
    rows = load_gate_table()
    return min(rows, key=lambda r: abs(r.f_khz * 1e3 - target))


def _tune_design(target: float, l1: float, topology: Topology,
                 fixed: dict) -> OscillatorDesign:
    """Solve the free capacitor(s) so the reduced tank hits the target.

    Prefers the single spec'd free capacitor (c_shift for the gate topology,
    c2 for the drain topology). When the series-chain bound makes the target
    unreachable that way, the gate topology also frees C1 with C0 pinned to
    a tenth of C_blocking (the measured rows themselves are not reachable
    under the simplified tank, so a second knob is the honest fallback).
    """
    from .tags import _retune_idle

    c_eq = required_capacitance(target, l1)
    base = dict(l1=l1, l2=fixed.get("l2", 10e-3),
                c_blocking=fixed.get("c_blocking", 100e-9),
                c_jfet=fixed.get("c_jfet", 10e-12))
    if topology is Topology.MCO_GATE:
        base["r_adjust"] = fixed.get("r_adjust", 100e3)
        base["c1"] = fixed.get("c1", 47e-12)
        base["c2"] = fixed.get("c2", 100e-12)
        design = OscillatorDesign(topology=topology, **base)
        try:
            return _retune_idle(design, target)
        except CalibrationError:
            if "c1" in fixed:
                raise
        c0 = base["c_blocking"] / 10.0
        inv_c1 = 1.0 / c_eq - 1.0 / c0 - 1.0 / base["c2"]
        if inv_c1 <= 0:
            raise CalibrationError(
                f"target {target:.0f} Hz unreachable even with C1 free")
        branch = 1.0 / (1.0 / c0 - 1.0 / base["c_blocking"])
        c_shift = branch - base["c_jfet"]
        if c_shift <= 0:
            raise CalibrationError("no positive c_shift at the fallback C0")
        base["c1"] = 1.0 / inv_c1
        return OscillatorDesign(topology=topology, c_shift=c_shift, **base)
    base["c1"] = fixed.get("c1", 47e-12)
    base["c2"] = fixed.get("c2", 100e-12)
    design = OscillatorDesign(topology=topology, **base)
    return _retune_idle(design, target)


def cmd_tune(args) -> int:
    target = units.parse_quantity(args.target, "frequency")
    if not (100e3 <= target <= 1e6):
        raise ScenarioError(f"target {target:.0f} Hz outside [100 kHz, 1 MHz]")
    l1 = units.parse_quantity(args.l1, "inductance")
    topology = Topology.MCO_GATE if args.topology == "mco" else Topology.ESCO_DRAIN
    fixed = {}
    for key, dim in (("c1", "capacitance"), ("c2", "capacitance"),
                     ("c_blocking", "capacitance"), ("c_jfet", "capacitance"),
                     ("l2", "inductance"), ("r_adjust", "resistance")):
        val = getattr(args, key)
        if val is not None:
            fixed[key] = units.parse_quantity(val, dim)
    design = _tune_design(target, l1, topology, fixed)
    achieved = reduce_tank(design).f_resonant
    rel = abs(achieved - target) / target
    if rel > 1e-3:
        raise CalibrationError(
            f"tuned design lands at {achieved:.0f} Hz, {rel:.2%} from target")
    doc = {
        "topology": design.topology.value,
        "target": target,
        "achieved": achieved,
        "relative_error": rel,
        "l1": design.l1, "l2": design.l2,
        "c1": design.c1, "c2": design.c2,
        "c_blocking": design.c_blocking,
        "c_shift": design.c_shift,
        "c_jfet": design.c_jfet,
        "r_adjust": design.r_adjust,
    }
    if design.topology is Topology.MCO_GATE:
        doc["c0"] = gate_branch_capacitance(design)
    row = _nearest_gate_row(target)
    doc["nearest_reference_row"] = {
        "f_khz": row.f_khz, "f_meas_khz": row.f_meas_khz,
        "l1_mh": row.l1 * 1e3, "c1_pf": row.c1 * 1e12, "c2_pf": row.c2 * 1e12,
        "c_blocking_nf": row.c_blocking * 1e9,
        "c_shift_pf": None if row.c_shift is None else row.c_shift * 1e12,
        "r_adjust_kohm": row.r_adjust / 1e3,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    print(f"tuned to {achieved:.1f} Hz (target {target:.0f} Hz, "
          f"{rel:.2e} relative)")
    print(f"  c_shift = {units.format_si(design.c_shift, 'F') if design.c_shift else 'none'}, "
          f"c1 = {units.format_si(design.c1, 'F')}, "
          f"c2 = {units.format_si(design.c2, 'F')}")
    print(f"  nearest measured row: f = {row.f_khz} kHz "
          f"(measured {row.f_meas_khz} kHz)")
    return EXIT_OK


def cmd_table_check(args) -> int:
    checks = check_drain_table()
    for line in table_report_lines(checks):
        print(line)
    if args.report_dir:
        from .report import render_table_check
        outdir = Path(args.report_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        render_table_check(checks, outdir / "table_check.png")
        print(f"figure in {outdir}")
    failed = any(c.status == "FAIL" for c in checks)
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_acceptance(args) -> int:
    from .acceptance import run_all
    numbers = None
    if args.criteria:
        numbers = [int(x) for x in args.criteria.split(",")]
    results = run_all(numbers)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftscatter",
        description="Frequency-shifted analog backscatter sensing, simulated "
                    "end to end: tag oscillators, IQ channel, receiver DSP, "
                    "interaction decoding.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="scenario -> cf32 IQ + manifest")
    p.add_argument("--scenario", required=True,
                   help="scenario file or bundled name "
                        f"({', '.join(bundled_scenario_names())})")
    p.add_argument("--out", required=True, help="output cf32 path")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("decode", help="cf32 IQ + band specs -> event log")
    p.add_argument("--iq", required=True)
    p.add_argument("--bands", required=True,
                   help="manifest or bands JSON (carries the sample rate)")
    p.add_argument("--events", required=True, help="output event log path")
    p.add_argument("--wav-dir", default=None)
    p.add_argument("--spectrogram", default=None, help="optional CSV output")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("plan", help="channel requests -> frequency plan")
    p.add_argument("--requests", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("tune", help="solve a design for a target frequency")
    p.add_argument("--target", required=True)
    p.add_argument("--l1", required=True)
    p.add_argument("--topology", choices=("esco", "mco"), default="mco")
    for key in ("c1", "c2", "c_blocking", "c_jfet", "l2", "r_adjust"):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("table-check", help="verify the printed frequency table")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(fn=cmd_table_check)

    p = sub.add_parser("acceptance", help="run the acceptance criteria")
    p.add_argument("--criteria", default=None,
                   help="comma-separated criterion numbers (default all)")
    p.set_defaults(fn=cmd_acceptance)
    return parser


def main(argv=None) -> int:
    retain_heap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CapacityError, CalibrationError, ClippingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, ScriptError, BandSpecError, DecodeError, DspError,
            CircuitError, ChannelError, units.UnitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
