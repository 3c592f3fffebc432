"""Command-line interface: trace analysis, method comparison, synthesis.

Exit codes: 0 success, 1 internal analysis failure, 2 usage/input errors
(bad files, malformed traces or scenarios).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import baseline, phases, spectral, synth
from .attribution import attribute_block_cpi, build_waveform, golden_waveform, waveform_csv
from .phases import AnalysisConfig
from .trace import TraceFormatError, load_trace, save_trace


class InputError(ValueError):
    """Input violates a command's contract (maps to exit code 2)."""


@dataclass
class CommandOutcome:
    exit_code: int
    emitted_files: list[str] = field(default_factory=list)


_CONFIG_FLAGS = [f.name for f in fields(AnalysisConfig)]


def _config_from_args(args) -> AnalysisConfig:
    values: dict = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(values) - set(_CONFIG_FLAGS)
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
    for name in _CONFIG_FLAGS:
        override = getattr(args, name, None)
        if override is not None:
            values[name] = override
    try:
        return AnalysisConfig(**values)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad analysis config: {exc}") from None


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with analysis config fields")
    parser.add_argument("--resolution", type=int)
    parser.add_argument("--boundary-threshold-fraction", dest="boundary_threshold_fraction", type=float)
    parser.add_argument("--flat-cpi-range", dest="flat_cpi_range", type=float)
    parser.add_argument("--flat-spectrum-ratio", dest="flat_spectrum_ratio", type=float)
    parser.add_argument("--max-depth", dest="max_depth", type=int)
    parser.add_argument("--min-segment-instructions", dest="min_segment_instructions", type=int)


def _write(path: str, text: str, emitted: list[str]) -> None:
    Path(path).write_text(text, encoding="utf-8")
    emitted.append(path)


def cmd_analyze(args) -> CommandOutcome:
    config = _config_from_args(args)
    trace = load_trace(args.trace)
    emitted: list[str] = []

    spectra: list[tuple[int, int, int, spectral.Spectrum]] = []
    sink = (lambda d, a, b, s: spectra.append((d, a, b, s))) if args.spectrum_dir else None
    tree = phases.analyze(trace, config, spectrum_sink=sink)

    tree_text = phases.tree_json(tree, trace.blocks)
    if args.tree:
        _write(args.tree, tree_text, emitted)
    else:
        sys.stdout.write(tree_text)

    if args.waveform_csv:
        profiles = attribute_block_cpi(trace)
        wave = build_waveform(trace, profiles, config.resolution)
        _write(args.waveform_csv, waveform_csv(wave), emitted)
    if args.spectrum_dir:
        directory = Path(args.spectrum_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for depth, start, stop, spec in spectra:
            path = directory / f"spectrum_d{depth}_i{start}_{stop}.csv"
            _write(str(path), spectral.spectrum_csv(spec), emitted)
    if args.markers:
        table = phases.export_markers(tree, trace.blocks)
        _write(args.markers, phases.markers_json(table), emitted)
    return CommandOutcome(0, emitted)


def cmd_compare(args) -> CommandOutcome:
    config = _config_from_args(args)
    trace = load_trace(args.trace)
    if not trace.is_golden:
        raise InputError("golden cycles required for comparison")
    emitted: list[str] = []
    total = trace.total_instructions

    golden = golden_waveform(trace, config.resolution)
    tree = phases.analyze(trace, config)
    predicted = baseline.predict_waveform(tree, total, config.resolution)
    keep = bool(args.samples_csv)
    reports: list[tuple[baseline.ErrorReport, int]] = [
        (baseline.error_rate(predicted, golden, "bbfda", keep), sum(1 for _ in tree.walk()))
    ]
    columns = [("bbfda", predicted)]

    quantum_lengths = args.tq or [max(1, total // 64), max(1, total // 8)]
    for length in quantum_lengths:
        tq = baseline.tq_phases(trace, length, args.merge_delta)
        pred = baseline.predict_waveform(tq, total, config.resolution)
        label = f"tq-{length}"
        reports.append((baseline.error_rate(pred, golden, label, keep), len(tq.phases)))
        columns.append((label, pred))

    _write(args.out, baseline.comparison_json(args.trace, reports), emitted)
    if args.samples_csv:
        header = "instruction_offset,golden_cpi," + ",".join(label for label, _ in columns)
        rows = [header]
        offsets = golden.sample_offsets
        for i in range(golden.samples.size):
            cells = [str(offsets[i]), repr(float(golden.samples[i]))]
            cells += [repr(float(wave.samples[i])) for _, wave in columns]
            rows.append(",".join(cells))
        _write(args.samples_csv, "\n".join(rows) + "\n", emitted)
    return CommandOutcome(0, emitted)


def cmd_synth(args) -> CommandOutcome:
    try:
        text = Path(args.scenario).read_text()
    except OSError as exc:
        raise InputError(str(exc)) from None
    scenario = synth.scenario_from_json(text)
    trace, annotation = synth.generate(scenario)
    emitted: list[str] = []
    save_trace(trace, f"{args.out_prefix}.trace")
    emitted.append(f"{args.out_prefix}.trace")
    _write(
        f"{args.out_prefix}.annotation.json",
        phases.tree_json(annotation.true_phases, trace.blocks),
        emitted,
    )
    return CommandOutcome(0, emitted)


def cmd_spectrum(args) -> CommandOutcome:
    config = _config_from_args(args)
    trace = load_trace(args.trace)
    profiles = attribute_block_cpi(trace)
    wave = build_waveform(trace, profiles, config.resolution)
    spectrum = spectral.dft_magnitude(wave)
    emitted: list[str] = []
    _write(args.out, spectral.spectrum_csv(spectrum), emitted)
    return CommandOutcome(0, emitted)


def cmd_markers(args) -> CommandOutcome:
    try:
        obj = json.loads(Path(args.tree).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read tree {args.tree}: {exc}") from None
    root, addresses = phases.tree_from_dict(obj)
    table = phases.export_markers(root, addresses)
    emitted: list[str] = []
    _write(args.out, phases.markers_json(table), emitted)
    return CommandOutcome(0, emitted)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasescope",
        description="Hierarchical program phase detection from basic-block CPI traces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="build the phase tree for a trace")
    p.add_argument("trace")
    p.add_argument("--tree", help="phase tree JSON output (default: stdout)")
    p.add_argument("--waveform-csv", help="also write the CPI waveform CSV")
    p.add_argument("--spectrum-dir", help="write one spectrum CSV per analyzed segment")
    p.add_argument("--markers", help="also write the marker-table JSON")
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="score phase-tree vs time-quantum CPI prediction")
    p.add_argument("trace")
    p.add_argument("--out", required=True, help="comparison report JSON")
    p.add_argument("--tq", type=int, action="append",
                   help="time-quantum length in instructions (repeatable; default D/64 and D/8)")
    p.add_argument("--merge-delta", dest="merge_delta", type=float, default=0.1,
                   help="CPI tolerance for merging quanta into a phase (default 0.1)")
    p.add_argument("--samples-csv", help="also write per-sample predictions")
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="generate a synthetic trace from a scenario JSON")
    p.add_argument("scenario")
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>.trace and <prefix>.annotation.json")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("spectrum", help="emit the full-trace spectrum CSV")
    p.add_argument("trace")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("markers", help="emit a marker table from a saved phase tree")
    p.add_argument("tree")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_markers)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        outcome = args.func(args)
    except (TraceFormatError, synth.ScenarioError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
