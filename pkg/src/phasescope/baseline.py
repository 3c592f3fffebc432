"""Fixed time-quantum phase analysis and prediction-error metrics.

The TQ baseline chops the execution into fixed-length instruction quanta,
measures each quantum's CPI, and greedily merges consecutive quanta whose
CPI stays within merge_delta of the running phase mean. Both the TQ phase
list and a phase tree can be rendered back into a predicted CPI waveform
and scored against the golden waveform with MAPE.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .attribution import Waveform, quantum_cpis
from .phases import PhaseNode
from .trace import ExecutionTrace


@dataclass(frozen=True)
class TqPhase:
    start_quantum: int
    quantum_count: int
    mean_cpi: float


@dataclass
class TqPhaseList:
    quantum_length: int
    phases: list[TqPhase]
    merge_delta: float


@dataclass
class ErrorReport:
    mean_absolute_percentage_error: float
    method_label: str
    per_sample_errors: Optional[np.ndarray] = None


def tq_phases(
    trace: ExecutionTrace, quantum_length: int, merge_delta: float
) -> TqPhaseList:
    """Greedy merge of fixed-length quanta into phases of similar CPI.

    A quantum joins the current phase while its CPI is within merge_delta of
    the phase's running mean. Per-quantum CPI comes from the trace's quantum
    records when they match quantum_length, else exactly from golden cycles.
    """
    if merge_delta <= 0:
        raise ValueError("merge_delta must be positive")
    if quantum_length < 1:
        raise ValueError("quantum_length must be positive")
    total = trace.total_instructions
    if quantum_length > total:
        quantum_length = total  # degenerate request: one quantum spans the run

    if trace.has_quanta and trace.quantum_length == quantum_length:
        cpis = np.array([q.cpi for q in trace.quanta], dtype=float)
    elif trace.is_golden:
        cpis = quantum_cpis(trace, quantum_length)
    else:
        raise ValueError(
            "need golden cycles or quantum records matching quantum_length"
        )

    phases: list[TqPhase] = []
    start = 0
    acc = cpis[0]
    count = 1
    for q in range(1, len(cpis)):
        mean = acc / count
        if abs(cpis[q] - mean) <= merge_delta:
            acc += cpis[q]
            count += 1
        else:
            phases.append(TqPhase(start, count, float(acc / count)))
            start, acc, count = q, cpis[q], 1
    phases.append(TqPhase(start, count, float(acc / count)))
    return TqPhaseList(quantum_length, phases, merge_delta)


def _render_tree(
    node: PhaseNode, offsets: np.ndarray, mask: np.ndarray, values: np.ndarray
) -> None:
    """Fill values[mask] with the deepest phase mean covering each offset.

    A repeating child (occurrence >= 2) tiles periodically across its whole
    parent interval anchored at its start, so offsets before the anchor fold
    into the wrapped pattern instance.
    """
    values[mask] = node.mean_cpi
    parent_lo = node.start_instruction
    parent_hi = node.end_instruction
    for child in node.children:
        length = child.length_instructions
        if child.occurrence >= 2:
            span = mask & (offsets >= parent_lo) & (offsets < parent_hi)
            folded = child.start_instruction + (offsets - child.start_instruction) % length
        else:
            span = mask & (offsets >= child.start_instruction) & (
                offsets < child.end_instruction
            )
            folded = offsets
        if not span.any():
            continue
        _render_tree(child, folded, span, values)


def predict_waveform(
    source: Union[PhaseNode, TqPhaseList], total_instructions: int, resolution: int
) -> Waveform:
    """Render a method's piecewise-constant CPI prediction over the run,
    sampled on the same grid build_waveform uses."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    stride = math.ceil(total_instructions / resolution)
    offsets = np.arange(0, total_instructions, stride, dtype=np.int64)

    if isinstance(source, TqPhaseList):
        per_quantum = np.empty(
            math.ceil(total_instructions / source.quantum_length), dtype=float
        )
        for phase in source.phases:
            per_quantum[phase.start_quantum : phase.start_quantum + phase.quantum_count] = (
                phase.mean_cpi
            )
        values = per_quantum[offsets // source.quantum_length]
    elif isinstance(source, PhaseNode):
        values = np.empty(offsets.size, dtype=float)
        _render_tree(source, offsets, np.ones(offsets.size, dtype=bool), values)
    else:
        raise TypeError(f"cannot render {type(source).__name__}")

    return Waveform(
        samples=values,
        sample_stride=stride,
        origin_instruction=0,
        sample_heads=np.full(offsets.size, -1, dtype=np.int64),
    )


def error_rate(
    predicted: Waveform, golden: Waveform, label: str = "", keep_samples: bool = False
) -> ErrorReport:
    """Mean absolute percentage error of a prediction against the golden
    waveform, per sample on the shared instruction grid."""
    if (
        predicted.samples.size != golden.samples.size
        or predicted.sample_stride != golden.sample_stride
        or predicted.origin_instruction != golden.origin_instruction
    ):
        raise ValueError("waveforms must share grid (resolution and extent)")
    errors = np.abs(predicted.samples - golden.samples) / golden.samples * 100.0
    return ErrorReport(
        mean_absolute_percentage_error=float(errors.mean()),
        method_label=label,
        per_sample_errors=errors if keep_samples else None,
    )


def comparison_json(trace_name: str, reports: list[tuple[ErrorReport, int]]) -> str:
    """Comparison report: one (MAPE, phase count) record per method."""
    payload = {
        "trace": trace_name,
        "methods": [
            {
                "label": report.method_label,
                "mape_percent": report.mean_absolute_percentage_error,
                "phase_count": phase_count,
            }
            for report, phase_count in reports
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
