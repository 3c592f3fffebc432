"""Deterministic synthetic traces with scripted ground truth.

A scenario is an ordered list of segments repeated a number of times; each
flat segment is one basic block executed event_count times at a scripted
CPI, and a segment may instead nest an inner segment list with its own
repetition count. The generator emits a golden-mode trace (optionally with
quantum samples) plus an annotation tree describing the phases it scripted,
so analysis results can be checked against known truth.

Randomness (per-event CPI noise) comes from numpy's PCG64 generator seeded
from the scenario seed, so identical scenarios produce byte-identical
traces anywhere.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attribution import quantum_cpis
from .phases import PhaseNode, Structure, classify_structure
from .trace import (
    BlockDescriptor,
    BlockEvent,
    ExecutionTrace,
    QuantumRecord,
    Terminator,
)

_BASE_ADDRESS = 0x1000
_ADDRESS_PITCH = 0x100
_MIN_CPI = 0.05


class ScenarioError(ValueError):
    """A scenario spec violates its invariants or is not realizable."""


class EntryKind(enum.Enum):
    FALLTHROUGH = "fallthrough"
    BACKWARD_BRANCH = "backward_branch"
    CALL = "call"


@dataclass
class SegmentSpec:
    """One scripted segment: a flat block run, or a nested repeated group.

    Flat segments need block_cpi / block_instruction_count / event_count;
    nested segments ignore those and derive their body from the inner list
    repeated nested_repetitions times. entry_kind states how control reaches
    this segment and drives the generated predecessor terminators.
    """

    label: str
    block_cpi: Optional[float] = None
    block_instruction_count: Optional[int] = None
    event_count: Optional[int] = None
    entry_kind: EntryKind = EntryKind.FALLTHROUGH
    nested: Optional[list["SegmentSpec"]] = None
    nested_repetitions: int = 1

    @property
    def is_flat(self) -> bool:
        return not self.nested


@dataclass
class ScenarioSpec:
    segments: list[SegmentSpec]
    repetitions: int = 1
    noise_stddev: float = 0.0
    seed: int = 0
    quantum_length: Optional[int] = None


@dataclass
class GoldenAnnotation:
    true_phases: PhaseNode


@dataclass
class _Run:
    segment: SegmentSpec
    entry: EntryKind


def _validate(spec: ScenarioSpec) -> None:
    if not spec.segments:
        raise ScenarioError("scenario needs at least one segment")
    if spec.repetitions < 1:
        raise ScenarioError("repetitions must be positive")
    if spec.noise_stddev < 0:
        raise ScenarioError("noise_stddev must be non-negative")
    if spec.quantum_length is not None and spec.quantum_length < 1:
        raise ScenarioError("quantum_length must be positive")

    min_cpi = float("inf")

    def check(seg: SegmentSpec) -> None:
        nonlocal min_cpi
        if seg.nested:
            if seg.nested_repetitions < 1:
                raise ScenarioError(f"segment {seg.label!r}: nested_repetitions must be positive")
            for inner in seg.nested:
                check(inner)
            return
        if seg.block_cpi is None or seg.block_instruction_count is None or seg.event_count is None:
            raise ScenarioError(
                f"segment {seg.label!r}: flat segment needs block_cpi, "
                f"block_instruction_count and event_count"
            )
        if seg.block_cpi <= 0:
            raise ScenarioError(f"segment {seg.label!r}: block_cpi must be positive")
        if seg.block_instruction_count < 1 or seg.event_count < 1:
            raise ScenarioError(f"segment {seg.label!r}: counts must be positive")
        min_cpi = min(min_cpi, seg.block_cpi)

    for seg in spec.segments:
        check(seg)
    if spec.noise_stddev >= min_cpi:
        raise ScenarioError("noise_stddev must stay below the smallest segment CPI")


def _flatten(segments: list[SegmentSpec]) -> list[_Run]:
    runs: list[_Run] = []
    for seg in segments:
        if seg.nested:
            for rep in range(seg.nested_repetitions):
                sub = _flatten(seg.nested)
                if rep == 0:
                    # the group is entered from outside on its first iteration
                    sub[0] = _Run(sub[0].segment, seg.entry_kind)
                runs.extend(sub)
        else:
            runs.append(_Run(seg, seg.entry_kind))
    return runs


def _assign_blocks(runs: list[_Run], repetitions: int) -> dict[int, BlockDescriptor]:
    """Block table: one block per flat segment, addresses in first-appearance
    order, terminators encoding how each block's successor is entered."""
    block_of: dict[int, int] = {}  # id(SegmentSpec) -> block_id
    for run in runs:
        block_of.setdefault(id(run.segment), len(block_of))

    def address(block_id: int) -> int:
        return _BASE_ADDRESS + block_id * _ADDRESS_PITCH

    desired: dict[int, list[tuple[EntryKind, int]]] = {b: [] for b in block_of.values()}
    last = len(runs) - 1
    for j, run in enumerate(runs):
        if j == last and repetitions < 2:
            break  # the wrap edge never executes
        nxt = runs[(j + 1) % len(runs)]
        edge = (nxt.entry, block_of[id(nxt.segment)])
        src = block_of[id(run.segment)]
        if edge not in desired[src]:
            desired[src].append(edge)

    blocks: dict[int, BlockDescriptor] = {}
    for run in runs:
        bid = block_of[id(run.segment)]
        if bid in blocks:
            continue
        seg = run.segment
        calls = [t for k, t in desired[bid] if k is EntryKind.CALL]
        backs = [t for k, t in desired[bid] if k is EntryKind.BACKWARD_BRANCH]
        if calls:
            terminator, target = Terminator.CALL, address(calls[0])
        elif backs:
            target = address(backs[0])
            if target > address(bid):
                raise ScenarioError(
                    f"segment {seg.label!r}: backward-branch entry is not "
                    f"realizable (target lies after the branching block); "
                    f"reorder segments so the loop head comes first"
                )
            terminator = Terminator.BRANCH
        else:
            terminator, target = Terminator.FALLTHROUGH, None
        blocks[bid] = BlockDescriptor(
            block_id=bid,
            start_address=address(bid),
            instruction_count=seg.block_instruction_count,
            terminator=terminator,
            target_address=target,
        )
    return blocks


def _segment_extent(seg: SegmentSpec) -> tuple[int, float]:
    """(instruction length, scripted cycle total) of one segment body."""
    if seg.is_flat:
        instrs = seg.block_instruction_count * seg.event_count
        return instrs, instrs * seg.block_cpi
    length = 0
    cycles = 0.0
    for inner in seg.nested:
        n, c = _segment_extent(inner)
        length += n
        cycles += c
    return length * seg.nested_repetitions, cycles * seg.nested_repetitions


def _annotation_nodes(
    segments: list[SegmentSpec],
    start: int,
    wrap_block: Optional[int],
    head_at,
    classify_at,
) -> list[PhaseNode]:
    """Nodes for a segment list whose repeating context re-enters its first
    segment from wrap_block (None when nothing recurs into it)."""
    nodes: list[PhaseNode] = []
    cursor = start
    for seg in segments:
        length, cycles = _segment_extent(seg)
        context = wrap_block if cursor == start else head_at(cursor - 1)
        if seg.is_flat or seg.nested_repetitions >= 2:
            node = PhaseNode(
                head_block=head_at(cursor),
                start_instruction=cursor,
                length_instructions=length if seg.is_flat
                else length // seg.nested_repetitions,
                mean_cpi=cycles / length,
                occurrence=1 if seg.is_flat else seg.nested_repetitions,
                structure=classify_at(cursor, context),
            )
            if not seg.is_flat and (len(seg.nested) > 1 or seg.nested[0].nested):
                iteration = length // seg.nested_repetitions
                inner_wrap = head_at(cursor + iteration - 1)
                node.children = _annotation_nodes(
                    seg.nested, cursor, inner_wrap, head_at, classify_at
                )
            nodes.append(node)
        else:
            # a single pass through the group adds no level of its own
            nodes.extend(
                _annotation_nodes(seg.nested, cursor, context, head_at, classify_at)
            )
        cursor += length
    return nodes


def generate(spec: ScenarioSpec) -> tuple[ExecutionTrace, GoldenAnnotation]:
    """Emit (golden trace, scripted annotation) for a scenario.

    Event cycles are block_cpi * instruction_count with optional Gaussian
    CPI noise (clamped so CPI never drops below 0.05); quantum records, when
    requested, are computed exactly from the noisy events.
    """
    _validate(spec)
    period_runs = _flatten(spec.segments)
    blocks = _assign_blocks(period_runs, spec.repetitions)

    # per-run vectors for one period, then tiled across repetitions
    run_block = []
    run_events = []
    run_instr = []
    run_cpi = []
    seen: dict[int, int] = {}
    for run in period_runs:
        key = id(run.segment)
        if key not in seen:
            seen[key] = len(seen)
        run_block.append(seen[key])
        run_events.append(run.segment.event_count)
        run_instr.append(run.segment.block_instruction_count)
        run_cpi.append(run.segment.block_cpi)

    event_block = np.tile(np.repeat(run_block, run_events), spec.repetitions)
    event_instr = np.tile(np.repeat(run_instr, run_events), spec.repetitions)
    event_cpi = np.tile(np.repeat(run_cpi, run_events), spec.repetitions).astype(float)

    if spec.noise_stddev > 0:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        noise = rng.normal(0.0, spec.noise_stddev, size=event_cpi.size)
        event_cpi = np.maximum(_MIN_CPI, event_cpi + noise)
    cycles = event_cpi * event_instr

    events = [
        BlockEvent(int(b), float(c)) for b, c in zip(event_block, cycles)
    ]
    trace = ExecutionTrace(blocks=blocks, events=events)

    if spec.quantum_length is not None:
        v = quantum_cpis(trace, spec.quantum_length)
        quanta = [QuantumRecord(i, float(cpi)) for i, cpi in enumerate(v)]
        trace = ExecutionTrace(
            blocks=blocks,
            events=events,
            quanta=quanta,
            quantum_length=spec.quantum_length,
        )

    annotation = GoldenAnnotation(true_phases=_build_annotation(spec, trace))
    return trace, annotation


def _build_annotation(spec: ScenarioSpec, trace: ExecutionTrace) -> PhaseNode:
    total = trace.total_instructions
    period = total // spec.repetitions
    total_cycles = sum(_segment_extent(s)[1] for s in spec.segments) * spec.repetitions

    # period-local run layout for head lookup and steady-state entry edges
    runs = _flatten(spec.segments)
    seen: dict[int, int] = {}
    run_blocks: list[int] = []
    run_starts = [0]
    for run in runs:
        key = id(run.segment)
        if key not in seen:
            seen[key] = len(seen)
        run_blocks.append(seen[key])
        run_starts.append(
            run_starts[-1]
            + run.segment.block_instruction_count * run.segment.event_count
        )
    starts = np.array(run_starts[:-1], dtype=np.int64)

    def head_at(offset: int) -> int:
        j = int(np.searchsorted(starts, offset, side="right")) - 1
        return run_blocks[j]

    def classify_at(offset: int, context_block: Optional[int]) -> Structure:
        context = trace.blocks[context_block] if context_block is not None else None
        return classify_structure(trace.blocks[head_at(offset)], context)

    period_wrap = run_blocks[-1] if spec.repetitions >= 2 else None

    root = PhaseNode(
        head_block=run_blocks[0],
        start_instruction=0,
        length_instructions=total,
        mean_cpi=total_cycles / total,
        occurrence=1,
        structure=Structure.NONE,
    )
    single_flat = len(spec.segments) == 1 and spec.segments[0].is_flat
    if single_flat:
        return root  # a repeated constant run is one phase

    if spec.repetitions >= 2:
        template = PhaseNode(
            head_block=run_blocks[0],
            start_instruction=0,
            length_instructions=period,
            mean_cpi=root.mean_cpi,
            occurrence=spec.repetitions,
            structure=classify_at(0, period_wrap),
        )
        template.children = _annotation_nodes(
            spec.segments, 0, period_wrap, head_at, classify_at
        )
        root.children = [template]
    else:
        root.children = _annotation_nodes(
            spec.segments, 0, None, head_at, classify_at
        )
    return root


# --- scenario JSON ----------------------------------------------------------

def _segment_from_dict(obj: dict) -> SegmentSpec:
    nested = obj.get("nested")
    return SegmentSpec(
        label=str(obj.get("label", "")),
        block_cpi=obj.get("block_cpi"),
        block_instruction_count=obj.get("block_instruction_count"),
        event_count=obj.get("event_count"),
        entry_kind=EntryKind(obj.get("entry_kind", "fallthrough")),
        nested=[_segment_from_dict(s) for s in nested] if nested else None,
        nested_repetitions=int(obj.get("nested_repetitions", 1)),
    )


def scenario_from_json(text: str) -> ScenarioSpec:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid scenario JSON: {exc}") from None
    try:
        return ScenarioSpec(
            segments=[_segment_from_dict(s) for s in obj["segments"]],
            repetitions=int(obj.get("repetitions", 1)),
            noise_stddev=float(obj.get("noise_stddev", 0.0)),
            seed=int(obj.get("seed", 0)),
            quantum_length=obj.get("quantum_length"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario JSON: {exc}") from None


def _segment_to_dict(seg: SegmentSpec) -> dict:
    out: dict = {"label": seg.label, "entry_kind": seg.entry_kind.value}
    if seg.nested:
        out["nested"] = [_segment_to_dict(s) for s in seg.nested]
        out["nested_repetitions"] = seg.nested_repetitions
    else:
        out["block_cpi"] = seg.block_cpi
        out["block_instruction_count"] = seg.block_instruction_count
        out["event_count"] = seg.event_count
    return out


def scenario_json(spec: ScenarioSpec) -> str:
    payload = {
        "segments": [_segment_to_dict(s) for s in spec.segments],
        "repetitions": spec.repetitions,
        "noise_stddev": spec.noise_stddev,
        "seed": spec.seed,
    }
    if spec.quantum_length is not None:
        payload["quantum_length"] = spec.quantum_length
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
