"""Recursive hierarchical phase identification.

The driver repeatedly: samples a segment's CPI waveform, finds the dominant
occurrence count in its spectrum, derives the pattern length, locates the
head basic block by aligning candidate heads (big CPI jumps between
consecutive events) against that length, then recurses into the first
pattern instance. Occurrence-one segments are split at the strongest mean
step instead; flat segments terminate the recursion.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .attribution import (
    EventIndex,
    BlockProfile,
    Waveform,
    attribute_block_cpi,
    profile_rates,
    range_mean_cpi,
    sample_range,
    weighted_cpi_prefix,
)
from .spectral import FlatSpectrumError, Spectrum, dft_magnitude, is_flat, main_spectrum
from .trace import BlockDescriptor, ExecutionTrace, Terminator


class NoAlignmentError(ValueError):
    """No candidate head available to anchor the phase."""


class Structure(enum.Enum):
    LOOP = "loop"
    FUNCTION = "function"
    NONE = "none"


@dataclass(frozen=True)
class AnalysisConfig:
    resolution: int = 4096
    boundary_threshold_fraction: float = 0.5
    flat_cpi_range: float = 0.3
    flat_spectrum_ratio: float = 0.02
    max_depth: int = 8
    min_segment_instructions: int = 64

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if not 0.0 < self.boundary_threshold_fraction <= 1.0:
            raise ValueError("boundary_threshold_fraction must be in (0, 1]")
        if self.flat_cpi_range < 0.0:
            raise ValueError("flat_cpi_range must be non-negative")
        if not 0.0 < self.flat_spectrum_ratio < 1.0:
            raise ValueError("flat_spectrum_ratio must be in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.min_segment_instructions < 2:
            raise ValueError("min_segment_instructions must be >= 2")


@dataclass
class PhaseNode:
    """One phase: where it starts, how long one instance is, how often it
    repeats at this level, and the mean CPI over its interval."""

    head_block: int
    start_instruction: int
    length_instructions: int
    mean_cpi: float
    occurrence: int = 1
    structure: Structure = Structure.NONE
    children: list["PhaseNode"] = field(default_factory=list)

    @property
    def end_instruction(self) -> int:
        return self.start_instruction + self.length_instructions

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class Candidate:
    """A potential phase head: the second event of a large-CPI-jump pair."""

    event_index: int
    block_id: int
    instruction_offset: int


@dataclass
class MarkerEntry:
    phase_path: tuple[int, ...]
    mean_cpi: float
    structure: Structure
    additional_paths: list[tuple[int, ...]] = field(default_factory=list)


@dataclass
class MarkerTable:
    """What a binary patcher would consume: one record per phase head
    address, shallowest phase first when heads collide."""

    entries: dict[int, MarkerEntry]


def candidate_heads(
    trace: ExecutionTrace, profiles: dict[int, BlockProfile], threshold: float
) -> list[Candidate]:
    """Every event whose block CPI differs from its predecessor's by more
    than the threshold, in execution order (duplicates preserved)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    index = EventIndex.from_trace(trace)
    rates = profile_rates(index, profiles)
    return _candidates_in_range(index, rates, threshold, 0, index.total_instructions)


def _candidates_in_range(
    index: EventIndex, rates: np.ndarray, threshold: float, start: int, stop: int
) -> list[Candidate]:
    if len(rates) < 2:
        return []
    deltas = np.abs(np.diff(rates))
    offsets = index.starts[1:-1]
    sel = np.nonzero((deltas > threshold) & (offsets >= start) & (offsets < stop))[0]
    return [
        Candidate(int(i) + 1, int(index.block_ids[i + 1]), int(offsets[i]))
        for i in sel
    ]


def align_phase(
    waveform: Waveform, candidates: list[Candidate], length: int
) -> tuple[int, int]:
    """Pick the candidate block whose recurrence rhythm best matches the
    phase length; return (start_instruction, block_id) of its first
    occurrence.

    The score of a block is |median inter-arrival gap - length| over its
    candidate offsets; ties break toward the earliest offset. Blocks seen
    only once are a fallback when nothing recurs.
    """
    if length < 1:
        raise ValueError("length must be positive")
    lo = waveform.origin_instruction
    hi = lo + waveform.samples.size * waveform.sample_stride
    in_range = [c for c in candidates if lo <= c.instruction_offset < hi]
    if not in_range:
        raise NoAlignmentError("no candidate heads in range")

    offsets_by_block: dict[int, list[int]] = {}
    for cand in in_range:
        offsets_by_block.setdefault(cand.block_id, []).append(cand.instruction_offset)

    best: Optional[tuple[float, int, int]] = None  # (score, first_offset, block)
    for block, offs in offsets_by_block.items():
        if len(offs) < 2:
            continue
        gap = float(np.median(np.diff(offs)))
        key = (abs(gap - length), offs[0], block)
        if best is None or key < best:
            best = key
    if best is not None:
        return best[1], best[2]

    first = min(in_range, key=lambda c: c.instruction_offset)
    return first.instruction_offset, first.block_id


def split_step(waveform: Waveform) -> Optional[tuple[int, float, float]]:
    """Best two-way split of a non-repeating segment.

    Scans every sample boundary and returns (boundary_instruction,
    mean_before, mean_after) for the largest mean jump, provided it exceeds
    the population standard deviation of the whole waveform (strict);
    otherwise None and the segment is one phase.
    """
    samples = waveform.samples
    n = samples.size
    if n < 2:
        return None
    prefix = np.cumsum(samples)
    t = np.arange(1, n)
    before = prefix[:-1] / t
    after = (prefix[-1] - prefix[:-1]) / (n - t)
    diff = np.abs(after - before)
    best = int(np.argmax(diff))
    if not diff[best] > float(samples.std()):
        return None
    boundary = waveform.origin_instruction + (best + 1) * waveform.sample_stride
    return boundary, float(before[best]), float(after[best])


def classify_structure(
    block: BlockDescriptor, context: Optional[BlockDescriptor]
) -> Structure:
    """Code structure entered at a phase head, judged by the block that
    transferred control to it: a call makes it a function entry, a
    backward branch (target at or before the branching block) a loop head."""
    if context is None:
        return Structure.NONE
    if context.terminator is Terminator.CALL:
        return Structure.FUNCTION
    if (
        context.terminator is Terminator.BRANCH
        and context.target_address is not None
        and context.target_address <= context.start_address
    ):
        return Structure.LOOP
    return Structure.NONE


class _Analysis:
    """Per-run state shared across the recursion."""

    def __init__(
        self,
        trace: ExecutionTrace,
        config: AnalysisConfig,
        profiles: dict[int, BlockProfile],
        spectrum_sink: Optional[Callable[[int, int, int, Spectrum], None]],
    ):
        self.trace = trace
        self.config = config
        self.index = EventIndex.from_trace(trace)
        self.rates = profile_rates(self.index, profiles)
        self.prefix = weighted_cpi_prefix(self.index, self.rates)
        self.spectrum_sink = spectrum_sink

    def make_node(self, start: int, stop: int, occurrence: int) -> PhaseNode:
        head_event = int(np.searchsorted(self.index.starts, start, side="right")) - 1
        head_block = int(self.index.block_ids[head_event])
        context = None
        if head_event > 0:
            context = self.trace.blocks[int(self.index.block_ids[head_event - 1])]
        return PhaseNode(
            head_block=head_block,
            start_instruction=start,
            length_instructions=stop - start,
            mean_cpi=range_mean_cpi(self.index, self.rates, self.prefix, start, stop),
            occurrence=occurrence,
            structure=classify_structure(self.trace.blocks[head_block], context),
        )

    def segment(self, start: int, stop: int, depth: int, occurrence: int) -> PhaseNode:
        cfg = self.config
        node = self.make_node(start, stop, occurrence)
        length = stop - start
        if depth >= cfg.max_depth or length < cfg.min_segment_instructions:
            return node

        wave = sample_range(self.index, self.rates, start, stop, cfg.resolution)
        if wave.samples.size < 2:
            return node
        spectrum = dft_magnitude(wave)
        if self.spectrum_sink is not None:
            self.spectrum_sink(depth, start, stop, spectrum)
        if is_flat(wave, spectrum, cfg):
            return node
        try:
            main = main_spectrum(spectrum)
        except FlatSpectrumError:
            return node

        if main.occurrence == 1:
            split = split_step(wave)
            if split is None:
                return node
            boundary = split[0]
            if not start < boundary < stop:
                return node
            node.children = [
                self.segment(start, boundary, depth + 1, 1),
                self.segment(boundary, stop, depth + 1, 1),
            ]
            return node

        reps = main.occurrence
        # node lengths stay within occurrence*length <= segment + one stride
        instance = min(max(1, round(length / reps)), (length + wave.sample_stride) // reps)
        theta = cfg.boundary_threshold_fraction * main.magnitude
        candidates = _candidates_in_range(self.index, self.rates, theta, start, stop)
        try:
            anchor, _ = align_phase(wave, candidates, instance)
        except NoAlignmentError:
            anchor = start
        if anchor > start:
            # fold back to the earliest congruent instance of the pattern
            anchor = start + (anchor - start) % instance
        child_len = min(instance, stop - anchor)
        node.children = [self.segment(anchor, anchor + child_len, depth + 1, reps)]
        return node


def analyze(
    trace: ExecutionTrace,
    config: Optional[AnalysisConfig] = None,
    *,
    mode: str = "auto",
    spectrum_sink: Optional[Callable[[int, int, int, Spectrum], None]] = None,
) -> PhaseNode:
    """Build the hierarchical phase tree for a trace.

    The root covers the whole execution. mode selects the CPI attribution
    source (see attribute_block_cpi); spectrum_sink, when given, receives
    (depth, start, stop, spectrum) for every analyzed segment.
    """
    cfg = config or AnalysisConfig()
    profiles = attribute_block_cpi(trace, mode=mode)
    run = _Analysis(trace, cfg, profiles, spectrum_sink)
    root = run.segment(0, run.index.total_instructions, 0, 1)
    validate_tree(root)
    return root


def validate_tree(root: PhaseNode) -> None:
    """Structural well-formedness: children ordered, disjoint, inside the
    parent interval."""
    for node in root.walk():
        cursor = node.start_instruction
        for child in node.children:
            if child.start_instruction < cursor:
                raise AssertionError("children overlap or are out of order")
            if child.end_instruction > node.end_instruction:
                raise AssertionError("child extends past its parent")
            if child.length_instructions < 1:
                raise AssertionError("empty child interval")
            cursor = child.end_instruction


def export_markers(root: PhaseNode, blocks) -> MarkerTable:
    """Flatten a phase tree into per-head-address marker records.

    blocks maps block_id to a BlockDescriptor or directly to an address.
    When nested phases share a head block, the shallowest node keeps the
    entry and deeper paths are appended to additional_paths.
    """

    def address_of(block_id: int) -> int:
        entry = blocks[block_id]
        return entry.start_address if isinstance(entry, BlockDescriptor) else int(entry)

    entries: dict[int, MarkerEntry] = {}
    queue: deque[tuple[PhaseNode, tuple[int, ...]]] = deque([(root, ())])
    while queue:
        node, path = queue.popleft()
        addr = address_of(node.head_block)
        if addr in entries:
            entries[addr].additional_paths.append(path)
        else:
            entries[addr] = MarkerEntry(path, node.mean_cpi, node.structure)
        for i, child in enumerate(node.children):
            queue.append((child, path + (i,)))
    return MarkerTable(entries)


# --- JSON interchange -------------------------------------------------------

def tree_to_dict(node: PhaseNode, blocks) -> dict:
    entry = blocks[node.head_block]
    addr = entry.start_address if isinstance(entry, BlockDescriptor) else int(entry)
    return {
        "head_block": node.head_block,
        "head_address": f"{addr:#x}",
        "start": node.start_instruction,
        "length": node.length_instructions,
        "occurrence": node.occurrence,
        "mean_cpi": node.mean_cpi,
        "structure": node.structure.value,
        "children": [tree_to_dict(c, blocks) for c in node.children],
    }


def tree_json(root: PhaseNode, blocks) -> str:
    return json.dumps(tree_to_dict(root, blocks), indent=2, sort_keys=True) + "\n"


def tree_from_dict(obj: dict) -> tuple[PhaseNode, dict[int, int]]:
    """Rebuild a PhaseNode tree (plus a block_id -> address map) from the
    JSON object shape produced by tree_to_dict."""
    addresses: dict[int, int] = {}

    def build(entry: dict) -> PhaseNode:
        addresses[int(entry["head_block"])] = int(entry["head_address"], 16)
        return PhaseNode(
            head_block=int(entry["head_block"]),
            start_instruction=int(entry["start"]),
            length_instructions=int(entry["length"]),
            mean_cpi=float(entry["mean_cpi"]),
            occurrence=int(entry["occurrence"]),
            structure=Structure(entry["structure"]),
            children=[build(c) for c in entry.get("children", [])],
        )

    return build(obj), addresses


def markers_json(table: MarkerTable) -> str:
    payload = {
        f"{addr:#x}": {
            "phase_path": list(entry.phase_path),
            "mean_cpi": entry.mean_cpi,
            "structure": entry.structure.value,
            "additional_paths": [list(p) for p in entry.additional_paths],
        }
        for addr, entry in table.entries.items()
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
