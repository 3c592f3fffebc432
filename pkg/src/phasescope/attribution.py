"""Per-block CPI attribution and instruction-indexed CPI waveforms.

Quantum-mode attribution spreads each quantum's measured CPI back onto the
blocks that executed in it (weighted by how often each block started there);
golden-mode attribution averages exact per-event cycle counts. Waveforms are
piecewise-constant CPI over the instruction axis, resampled onto a uniform
grid by zero-order hold so a DFT can be applied.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .trace import ExecutionTrace


class ProfileSource(enum.Enum):
    GOLDEN = "golden"
    QUANTUM_WEIGHTED = "quantum_weighted"


@dataclass(frozen=True)
class BlockProfile:
    block_id: int
    cpi: float
    occurrence_total: int
    source: ProfileSource


@dataclass
class Waveform:
    """Uniformly resampled CPI signal.

    samples[k] is the CPI of the block executing instruction
    origin_instruction + k * sample_stride; sample_heads[k] is that block's
    id (-1 for predicted waveforms with no underlying block).
    """

    samples: np.ndarray
    sample_stride: int
    origin_instruction: int
    sample_heads: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.sample_heads = np.asarray(self.sample_heads, dtype=np.int64)
        if self.samples.size < 1:
            raise ValueError("waveform needs at least one sample")
        if self.samples.size != self.sample_heads.size:
            raise ValueError("samples and sample_heads must have equal length")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be positive")

    @property
    def sample_offsets(self) -> np.ndarray:
        """Absolute instruction offset of each sample."""
        return self.origin_instruction + self.sample_stride * np.arange(
            self.samples.size, dtype=np.int64
        )


@dataclass(frozen=True)
class EventIndex:
    """Prefix-sum view of the event stream for O(log E) offset lookups.

    starts has length E+1; event e covers instructions [starts[e], starts[e+1]).
    """

    block_ids: np.ndarray
    starts: np.ndarray
    instr_counts: np.ndarray
    event_cycles: Optional[np.ndarray]

    @classmethod
    def from_trace(cls, trace: ExecutionTrace) -> "EventIndex":
        counts = np.array(
            [trace.blocks[e.block_id].instruction_count for e in trace.events],
            dtype=np.int64,
        )
        starts = np.zeros(len(counts) + 1, dtype=np.int64)
        np.cumsum(counts, out=starts[1:])
        cycles = None
        if trace.is_golden:
            cycles = np.array([e.cycles for e in trace.events], dtype=float)
        return cls(
            block_ids=np.array([e.block_id for e in trace.events], dtype=np.int64),
            starts=starts,
            instr_counts=counts,
            event_cycles=cycles,
        )

    @property
    def total_instructions(self) -> int:
        return int(self.starts[-1])

    def events_at(self, offsets: np.ndarray) -> np.ndarray:
        """Index of the event executing at each instruction offset."""
        return np.searchsorted(self.starts, offsets, side="right") - 1

    def golden_event_cpi(self) -> np.ndarray:
        if self.event_cycles is None:
            raise ValueError("golden cycles required")
        return self.event_cycles / self.instr_counts


def attribute_block_cpi(
    trace: ExecutionTrace, mode: str = "auto"
) -> dict[int, BlockProfile]:
    """Compute one CPI profile per executed block.

    mode "quantum": cpi(b) is the weighted average of quantum CPIs over the
    quanta in which b's events start. mode "golden": cpi(b) is total event
    cycles over total instructions executed by b. mode "auto" picks quantum
    when quantum samples are present (the measurement path), golden otherwise.
    Blocks with no dynamic occurrence are omitted.
    """
    if mode == "auto":
        mode = "quantum" if trace.has_quanta else "golden"
    if mode not in ("quantum", "golden"):
        raise ValueError(f"unknown attribution mode {mode!r}")

    index = EventIndex.from_trace(trace)
    profiles: dict[int, BlockProfile] = {}

    if mode == "quantum":
        if not trace.has_quanta:
            raise ValueError("quantum attribution requires quantum records")
        v = np.array([q.cpi for q in trace.quanta], dtype=float)
        # an event belongs to the quantum holding its first instruction
        quantum_of_event = index.starts[:-1] // trace.quantum_length
        per_event_v = v[quantum_of_event]
        for bid in np.unique(index.block_ids):
            mask = index.block_ids == bid
            n = int(mask.sum())
            cpi = float(per_event_v[mask].sum() / n)
            if cpi <= 0:
                raise ValueError(f"non-positive attributed CPI for block {bid}")
            profiles[int(bid)] = BlockProfile(
                int(bid), cpi, n, ProfileSource.QUANTUM_WEIGHTED
            )
    else:
        if index.event_cycles is None:
            raise ValueError("golden attribution requires cycles on every event")
        for bid in np.unique(index.block_ids):
            mask = index.block_ids == bid
            n = int(mask.sum())
            instrs = int(index.instr_counts[mask].sum())
            cpi = float(index.event_cycles[mask].sum() / instrs)
            if cpi <= 0:
                raise ValueError(f"non-positive attributed CPI for block {bid}")
            profiles[int(bid)] = BlockProfile(int(bid), cpi, n, ProfileSource.GOLDEN)

    return profiles


def profile_rates(index: EventIndex, profiles: dict[int, BlockProfile]) -> np.ndarray:
    """Per-event CPI taken from the block profiles, aligned with the index."""
    rate_by_block: dict[int, float] = {b: p.cpi for b, p in profiles.items()}
    try:
        return np.array([rate_by_block[int(b)] for b in index.block_ids], dtype=float)
    except KeyError as exc:
        raise ValueError(f"missing profile for executed block {exc.args[0]}") from None


def sample_range(
    index: EventIndex,
    rates: np.ndarray,
    start: int,
    stop: int,
    resolution: int,
) -> Waveform:
    """Zero-order-hold resampling of the CPI function over [start, stop).

    rates holds the per-event CPI to sample (block profile rate or exact
    per-event rate). sample_stride = ceil(len / resolution); samples land on
    start + k*stride, so refining the resolution never changes shared offsets.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    length = stop - start
    if length < 1:
        raise ValueError("empty sample range")
    stride = math.ceil(length / resolution)
    offsets = np.arange(start, stop, stride, dtype=np.int64)
    ev = index.events_at(offsets)
    return Waveform(
        samples=rates[ev],
        sample_stride=stride,
        origin_instruction=start,
        sample_heads=index.block_ids[ev],
    )


def build_waveform(
    trace: ExecutionTrace, profiles: dict[int, BlockProfile], resolution: int = 4096
) -> Waveform:
    """Full-trace CPI waveform using the block-profile rates."""
    index = EventIndex.from_trace(trace)
    return sample_range(index, profile_rates(index, profiles), 0, index.total_instructions, resolution)


def golden_waveform(trace: ExecutionTrace, resolution: int = 4096) -> Waveform:
    """Exact per-instruction CPI waveform from per-event cycle counts."""
    index = EventIndex.from_trace(trace)
    return sample_range(index, index.golden_event_cpi(), 0, index.total_instructions, resolution)


def weighted_cpi_prefix(index: EventIndex, rates: np.ndarray) -> np.ndarray:
    """prefix[e] = sum of instr_count*rate over events before e (length E+1)."""
    prefix = np.zeros(len(rates) + 1, dtype=float)
    np.cumsum(index.instr_counts * rates, out=prefix[1:])
    return prefix


def range_mean_cpi(
    index: EventIndex, rates: np.ndarray, prefix: np.ndarray, start: int, stop: int
) -> float:
    """Exact instruction-weighted mean CPI over [start, stop)."""

    def weight_below(x: int) -> float:
        e = int(np.searchsorted(index.starts, x, side="right")) - 1
        if e < 0:
            return 0.0
        if e >= len(rates):
            return float(prefix[-1])
        return float(prefix[e] + (x - index.starts[e]) * rates[e])

    length = stop - start
    if length < 1:
        raise ValueError("empty range")
    return (weight_below(stop) - weight_below(start)) / length


def quantum_cpis(trace: ExecutionTrace, quantum_length: int) -> np.ndarray:
    """Exact CPI of each quantum, splitting event cycles per instruction.

    Every instruction of an event costs cycles/instr_count, so a quantum's
    CPI is well defined even when events straddle its boundaries.
    """
    if quantum_length < 1:
        raise ValueError("quantum_length must be positive")
    index = EventIndex.from_trace(trace)
    rates = index.golden_event_cpi()
    prefix = weighted_cpi_prefix(index, rates)
    total = index.total_instructions
    n_quanta = math.ceil(total / quantum_length)
    bounds = np.minimum(
        np.arange(n_quanta + 1, dtype=np.int64) * quantum_length, total
    )
    ev = index.events_at(np.minimum(bounds, total - 1))
    cum = prefix[ev] + (bounds - index.starts[ev]) * rates[ev]
    cum[-1] = prefix[-1]
    cycles_per_quantum = np.diff(cum)
    instrs_per_quantum = np.diff(bounds).astype(float)
    return cycles_per_quantum / instrs_per_quantum


def waveform_csv(waveform: Waveform) -> str:
    """Plot-ready CSV: instruction_offset,cpi,block_id."""
    rows = ["instruction_offset,cpi,block_id"]
    for off, cpi, head in zip(
        waveform.sample_offsets, waveform.samples, waveform.sample_heads
    ):
        rows.append(f"{int(off)},{float(cpi)!r},{int(head)}")
    return "\n".join(rows) + "\n"
