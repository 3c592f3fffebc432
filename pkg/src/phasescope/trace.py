"""Basic-block trace data model and the line-based text format.

A trace file lists the static block table followed by the dynamic event
stream, one record per line:

    V 1                                   version header, required first
    B <id> <addr_hex> <instrs> <F|B|C|R> [<target_hex>]
    E <block_id> [<cycles>]               dynamic event, execution order
    Q <quantum_index> <cpi>               quantum CPI sample
    L <quantum_length>                    instructions per quantum

``#`` starts a comment. A trace is "golden" when every event carries a
cycle count, and "quantum" when Q/L records are present; at least one of
the two must hold (both is fine for validation traces).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union


class TraceFormatError(ValueError):
    """A trace stream violates the text format or a model invariant."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Terminator(enum.Enum):
    FALLTHROUGH = "F"
    BRANCH = "B"
    CALL = "C"
    RETURN = "R"


#: terminator kinds that must carry a target address
_TARGETED = (Terminator.BRANCH, Terminator.CALL)


@dataclass(frozen=True)
class BlockDescriptor:
    """Static description of one basic block, identified by its first
    instruction address (block_id is a compact alias for that address)."""

    block_id: int
    start_address: int
    instruction_count: int
    terminator: Terminator
    target_address: Optional[int] = None

    def __post_init__(self):
        if self.instruction_count < 1:
            raise TraceFormatError(
                f"block {self.block_id}: instruction_count must be >= 1"
            )
        has_target = self.target_address is not None
        if has_target != (self.terminator in _TARGETED):
            raise TraceFormatError(
                f"block {self.block_id}: target_address present iff "
                f"terminator is branch or call"
            )


@dataclass(frozen=True)
class BlockEvent:
    """One dynamic execution of a block; cycles present in golden traces."""

    block_id: int
    cycles: Optional[float] = None


@dataclass(frozen=True)
class QuantumRecord:
    quantum_index: int
    cpi: float


@dataclass
class ExecutionTrace:
    """Validated trace: block table, ordered events, optional quantum samples.

    Immutable by convention after construction; safe to share across readers.
    """

    blocks: dict[int, BlockDescriptor]
    events: list[BlockEvent]
    quanta: Optional[list[QuantumRecord]] = None
    quantum_length: Optional[int] = None
    _total: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        if not self.blocks:
            raise TraceFormatError("trace declares no blocks")
        addresses = set()
        for bid, block in self.blocks.items():
            if bid != block.block_id:
                raise TraceFormatError(f"block table key {bid} != id {block.block_id}")
            if block.start_address in addresses:
                raise TraceFormatError(
                    f"duplicate start_address {block.start_address:#x}"
                )
            addresses.add(block.start_address)
        total = 0
        for i, event in enumerate(self.events):
            block = self.blocks.get(event.block_id)
            if block is None:
                raise TraceFormatError(f"unknown block {event.block_id} (event {i})")
            if event.cycles is not None and event.cycles < 0:
                raise TraceFormatError(f"event {i}: negative cycle count")
            total += block.instruction_count
        if total <= 0:
            raise TraceFormatError("trace has no events")
        object.__setattr__(self, "_total", total)

        if (self.quanta is None) != (self.quantum_length is None):
            raise TraceFormatError("quantum records and quantum length must coexist")
        if self.quanta is not None:
            if self.quantum_length < 1:
                raise TraceFormatError("quantum_length must be positive")
            expected = math.ceil(total / self.quantum_length)
            if len(self.quanta) != expected:
                raise TraceFormatError(
                    f"quantum count mismatch: {len(self.quanta)} records, "
                    f"expected ceil({total}/{self.quantum_length}) = {expected}"
                )
            for i, q in enumerate(self.quanta):
                if q.quantum_index != i:
                    raise TraceFormatError(
                        f"quantum indices must be contiguous from 0 (got {q.quantum_index} at {i})"
                    )
                if q.cpi <= 0:
                    raise TraceFormatError(f"quantum {i}: cpi must be positive")
        if not self.is_golden and self.quanta is None:
            raise TraceFormatError(
                "mixed-mode violation: need per-event cycles on every event "
                "or quantum records"
            )

    @property
    def is_golden(self) -> bool:
        return all(e.cycles is not None for e in self.events)

    @property
    def has_quanta(self) -> bool:
        return self.quanta is not None

    @property
    def total_instructions(self) -> int:
        return self._total


def total_instructions(trace: ExecutionTrace) -> int:
    """Total dynamic instruction count of the trace (the analysis horizon)."""
    return trace.total_instructions


def _parse_int(token: str, what: str, line: int, base: int = 10) -> int:
    try:
        return int(token, base)
    except ValueError:
        raise TraceFormatError(f"malformed {what} {token!r}", line) from None


def _parse_float(token: str, what: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise TraceFormatError(f"malformed {what} {token!r}", line) from None


def parse_trace(stream: Union[str, Iterable[str]]) -> ExecutionTrace:
    """Parse the text format into a validated ExecutionTrace.

    Accepts a string or any iterable of lines (e.g. an open file).
    Raises TraceFormatError with the offending line number on bad input.
    """
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream

    blocks: dict[int, BlockDescriptor] = {}
    events: list[BlockEvent] = []
    quanta: list[QuantumRecord] = []
    quantum_length: Optional[int] = None
    saw_version = False

    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        fields = text.split()
        kind = fields[0]

        if not saw_version:
            if kind != "V" or len(fields) != 2 or fields[1] != "1":
                raise TraceFormatError("expected version header 'V 1'", lineno)
            saw_version = True
            continue

        if kind == "B":
            if len(fields) not in (5, 6):
                raise TraceFormatError("malformed block record", lineno)
            bid = _parse_int(fields[1], "block id", lineno)
            addr = _parse_int(fields[2], "address", lineno, base=16)
            count = _parse_int(fields[3], "instruction count", lineno)
            try:
                term = Terminator(fields[4])
            except ValueError:
                raise TraceFormatError(
                    f"malformed terminator {fields[4]!r}", lineno
                ) from None
            target = (
                _parse_int(fields[5], "target address", lineno, base=16)
                if len(fields) == 6
                else None
            )
            if bid in blocks:
                raise TraceFormatError(f"duplicate block declaration {bid}", lineno)
            try:
                blocks[bid] = BlockDescriptor(bid, addr, count, term, target)
            except TraceFormatError as exc:
                raise TraceFormatError(str(exc), lineno) from None
        elif kind == "E":
            if len(fields) not in (2, 3):
                raise TraceFormatError("malformed event record", lineno)
            bid = _parse_int(fields[1], "block id", lineno)
            if bid not in blocks:
                raise TraceFormatError(f"unknown block {bid}", lineno)
            cycles = _parse_float(fields[2], "cycle count", lineno) if len(fields) == 3 else None
            events.append(BlockEvent(bid, cycles))
        elif kind == "Q":
            if len(fields) != 3:
                raise TraceFormatError("malformed quantum record", lineno)
            qidx = _parse_int(fields[1], "quantum index", lineno)
            cpi = _parse_float(fields[2], "quantum cpi", lineno)
            quanta.append(QuantumRecord(qidx, cpi))
        elif kind == "L":
            if len(fields) != 2:
                raise TraceFormatError("malformed quantum length record", lineno)
            quantum_length = _parse_int(fields[1], "quantum length", lineno)
        else:
            raise TraceFormatError(f"malformed line: unknown record {kind!r}", lineno)

    if not saw_version:
        raise TraceFormatError("empty stream: missing version header")
    if quanta and quantum_length is None:
        raise TraceFormatError("Q records present but no L quantum-length record")
    if quantum_length is not None and not quanta:
        raise TraceFormatError("L quantum-length record present but no Q records")

    return ExecutionTrace(
        blocks=blocks,
        events=events,
        quanta=quanta or None,
        quantum_length=quantum_length,
    )


def serialize_trace(trace: ExecutionTrace) -> str:
    """Render a trace in the text format; parse(serialize(t)) == t."""
    out = ["V 1"]
    for block in trace.blocks.values():
        rec = (
            f"B {block.block_id} {block.start_address:x} "
            f"{block.instruction_count} {block.terminator.value}"
        )
        if block.target_address is not None:
            rec += f" {block.target_address:x}"
        out.append(rec)
    for event in trace.events:
        if event.cycles is None:
            out.append(f"E {event.block_id}")
        else:
            out.append(f"E {event.block_id} {event.cycles!r}")
    if trace.quanta is not None:
        out.append(f"L {trace.quantum_length}")
        for q in trace.quanta:
            out.append(f"Q {q.quantum_index} {q.cpi!r}")
    return "\n".join(out) + "\n"


def load_trace(path) -> ExecutionTrace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh)


def save_trace(trace: ExecutionTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_trace(trace))
