"""Contact traces: ingestion, normalization and slotted contact histories."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

Pair = tuple[int, int]


class TraceParseError(ValueError):
    """A trace line could not be parsed."""

    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line.rstrip()!r}")
        self.lineno = lineno


class EmptyTraceError(ValueError):
    pass


class PartialHistoryWarning(UserWarning):
    pass


def pair_key(a: int, b: int) -> Pair:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, order=True)
class ContactRecord:
    """Half-open contact interval ``[start, end)`` between two nodes."""

    node_a: int
    node_b: int
    start: float
    end: float

    def __post_init__(self):
        if self.node_a == self.node_b:
            raise ValueError(f"self contact for node {self.node_a}")
        if not self.start < self.end:
            raise ValueError(f"empty contact interval [{self.start}, {self.end})")

    @property
    def pair(self) -> Pair:
        return pair_key(self.node_a, self.node_b)

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ContactTrace:
    records: tuple[ContactRecord, ...]
    dropped: int = 0
    merged: int = 0
    _by_pair: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        by_pair: dict[Pair, list[ContactRecord]] = {}
        for rec in self.records:
            by_pair.setdefault(rec.pair, []).append(rec)
        object.__setattr__(self, "_by_pair", {k: tuple(v) for k, v in by_pair.items()})

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ContactRecord]:
        return iter(self.records)

    @property
    def nodes(self) -> list[int]:
        ids = set()
        for rec in self.records:
            ids.add(rec.node_a)
            ids.add(rec.node_b)
        return sorted(ids)

    @property
    def pairs(self) -> list[Pair]:
        return sorted(self._by_pair)

    @property
    def start(self) -> float:
        return min(r.start for r in self.records) if self.records else 0.0

    @property
    def end(self) -> float:
        return max(r.end for r in self.records) if self.records else 0.0

    def contacts(self, a: int, b: int) -> tuple[ContactRecord, ...]:
        return self._by_pair.get(pair_key(a, b), ())

    def relabel(self, mapping: dict[int, int]) -> "ContactTrace":
        recs = [
            ContactRecord(*pair_key(mapping[r.node_a], mapping[r.node_b]), r.start, r.end)
            for r in self.records
        ]
        return ContactTrace(tuple(sorted(recs, key=_sort_key)))

    def to_lines(self) -> list[str]:
        """Serialize in the pairwise-csv format."""
        return [f"{r.node_a},{r.node_b},{r.start!r},{r.end!r}" for r in self.records]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# node_a,node_b,start,end\n")
            for line in self.to_lines():
                fh.write(line + "\n")


def _sort_key(rec: ContactRecord):
    return (rec.start, rec.end, rec.node_a, rec.node_b)


def normalize(records: Iterable[ContactRecord], dropped: int = 0) -> ContactTrace:
    """Merge overlapping (or touching) contacts of each pair and sort by start."""
    by_pair: dict[Pair, list[ContactRecord]] = {}
    for rec in records:
        by_pair.setdefault(rec.pair, []).append(rec)
    out: list[ContactRecord] = []
    merged = 0
    for (a, b), recs in by_pair.items():
        recs.sort(key=lambda r: (r.start, r.end))
        cur_s, cur_e = recs[0].start, recs[0].end
        for rec in recs[1:]:
            if rec.start <= cur_e:
                cur_e = max(cur_e, rec.end)
                merged += 1
            else:
                out.append(ContactRecord(a, b, cur_s, cur_e))
                cur_s, cur_e = rec.start, rec.end
        out.append(ContactRecord(a, b, cur_s, cur_e))
    out.sort(key=_sort_key)
    return ContactTrace(tuple(out), dropped=dropped, merged=merged)


def _parse_pairwise(lines: Iterable[str]) -> Iterator[tuple[int, str, tuple[int, int, float, float]]]:
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise TraceParseError(lineno, line, "expected 4 comma separated fields")
        try:
            a, b = int(parts[0]), int(parts[1])
            start, end = float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise TraceParseError(lineno, line, str(exc)) from None
        if a == b or not start < end or not math.isfinite(end):
            raise TraceParseError(lineno, line, "invalid contact")
        yield lineno, line, (a, b, start, end)


def _parse_haggle(lines: Iterable[str]) -> Iterator[tuple[int, str, tuple[int, int, float, float]]]:
    open_since: dict[Pair, float] = {}
    last_time = -math.inf
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 4 or parts[1] not in ("up", "down"):
            raise TraceParseError(lineno, line, "expected 'time up|down a b'")
        try:
            t = float(parts[0])
            a, b = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise TraceParseError(lineno, line, str(exc)) from None
        if a == b:
            raise TraceParseError(lineno, line, "self contact")
        last_time = max(last_time, t)
        key = pair_key(a, b)
        if parts[1] == "up":
            open_since.setdefault(key, t)
        else:
            start = open_since.pop(key, None)
            if start is None:
                raise TraceParseError(lineno, line, "'down' without matching 'up'")
            if t > start:
                yield lineno, line, (key[0], key[1], start, t)
    for (a, b), start in sorted(open_since.items()):
        if last_time > start:
            yield 0, "", (a, b, start, last_time)


def ingest_trace(
    source: Iterable[str],
    format: str = "pairwise-csv",
    exclude: Iterable[int] = (),
) -> ContactTrace:
    """Parse a line stream into a merged, sorted :class:`ContactTrace`.

    Contacts touching any node in ``exclude`` (access points, external
    infrastructure) are dropped; ``trace.dropped`` and ``trace.merged``
    report how many raw records were filtered or merged away.
    """
    if isinstance(source, str):
        source = source.splitlines()
    parsers = {"pairwise-csv": _parse_pairwise, "haggle-events": _parse_haggle}
    try:
        parser = parsers[format]
    except KeyError:
        raise ValueError(f"unknown trace format {format!r}") from None
    excluded = set(exclude)
    raw, dropped = [], 0
    for _, _, (a, b, start, end) in parser(source):
        if a in excluded or b in excluded:
            dropped += 1
            continue
        raw.append(ContactRecord(*pair_key(a, b), start, end))
    if not raw:
        raise EmptyTraceError("trace contains no usable contact records")
    return normalize(raw, dropped=dropped)


def read_trace(path, format: str = "pairwise-csv", exclude: Iterable[int] = ()) -> ContactTrace:
    with open(path, encoding="utf-8") as fh:
        return ingest_trace(fh, format=format, exclude=exclude)


@dataclass(frozen=True)
class SlotGrid:
    """Equal slots of ``slot_len_s`` seconds grouped into frames of
    ``frame_len_f`` slots; ``history_depth_h`` frames feed the estimator."""

    slot_len_s: float
    frame_len_f: int
    history_depth_h: int = 5
    epoch: float = 0.0

    def __post_init__(self):
        if not self.slot_len_s > 0:
            raise ValueError("slot length must be positive")
        if self.frame_len_f < 1 or self.history_depth_h < 1:
            raise ValueError("frame length and history depth must be >= 1")

    @property
    def frame_seconds(self) -> float:
        return self.slot_len_s * self.frame_len_f

    @classmethod
    def for_trace(cls, trace: ContactTrace, slot_len_s: float, frame_len_f: int, history_depth_h: int = 5) -> "SlotGrid":
        epoch = math.floor(trace.start / slot_len_s) * slot_len_s
        return cls(slot_len_s, frame_len_f, history_depth_h, epoch)

    def slot_of(self, t: float) -> int:
        """Absolute 0-based slot index containing instant ``t``."""
        return math.floor((t - self.epoch) / self.slot_len_s)

    def frame_of(self, t: float) -> int:
        return math.floor((t - self.epoch) / self.frame_seconds)


@dataclass(frozen=True)
class HistoryMatrix:
    pair: Pair
    bits: np.ndarray  # (h, f) bool; row k-1 is frame k, column r-1 is slot r

    @property
    def h(self) -> int:
        return self.bits.shape[0]

    @property
    def f(self) -> int:
        return self.bits.shape[1]


def _mark_slots(bits: np.ndarray, contacts, grid: SlotGrid, first_frame: int) -> None:
    h, f = bits.shape
    flat = bits.reshape(-1)
    base = first_frame * f
    for rec in contacts:
        lo = grid.slot_of(rec.start) - base
        # half-open: a contact ending exactly on a boundary does not touch the next slot
        hi = math.ceil((rec.end - grid.epoch) / grid.slot_len_s) - 1 - base
        lo, hi = max(lo, 0), min(hi, h * f - 1)
        if lo <= hi:
            flat[lo : hi + 1] = True


def slot_history(trace: ContactTrace, grid: SlotGrid, pair: Pair, first_frame: int = 0) -> HistoryMatrix:
    """Slot presence bits of ``pair`` over ``h`` frames starting at ``first_frame``.

    Frames not fully covered by the trace are still returned (as zeros past
    the trace end) and a :class:`PartialHistoryWarning` is emitted.
    """
    h, f = grid.history_depth_h, grid.frame_len_f
    bits = np.zeros((h, f), dtype=bool)
    covered_until = grid.epoch + (first_frame + h) * grid.frame_seconds
    if trace.records and trace.end < covered_until - 1e-9:
        warnings.warn(
            f"trace ends at {trace.end} before history window end {covered_until}",
            PartialHistoryWarning,
            stacklevel=2,
        )
    _mark_slots(bits, trace.contacts(*pair), grid, first_frame)
    return HistoryMatrix(pair_key(*pair), bits)


def slot_contact_rate(history: HistoryMatrix) -> np.ndarray:
    """Per-slot mean of the presence bits over the history frames."""
    return history.bits.mean(axis=0)
