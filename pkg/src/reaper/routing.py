"""Routing tables (t-frames), advertisements (s-frames) and forwarding.

Delays are stored in slots.  Row ``q`` of a table holds the best-delay
``q``-hop paths; column ``p`` (1-based) is the slot in which the first hop
is taken.  An empty cell has delay ``inf`` and next hop :data:`NO_HOP`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from reaper.predict import BetaFrame, normalize_instant
from reaper.trace import SlotGrid

INF = math.inf
NO_HOP = -1


def default_hops(n_nodes: int) -> int:
    """Row count ``ceil(log2 N) + 1``."""
    return math.ceil(math.log2(max(n_nodes, 2))) + 1


def _empty(K: int, F: int) -> tuple[np.ndarray, np.ndarray]:
    return np.full((K + 1, F), INF), np.full((K + 1, F), NO_HOP, dtype=np.int64)


@dataclass
class TFrame:
    owner: int
    K: int
    F: int
    delay: np.ndarray = None
    next_hop: np.ndarray = None
    is_destination: bool = False

    def __post_init__(self):
        if self.delay is None:
            self.delay, self.next_hop = _empty(self.K, self.F)

    @classmethod
    def for_destination(cls, owner: int, K: int, F: int) -> "TFrame":
        t = cls(owner, K, F, is_destination=True)
        t.delay[0, 0] = 0.0
        t.next_hop[0, 0] = owner
        return t

    def copy(self) -> "TFrame":
        return TFrame(self.owner, self.K, self.F, self.delay.copy(), self.next_hop.copy(), self.is_destination)

    def cell(self, q: int, p: int) -> tuple[float, int]:
        return float(self.delay[q, p - 1]), int(self.next_hop[q, p - 1])

    def set(self, q: int, p: int, delay: float, next_hop: int) -> None:
        self.delay[q, p - 1] = delay
        self.next_hop[q, p - 1] = next_hop

    def reset(self) -> None:
        self.delay[:] = INF
        self.next_hop[:] = NO_HOP
        if self.is_destination:
            self.delay[0, 0] = 0.0
            self.next_hop[0, 0] = self.owner

    def finite_cells(self):
        for q, c in zip(*np.nonzero(np.isfinite(self.delay))):
            yield int(q), int(c) + 1, float(self.delay[q, c]), int(self.next_hop[q, c])

    def __eq__(self, other):
        if not isinstance(other, TFrame):
            return NotImplemented
        return (
            self.owner == other.owner
            and self.K == other.K
            and self.F == other.F
            and np.array_equal(self.delay, other.delay)
            and np.array_equal(self.next_hop, other.next_hop)
        )


@dataclass
class SFrame:
    """Advertisement from ``sender`` to ``receiver``.  Cells are laid out
    on the full frame width; only columns at ``meeting_slots`` can be finite."""

    sender: int
    receiver: int
    K: int
    F: int
    meeting_slots: tuple[int, ...]
    delay: np.ndarray = None

    def __post_init__(self):
        if self.delay is None:
            self.delay = np.full((self.K + 1, self.F), INF)

    @property
    def matrix(self) -> np.ndarray:
        """The ``K x z`` view: rows 1..K, one column per meeting slot."""
        return self.delay[1:, [b - 1 for b in self.meeting_slots]]

    def finite_count(self) -> int:
        return int(np.isfinite(self.delay).sum())

    def copy(self) -> "SFrame":
        return SFrame(self.sender, self.receiver, self.K, self.F, self.meeting_slots, self.delay.copy())

    def __eq__(self, other):
        if not isinstance(other, SFrame):
            return NotImplemented
        return (
            (self.sender, self.receiver, self.K, self.F, self.meeting_slots)
            == (other.sender, other.receiver, other.K, other.F, other.meeting_slots)
            and np.array_equal(self.delay, other.delay)
        )


@dataclass(frozen=True)
class Deadline:
    """Remaining delivery budget of a packet, in seconds."""

    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("deadline must be non-negative")


@dataclass(frozen=True)
class ForwardChoice:
    cost: int
    slot: int
    next_hop: int
    delay: float  # seconds, wait plus stored path delay


def _enforce_order(delay: np.ndarray, next_hop: Optional[np.ndarray] = None, first_row: int = 1) -> None:
    """Drop every entry not strictly faster than all lower-cost entries of its column."""
    best = np.full(delay.shape[1], INF)
    for q in range(first_row, delay.shape[0]):
        row = delay[q]
        dominated = np.isfinite(row) & (row >= best)
        row[dominated] = INF
        if next_hop is not None:
            next_hop[q][dominated] = NO_HOP
        np.minimum(best, row, out=best)


def check_order(frame: Union[TFrame, SFrame]) -> bool:
    """True iff every column's finite delays strictly decrease with hop count."""
    for col in frame.delay[1:].T:
        finite = col[np.isfinite(col)]
        if np.any(np.diff(finite) >= 0):
            return False
    return True


def build_sframe(t: TFrame, beta: BetaFrame) -> SFrame:
    """Best paths the peer of ``t.owner`` has through it at each meeting slot.

    For meeting slot ``b_m`` and cost ``q`` the advertised delay is the best
    ``(q-1)``-hop entry of ``t`` taken at some slot up to the next meeting
    (wrapping into the next frame after the last meeting), plus the wait to
    reach that slot.  Entries whose next hop is the peer are skipped.
    """
    i = t.owner
    j = beta.other(i)
    K, F = t.K, t.F
    if beta.f != F:
        raise ValueError(f"beta-frame length {beta.f} != t-frame length {F}")
    s = SFrame(i, j, K, F, beta.betas)
    if t.is_destination:
        for b in beta.betas:
            s.delay[1, b - 1] = 0.0
        return s
    betas = beta.betas
    z = len(betas)
    usable = np.where(t.next_hop == j, INF, t.delay)
    for m, b in enumerate(betas):
        if m < z - 1:
            slots = np.arange(b + 1, betas[m + 1] + 1)
            wait = slots - b
        else:
            slots = np.concatenate([np.arange(b + 1, F + 1), np.arange(1, betas[0] + 1)])
            wait = np.where(slots > b, slots - b, slots + F - b)
        if slots.size == 0:
            continue
        cand = usable[1:K, slots - 1] + wait  # rows q-1 = 1..K-1
        s.delay[2:, b - 1] = cand.min(axis=1)
    _enforce_order(s.delay)
    return s


def destination_sframe(destination: int, K: int, beta: BetaFrame) -> SFrame:
    return build_sframe(TFrame.for_destination(destination, K, beta.f), beta)


def apply_sframe(t: TFrame, s: SFrame) -> TFrame:
    """Merge a received advertisement into a copy of ``t``: a cell is taken
    when empty or strictly improved, then dominated entries are dropped."""
    if s.F != t.F or s.K != t.K:
        raise ValueError("s-frame shape does not match t-frame")
    out = t.copy()
    offer = s.delay[1:]
    cur = out.delay[1:]
    take = np.isfinite(offer) & (offer < cur)
    cur[take] = offer[take]
    out.next_hop[1:][take] = s.sender
    _enforce_order(out.delay, out.next_hop)
    return out


def _row_choices(t: TFrame, xp: int):
    """Per row, (total slots, wait, next hop, slot) of every finite cell."""
    F = t.F
    cols = np.arange(1, F + 1)
    wait = (cols - xp) % F
    total = t.delay + wait
    return total, wait


def slot_tail(now: float, grid: SlotGrid) -> float:
    """Seconds from ``now`` to the end of its slot; zero on a slot boundary,
    which closes the slot ``normalize_instant`` assigns it to."""
    s = grid.slot_len_s
    return math.ceil((now - grid.epoch) / s - 1e-12) * s - (now - grid.epoch)


def forward(t: TFrame, now: float, grid: SlotGrid, deadline: Union[Deadline, float]) -> Optional[ForwardChoice]:
    """Cheapest path meeting the deadline, then the fastest at that cost.

    Cell ``(q, p)`` seen at slot ``x'`` completes within the wait
    ``(p - x') mod F`` plus the stored delay, in whole slots after the
    current one ends.  Its delay from ``now`` is that many slots plus the
    rest of the current slot, so every node judges a path against the same
    absolute expiry.  Ties go to the earliest start slot, then the lowest
    next-hop id.
    """
    budget = deadline.delta if isinstance(deadline, Deadline) else float(deadline)
    xp = normalize_instant(now, grid)
    total, wait = _row_choices(t, xp)
    s = grid.slot_len_s
    tail = slot_tail(now, grid)
    for q in range(1, t.K + 1):
        row = total[q] * s + tail
        ok = np.isfinite(row) & (row <= budget + 1e-9)
        if not ok.any():
            continue
        idx = np.flatnonzero(ok)
        key = sorted(idx, key=lambda c: (row[c], wait[c], t.next_hop[q, c]))[0]
        return ForwardChoice(q, int(key) + 1, int(t.next_hop[q, key]), float(row[key]))
    return None


def row_profile(t: TFrame, xp: int) -> list[tuple[int, float, int, int]]:
    """Best (cost, total slots, next hop, slot) per non-empty row at slot ``xp``.

    ``forward`` picks the first entry whose total, in seconds plus the
    current slot's tail, fits the deadline; the simulator uses this to route
    whole buffers.
    """
    total, wait = _row_choices(t, xp)
    out = []
    for q in range(1, t.K + 1):
        row = total[q]
        idx = np.flatnonzero(np.isfinite(row))
        if idx.size == 0:
            continue
        c = sorted(idx, key=lambda c: (row[c], wait[c], t.next_hop[q, c]))[0]
        out.append((q, float(row[c]), int(t.next_hop[q, c]), int(c) + 1))
    return out


def dump_frame(frame: Union[TFrame, SFrame]) -> list[str]:
    """``q,p,delay,next_hop`` for every finite cell, row-major."""
    lines = []
    for q, c in zip(*np.nonzero(np.isfinite(frame.delay))):
        hop = frame.next_hop[q, c] if isinstance(frame, TFrame) else frame.sender
        d = frame.delay[q, c]
        lines.append(f"{q},{c + 1},{int(d) if float(d).is_integer() else d},{hop}")
    return lines
