"""Beta-frames: per-pair meeting-slot upper bounds and next-contact delay bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from reaper.trace import ContactTrace, Pair, SlotGrid, pair_key, slot_contact_rate, slot_history

_EPS = 1e-9


class NoContactError(ValueError):
    """The pair never met in the history window, so nothing can be predicted."""


@dataclass(frozen=True)
class BetaFrame:
    """Upper-bound meeting slots ``betas`` (1-based, strictly increasing)
    of a node pair within a frame of ``f`` slots of ``s`` seconds."""

    pair: Pair
    f: int
    s: float
    betas: tuple[int, ...]

    def __post_init__(self):
        if not self.betas:
            raise ValueError("a beta-frame needs at least one meeting slot")
        if any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:])):
            raise ValueError(f"meeting slots must strictly increase: {self.betas}")
        if self.betas[0] < 1 or self.betas[-1] > self.f:
            raise ValueError(f"meeting slots out of range [1, {self.f}]: {self.betas}")

    @property
    def z(self) -> int:
        return len(self.betas)

    def other(self, node: int) -> int:
        a, b = self.pair
        return b if node == a else a

    def __contains__(self, slot: int) -> bool:
        return slot in self.betas


def build_beta_frame(
    rates: Sequence[float],
    grid: SlotGrid,
    pair: Pair,
    p_thresh: Optional[float] = None,
) -> BetaFrame:
    """Two-pass estimate of the meeting-slot upper bounds from slot rates.

    Pass one accumulates consecutive rates until the sum reaches 1, marks
    that slot, and restarts from the excess carried over.  Pass two makes
    the last slot with a non-zero rate the final meeting slot.  With
    ``p_thresh`` set, rates below it are zeroed first.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (grid.frame_len_f,):
        raise ValueError(f"expected {grid.frame_len_f} slot rates, got {rates.shape}")
    if p_thresh is not None:
        rates = np.where(rates >= p_thresh, rates, 0.0)
    nonzero = np.flatnonzero(rates > 0)
    if nonzero.size == 0:
        raise NoContactError(f"pair {pair} has no contacts in the history window")
    last = int(nonzero[-1]) + 1

    betas: list[int] = []
    acc = 0.0
    for r, c in enumerate(rates, 1):
        acc += c
        if acc >= 1.0 - _EPS:
            betas.append(r)
            acc = max(acc - 1.0, 0.0)
    betas = [b for b in betas if b <= last]
    if not betas or betas[-1] != last:
        betas.append(last)
    return BetaFrame(pair_key(*pair), grid.frame_len_f, grid.slot_len_s, tuple(betas))


def normalize_instant(x: float, grid: SlotGrid) -> int:
    """Slot of the frame containing ``x``; frame boundaries map to slot ``f``."""
    f, s = grid.frame_len_f, grid.slot_len_s
    x = x - grid.epoch
    if x < 0:
        raise ValueError("instant precedes the grid epoch")
    xp = math.ceil(math.fmod(x, f * s) / s)
    return f if xp == 0 else xp


def max_delay_to_next_contact(beta: BetaFrame, x: float, epoch: float = 0.0) -> float:
    """Upper bound (seconds) on the wait from ``x`` until the pair meets again."""
    f, s = beta.f, beta.s
    xp = normalize_instant(x, SlotGrid(s, f, 1, epoch))
    tail = s - math.fmod(x - epoch, s)
    prev = 0
    for b in beta.betas:
        if prev <= xp < b:
            return (b - xp) * s + tail
        prev = b
    return ((f - xp) + beta.betas[0]) * s + tail


def beta_frames_for_trace(
    trace: ContactTrace,
    grid: SlotGrid,
    first_frame: int = 0,
    p_thresh: Optional[float] = None,
) -> dict[Pair, BetaFrame]:
    """Beta-frames of every predictable pair over one ``h``-frame history window."""
    frames = {}
    for pair in trace.pairs:
        rates = slot_contact_rate(slot_history(trace, grid, pair, first_frame))
        try:
            frames[pair] = build_beta_frame(rates, grid, pair, p_thresh)
        except NoContactError:
            continue
    return frames
