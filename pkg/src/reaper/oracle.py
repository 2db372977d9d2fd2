"""Exhaustive time-respecting path enumeration over periodic meeting schedules.

Test-harness machinery: the routing protocol never calls into this module.
A *schedule* maps each unordered node pair to the slots (1..F) in which the
pair meets, repeating every frame.  A path from ``src`` hops through
distinct relays to ``dest``, one hop per slot, in strictly increasing
absolute slots.
"""

from __future__ import annotations

import math
from typing import Iterator, Mapping, Optional

from reaper.trace import Pair, pair_key

INF = math.inf


class Schedule:
    def __init__(self, meetings: Mapping[Pair, tuple[int, ...]], F: int, dest: int):
        self.F = F
        self.dest = dest
        self.meetings = {pair_key(*k): tuple(sorted(v)) for k, v in meetings.items() if v}
        self.nodes = sorted({n for k in self.meetings for n in k} | {dest})
        self.neighbors: dict[int, list[int]] = {n: [] for n in self.nodes}
        for a, b in self.meetings:
            self.neighbors[a].append(b)
            self.neighbors[b].append(a)
        for n in self.neighbors:
            self.neighbors[n].sort()

    def slots(self, a: int, b: int) -> tuple[int, ...]:
        return self.meetings.get(pair_key(a, b), ())

    def occurrences(self, a: int, b: int, after: int) -> Iterator[int]:
        """Absolute slots in ``(after, after + F]`` where ``a`` meets ``b``."""
        F = self.F
        for s in self.slots(a, b):
            t = after + ((s - after) % F or F)
            yield t


def paths_from(sched: Schedule, src: int, first_slot: int, max_hops: int) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Every simple path from ``src`` whose first hop happens at absolute
    ``first_slot``, up to ``max_hops`` hops, ending at the destination.
    Later hops may occur at any meeting within one frame of the previous."""
    F = sched.F
    col = (first_slot - 1) % F + 1

    def extend(nodes, times):
        here = nodes[-1]
        if here == sched.dest:
            yield tuple(nodes), tuple(times)
            return
        if len(times) == max_hops:
            return
        for nxt in sched.neighbors[here]:
            if nxt in nodes:
                continue
            for t in sched.occurrences(here, nxt, times[-1]):
                yield from extend(nodes + [nxt], times + [t])

    for nxt in sched.neighbors.get(src, ()):
        if col in sched.slots(src, nxt):
            yield from extend([src, nxt], [first_slot])


def best_delays(sched: Schedule, src: int, max_hops: int) -> dict[tuple[int, int], float]:
    """Best delay (slots) of exact ``q``-hop paths per start column ``p``."""
    best: dict[tuple[int, int], float] = {}
    for p in range(1, sched.F + 1):
        for nodes, times in paths_from(sched, src, p, max_hops):
            key = (len(times), p)
            d = times[-1] - times[0]
            if d < best.get(key, INF):
                best[key] = d
    return best


def order_enforced(best: Mapping[tuple[int, int], float], K: int, F: int) -> dict[tuple[int, int], float]:
    """Keep a cost-``q`` entry only if strictly faster than every cheaper one."""
    out = {}
    for p in range(1, F + 1):
        lowest = INF
        for q in range(1, K + 1):
            d = best.get((q, p), INF)
            if d < lowest:
                out[(q, p)] = d
                lowest = d
    return out


def frontier(cells: Mapping[tuple[int, int], float], F: int) -> dict[tuple[int, int], float]:
    """Cells that some forwarding query can select.

    A cell is dropped when another cell of equal or lower cost, reached by
    waiting from its start slot, arrives no later.
    """
    out = {}
    for (q, p), d in cells.items():
        if not any(
            q2 <= q and (p2 - p) % F + d2 <= d
            for (q2, p2), d2 in cells.items()
            if (q2, p2) != (q, p)
        ):
            out[(q, p)] = d
    return out


def optimal_choice(sched: Schedule, src: int, xp: int, budget_slots: float, max_hops: int) -> Optional[tuple[int, float]]:
    """Lexicographically best (hops, total slots) at slot ``xp`` within budget.

    Total counts the wait from slot ``xp`` to the first hop plus the path delay.
    """
    best: Optional[tuple[int, float]] = None
    for start in range(xp, xp + sched.F):
        for nodes, times in paths_from(sched, src, start, max_hops):
            total = times[-1] - xp
            if total > budget_slots:
                continue
            cand = (len(times), total)
            if best is None or cand < best:
                best = cand
    return best


def hop_sets(sched: Schedule, max_hops: int) -> list[set[int]]:
    """``I_r``: nodes owning an ``r``-hop path to the destination, ``r = 0..K``."""
    sets = [{sched.dest}] + [set() for _ in range(max_hops)]
    for n in sched.nodes:
        if n == sched.dest:
            continue
        for p in range(1, sched.F + 1):
            for nodes, times in paths_from(sched, n, p, max_hops):
                sets[len(times)].add(n)
    return sets
