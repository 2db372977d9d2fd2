"""Self-stabilizing guarded-command node process.

Each node runs six guarded actions:

1. destination with a corrupted table: restore its single 0-hop entry
2. relay violating the table shape guard (C.1): reset the whole table
3. relay whose entries disagree with the last frames heard (C.2): reset
   every entry routed through an offending next hop
4. contact with a neighbour: build and send an s-frame
5. received s-frame that worsens entries routed through its sender (C.3):
   quarantine, i.e. drop every entry through that sender
6. otherwise merge the received s-frame and remember it

When several actions are enabled the fixed priority
(1)/(2) > (3) > (5) > (6) > (4) decides.  ``Network`` is a small
test harness that drives nodes over a static meeting schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from reaper import oracle
from reaper.predict import BetaFrame
from reaper.routing import (
    INF,
    NO_HOP,
    SFrame,
    TFrame,
    apply_sframe,
    build_sframe,
)
from reaper.trace import Pair, pair_key


@dataclass
class NodeState:
    id: int
    destination: int
    t: TFrame
    beta_frames: dict[int, BetaFrame] = field(default_factory=dict)
    last_received: dict[int, SFrame] = field(default_factory=dict)
    known_nodes: Optional[frozenset] = None

    @property
    def is_destination(self) -> bool:
        return self.id == self.destination

    def copy(self) -> "NodeState":
        return NodeState(
            self.id,
            self.destination,
            self.t.copy(),
            dict(self.beta_frames),
            dict(self.last_received),
            self.known_nodes,
        )


@dataclass
class GuardReport:
    c1: bool
    c2: bool
    c3: bool
    violating_cells: list = field(default_factory=list)


@dataclass(frozen=True)
class Contact:
    peer: int


@dataclass(frozen=True)
class Receive:
    frame: SFrame


@dataclass(frozen=True)
class Audit:
    pass


Event = Union[Contact, Receive, Audit]


@dataclass
class StepResult:
    action: Optional[int]
    state: NodeState
    sent: Optional[SFrame] = None
    consumed: bool = True


def _c1_violations(state: NodeState) -> list:
    t = state.t
    bad = []
    if state.is_destination:
        if not (t.delay[0, 0] == 0.0 and t.next_hop[0, 0] == state.id):
            bad.append((0, 1))
        for q, p, d, h in t.finite_cells():
            if (q, p) != (0, 1):
                bad.append((q, p))
        bad += [
            (int(q), int(c) + 1)
            for q, c in zip(*np.nonzero((t.next_hop != NO_HOP) & ~np.isfinite(t.delay)))
            if (q, c) != (0, 0)
        ]
        return bad
    for p in range(1, t.F + 1):
        if t.next_hop[0, p - 1] != NO_HOP or np.isfinite(t.delay[0, p - 1]):
            bad.append((0, p))
    for q, p, d, h in t.finite_cells():
        if q == 0:
            continue
        valid_hop = h != state.id and h != NO_HOP and (
            state.known_nodes is None or h in state.known_nodes or h == state.destination
        )
        if d < 0 or not valid_hop:
            bad.append((q, p))
    return bad


def _expected(state: NodeState, hop: int, q: int, p: int) -> float:
    """Delay the last frame heard from ``hop`` offers at cell ``(q, p)``."""
    if hop == state.destination:
        beta = state.beta_frames.get(hop)
        return 0.0 if q == 1 and beta is not None and p in beta else INF
    frame = state.last_received.get(hop)
    return INF if frame is None else float(frame.delay[q, p - 1])


def _c2_violations(state: NodeState) -> list:
    if state.is_destination:
        return []
    t = state.t
    bad = []
    empty_d = ~np.isfinite(t.delay[1:])
    empty_h = t.next_hop[1:] == NO_HOP
    for q, c in zip(*np.nonzero(empty_d != empty_h)):
        bad.append((int(q) + 1, int(c) + 1))
    for p in range(1, t.F + 1):
        lowest = INF
        for q in range(1, t.K + 1):
            d, h = t.cell(q, p)
            if not math.isfinite(d) or h == NO_HOP:
                continue
            beta = state.beta_frames.get(h)
            if (
                beta is None
                or p not in beta
                or _expected(state, h, q, p) != d
                or d >= lowest
            ):
                bad.append((q, p))
            lowest = min(lowest, d)
    return bad


def _c3_violations(state: NodeState, incoming: SFrame) -> list:
    t = state.t
    mine = (t.next_hop == incoming.sender)
    mine[0] = False
    worse = mine & (t.delay < incoming.delay)
    return [(int(q), int(c) + 1) for q, c in zip(*np.nonzero(worse))]


def eval_guards(state: NodeState, incoming: Optional[SFrame] = None) -> GuardReport:
    """Evaluate C.1, C.2 and (for an incoming frame) C.3 on any state."""
    v1 = _c1_violations(state)
    v2 = _c2_violations(state)
    v3 = _c3_violations(state, incoming) if incoming is not None else []
    return GuardReport(not v1, not v2, not v3, v1 + v2 + v3)


def _reset_action(state: NodeState) -> Optional[tuple[int, NodeState]]:
    if _c1_violations(state):
        new = state.copy()
        new.t.reset()
        return (1 if state.is_destination else 2), new
    if state.is_destination:
        return None
    bad = _c2_violations(state)
    if bad:
        new = state.copy()
        hops = {int(state.t.next_hop[q, p - 1]) for q, p in bad}
        for h in hops:
            mask = new.t.next_hop == h
            if h == NO_HOP:
                mask = mask | ~np.isfinite(new.t.delay)
            mask[0] = False
            new.t.delay[mask] = INF
            new.t.next_hop[mask] = NO_HOP
        return 3, new
    return None


def sframe_for(state: NodeState, peer: int) -> SFrame:
    return build_sframe(state.t, state.beta_frames[peer])


def step(state: NodeState, event: Event) -> StepResult:
    """Fire the highest-priority enabled action for ``event``.

    Reset actions are enabled by the state alone; when one fires the event
    is reported as not consumed so the caller can replay it.
    """
    reset = _reset_action(state)
    if reset is not None:
        action, new = reset
        return StepResult(action, new, consumed=isinstance(event, Audit))
    if isinstance(event, Audit):
        return StepResult(None, state)
    if isinstance(event, Receive):
        frame = event.frame
        j = frame.sender
        if state.is_destination or j not in state.beta_frames:
            return StepResult(None, state)
        if _c3_violations(state, frame):
            new = state.copy()
            mask = new.t.next_hop == j
            new.t.delay[mask] = INF
            new.t.next_hop[mask] = NO_HOP
            return StepResult(5, new)
        new = state.copy()
        new.t = apply_sframe(state.t, frame)
        new.last_received[j] = frame
        return StepResult(6, new)
    j = event.peer
    if j == state.destination or j not in state.beta_frames:
        return StepResult(None, state)
    return StepResult(4, state, sent=sframe_for(state, j))


def process(state: NodeState, event: Event) -> tuple[NodeState, Optional[SFrame], list[int]]:
    """Fire actions until ``event`` is consumed; returns the fired action numbers."""
    fired = []
    while True:
        res = step(state, event)
        state = res.state
        if res.action is not None:
            fired.append(res.action)
        if res.consumed:
            return state, res.sent, fired
        if res.action is None:
            raise RuntimeError("unconsumed event without an action")


# --- network harness -------------------------------------------------------


@dataclass
class Fault:
    time: float
    node: int
    q: Optional[int] = None
    p: Optional[int] = None
    delay: float = INF
    next_hop: int = NO_HOP
    reset_history_of: Optional[int] = None


def parse_fault_script(lines: Iterable[str]) -> list[Fault]:
    """Lines ``time node q p delay next_hop`` or ``time reset-history node neighbor``.

    ``delay`` may be ``inf`` and ``next_hop`` may be ``X`` for an empty cell.
    A line without a leading time (``reset-history node neighbor``) applies at 0.
    """
    faults = []
    for lineno, line in enumerate(lines, 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "reset-history":
            parts = ["0"] + parts
        try:
            if parts[1] == "reset-history":
                faults.append(Fault(float(parts[0]), int(parts[2]), reset_history_of=int(parts[3])))
                continue
            t, node, q, p, d, h = parts
            faults.append(
                Fault(
                    float(t),
                    int(node),
                    int(q),
                    int(p),
                    INF if d.lower() in ("inf", "x") else float(d),
                    NO_HOP if h.upper() == "X" else int(h),
                )
            )
        except (ValueError, IndexError):
            raise ValueError(f"fault script line {lineno}: cannot parse {line.rstrip()!r}") from None
    return faults


class Network:
    """All node processes of a static meeting schedule plus pending frames."""

    def __init__(self, beta_frames: Mapping[Pair, BetaFrame], destination: int, K: int, F: int):
        self.destination = destination
        self.K = K
        self.F = F
        self.betas = {pair_key(*k): v for k, v in beta_frames.items()}
        ids = sorted({n for k in self.betas for n in k} | {destination})
        known = frozenset(ids)
        self.nodes: dict[int, NodeState] = {}
        for n in ids:
            t = TFrame.for_destination(n, K, F) if n == destination else TFrame(n, K, F)
            state = NodeState(n, destination, t, known_nodes=known)
            self.nodes[n] = state
        for (a, b), beta in self.betas.items():
            self.nodes[a].beta_frames[b] = beta
            self.nodes[b].beta_frames[a] = beta
        self.inbox: dict[int, list[SFrame]] = {n: [] for n in ids}
        self.log: list[tuple[int, Optional[int]]] = []
        self.observers: list = []

    @classmethod
    def from_schedule(cls, meetings: Mapping[Pair, tuple[int, ...]], destination: int, K: int, F: int, s: float = 1.0):
        frames = {
            pair_key(*k): BetaFrame(pair_key(*k), F, s, tuple(sorted(v)))
            for k, v in meetings.items()
            if v
        }
        return cls(frames, destination, K, F)

    def schedule(self) -> oracle.Schedule:
        return oracle.Schedule({k: v.betas for k, v in self.betas.items()}, self.F, self.destination)

    def meetings_at(self, p: int) -> list[Pair]:
        return [k for k, v in sorted(self.betas.items()) if p in v.betas]

    def _fire(self, node: int, event: Event) -> StepResult:
        res = step(self.nodes[node], event)
        self.nodes[node] = res.state
        if res.action is not None:
            self.log.append((node, res.action))
            for obs in self.observers:
                obs(self, node, res.action)
        return res

    def deliver(self, node: int, event: Event) -> Optional[SFrame]:
        while True:
            res = self._fire(node, event)
            if res.consumed:
                return res.sent

    def audit(self, node: int) -> None:
        while self._fire(node, Audit()).action is not None:
            pass

    def contact(self, a: int, b: int) -> None:
        """Both ends send, then both ends process what they received."""
        for src, dst in ((a, b), (b, a)):
            frame = self.deliver(src, Contact(dst))
            if frame is not None:
                self.inbox[dst].append(frame)
        for n in (a, b):
            while self.inbox[n]:
                frame = self.inbox[n].pop(0)
                self.deliver(n, Receive(frame))

    def run_frame(self) -> None:
        for p in range(1, self.F + 1):
            for n in sorted(self.nodes):
                self.audit(n)
            for a, b in self.meetings_at(p):
                self.contact(a, b)

    def tables(self) -> dict[int, TFrame]:
        return {n: s.t.copy() for n, s in self.nodes.items()}

    def converge(self, max_frames: int = 100) -> int:
        """Run whole frames until a frame changes no table; return frames run."""
        for k in range(1, max_frames + 1):
            before = self.tables()
            self.run_frame()
            if self.tables() == before:
                return k
        raise RuntimeError(f"no convergence within {max_frames} frames")

    def apply_fault(self, fault: Fault) -> None:
        state = self.nodes[fault.node]
        if fault.reset_history_of is not None:
            state.last_received.pop(fault.reset_history_of, None)
            return
        state.t.set(fault.q, fault.p, fault.delay, fault.next_hop)


# --- invariant ladder and variant functions ---------------------------------


def would_send(net: Network, sender: int, receiver: int) -> Optional[SFrame]:
    state = net.nodes[sender]
    if receiver not in state.beta_frames:
        return None
    return sframe_for(state, receiver)


@dataclass
class StabilizationLadder:
    levels: list[bool]  # levels[r-1] is H.r for r = 1..K+1
    hop_sets: list[set[int]]

    @property
    def top(self) -> int:
        """Highest r with H.1..H.r all true (0 if H.1 fails)."""
        r = 0
        for ok in self.levels:
            if not ok:
                break
            r += 1
        return r

    @property
    def stabilized(self) -> bool:
        return all(self.levels)


def _h1(net: Network) -> bool:
    for n, state in net.nodes.items():
        if _c1_violations(state) or _c2_violations(state):
            return False
        if not state.is_destination and _c3_pending(net, n):
            return False
    return True


def _c3_pending(net: Network, n: int) -> bool:
    """Some frame queued for, or about to be sent to, ``n`` fails C.3."""
    state = net.nodes[n]
    frames = [would_send(net, j, n) for j in state.beta_frames] + list(net.inbox[n])
    return any(f is not None and _c3_violations(state, f) for f in frames)


def _level_holds(net: Network, r: int, hop_sets: list[set[int]]) -> bool:
    """H.(r+1): relays in I_r are at least as good as every advertisement from I_(r-1)."""
    for i in hop_sets[r]:
        state = net.nodes[i]
        best_upto = np.minimum.accumulate(state.t.delay[1:], axis=0)
        for j in hop_sets[r - 1]:
            if j not in state.beta_frames:
                continue
            frame = would_send(net, j, i)
            for q in range(1, r + 1):
                if np.any(best_upto[q - 1] > frame.delay[q]):
                    return False
    return True


def check_ladder(net: Network, hop_sets: Optional[list[set[int]]] = None) -> StabilizationLadder:
    """Evaluate H.1 .. H.(K+1) on a global snapshot.

    ``H.(r+1)`` compares, per column, the best entry of at most ``q`` hops
    with the neighbour's advertised ``q``-hop delay.
    """
    if hop_sets is None:
        hop_sets = oracle.hop_sets(net.schedule(), net.K)
    levels = [_h1(net)]
    for r in range(1, net.K + 1):
        levels.append(levels[-1] and _level_holds(net, r, hop_sets))
    return StabilizationLadder(levels, hop_sets)


@dataclass(frozen=True)
class VariantValues:
    counts: tuple[int, int, int, int]  # nodes enabling actions 1, 2, 3, 5
    v: dict[int, int]  # V_(r+1) keyed by r + 1


def reference_cells(net: Network) -> dict[int, dict[tuple[int, int], float]]:
    """Forwarding-relevant cells of every relay from the exhaustive oracle."""
    sched = net.schedule()
    out = {}
    for n in net.nodes:
        if n == net.destination:
            continue
        best = oracle.order_enforced(oracle.best_delays(sched, n, net.K), net.K, net.F)
        out[n] = oracle.frontier(best, net.F)
    return out


def variant_values(net: Network, reference: Optional[dict] = None) -> VariantValues:
    """Lexicographic reset variant and per-level path-discovery variants.

    ``V_(r+1) = Omega_(r+1) - P_(r+1)``: oracle cells of cost ``r`` minus
    those already present with their final delay.
    """
    c = [0, 0, 0, 0]
    for n, state in net.nodes.items():
        if _c1_violations(state):
            c[0 if state.is_destination else 1] += 1
            continue
        if state.is_destination:
            continue
        if _c2_violations(state):
            c[2] += 1
            continue
        if _c3_pending(net, n):
            c[3] += 1
    if reference is None:
        reference = reference_cells(net)
    v = {}
    for r in range(1, net.K + 1):
        omega = found = 0
        for n, cells in reference.items():
            t = net.nodes[n].t
            for (q, p), d in cells.items():
                if q != r:
                    continue
                omega += 1
                found += t.delay[q, p - 1] == d
        v[r + 1] = omega - found
    return VariantValues(tuple(c), v)


# --- corrupted-start experiments --------------------------------------------


def random_schedule(rng, n_nodes: int, F: int, link_prob: float = 0.5, max_meetings: int = 3) -> dict[Pair, tuple[int, ...]]:
    """Random periodic meetings: each pair meets with ``link_prob`` in 1..3 slots."""
    meetings = {}
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if rng.random() < link_prob:
                z = rng.randint(1, min(max_meetings, F))
                meetings[(a, b)] = tuple(sorted(rng.sample(range(1, F + 1), z)))
    return meetings


def corrupt(net: Network, rng, n_faults: int) -> None:
    """Overwrite random table cells and remembered s-frames with garbage."""
    ids = sorted(net.nodes)
    for _ in range(n_faults):
        n = rng.choice(ids)
        state = net.nodes[n]
        if rng.random() < 0.7 or not state.beta_frames:
            q = rng.randint(0, net.K)
            p = rng.randint(1, net.F)
            d = rng.choice([INF, rng.randint(-1, 2 * net.F)])
            state.t.set(q, p, d, rng.choice([NO_HOP] + ids))
        else:
            j = rng.choice(sorted(state.beta_frames))
            frame = SFrame(j, n, net.K, net.F, state.beta_frames[j].betas)
            for b in frame.meeting_slots:
                for q in range(1, net.K + 1):
                    frame.delay[q, b - 1] = rng.choice([INF, rng.randint(0, 2 * net.F)])
            state.last_received[j] = frame


@dataclass
class StabilizationReport:
    frames_to_stabilize: Optional[int]  # first frame after which H.(K+1) held for good
    stayed: bool  # H.(K+1) never broke once reached
    variant_monotone: bool  # #(s) never rose
    levels_monotone: bool  # V_(r+1) never rose once H.r held
    final_counts: tuple[int, int, int, int]
    actions: int
    rows: list = field(default_factory=list, repr=False)  # (frame, node, action, top, counts)

    @property
    def ok(self) -> bool:
        return (
            self.frames_to_stabilize is not None
            and self.stayed
            and self.variant_monotone
            and self.levels_monotone
            and self.final_counts == (0, 0, 0, 0)
        )


def stabilization_run(net: Network, faults: Iterable[Fault] = (), frames: int = 10) -> StabilizationReport:
    """Apply ``faults`` (all before the run starts), then run ``frames``
    fault-free frames, checking the ladder and variants after every action."""
    for fault in sorted(faults, key=lambda f: f.time):
        net.apply_fault(fault)
    ref = reference_cells(net)
    hop_sets = oracle.hop_sets(net.schedule(), net.K)
    top_level = net.K + 1
    frame = [0]
    rows = []

    def snapshot(node, action):
        vv = variant_values(net, ref)
        rows.append((frame[0], node, action, check_ladder(net, hop_sets).top, vv.counts, vv.v))

    snapshot(None, None)
    net.observers.append(lambda _net, node, action: snapshot(node, action))
    try:
        for k in range(1, frames + 1):
            frame[0] = k
            net.run_frame()
    finally:
        net.observers.pop()

    counts = [r[4] for r in rows]
    variant_monotone = all(b <= a for a, b in zip(counts, counts[1:]))
    levels_monotone = True
    for r in range(1, net.K + 1):
        prev = None
        for row in rows:
            if row[3] < r:
                continue
            if prev is not None and row[5][r + 1] > prev:
                levels_monotone = False
            prev = row[5][r + 1]
    reached = [i for i, row in enumerate(rows) if row[3] == top_level]
    stayed = bool(reached) and all(row[3] == top_level for row in rows[reached[0]:])
    first = None
    if stayed:
        # stabilized during frame f counts as f frames; already legal counts as 0
        first = rows[reached[0]][0]
    return StabilizationReport(first, stayed, variant_monotone, levels_monotone, counts[-1], len(rows) - 1, rows)
