"""Single-copy comparison protocols: PROPHET and MEED-DVR.

PROPHET keeps a delivery predictability per known node, raised on every
encounter, aged over time and propagated transitively; a packet moves to
a peer whose predictability for the destination is strictly higher.

MEED-DVR costs each link by the running mean of its observed
inter-contact gaps and runs a distance-vector (Bellman-Ford) exchange on
every contact; a packet moves to the peer that is its next hop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

P_INIT = 0.75
BETA = 0.25
GAMMA = 0.98


# --- PROPHET ---------------------------------------------------------------


@dataclass
class ProphetState:
    owner: int
    delivery_pred: dict[int, float] = field(default_factory=dict)
    p_init: float = P_INIT
    beta: float = BETA
    gamma: float = GAMMA

    def get(self, node: int) -> float:
        if node == self.owner:
            return 1.0
        return self.delivery_pred.get(node, 0.0)

    def copy(self) -> "ProphetState":
        return ProphetState(self.owner, dict(self.delivery_pred), self.p_init, self.beta, self.gamma)


@dataclass(frozen=True)
class Encounter:
    peer: int


@dataclass(frozen=True)
class Age:
    units: float  # elapsed time already divided by the aging unit


@dataclass(frozen=True)
class Transitive:
    via: int
    via_pred: Mapping[int, float]  # the peer's predictabilities


ProphetEvent = Union[Encounter, Age, Transitive]


def prophet_update(state: ProphetState, event: ProphetEvent) -> ProphetState:
    out = state.copy()
    p = out.delivery_pred
    if isinstance(event, Encounter):
        old = p.get(event.peer, 0.0)
        p[event.peer] = old + (1.0 - old) * out.p_init
    elif isinstance(event, Age):
        if event.units < 0:
            raise ValueError("cannot age backwards")
        f = out.gamma ** event.units
        for k in p:
            p[k] *= f
    elif isinstance(event, Transitive):
        p_ab = p.get(event.via, 0.0)
        for c, p_bc in event.via_pred.items():
            if c in (out.owner, event.via):
                continue
            old = p.get(c, 0.0)
            p[c] = old + (1.0 - old) * p_ab * p_bc * out.beta
    else:
        raise TypeError(f"unknown PROPHET event {event!r}")
    return out


def prophet_forward(state_a: ProphetState, state_b: ProphetState, packet_dest: int) -> bool:
    """Hand a packet from ``a`` to ``b`` only on a strictly higher predictability."""
    return state_b.get(packet_dest) > state_a.get(packet_dest)


def prophet_contact(a: ProphetState, b: ProphetState, units_a: float, units_b: float) -> tuple[ProphetState, ProphetState]:
    """Age both sides, record the encounter, then apply transitivity both ways."""
    a = prophet_update(prophet_update(a, Age(units_a)), Encounter(b.owner))
    b = prophet_update(prophet_update(b, Age(units_b)), Encounter(a.owner))
    a2 = prophet_update(a, Transitive(b.owner, b.delivery_pred))
    b2 = prophet_update(b, Transitive(a.owner, a.delivery_pred))
    return a2, b2


# --- MEED-DVR --------------------------------------------------------------


@dataclass
class MeedState:
    owner: int
    start_time: float = 0.0
    gap_sum: dict[int, float] = field(default_factory=dict)
    gap_count: dict[int, int] = field(default_factory=dict)
    last_end: dict[int, float] = field(default_factory=dict)
    neighbor_vectors: dict[int, dict[int, float]] = field(default_factory=dict)
    distance_vector: dict[int, tuple[float, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.distance_vector.setdefault(self.owner, (0.0, self.owner))

    @property
    def edge_cost(self) -> dict[int, float]:
        return {j: self.gap_sum[j] / self.gap_count[j] for j in self.gap_count}

    def cost_to(self, dest: int) -> float:
        return self.distance_vector.get(dest, (math.inf, -1))[0]

    def vector(self) -> dict[int, float]:
        return {d: c for d, (c, _) in self.distance_vector.items()}

    def copy(self) -> "MeedState":
        return MeedState(
            self.owner,
            self.start_time,
            dict(self.gap_sum),
            dict(self.gap_count),
            dict(self.last_end),
            {k: dict(v) for k, v in self.neighbor_vectors.items()},
            dict(self.distance_vector),
        )


def meed_record_gap(state: MeedState, peer: int, gap: float) -> MeedState:
    """Fold one observed inter-contact gap into the running mean for ``peer``."""
    out = state.copy()
    if not gap > 0:
        return out
    out.gap_sum[peer] = out.gap_sum.get(peer, 0.0) + gap
    out.gap_count[peer] = out.gap_count.get(peer, 0) + 1
    return out


def meed_update(state: MeedState, peer: int, contact_start: float) -> MeedState:
    """A contact with ``peer`` begins: the gap since its last contact (or since
    the start of observation) becomes one more inter-contact sample."""
    gap = contact_start - state.last_end.get(peer, state.start_time)
    return _relax(meed_record_gap(state, peer, gap))


def meed_contact_end(state: MeedState, peer: int, t: float) -> MeedState:
    out = state.copy()
    out.last_end[peer] = t
    return out


def _relax(state: MeedState) -> MeedState:
    """Recompute the distance vector from edge costs and neighbour vectors."""
    edges = state.edge_cost
    best: dict[int, tuple[float, int]] = {state.owner: (0.0, state.owner)}
    for j in sorted(edges):
        cand = (edges[j], j)
        if cand < best.get(j, (math.inf, -1)):
            best[j] = cand
        for d, c in sorted(state.neighbor_vectors.get(j, {}).items()):
            if d == state.owner:
                continue
            cand = (edges[j] + c, j)
            if cand < best.get(d, (math.inf, -1)):
                best[d] = cand
    state.distance_vector = best
    return state


def meed_exchange(a: MeedState, b: MeedState) -> tuple[MeedState, MeedState]:
    """Both sides store the other's vector and relax."""
    va, vb = a.vector(), b.vector()
    a2, b2 = a.copy(), b.copy()
    a2.neighbor_vectors[b.owner] = vb
    b2.neighbor_vectors[a.owner] = va
    return _relax(a2), _relax(b2)


def meed_forward(state: MeedState, dest: int) -> Optional[int]:
    hop = state.distance_vector.get(dest)
    if hop is None or hop[1] == state.owner:
        return None
    return hop[1]
