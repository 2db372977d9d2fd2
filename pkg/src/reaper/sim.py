"""Trace-driven simulation of single-copy routing to one base station.

Time advances over intervals bounded by contact starts and ends, slot
ticks and workload edges; the contact graph is fixed inside an interval.
Nodes within one connected component of that graph share a channel of
``link_rate_bps`` (a stand-in for a contention-based MAC), so every
control frame and every packet hop spends the component's airtime.

On each contact start the two nodes exchange control state first
(s-frames, predictability or distance vectors); data moves afterwards.
A packet held by a node in contact with the destination is always handed
to it.  Otherwise the protocol picks a next hop, and the packet moves when
that node is a current neighbour.  Packets past their deadline are
dropped at the next interval boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from reaper import baselines as bl
from reaper.predict import beta_frames_for_trace, normalize_instant
from reaper.protocol import Audit, Contact, NodeState, Receive, process
from reaper.routing import TFrame, default_hops, row_profile, slot_tail
from reaper.trace import ContactRecord, ContactTrace, PartialHistoryWarning, SlotGrid

HOUR = 3600.0


@dataclass(frozen=True)
class Packet:
    id: int
    source: int
    created_at: float
    deadline_delta: Optional[float]
    size_bytes: int
    hops_taken: int
    delivered_at: Optional[float]
    fate: str = "in-flight"
    revisited: bool = False
    path: tuple = ()  # (node, time) per hop, starting at the source


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    kind_order: int
    kind: str
    ids: tuple = ()

    KINDS = ("contact_end", "contact_start", "slot_tick", "packet_gen")

    @classmethod
    def make(cls, time: float, kind: str, ids: tuple = ()) -> "SimEvent":
        return cls(time, cls.KINDS.index(kind), kind, ids)


@dataclass(frozen=True)
class Workload:
    """Aggregate offered load split round-robin over the sources."""

    rate_bps: float
    packet_size: int = 500
    start: float = 172800.0
    duration: float = 86300.0

    def schedule(self, sources: Sequence[int], seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        if self.rate_bps <= 0:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        gap = self.packet_size * 8 / self.rate_bps
        n = int(math.ceil(self.duration / gap - 1e-9))
        created = self.start + gap * np.arange(n)
        created = created[created < self.start + self.duration]
        order = np.random.default_rng(seed).permutation(np.asarray(sources, dtype=np.int64))
        src = order[np.arange(len(created)) % len(order)]
        return created, src


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str  # reaper | prophet | meed
    deadline_s: Optional[float] = None

    @property
    def label(self) -> str:
        if self.kind == "reaper":
            return f"REAPER_{int(round(self.deadline_s / HOUR))}"
        return {"prophet": "PROPHET", "meed": "MEED-DVR"}[self.kind]

    @classmethod
    def parse(cls, text: str) -> "ProtocolSpec":
        """``reaper_96``, ``reaper:48``, ``prophet``, ``meed``; hours for deadlines."""
        t = text.strip().lower().replace(":", "_")
        if t.startswith("reaper"):
            hours = t[len("reaper") :].strip("_").rstrip("h") or "96"
            return cls("reaper", float(hours) * HOUR)
        if t in ("prophet",):
            return cls("prophet")
        if t in ("meed", "meed-dvr", "meed_dvr"):
            return cls("meed")
        raise ValueError(f"unknown protocol {text!r}")


@dataclass
class SimConfig:
    destination: Optional[int] = None  # default: highest node id
    slot_len_s: float = 3600.0
    frame_len_f: int = 24
    history_depth_h: int = 5
    p_thresh: Optional[float] = None
    link_rate_bps: float = 12000.0
    tick_s: float = 600.0
    cell_bytes: int = 4
    max_hops: Optional[int] = None
    seed: int = 0
    end_time: Optional[float] = None
    keep_packets: bool = False


@dataclass
class MetricsReport:
    protocol: str
    offered_rate: float
    seed: int
    generated: int
    delivered: int
    dropped: int
    in_flight: int
    throughput: float  # delivered bits per second of workload
    delivery_prob: float
    avg_cost_hops: float
    avg_delay: float
    control_overhead_bytes: int
    control_frames: int
    drops_by_cause: dict = field(default_factory=dict)
    revisits: int = 0  # delivered packets whose path repeated a node
    packets: list = field(default_factory=list, repr=False)

    HEADER = [
        "protocol",
        "offered_rate_bps",
        "seed",
        "generated",
        "delivered",
        "dropped",
        "in_flight",
        "throughput_bps",
        "delivery_prob",
        "avg_cost_hops",
        "avg_delay_s",
        "control_overhead_bytes",
        "control_frames",
        "revisits",
    ]

    def row(self) -> list:
        return [
            self.protocol,
            self.offered_rate,
            self.seed,
            self.generated,
            self.delivered,
            self.dropped,
            self.in_flight,
            round(self.throughput, 6),
            round(self.delivery_prob, 6),
            round(self.avg_cost_hops, 6),
            round(self.avg_delay, 3),
            self.control_overhead_bytes,
            self.control_frames,
            self.revisits,
        ]

    @property
    def overhead_per_frame(self) -> float:
        return self.control_overhead_bytes / self.control_frames if self.control_frames else 0.0


# --- routers ---------------------------------------------------------------


class _Router:
    """Control plane plus next-hop choice for one protocol."""

    def __init__(self, n: int, dest: int, cfg: SimConfig):
        self.n = n
        self.dest = dest
        self.cfg = cfg
        self.frames_sent = 0
        self.bytes_sent = 0

    def interval(self, t0: float, started: list, ended: list, active: list, history: list) -> dict:
        """Apply contact starts/ends at ``t0`` and exchange control frames.

        Returns the control bytes spent per contact pair in this interval.
        """
        raise NotImplementedError

    def next_hops(self, holder: np.ndarray, remaining: np.ndarray, t0: float) -> np.ndarray:
        raise NotImplementedError

    def finish(self) -> None:
        pass

    def _count(self, nbytes: int) -> int:
        self.frames_sent += 1
        self.bytes_sent += nbytes
        return nbytes

    def _is_tick(self, t0: float) -> bool:
        k = t0 / self.cfg.slot_len_s
        return abs(k - round(k)) < 1e-9


_CONTROL_CACHE: dict = {}


class ReaperRouter(_Router):
    """Guarded-command nodes; s-frames flow on contact start and, for every
    ongoing contact, at each slot tick until no table changes."""

    def __init__(self, n, dest, cfg, key=None):
        super().__init__(n, dest, cfg)
        self.K = cfg.max_hops or default_hops(n)
        self.grid = SlotGrid(cfg.slot_len_s, cfg.frame_len_f, cfg.history_depth_h)
        known = frozenset(range(n))
        F = cfg.frame_len_f
        self.nodes = {
            i: NodeState(i, dest, TFrame.for_destination(i, self.K, F) if i == dest else TFrame(i, self.K, F), known_nodes=known)
            for i in range(n)
        }
        self.frame_index = -1
        self._profiles: dict = {}
        self._profile_slot = None
        self._key = key
        self._replay = _CONTROL_CACHE.get(key) if key is not None else None
        self._log: list = []
        self._step = 0

    def _refresh_betas(self, t0: float, history: list) -> None:
        k = self.grid.frame_of(t0)
        if k == self.frame_index:
            return
        self.frame_index = k
        depth = min(self.grid.history_depth_h, k)
        for st in self.nodes.values():
            st.beta_frames = {}
        if depth > 0:
            horizon = k * self.grid.frame_seconds
            recs = [ContactRecord(r.node_a, r.node_b, r.start, min(r.end, horizon)) for r in history if r.start < horizon]
            grid = SlotGrid(self.grid.slot_len_s, self.grid.frame_len_f, depth, self.grid.epoch)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PartialHistoryWarning)
                frames = beta_frames_for_trace(ContactTrace(tuple(recs)), grid, first_frame=k - depth, p_thresh=self.cfg.p_thresh)
            for (a, b), beta in frames.items():
                self.nodes[a].beta_frames[b] = beta
                self.nodes[b].beta_frames[a] = beta
        for i in sorted(self.nodes):
            self.nodes[i], _, _ = process(self.nodes[i], Audit())

    def _exchange(self, a: int, b: int) -> int:
        inbox = []
        nbytes = 0
        for src, dst in ((a, b), (b, a)):
            self.nodes[src], sent, _ = process(self.nodes[src], Contact(dst))
            if sent is not None:
                nbytes += self._count(sent.finite_count() * self.cfg.cell_bytes)
                inbox.append((dst, sent))
        for dst, frame in inbox:
            self.nodes[dst], _, _ = process(self.nodes[dst], Receive(frame))
        return nbytes

    def interval(self, t0, started, ended, active, history):
        slot = normalize_instant(t0, self.grid)
        if slot != self._profile_slot:
            self._profile_slot = slot
            self._profiles.clear()
        if self._replay is not None:
            out, tables, frames, nbytes = self._replay[self._step]
            self._step += 1
            for node, t in tables.items():
                self.nodes[node].t = t
                self._profiles.pop(node, None)
            self.frames_sent += frames
            self.bytes_sent += nbytes
            return out
        frames0, bytes0 = self.frames_sent, self.bytes_sent
        before = {i: st.t for i, st in self.nodes.items()}
        self._refresh_betas(t0, history)
        todo = list(active) if self._is_tick(t0) else list(started)
        out: dict = {}
        for _ in range(self.K + 1):
            if not todo:
                break
            changed = set()
            for a, b in todo:
                ta, tb = self.nodes[a].t, self.nodes[b].t
                out[(a, b)] = out.get((a, b), 0) + self._exchange(a, b)
                if self.nodes[a].t != ta:
                    changed.add(a)
                if self.nodes[b].t != tb:
                    changed.add(b)
            todo = [(a, b) for a, b in active if a in changed or b in changed]
        tables = {i: st.t for i, st in self.nodes.items() if st.t is not before[i] and st.t != before[i]}
        for node in tables:
            self._profiles.pop(node, None)
        self._log.append((out, tables, self.frames_sent - frames0, self.bytes_sent - bytes0))
        return out

    def finish(self) -> None:
        if self._replay is None and self._key is not None:
            if len(_CONTROL_CACHE) >= 4:
                _CONTROL_CACHE.pop(next(iter(_CONTROL_CACHE)))
            _CONTROL_CACHE[self._key] = self._log

    def _profile(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        prof = self._profiles.get(node)
        if prof is None:
            tot = np.full(self.K, np.inf)
            hop = np.full(self.K, -1, dtype=np.int64)
            for q, total, nh, _ in row_profile(self.nodes[node].t, self._profile_slot):
                tot[q - 1] = total * self.grid.slot_len_s
                hop[q - 1] = nh
            prof = self._profiles[node] = (tot, hop)
        return prof

    def next_hops(self, holder, remaining, t0):
        out = np.full(len(holder), -1, dtype=np.int64)
        for node in np.unique(holder):
            idx = np.flatnonzero(holder == node)
            tot, hop = self._profile(int(node))
            ok = tot[None, :] + slot_tail(t0, self.grid) <= remaining[idx, None] + 1e-9
            has = ok.any(axis=1)
            first = ok.argmax(axis=1)
            out[idx[has]] = hop[first[has]]
        return out


class ProphetRouter(_Router):
    """Predictabilities are updated once per encounter, at contact start."""

    def __init__(self, n, dest, cfg, key=None):
        super().__init__(n, dest, cfg)
        self.state = [bl.ProphetState(i) for i in range(n)]
        self.aged_at = np.zeros(n)
        self.neighbors: dict[int, set] = {i: set() for i in range(n)}

    def interval(self, t0, started, ended, active, history):
        for a, b, _ in ended:
            self.neighbors[a].discard(b)
            self.neighbors[b].discard(a)
        out = {}
        s = self.cfg.slot_len_s
        for a, b in started:
            ua, ub = (t0 - self.aged_at[a]) / s, (t0 - self.aged_at[b]) / s
            self.aged_at[a] = self.aged_at[b] = t0
            nbytes = self._count(len(self.state[a].delivery_pred) * self.cfg.cell_bytes)
            nbytes += self._count(len(self.state[b].delivery_pred) * self.cfg.cell_bytes)
            self.state[a], self.state[b] = bl.prophet_contact(self.state[a], self.state[b], ua, ub)
            self.neighbors[a].add(b)
            self.neighbors[b].add(a)
            out[(a, b)] = nbytes
        return out

    def next_hops(self, holder, remaining, t0):
        out = np.full(len(holder), -1, dtype=np.int64)
        for node in np.unique(holder):
            me = self.state[int(node)]
            best, best_p = -1, -1.0
            for peer in sorted(self.neighbors[int(node)]):
                if bl.prophet_forward(me, self.state[peer], self.dest):
                    p = self.state[peer].get(self.dest)
                    if p > best_p:
                        best, best_p = peer, p
            out[holder == node] = best
        return out


class MeedRouter(_Router):
    """Inter-contact samples at contact start; distance vectors exchanged on
    contact start and at every slot tick of an ongoing contact."""

    def __init__(self, n, dest, cfg, key=None):
        super().__init__(n, dest, cfg)
        self.state = [bl.MeedState(i) for i in range(n)]

    def interval(self, t0, started, ended, active, history):
        for a, b, t_end in ended:
            self.state[a] = bl.meed_contact_end(self.state[a], b, t_end)
            self.state[b] = bl.meed_contact_end(self.state[b], a, t_end)
        for a, b in started:
            self.state[a] = bl.meed_update(self.state[a], b, t0)
            self.state[b] = bl.meed_update(self.state[b], a, t0)
        out = {}
        for a, b in active if self._is_tick(t0) else started:
            nbytes = self._count(len(self.state[a].distance_vector) * self.cfg.cell_bytes)
            nbytes += self._count(len(self.state[b].distance_vector) * self.cfg.cell_bytes)
            self.state[a], self.state[b] = bl.meed_exchange(self.state[a], self.state[b])
            out[(a, b)] = nbytes
        return out

    def next_hops(self, holder, remaining, t0):
        out = np.full(len(holder), -1, dtype=np.int64)
        for node in np.unique(holder):
            hop = bl.meed_forward(self.state[int(node)], self.dest)
            out[holder == node] = -1 if hop is None else hop
        return out


ROUTERS = {"reaper": ReaperRouter, "prophet": ProphetRouter, "meed": MeedRouter}


# --- event loop ------------------------------------------------------------


def _events(trace: ContactTrace, t_end: float, tick: float) -> list[SimEvent]:
    ev = []
    for i, r in enumerate(trace.records):
        if r.start < t_end:
            ev.append(SimEvent.make(r.start, "contact_start", (i,)))
            ev.append(SimEvent.make(min(r.end, t_end), "contact_end", (i,)))
    for t in np.arange(0.0, t_end, tick):
        ev.append(SimEvent.make(float(t), "slot_tick"))
    ev.sort()
    return ev


def run(
    trace: ContactTrace,
    protocol: ProtocolSpec,
    workload: Workload,
    link_rate_bps: Optional[float] = None,
    config: Optional[SimConfig] = None,
) -> MetricsReport:
    cfg = config or SimConfig()
    rate = cfg.link_rate_bps if link_rate_bps is None else link_rate_bps
    ids = sorted(set(trace.nodes) | ({cfg.destination} if cfg.destination is not None else set()))
    index = {v: i for i, v in enumerate(ids)}
    n = len(ids)
    dest = index[cfg.destination if cfg.destination is not None else ids[-1]]
    recs = [ContactRecord(*sorted((index[r.node_a], index[r.node_b])), r.start, r.end) for r in trace]
    trace = ContactTrace(tuple(recs))
    t_end = cfg.end_time if cfg.end_time is not None else trace.end
    key = (
        hash(trace.records),
        dest,
        t_end,
        cfg.slot_len_s,
        cfg.frame_len_f,
        cfg.history_depth_h,
        cfg.p_thresh,
        cfg.tick_s,
        cfg.cell_bytes,
        cfg.max_hops,
    )
    router = ROUTERS[protocol.kind](n, dest, cfg, key)
    deadline = protocol.deadline_s

    sources = [i for i in range(n) if i != dest]
    created, src = workload.schedule(sources, cfg.seed)
    P = len(created)
    size = workload.packet_size
    holder = src.copy()
    hops = np.zeros(P, dtype=np.int64)
    status = np.zeros(P, dtype=np.int8)  # 0 waiting/in flight, 1 delivered, 2 dropped
    done_at = np.full(P, np.nan)
    visited = np.zeros((P, n), dtype=bool)
    visited[np.arange(P), holder] = True
    revisit = np.zeros(P, dtype=bool)
    expiry = created + deadline if deadline is not None else np.full(P, np.inf)

    events = _events(trace, t_end, cfg.tick_s)
    times = sorted({e.time for e in events} | {t_end})
    by_time: dict[float, list[SimEvent]] = {}
    for e in events:
        by_time.setdefault(e.time, []).append(e)

    active: dict[int, ContactRecord] = {}
    history: list[ContactRecord] = []
    born = 0  # packets created so far (created is sorted)
    live = np.zeros(0, dtype=np.int64)
    moves = [] if cfg.keep_packets else None

    for t0, t1 in zip(times, times[1:]):
        started, ended = [], []
        for e in by_time.get(t0, ()):
            if e.kind == "contact_end":
                r = trace.records[e.ids[0]]
                if active.pop(e.ids[0], None) is not None:
                    ended.append((r.node_a, r.node_b, r.end))
            elif e.kind == "contact_start":
                r = trace.records[e.ids[0]]
                active[e.ids[0]] = r
                history.append(r)
                started.append((r.node_a, r.node_b))
        started.sort()
        live_pairs = sorted((r.node_a, r.node_b) for r in active.values())
        control = router.interval(t0, started, ended, live_pairs, history)

        new_born = int(np.searchsorted(created, t0, side="right"))
        if new_born > born:
            live = np.concatenate([live, np.arange(born, new_born)])
            born = new_born
        if live.size:
            expired = expiry[live] < t0
            if expired.any():
                gone = live[expired]
                status[gone] = 2
                done_at[gone] = expiry[gone]
                live = live[~expired]
        if not active:
            continue

        pairs = np.array([(r.node_a, r.node_b) for r in active.values()], dtype=np.int64)
        adj = np.zeros((n, n), dtype=bool)
        adj[pairs[:, 0], pairs[:, 1]] = True
        adj[pairs[:, 1], pairs[:, 0]] = True
        n_comp, comp = connected_components(coo_matrix(adj), directed=False)
        budget = np.full(n_comp, rate / 8.0 * (t1 - t0))
        for (a, _), nbytes in control.items():
            budget[comp[a]] -= nbytes
        used = np.zeros(n_comp)
        in_contact = adj.any(axis=1)

        for _ in range(n + 1):
            if not live.size:
                break
            cand = live[in_contact[holder[live]]]
            if not cand.size:
                break
            h = holder[cand]
            target = np.where(adj[h, dest], dest, -1)
            rest = target < 0
            if rest.any():
                remaining = expiry[cand[rest]] - t0
                nh = router.next_hops(h[rest], remaining, t0)
                ok = nh >= 0
                ok[ok] = adj[h[rest][ok], nh[ok]]
                target[np.flatnonzero(rest)[ok]] = nh[ok]
            move = target >= 0
            if not move.any():
                break
            cand, target = cand[move], target[move]
            c = comp[holder[cand]]
            order = np.lexsort((cand, created[cand], target != dest, c))
            cand, target, c = cand[order], target[order], c[order]
            first = np.searchsorted(c, c, side="left")
            rank = np.arange(len(c)) - first
            allowed = np.maximum(np.floor(budget[c] / size), 0)
            go = rank < allowed
            if not go.any():
                break
            cand, target, c, rank = cand[go], target[go], c[go], rank[go]
            arrive = t0 + (used[c] + (rank + 1) * size) * 8.0 / rate
            np.add.at(budget, c, -size)
            np.add.at(used, c, size)
            if moves is not None:
                moves.append((cand.copy(), target.copy(), arrive))
            revisit[cand] |= visited[cand, target]
            visited[cand, target] = True
            holder[cand] = target
            hops[cand] += 1
            got = target == dest
            status[cand[got]] = 1
            done_at[cand[got]] = np.maximum(arrive[got], created[cand[got]])
            live = live[status[live] == 0]

    router.finish()
    if deadline is not None and live.size:
        expired = expiry[live] < t_end
        status[live[expired]] = 2
        done_at[live[expired]] = expiry[live[expired]]

    return _report(protocol, workload, cfg, created, src, hops, status, done_at, revisit, router, ids, deadline, moves)


def _paths(created, src, ids, moves) -> list[list]:
    paths = [[(ids[s], float(c))] for s, c in zip(src, created)]
    for cand, target, when in moves:
        for i, t, w in zip(cand.tolist(), target.tolist(), when.tolist()):
            paths[i].append((ids[t], w))
    return paths


def _report(protocol, workload, cfg, created, src, hops, status, done_at, revisit, router, ids, deadline, moves) -> MetricsReport:
    P = len(created)
    dl = status == 1
    delivered = int(dl.sum())
    dropped = int((status == 2).sum())
    packets = []
    if cfg.keep_packets:
        fates = {0: "in-flight", 1: "delivered", 2: "dropped"}
        paths = _paths(created, src, ids, moves)
        for i in range(P):
            packets.append(
                Packet(
                    i,
                    ids[src[i]],
                    float(created[i]),
                    deadline,
                    workload.packet_size,
                    int(hops[i]),
                    float(done_at[i]) if dl[i] else None,
                    fates[int(status[i])],
                    bool(revisit[i]),
                    tuple(paths[i]),
                )
            )
    return MetricsReport(
        protocol=protocol.label,
        offered_rate=workload.rate_bps,
        seed=cfg.seed,
        generated=P,
        delivered=delivered,
        dropped=dropped,
        in_flight=P - delivered - dropped,
        throughput=delivered * workload.packet_size * 8 / workload.duration,
        delivery_prob=delivered / P if P else 0.0,
        avg_cost_hops=float(hops[dl].mean()) if delivered else 0.0,
        avg_delay=float((done_at[dl] - created[dl]).mean()) if delivered else 0.0,
        control_overhead_bytes=router.bytes_sent,
        control_frames=router.frames_sent,
        drops_by_cause={"deadline": dropped},
        revisits=int((revisit & dl).sum()),
        packets=packets,
    )


def sweep(
    trace: ContactTrace,
    rates: Sequence[float],
    protocols: Sequence[ProtocolSpec],
    seeds: Sequence[int] = (0,),
    config: Optional[SimConfig] = None,
    workload: Optional[Workload] = None,
) -> list[MetricsReport]:
    """Cross product of rates, protocols and seeds, in that nesting order."""
    base = config or SimConfig()
    wl = workload or Workload(0.0)
    rows = []
    for rate in rates:
        for proto in protocols:
            for seed in seeds:
                cfg = SimConfig(**{**base.__dict__, "seed": seed})
                w = Workload(rate, wl.packet_size, wl.start, wl.duration)
                rows.append(run(trace, proto, w, config=cfg))
    return rows


DEFAULT_RATES = (1.0, 10.0, 96.0, 960.0, 2400.0, 4800.0, 9600.0)
DEFAULT_PROTOCOLS = (
    ProtocolSpec("reaper", 96 * HOUR),
    ProtocolSpec("reaper", 72 * HOUR),
    ProtocolSpec("reaper", 48 * HOUR),
    ProtocolSpec("reaper", 24 * HOUR),
    ProtocolSpec("meed"),
    ProtocolSpec("prophet"),
)
