"""Synthetic contact traces.

``generate_trace`` is a time-variant community mobility generator: a day
is split into periods, and in each period a node heads for its own
community of the period's kind with some probability, otherwise it goes
home.  Inside a
community a node stays put for one epoch at a uniform random position,
then redraws.  Two nodes are in contact while within ``contact_range``.

The other generators build traces with a known ground truth for tests:
planted periodic meetings over a small-world graph, and bounded-jitter
meetings for a single pair.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from reaper.trace import ContactRecord, ContactTrace, SlotGrid, normalize, pair_key

DAY = 86400.0
KINDS = ("home", "work", "food", "recreation")


@dataclass(frozen=True)
class Community:
    kinds: tuple[str, ...]
    x: float
    y: float
    size: float = 100.0

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.size / 2, self.y + self.size / 2


@dataclass(frozen=True)
class TimePeriod:
    windows: tuple[tuple[float, float], ...]  # hours of day, end may exceed 24
    kind: str
    prob: float
    per_community: bool = False  # prob applies to each community of the kind

    def go_prob(self, n_targets: int) -> float:
        return min(1.0, self.prob * n_targets) if self.per_community else self.prob


def default_communities() -> tuple[Community, ...]:
    # 18 squares on a 200 m pitch grid inside 1 km x 1 km
    kinds = (
        [("home",)] * 10
        + [("work",)] * 4
        + [("food",)] * 2
        + [("recreation", "food"), ("recreation",)]
    )
    slots = [(50.0 + 200.0 * c, 50.0 + 200.0 * r) for r in range(5) for c in range(5)]
    order = [0, 2, 4, 10, 14, 20, 22, 24, 1, 23, 6, 8, 16, 18, 12, 3, 11, 13]
    return tuple(Community(k, *slots[i]) for k, i in zip(kinds, order))


def default_periods() -> tuple[TimePeriod, ...]:
    return (
        TimePeriod(((7, 9), (19, 21)), "recreation", 0.5),
        TimePeriod(((9, 13), (15, 17)), "work", 0.9),
        TimePeriod(((13, 15),), "food", 0.33),
        TimePeriod(((17, 19),), "recreation", 0.5),
        TimePeriod(((21, 31),), "home", 0.9),
    )


@dataclass
class TvcmConfig:
    area: tuple[float, float] = (1000.0, 1000.0)
    communities: tuple[Community, ...] = field(default_factory=default_communities)
    periods: tuple[TimePeriod, ...] = field(default_factory=default_periods)
    nodes: int = 25
    base_station: bool = True
    station_community: Optional[int] = 10  # first work community
    contact_range: float = 100.0
    epoch_length: float = 3600.0
    rng_seed: int = 0
    per_node_targets: bool = True  # one fixed community per node and kind; else redraw daily

    def __post_init__(self):
        self.communities = tuple(c if isinstance(c, Community) else Community(tuple(c["kinds"]), c["x"], c["y"], c.get("size", 100.0)) for c in self.communities)
        self.periods = tuple(
            p if isinstance(p, TimePeriod) else TimePeriod(tuple(tuple(w) for w in p["windows"]), p["kind"], p["prob"], p.get("per_community", False))
            for p in self.periods
        )
        self.area = tuple(self.area)
        self.validate()

    def validate(self) -> None:
        for p in self.periods:
            if not 0.0 <= p.prob <= 1.0:
                raise ValueError(f"period probability {p.prob} outside [0, 1]")
            if p.kind not in KINDS:
                raise ValueError(f"unknown community kind {p.kind!r}")
        covered = np.zeros(24 * 60, dtype=int)
        for p in self.periods:
            for lo, hi in p.windows:
                for m in range(int(round(lo * 60)), int(round(hi * 60))):
                    covered[m % (24 * 60)] += 1
        if not np.all(covered == 1):
            raise ValueError("time periods must tile the 24 h day exactly once")
        for kind in ("home",):
            if not self.of_kind(kind):
                raise ValueError(f"need at least one {kind} community")
        for p in self.periods:
            if p.prob > 0 and not self.of_kind(p.kind):
                raise ValueError(f"no community of kind {p.kind!r}")
        if self.nodes < 1 or self.contact_range < 0 or self.epoch_length <= 0:
            raise ValueError("invalid node count, range or epoch length")

    def of_kind(self, kind: str) -> list[int]:
        return [i for i, c in enumerate(self.communities) if kind in c.kinds]

    @property
    def station_id(self) -> Optional[int]:
        return self.nodes if self.base_station else None

    def to_json(self) -> str:
        d = asdict(self)
        d["communities"] = [asdict(c) for c in self.communities]
        d["periods"] = [asdict(p) for p in self.periods]
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TvcmConfig":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path) -> "TvcmConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _segments(cfg: TvcmConfig) -> list[tuple[float, float, TimePeriod]]:
    """Day-local ``(start_s, end_s, period)`` segments sorted by start."""
    segs = []
    for p in cfg.periods:
        for lo, hi in p.windows:
            if hi <= 24:
                segs.append((lo * 3600, hi * 3600, p))
            else:
                segs.append((lo * 3600, DAY, p))
                segs.append((0.0, (hi - 24) * 3600, p))
    return sorted(segs, key=lambda s: s[0])


def _assign(cfg: TvcmConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    n = cfg.nodes
    homes = cfg.of_kind("home")
    home_of = np.array([homes[i % len(homes)] for i in rng.permutation(n)])
    own = {"home": home_of}
    for kind in KINDS[1:]:
        targets = cfg.of_kind(kind)
        own[kind] = rng.choice(targets, size=n) if targets else home_of
    return own


def community_assignment(cfg: TvcmConfig) -> dict[str, np.ndarray]:
    """Each node's own community index per kind, as ``generate_trace`` draws it."""
    return _assign(cfg, np.random.default_rng(cfg.rng_seed))


def generate_trace(cfg: TvcmConfig, days: int) -> ContactTrace:
    """Contacts of ``cfg.nodes`` mobile nodes (plus the base station) over ``days``."""
    rng = np.random.default_rng(cfg.rng_seed)
    n = cfg.nodes
    own = _assign(cfg, rng)
    home_of = own["home"]
    lows = np.array([[c.x, c.y] for c in cfg.communities])
    sizes = np.array([c.size for c in cfg.communities])
    station = None
    if cfg.base_station:
        station = np.array(cfg.communities[cfg.station_community].center)

    records: list[ContactRecord] = []
    for day in range(days):
        for seg_lo, seg_hi, period in _segments(cfg):
            targets = cfg.of_kind(period.kind)
            go = rng.random(n) < period.go_prob(len(targets))
            if cfg.per_node_targets or period.kind in ("home", "work"):
                choice = own[period.kind]
            else:
                choice = rng.choice(targets, size=n)
            where = np.where(go, choice, home_of)
            t = seg_lo
            while t < seg_hi - 1e-9:
                t_end = min(t + cfg.epoch_length, seg_hi)
                pos = lows[where] + rng.random((n, 2)) * sizes[where, None]
                if station is not None:
                    pos = np.vstack([pos, station])
                d = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
                a_idx, b_idx = np.nonzero(np.triu(d <= cfg.contact_range, 1))
                start = day * DAY + t
                end = day * DAY + t_end
                records.extend(ContactRecord(int(a), int(b), start, end) for a, b in zip(a_idx, b_idx))
                t = t_end
    return normalize(records)


# --- ground-truth generators ------------------------------------------------


def small_world_edges(n: int, k: int = 4, p: float = 0.2, seed: int = 0) -> list[tuple[int, int]]:
    """Edges of a connected Watts-Strogatz graph on nodes ``0..n-1``."""
    g = nx.connected_watts_strogatz_graph(n, min(k, n - 1), p, seed=seed)
    return sorted(pair_key(int(a), int(b)) for a, b in g.edges())


def periodic_trace(
    edges: Sequence[tuple[int, int]],
    period: float,
    n_periods: int,
    duration: float,
    seed: int = 0,
    jitter: float = 0.0,
) -> ContactTrace:
    """Each edge meets once per period at a fixed random phase (plus jitter)."""
    rng = np.random.default_rng(seed)
    span = period - duration - jitter
    if span < 0:
        raise ValueError("contact duration plus jitter exceeds the period")
    phases = rng.random(len(edges)) * span
    records = []
    for k in range(n_periods):
        offs = rng.random(len(edges)) * jitter
        for (a, b), ph, off in zip(edges, phases, offs):
            start = k * period + ph + off
            records.append(ContactRecord(a, b, start, start + duration))
    return normalize(records)


def bounded_jitter_trace(
    pair: tuple[int, int],
    betas: Sequence[int],
    grid: SlotGrid,
    frames: int,
    last_prob: float = 0.5,
    seed: int = 0,
) -> tuple[ContactTrace, list[list[float]]]:
    """Meetings of one pair obeying the bounded-jitter model.

    Meeting ``l < z`` of every frame falls in a uniform random slot of
    ``(betas[l-1], betas[l]]`` (``betas[-1]`` is 0 for the first); the
    last meeting happens with probability ``last_prob``.  Each meeting
    occupies a uniform random sub-interval of its slot.  Also returns the
    meeting start instants per frame.
    """
    rng = np.random.default_rng(seed)
    s, f = grid.slot_len_s, grid.frame_len_f
    bounds = [0] + list(betas)
    records, starts = [], []
    for k in range(frames):
        frame_starts = []
        for l in range(1, len(bounds)):
            if l == len(bounds) - 1 and rng.random() >= last_prob:
                continue
            slot = int(rng.integers(bounds[l - 1] + 1, bounds[l] + 1))
            lo = grid.epoch + (k * f + slot - 1) * s
            a, b = sorted(rng.random(2) * s)
            if b - a < 1e-6 * s:
                a, b = 0.0, s
            records.append(ContactRecord(*pair_key(*pair), lo + a, lo + b))
            frame_starts.append(lo + a)
        starts.append(frame_starts)
    return normalize(records), starts
