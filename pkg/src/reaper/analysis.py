"""Trace characterization over contiguous windows of length ``delta``.

Windows are laid back to back from the first contact.  A pair is linked in window ``k`` when
it has at least one contact overlapping ``[start + k*delta, start +
(k+1)*delta)``.  Paths are time-respecting: at most one hop per window,
windows strictly increasing, and a packet may sit out any number of
windows between hops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from reaper.trace import ContactTrace


@dataclass(frozen=True)
class WindowMetrics:
    window_len_delta: float
    avg_link_prob: float
    connected_link_fraction: float
    avg_path_prob: float
    diameter_hops: int
    reachable_pairs: int = 0
    p_thresh: float = 0.0

    def row(self) -> list:
        return [
            self.window_len_delta,
            self.p_thresh,
            round(self.avg_link_prob, 6),
            round(self.connected_link_fraction, 6),
            round(self.avg_path_prob, 6),
            self.diameter_hops,
            self.reachable_pairs,
        ]

    HEADER = [
        "delta_s",
        "p_thresh",
        "avg_link_prob",
        "connected_link_fraction",
        "avg_path_prob",
        "diameter_hops",
        "reachable_pairs",
    ]


@dataclass
class TemporalReachability:
    windows: list
    reach: np.ndarray  # reach[i, j]: i can get a message to j
    hop_bound: int  # windows consumed before reach stopped growing
    min_hops: np.ndarray = field(repr=False)  # inf where unreachable
    history: list = field(default_factory=list, repr=False)  # reach after 1..n windows

    @property
    def diameter(self) -> int:
        finite = self.min_hops[self.reach]
        return int(finite.max()) if finite.size else 0

    def reach_after(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros_like(self.reach)
        return self.history[min(n, len(self.history)) - 1]


def _window_count(trace: ContactTrace, delta: float) -> int:
    return max(1, math.ceil((trace.end - trace.start) / delta))


def _node_index(trace: ContactTrace, nodes: Optional[Sequence[int]]) -> dict[int, int]:
    nodes = trace.nodes if nodes is None else list(nodes)
    return {n: i for i, n in enumerate(nodes)}


def window_stack(trace: ContactTrace, delta: float, nodes: Optional[Sequence[int]] = None) -> np.ndarray:
    """Boolean adjacency of every window, shape ``(n_windows, N, N)``."""
    if not delta > 0:
        raise ValueError("window length must be positive")
    idx = _node_index(trace, nodes)
    n = _window_count(trace, delta)
    out = np.zeros((n, len(idx), len(idx)), dtype=bool)
    t0 = trace.start
    for rec in trace:
        if rec.node_a not in idx or rec.node_b not in idx:
            continue
        lo = math.floor((rec.start - t0) / delta)
        hi = min(math.ceil((rec.end - t0) / delta) - 1, n - 1)
        a, b = idx[rec.node_a], idx[rec.node_b]
        out[lo : hi + 1, a, b] = True
        out[lo : hi + 1, b, a] = True
    return out


def window_adjacency(
    trace: ContactTrace,
    delta: float,
    k: int,
    link_prob_mode: str = "binary",
    nodes: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Adjacency of window ``k`` (0-based).

    ``binary`` marks pairs with a contact in the window.  ``empirical``
    weights each pair by the fraction of windows ``0..k`` in which it met.
    """
    stack = window_stack(trace, delta, nodes)
    if not 0 <= k < len(stack):
        raise IndexError(f"window {k} lies beyond the trace end ({len(stack)} windows)")
    if link_prob_mode == "binary":
        return stack[k].copy()
    if link_prob_mode == "empirical":
        return stack[: k + 1].mean(axis=0)
    raise ValueError(f"unknown link probability mode {link_prob_mode!r}")


def temporal_reach(windows: Sequence[np.ndarray]) -> TemporalReachability:
    """Pairs joined by a time-respecting path, one hop per window at most.

    Equivalent to the ordered boolean product of ``(I or A_k)`` over the
    windows.  ``min_hops`` tracks the fewest hops of any such path.
    """
    if len(windows) == 0:
        raise ValueError("need at least one window")
    mats = [np.asarray(w, dtype=bool) for w in windows]
    n = mats[0].shape[0]
    eye = np.eye(n, dtype=bool)
    can = eye.copy()
    hops = np.where(eye, 0.0, np.inf)
    history = []
    last_growth = 0
    for k, a in enumerate(mats, 1):
        if a.any():
            # hops[i, m] + 1 for every edge (m, j) of this window
            via = np.where(a[None, :, :], hops[:, :, None] + 1.0, np.inf).min(axis=1)
            hops = np.minimum(hops, via)
            grown = hops < np.inf
            if (grown & ~can).any():
                last_growth = k
            can = grown
        history.append(can & ~eye)
    return TemporalReachability(mats, can & ~eye, last_growth, hops, history)


def most_reliable_paths(windows: Sequence[np.ndarray]) -> np.ndarray:
    """Best product of link probabilities over time-respecting paths.

    ``windows[k][m, j]`` is the probability of link ``(m, j)`` in window
    ``k``; zero means no link.  The diagonal of the result is zero.
    """
    mats = [np.asarray(w, dtype=float) for w in windows]
    n = mats[0].shape[0]
    best = np.eye(n)
    for w in mats:
        if not w.any():
            continue
        step = (best[:, :, None] * w[None, :, :]).max(axis=1)
        np.maximum(best, step, out=best)
    np.fill_diagonal(best, 0.0)
    return best


def _metrics(stack: np.ndarray, delta: float, p_thresh: float) -> tuple[WindowMetrics, np.ndarray]:
    n_nodes = stack.shape[1]
    prob = stack.mean(axis=0)
    links = prob > 0
    if p_thresh > 0:
        links &= prob >= p_thresh
        stack = stack & links[None, :, :]
    iu = np.triu_indices(n_nodes, 1)
    pair_links = links[iu]
    n_pairs = len(pair_links)
    avg_link = float(prob[iu][pair_links].mean()) if pair_links.any() else 0.0
    frac = float(pair_links.sum() / n_pairs) if n_pairs else 0.0
    reach = temporal_reach(stack)
    best = most_reliable_paths(stack * prob[None, :, :])
    avg_path = float(best[reach.reach].mean()) if reach.reach.any() else 0.0
    m = WindowMetrics(delta, avg_link, frac, avg_path, reach.diameter, int(reach.reach.sum()), p_thresh)
    return m, reach.reach


def window_metrics(
    trace: ContactTrace,
    delta: float,
    nodes: Optional[Sequence[int]] = None,
    p_thresh: float = 0.0,
) -> WindowMetrics:
    """Link, connectivity, path-reliability and diameter metrics at ``delta``.

    Link probability of a pair is the fraction of windows in which it met.
    ``avg_link_prob`` averages it over linked pairs; ``connected_link_fraction``
    is the share of all unordered pairs that are linked.  ``avg_path_prob``
    averages the most reliable time-respecting path over reachable ordered
    pairs.  Links below ``p_thresh`` are discarded first.
    """
    return _metrics(window_stack(trace, delta, nodes), delta, p_thresh)[0]


def characteristic_frame(
    trace: ContactTrace,
    delta_sweep: Sequence[float],
    nodes: Optional[Sequence[int]] = None,
    min_path_prob: float = 0.60,
    min_connected: float = 0.90,
) -> tuple[Optional[float], list[WindowMetrics]]:
    """Smallest ``delta`` reaching the path-reliability and connectivity targets.

    Connectivity is measured against every pair reachable at some ``delta``
    of the sweep.  Returns ``(None, table)`` when no window qualifies.
    """
    if not delta_sweep:
        raise ValueError("empty window sweep")
    rows, reaches = [], []
    for delta in sorted(delta_sweep):
        m, reach = _metrics(window_stack(trace, delta, nodes), delta, 0.0)
        rows.append(m)
        reaches.append(reach)
    available = np.logical_or.reduce(reaches)
    total = int(available.sum())
    chosen = None
    for m, reach in zip(rows, reaches):
        if total == 0:
            break
        if m.avg_path_prob >= min_path_prob and (reach & available).sum() >= min_connected * total:
            chosen = m.window_len_delta
            break
    return chosen, rows


def threshold_study(
    trace: ContactTrace,
    frame_len: float,
    thresholds: Sequence[float],
    nodes: Optional[Sequence[int]] = None,
) -> list[WindowMetrics]:
    stack = window_stack(trace, frame_len, nodes)
    return [_metrics(stack, frame_len, float(p))[0] for p in thresholds]
