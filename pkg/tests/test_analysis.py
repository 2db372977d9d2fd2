import itertools
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reaper.analysis import (
    characteristic_frame,
    most_reliable_paths,
    temporal_reach,
    threshold_study,
    window_adjacency,
    window_metrics,
)
from reaper.mobility import TvcmConfig, generate_trace, periodic_trace, small_world_edges
from reaper.trace import ContactRecord, normalize


def adj(n, *edges):
    a = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        a[i, j] = a[j, i] = True
    return a


def test_single_contact_window():
    tr = normalize([ContactRecord(0, 2, 0, 1), ContactRecord(1, 2, 15, 16), ContactRecord(0, 1, 35, 36)])
    a = window_adjacency(tr, 10, 1)
    assert a.sum() == 2 and a[1, 2]
    assert not window_adjacency(tr, 10, 2).any()
    with pytest.raises(IndexError):
        window_adjacency(tr, 10, 4)


def test_empirical_link_weight():
    recs = [ContactRecord(0, 1, 10 * k + 1, 10 * k + 2) for k in (0, 1, 3)]
    recs.append(ContactRecord(0, 2, 39, 40))
    w = window_adjacency(normalize(recs), 10, 3, "empirical")
    assert w[0, 1] == 0.75


def test_reach_needs_ordered_windows():
    r = temporal_reach([adj(3, (0, 1)), adj(3, (1, 2))])
    assert r.reach[0, 2] and r.hop_bound == 2 and r.diameter == 2
    assert not temporal_reach([adj(3, (0, 1), (1, 2))]).reach[0, 2]
    rev = temporal_reach([adj(3, (1, 2)), adj(3, (0, 1))])
    assert not rev.reach[0, 2]  # order matters


def test_reach_with_an_empty_window():
    r = temporal_reach([adj(3, (0, 1)), adj(3)])
    assert r.reach.sum() == 2 and r.reach[0, 1] and r.reach[1, 0]


def test_waiting_between_hops_is_allowed():
    r = temporal_reach([adj(3, (0, 1)), adj(3), adj(3, (1, 2))])
    assert r.reach[0, 2]


def _paths(windows, n):
    """Every time-respecting path as (nodes, window of each hop)."""
    out = []

    def walk(nodes, last):
        out.append(tuple(nodes))
        for k in range(last + 1, len(windows)):
            for j in range(n):
                if j not in nodes and windows[k][nodes[-1], j] > 0:
                    walk(nodes + [j], k)

    for i in range(n):
        walk([i], -1)
    return out


def _brute(windows, n):
    reach = np.zeros((n, n), dtype=bool)
    best = np.zeros((n, n))
    hops = np.full((n, n), np.inf)

    def walk(nodes, last, prob):
        i, j = nodes[0], nodes[-1]
        if i != j:
            reach[i, j] = True
            best[i, j] = max(best[i, j], prob)
            hops[i, j] = min(hops[i, j], len(nodes) - 1)
        for k in range(last + 1, len(windows)):
            for m in range(n):
                if m not in nodes and windows[k][j, m] > 0:
                    walk(nodes + [m], k, prob * windows[k][j, m])

    for i in range(n):
        walk([i], -1, 1.0)
    return reach, best, hops


def sym_windows(n, k, weighted):
    cell = st.floats(0.05, 1.0) if weighted else st.just(1.0)
    entry = st.one_of(st.just(0.0), cell)
    def build(vals):
        ws = []
        it = iter(vals)
        for _ in range(k):
            w = np.zeros((n, n))
            for i, j in itertools.combinations(range(n), 2):
                w[i, j] = w[j, i] = next(it)
            ws.append(w)
        return ws
    return st.lists(entry, min_size=k * n * (n - 1) // 2, max_size=k * n * (n - 1) // 2).map(build)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 6).flatmap(lambda n: st.integers(1, 5).flatmap(lambda k: sym_windows(n, k, False))))
def test_reach_matches_path_enumeration(ws):
    n = ws[0].shape[0]
    reach, _, hops = _brute(ws, n)
    r = temporal_reach([w > 0 for w in ws])
    assert np.array_equal(r.reach, reach)
    assert np.array_equal(np.where(reach, r.min_hops, np.inf), np.where(reach, hops, np.inf))
    for m in range(1, len(ws) + 1):
        assert np.all(r.reach_after(m) >= r.reach_after(m - 1))


def test_exhaustive_reach_on_three_nodes_two_windows():
    pairs = [(0, 1), (0, 2), (1, 2)]
    for bits in itertools.product([0, 1], repeat=6):
        ws = [adj(3, *[p for p, b in zip(pairs, bits[3 * k : 3 * k + 3]) if b]) for k in range(2)]
        assert np.array_equal(temporal_reach(ws).reach, _brute(ws, 3)[0])


def test_reliable_path_examples():
    direct = np.zeros((3, 3))
    direct[0, 2] = direct[2, 0] = 0.9
    w1 = direct.copy()
    w1[0, 1] = w1[1, 0] = 1.0
    w2 = np.zeros((3, 3))
    w2[1, 2] = w2[2, 1] = 1.0
    assert most_reliable_paths([w1, w2])[0, 2] == 1.0
    only = np.zeros((2, 2))
    only[0, 1] = only[1, 0] = 0.5
    assert most_reliable_paths([only])[0, 1] == 0.5


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 5).flatmap(lambda n: st.integers(1, 4).flatmap(lambda k: sym_windows(n, k, True))))
def test_reliable_paths_match_brute_force_and_ignore_zero_links(ws):
    n = ws[0].shape[0]
    _, best, _ = _brute(ws, n)
    got = most_reliable_paths(ws)
    assert np.allclose(got, best)
    padded = [ws[0], np.zeros((n, n))] + ws[1:]
    assert np.allclose(most_reliable_paths(padded), got)


def test_threshold_study_on_planted_assured_links():
    rng = np.random.default_rng(3)
    n, windows = 10, 20
    pairs = list(itertools.combinations(range(n), 2))
    assured = set(map(tuple, rng.permutation(pairs)[: round(0.35 * len(pairs))]))
    recs = []
    for k in range(windows):
        for p in pairs:
            if p in assured or (rng.random() < 0.4 or k == 0):
                recs.append(ContactRecord(p[0], p[1], 100 * k + 10, 100 * k + 20))
    tr = normalize(recs)
    base, strict, none = threshold_study(tr, 100, [0.0, 0.95, 1.0])
    assert base == window_metrics(tr, 100)
    assert base.connected_link_fraction == 1.0
    assert strict.connected_link_fraction == pytest.approx(len(assured) / len(pairs))
    assert strict.avg_link_prob == 1.0 >= base.avg_link_prob


def test_threshold_one_without_deterministic_links():
    recs = [ContactRecord(0, 1, 0, 1), ContactRecord(1, 2, 150, 151), ContactRecord(0, 2, 290, 300)]
    assert threshold_study(normalize(recs), 100, [1.0])[0].connected_link_fraction == 0.0


def test_characteristic_frame_finds_planted_period():
    day = 86400.0
    tr = periodic_trace(small_world_edges(10, 4, 0.2, 1), day, 8, 1800, seed=2)
    sweep = [3600 * 2**k for k in range(5)] + [day, 2 * day]
    chosen, table = characteristic_frame(tr, sweep)
    assert chosen == day
    row = next(r for r in table if r.window_len_delta == day)
    assert row.avg_link_prob == 1.0 and row.avg_path_prob == 1.0


def test_characteristic_frame_none_when_unreliable():
    recs = [ContactRecord(0, 1, 0, 1), ContactRecord(1, 2, 5000, 5001), ContactRecord(0, 2, 9999, 10000)]
    chosen, table = characteristic_frame(normalize(recs), [100, 200, 400])
    assert chosen is None and len(table) == 3
    with pytest.raises(ValueError):
        characteristic_frame(normalize(recs), [])


def test_tvcm_path_quality_at_least_link_quality():
    cfg = TvcmConfig()
    tr = generate_trace(cfg, 7)
    nodes = list(range(cfg.nodes))
    chosen, _ = characteristic_frame(tr, [3600 * 2**k for k in range(7)] + [86400.0], nodes)
    assert chosen is not None
    m = window_metrics(tr, chosen, nodes)
    assert m.avg_path_prob >= m.avg_link_prob
    assert m.diameter_hops <= len(nodes) - 1


contact_lists = st.lists(
    st.tuples(st.integers(0, 4), st.integers(0, 4), st.floats(1, 6399), st.floats(0.5, 300)).filter(lambda c: c[0] != c[1]),
    min_size=1,
    max_size=25,
)


@settings(max_examples=150, deadline=None)
@given(contact_lists)
def test_link_quality_grows_with_nested_windows(cs):
    # anchor contacts on nodes 98/99 pin the span to an exact multiple of every window
    recs = [ContactRecord(98, 99, 0, 1), ContactRecord(98, 99, 6399, 6400)]
    recs += [ContactRecord(min(a, b), max(a, b), s, min(s + d, 6400)) for a, b, s, d in cs]
    tr = normalize(recs)
    nodes = range(5)
    probs = [window_metrics(tr, 100 * 2**k, nodes) for k in range(7)]
    for m in probs:
        assert 0 <= m.avg_link_prob <= 1 and 0 <= m.avg_path_prob <= 1
        assert 0 <= m.connected_link_fraction <= 1 and m.diameter_hops <= 4
    vals = [m.avg_link_prob for m in probs]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@pytest.mark.skipif(not os.environ.get("REAPER_INFOCOM05"), reason="set REAPER_INFOCOM05 to the Infocom05 contact file")
def test_infocom05_golden():
    from reaper.trace import read_trace

    tr = read_trace(os.environ["REAPER_INFOCOM05"], os.environ.get("REAPER_INFOCOM05_FORMAT", "pairwise-csv"))
    nodes = [n for n in tr.nodes if n <= 41]  # the 41 iMotes; higher ids are external devices
    chosen, _ = characteristic_frame(tr, [3600 * 2**k for k in range(5)] + [86400.0, 2 * 86400.0], nodes)
    assert chosen == 86400.0
    m = window_metrics(tr, chosen, nodes)
    assert m.avg_path_prob == pytest.approx(0.77, abs=0.05)
    assert m.connected_link_fraction == pytest.approx(1.0, abs=0.05)
    assert m.diameter_hops == 2
