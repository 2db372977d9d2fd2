import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reaper.predict import BetaFrame
from reaper.routing import (
    INF,
    NO_HOP,
    Deadline,
    SFrame,
    TFrame,
    apply_sframe,
    build_sframe,
    check_order,
    default_hops,
    destination_sframe,
    dump_frame,
    forward,
    slot_tail,
)
from reaper.trace import SlotGrid

A, B, C, D = 0, 1, 2, 3


def walkthrough_table():
    t = TFrame(A, 3, 6)
    t.set(1, 2, 0, D)
    t.set(1, 5, 0, D)
    return t


def test_walkthrough_advertisement():
    s = build_sframe(walkthrough_table(), BetaFrame((A, C), 6, 1.0, (1, 4)))
    assert s.delay[2, 0] == 1 and s.delay[2, 3] == 1
    assert s.finite_count() == 2
    assert s.matrix.shape == (3, 2)


def test_walkthrough_receiver_table():
    s = build_sframe(walkthrough_table(), BetaFrame((A, C), 6, 1.0, (1, 4)))
    t = apply_sframe(TFrame(C, 3, 6), s)
    assert t.cell(2, 1) == (1.0, A) and t.cell(2, 4) == (1.0, A)
    assert sorted(dump_frame(t)) == ["2,1,1,0", "2,4,1,0"]


def test_path_through_the_peer_is_not_advertised():
    t = TFrame(A, 3, 6)
    t.set(1, 2, 0, C)
    s = build_sframe(t, BetaFrame((A, C), 6, 1.0, (1, 4)))
    assert s.finite_count() == 0


def test_least_delay_offer_replaces_existing_entry():
    t = TFrame(C, 3, 6)
    t.set(2, 3, 3, A)
    s = SFrame(B, C, 3, 6, (3,))
    s.delay[2, 2] = 1
    out = apply_sframe(t, s)
    assert out.cell(2, 3) == (1.0, B)
    assert t.cell(2, 3) == (3.0, A)  # input untouched


def test_apply_is_idempotent():
    s = build_sframe(walkthrough_table(), BetaFrame((A, C), 6, 1.0, (1, 4)))
    once = apply_sframe(TFrame(C, 3, 6), s)
    assert apply_sframe(once, s) == once


def test_destination_advertises_zero_one_hop_paths():
    s = destination_sframe(D, 3, BetaFrame((A, D), 6, 1.0, (2, 5)))
    assert s.delay[1, 1] == 0 and s.delay[1, 4] == 0 and s.finite_count() == 2
    t = apply_sframe(TFrame(A, 3, 6), s)
    assert t == walkthrough_table()


def _grid():
    return SlotGrid(1.0, 24, 1)


def test_forward_single_cell_within_deadline():
    t = TFrame(A, 3, 24)
    t.set(1, 1, 4, D)
    got = forward(t, 0.5, _grid(), Deadline(10))
    # four whole slots after the current one, plus the half slot left now
    assert (got.cost, got.slot, got.next_hop, got.delay) == (1, 1, D, 4.5)


@pytest.mark.parametrize("budget,cost,hop", [(5, 2, B), (20, 1, D)])
def test_forward_deadline_decides_between_rows(budget, cost, hop):
    t = TFrame(A, 3, 24)
    t.set(1, 1, 12, D)
    t.set(2, 1, 3, B)
    got = forward(t, 0.5, _grid(), Deadline(budget))
    assert (got.cost, got.next_hop) == (cost, hop)


def test_forward_counts_the_wait_and_returns_none_when_infeasible():
    t = TFrame(A, 3, 24)
    t.set(1, 5, 2, D)
    assert forward(t, 0.5, _grid(), 6.4) is None
    assert forward(t, 0.5, _grid(), 6.5).delay == 6.5
    assert forward(t, 1.0, _grid(), 6.0).delay == 6.0  # boundary: no tail left
    with pytest.raises(ValueError):
        Deadline(-1)


def test_forward_tie_breaks_on_earliest_slot_then_lowest_hop():
    t = TFrame(A, 3, 24)
    t.set(1, 3, 1, 7)
    t.set(1, 2, 2, 9)
    t.set(1, 4, 0, 5)
    got = forward(t, 0.5, _grid(), 100)
    assert (got.slot, got.next_hop) == (2, 9)


def test_check_order_examples():
    assert check_order(walkthrough_table())
    t = TFrame(A, 3, 6)
    t.set(1, 1, 4, B)
    t.set(2, 1, 4, C)
    assert not check_order(t)


def test_default_hops():
    assert default_hops(25) == 6 and default_hops(2) == 2


def _direct_order(delay):
    for col in delay[1:].T:
        vals = [v for v in col if math.isfinite(v)]
        if any(b >= a for a, b in zip(vals, vals[1:])):
            return False
    return True


@st.composite
def tables(draw, owner=A, hops=(B, C, D)):
    F = draw(st.integers(2, 8))
    K = draw(st.integers(1, 3))
    t = TFrame(owner, K, F)
    for q in range(1, K + 1):
        for p in range(1, F + 1):
            if draw(st.booleans()):
                t.set(q, p, draw(st.integers(0, 3 * F)), draw(st.sampled_from(hops)))
    return t


@st.composite
def beta_for(draw, F, pair=(A, C)):
    betas = draw(st.sets(st.integers(1, F), min_size=1)).copy()
    return BetaFrame(pair, F, 1.0, tuple(sorted(betas)))


@settings(max_examples=300, deadline=None)
@given(tables())
def test_check_order_matches_direct_scan(t):
    assert check_order(t) == _direct_order(t.delay)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_build_sframe_matches_range_scan(data):
    t = data.draw(tables())
    beta = data.draw(beta_for(t.F))
    s = build_sframe(t, beta)
    F, K, bs = t.F, t.K, beta.betas
    want = np.full((K + 1, F), INF)
    for m, b in enumerate(bs):
        if m < len(bs) - 1:
            rs = [(r, r - b) for r in range(b + 1, bs[m + 1] + 1)]
        else:
            rs = [(r, r - b) for r in range(b + 1, F + 1)] + [(r, r + F - b) for r in range(1, bs[0] + 1)]
        for q in range(2, K + 1):
            for r, w in rs:
                d, hop = t.cell(q - 1, r)
                if hop != C and math.isfinite(d):
                    want[q, b - 1] = min(want[q, b - 1], d + w)
    for b in bs:  # descending order down each column
        best = INF
        for q in range(1, K + 1):
            if want[q, b - 1] >= best:
                want[q, b - 1] = INF
            best = min(best, want[q, b - 1])
    assert np.array_equal(s.delay, want)
    assert check_order(s)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_updates_keep_order_and_never_worsen_a_column(data):
    t = data.draw(tables(owner=C, hops=(A, B, D)))
    t = apply_sframe(t, SFrame(A, C, t.K, t.F, ()))  # normalise the random start
    for _ in range(data.draw(st.integers(1, 5))):
        sender = data.draw(st.sampled_from((A, B, D)))
        s = SFrame(sender, C, t.K, t.F, ())
        for q in range(1, t.K + 1):
            for p in range(t.F):
                if data.draw(st.booleans()):
                    s.delay[q, p] = data.draw(st.integers(0, 3 * t.F))
        out = apply_sframe(t, s)
        assert check_order(out)
        best_before = np.minimum.accumulate(t.delay[1:], axis=0)
        best_after = np.minimum.accumulate(out.delay[1:], axis=0)
        assert np.all(best_after <= best_before)
        assert np.all(np.isfinite(out.delay) == (out.next_hop != NO_HOP))
        t = out


def test_slot_tail():
    g = SlotGrid(10.0, 6, 1)
    assert slot_tail(15, g) == 5 and slot_tail(20, g) == 0 and slot_tail(0.5, g) == 9.5


@settings(max_examples=300, deadline=None)
@given(tables(), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.integers(0, 40))
def test_forwarding_judges_against_an_absolute_expiry(t, a, b, budget):
    # two queries inside one slot with the same expiry pick the same path
    g = SlotGrid(1.0, t.F, 1)
    t = apply_sframe(t, SFrame(A, t.owner, t.K, t.F, ()))
    x0, x1 = 3 + min(a, b), 3 + max(a, b)
    expiry = 3 + budget + 0.5

    def pick(x):
        c = forward(t, x, g, expiry - x)
        return None if c is None else (c.cost, c.slot, c.next_hop, round(x + c.delay, 9))

    assert pick(x0) == pick(x1)
