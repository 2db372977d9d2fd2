import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import shortest_path

from reaper.baselines import (
    Age,
    Encounter,
    MeedState,
    ProphetState,
    Transitive,
    meed_contact_end,
    meed_exchange,
    meed_forward,
    meed_record_gap,
    meed_update,
    prophet_contact,
    prophet_forward,
    prophet_update,
)


def test_prophet_examples():
    a = prophet_update(ProphetState(0), Encounter(1))
    assert a.get(1) == pytest.approx(0.75)
    assert prophet_update(a, Age(1)).get(1) == pytest.approx(0.735)
    t = prophet_update(a, Transitive(1, {2: 0.75}))
    assert t.get(2) == pytest.approx(0.140625)
    with pytest.raises(ValueError):
        prophet_update(a, Age(-1))


@pytest.mark.parametrize("pa,pb,move", [(0.5, 0.6, True), (0.5, 0.5, False), (0.6, 0.5, False)])
def test_prophet_forwards_only_on_strict_improvement(pa, pb, move):
    a = ProphetState(0, {9: pa})
    b = ProphetState(1, {9: pb})
    assert prophet_forward(a, b, 9) == move


def test_prophet_destination_holds_itself_at_one():
    assert ProphetState(3).get(3) == 1.0


events = st.lists(
    st.one_of(
        st.builds(Encounter, st.integers(1, 5)),
        st.builds(Age, st.floats(0, 50)),
        st.builds(Transitive, st.integers(1, 5), st.dictionaries(st.integers(0, 6), st.floats(0, 1), max_size=6)),
    ),
    max_size=30,
)


@settings(max_examples=300, deadline=None)
@given(events)
def test_prophet_predictabilities_stay_in_unit_interval(evs):
    s = ProphetState(0)
    for e in evs:
        s = prophet_update(s, e)
        assert all(0.0 <= v <= 1.0 for v in s.delivery_pred.values())


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10))
def test_prophet_contact_is_symmetric_in_roles(ua, ub):
    a, b = prophet_contact(ProphetState(0), ProphetState(1), ua, ub)
    assert a.get(1) == pytest.approx(b.get(0)) == pytest.approx(0.75)


def test_meed_running_mean():
    s = meed_record_gap(meed_record_gap(MeedState(0), 1, 10), 1, 20)
    assert s.edge_cost[1] == 15


def test_meed_gaps_come_from_contact_times():
    s = meed_update(MeedState(0, start_time=0.0), 1, 10.0)
    s = meed_contact_end(s, 1, 12.0)
    s = meed_update(s, 1, 42.0)
    assert s.edge_cost[1] == 20


def test_meed_chain_relaxation():
    a = meed_update(MeedState(0), 1, 4.0)
    b = meed_update(meed_update(MeedState(1), 0, 4.0), 9, 6.0)
    a, b = meed_exchange(a, b)
    assert a.cost_to(9) == 10 and meed_forward(a, 9) == 1
    assert meed_forward(b, 9) == 9
    assert meed_forward(MeedState(0), 9) is None


@pytest.mark.parametrize("seed", range(5))
def test_meed_distance_vector_matches_shortest_paths(seed):
    rng = random.Random(seed)
    n = 5
    w = np.zeros((n, n))
    states = [MeedState(i) for i in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.6:
                w[a, b] = w[b, a] = rng.randint(1, 20)
                states[a] = meed_record_gap(states[a], b, w[a, b])
                states[b] = meed_record_gap(states[b], a, w[a, b])
    for _ in range(n + 1):
        for a in range(n):
            for b in range(a + 1, n):
                if w[a, b]:
                    states[a], states[b] = meed_exchange(states[a], states[b])
    dist = shortest_path(w, method="D", directed=False)
    for a in range(n):
        for d in range(n):
            assert states[a].cost_to(d) == pytest.approx(dist[a, d]) or (
                math.isinf(dist[a, d]) and math.isinf(states[a].cost_to(d))
            )
