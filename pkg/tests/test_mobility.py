import itertools
import warnings

import numpy as np
import pytest

from reaper.mobility import (
    DAY,
    Community,
    TimePeriod,
    TvcmConfig,
    _segments,
    bounded_jitter_trace,
    community_assignment,
    generate_trace,
    periodic_trace,
    small_world_edges,
)
from reaper.trace import PartialHistoryWarning, SlotGrid, slot_contact_rate, slot_history


@pytest.fixture(scope="module")
def week():
    cfg = TvcmConfig()
    return cfg, generate_trace(cfg, 7)


def test_co_resident_nodes_are_always_in_contact():
    cfg = TvcmConfig(
        communities=(Community(("home",), 0, 0),),
        periods=(TimePeriod(((0, 24),), "home", 1.0),),
        nodes=2,
        base_station=False,
        contact_range=142.0,
    )
    tr = generate_trace(cfg, 2)
    assert [(r.start, r.end) for r in tr] == [(0.0, 2 * DAY)]


def test_no_shared_community_means_no_contacts():
    cfg = TvcmConfig(
        communities=(Community(("home",), 0, 0), Community(("home",), 800, 800), Community(("work",), 400, 0)),
        periods=(TimePeriod(((9, 17),), "work", 0.0), TimePeriod(((17, 33),), "home", 0.9)),
        nodes=2,
        base_station=False,
    )
    assert len(generate_trace(cfg, 3)) == 0


def test_golden_week(week):
    cfg, tr = week
    assert len(tr) == 1706
    assert len(tr.pairs) == 214
    station = [r for r in tr if cfg.station_id in r.pair]
    assert len(station) == 53


def test_generation_is_deterministic(week):
    cfg, tr = week
    assert generate_trace(TvcmConfig(), 7).records == tr.records
    assert generate_trace(TvcmConfig(rng_seed=1), 7).records != tr.records


def test_contacts_change_only_on_epoch_boundaries(week):
    cfg, tr = week
    marks = set()
    for lo, hi, _ in _segments(cfg):
        t = lo
        while t < hi:
            marks.add(t)
            t += cfg.epoch_length
        marks.add(hi)
    for r in tr:
        for x in (r.start, r.end):
            assert x % DAY in marks or x % DAY == 0


def test_work_pairs_repeat_daily(week):
    # next-day meetings of same-workplace pairs fall in slots the history already saw
    cfg, tr = week
    work = community_assignment(cfg)["work"]
    pairs = [p for p in itertools.combinations(range(cfg.nodes), 2) if work[p[0]] == work[p[1]]]
    grid = SlotGrid(3600.0, 24, 5)
    hit = total = 0
    for day in (5, 6):
        for p in pairs:
            rates = slot_contact_rate(slot_history(tr, grid, p, day - 5))
            for c in tr.contacts(*p):
                if not day * DAY <= c.start < (day + 1) * DAY:
                    continue
                lo = int((c.start - day * DAY) // 3600)
                hi = int(np.ceil((min(c.end, (day + 1) * DAY) - day * DAY) / 3600))
                hit += bool(rates[lo:hi].any())
                total += 1
    assert total > 100
    assert hit / total >= 0.9


def test_config_json_round_trip(tmp_path):
    cfg = TvcmConfig(nodes=7, rng_seed=4)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    back = TvcmConfig.load(path)
    assert back == cfg
    assert generate_trace(back, 1).records == generate_trace(cfg, 1).records


@pytest.mark.parametrize(
    "kwargs,msg",
    [
        ({"periods": (TimePeriod(((0, 24),), "home", 1.5),)}, "outside"),
        ({"periods": (TimePeriod(((0, 20),), "home", 0.5),)}, "tile"),
        ({"periods": (TimePeriod(((0, 24),), "beach", 0.5),)}, "kind"),
        ({"nodes": 0}, "invalid"),
    ],
)
def test_invalid_configs_are_rejected(kwargs, msg):
    with pytest.raises(ValueError, match=msg):
        TvcmConfig(**kwargs)


def test_small_world_and_periodic_fixtures():
    edges = small_world_edges(12, 4, 0.3, seed=2)
    assert len(edges) == 24 and all(a < b for a, b in edges)
    tr = periodic_trace(edges, 100.0, 3, 10.0, seed=0)
    for e in edges:
        starts = [r.start for r in tr.contacts(*e)]
        assert len(starts) == 3
        assert np.allclose(np.diff(starts), 100.0)
    with pytest.raises(ValueError):
        periodic_trace(edges, 10.0, 1, 20.0)


def test_bounded_jitter_meetings_stay_below_their_bounds():
    grid = SlotGrid(10.0, 12, 1)
    betas = (3, 7, 11)
    tr, starts = bounded_jitter_trace((0, 1), betas, grid, 200, seed=1)
    for k, frame in enumerate(starts):
        for l, x in enumerate(frame):
            slot = int((x - k * 120) // 10) + 1
            lo = betas[l - 1] if l else 0
            assert lo < slot <= betas[l]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PartialHistoryWarning)
        rates = slot_contact_rate(slot_history(tr, SlotGrid(10.0, 12, 200), (0, 1)))
    assert rates[11:].sum() == 0
