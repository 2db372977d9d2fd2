import pytest

from reaper.mobility import TvcmConfig, generate_trace, periodic_trace, small_world_edges
from reaper.sim import (
    DEFAULT_PROTOCOLS,
    MetricsReport,
    ProtocolSpec,
    SimConfig,
    Workload,
    run,
    sweep,
)
from reaper.trace import ContactRecord, normalize

DAY = 86400.0
ALL = [ProtocolSpec.parse(p) for p in ("reaper:96", "reaper:24", "meed", "prophet")]


@pytest.fixture(scope="module")
def small_tvcm():
    cfg = TvcmConfig(nodes=10, rng_seed=3)
    return generate_trace(cfg, 5), cfg.station_id


def test_protocol_labels():
    assert ProtocolSpec.parse("reaper:48h").label == "REAPER_48"
    assert ProtocolSpec.parse("reaper").deadline_s == 96 * 3600
    assert ProtocolSpec.parse("MEED").label == "MEED-DVR"
    with pytest.raises(ValueError):
        ProtocolSpec.parse("epidemic")
    assert [p.label for p in DEFAULT_PROTOCOLS][-2:] == ["MEED-DVR", "PROPHET"]


def test_zero_workload_still_carries_control(small_tvcm):
    tr, dest = small_tvcm
    rep = run(tr, ProtocolSpec.parse("reaper:96"), Workload(0.0), config=SimConfig(destination=dest))
    assert rep.generated == 0 and rep.throughput == 0
    assert rep.control_overhead_bytes > 0 and rep.control_frames > 0


@pytest.mark.parametrize("proto", ALL, ids=lambda p: p.label)
def test_always_connected_pair_delivers_everything(proto):
    tr = normalize([ContactRecord(0, 1, 0.0, 4 * DAY)])
    rep = run(tr, proto, Workload(96.0), config=SimConfig(destination=1))
    assert rep.delivery_prob == 1.0 and rep.avg_cost_hops == 1.0
    assert rep.throughput == pytest.approx(96.0, rel=0.01)


def test_deadline_expiry_drops_packets():
    tr = normalize([ContactRecord(0, 1, 0.0, 600.0), ContactRecord(0, 1, 5 * DAY, 5 * DAY + 600)])
    rep = run(tr, ProtocolSpec.parse("reaper:24"), Workload(10.0), config=SimConfig(destination=1))
    assert rep.dropped == rep.generated > 0
    assert rep.drops_by_cause == {"deadline": rep.dropped}
    held = run(tr, ProtocolSpec.parse("prophet"), Workload(10.0), config=SimConfig(destination=1))
    assert held.dropped == 0 and held.delivered == held.generated


@pytest.mark.parametrize("proto", ALL, ids=lambda p: p.label)
def test_packets_are_conserved_and_move_only_over_contacts(small_tvcm, proto):
    tr, dest = small_tvcm
    cfg = SimConfig(destination=dest, keep_packets=True)
    rep = run(tr, proto, Workload(20.0), config=cfg)
    assert rep.generated == rep.delivered + rep.dropped + rep.in_flight
    assert rep.generated == len(rep.packets)
    for pk in rep.packets:
        assert pk.hops_taken == len(pk.path) - 1
        assert pk.path[0][0] == pk.source
        if pk.fate == "delivered":
            assert pk.delivered_at >= pk.created_at and pk.path[-1][0] == dest
        for (a, ta), (b, tb) in zip(pk.path, pk.path[1:]):
            assert tb >= ta
            assert any(c.start <= tb <= c.end for c in tr.contacts(a, b))
        assert pk.revisited == (len({n for n, _ in pk.path}) < len(pk.path))


def test_runs_are_deterministic(small_tvcm):
    tr, dest = small_tvcm
    cfg = SimConfig(destination=dest, seed=5)
    a = run(tr, ProtocolSpec.parse("reaper:48"), Workload(50.0), config=cfg)
    b = run(tr, ProtocolSpec.parse("reaper:48"), Workload(50.0), config=cfg)
    assert a.row() == b.row()


def test_sweep_shape(small_tvcm):
    tr, dest = small_tvcm
    rows = sweep(tr, [10.0], [ProtocolSpec.parse("meed")], [0], SimConfig(destination=dest))
    assert len(rows) == 1 and isinstance(rows[0], MetricsReport)
    assert len(rows[0].row()) == len(MetricsReport.HEADER)
    rows = sweep(tr, [1.0, 10.0], ALL[:2], [0, 1], SimConfig(destination=dest))
    assert [(r.offered_rate, r.protocol, r.seed) for r in rows][:3] == [
        (1.0, "REAPER_96", 0),
        (1.0, "REAPER_96", 1),
        (1.0, "REAPER_24", 0),
    ]


def test_periodic_fixture_delivers_within_a_frame():
    edges = small_world_edges(8, 4, 0.2, seed=1)
    tr = periodic_trace(edges, DAY, 6, 1800.0, seed=1)
    cfg = SimConfig(destination=7, link_rate_bps=1e6)
    rep = run(tr, ProtocolSpec.parse("reaper:48"), Workload(4.0, start=3 * DAY, duration=DAY), config=cfg)
    assert rep.delivery_prob == 1.0
    assert rep.avg_delay <= DAY + 3600
    assert rep.revisits == 0
