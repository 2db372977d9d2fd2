"""Command line entry point: ``reaper <command> [flags]``.

Tables are comma separated with a header row; times are in seconds
unless a flag takes a duration, which accepts suffixes s, m, h, d.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from typing import Optional, Sequence

from reaper import analysis, mobility, protocol, sim
from reaper.predict import beta_frames_for_trace
from reaper.routing import default_hops
from reaper.trace import SlotGrid, read_trace

UNITS = {"s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0}


def parse_duration(text: str) -> float:
    text = text.strip().lower()
    if text and text[-1] in UNITS:
        return float(text[:-1]) * UNITS[text[-1]]
    return float(text)


def parse_sweep(text: str) -> list[float]:
    """``a,b,c`` lists values; ``lo:hi`` doubles from lo up to hi; ``lo:hi:step`` steps linearly."""
    if ":" not in text:
        return [parse_duration(t) for t in text.split(",") if t.strip()]
    parts = [parse_duration(t) for t in text.split(":")]
    if len(parts) == 2:
        lo, hi = parts
        if not 0 < lo <= hi:
            raise argparse.ArgumentTypeError(f"bad sweep {text!r}")
        out = []
        v = lo
        while v <= hi * (1 + 1e-12):
            out.append(v)
            v *= 2
        return out
    if len(parts) == 3:
        lo, hi, step = parts
        if not (0 < lo <= hi and step > 0):
            raise argparse.ArgumentTypeError(f"bad sweep {text!r}")
        n = int((hi - lo) / step + 1e-9)
        return [lo + k * step for k in range(n + 1)]
    raise argparse.ArgumentTypeError(f"bad sweep {text!r}")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 6)) if not v.is_integer() else str(int(v))
    return str(v)


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_trace(args):
    exclude = _ints(args.exclude) if getattr(args, "exclude", None) else ()
    return read_trace(args.trace, format=args.format, exclude=exclude)


def _trace_or_tvcm(args):
    if args.trace:
        return _load_trace(args)
    cfg = mobility.TvcmConfig.load(args.config) if args.config else mobility.TvcmConfig()
    if args.seed is not None:
        cfg.rng_seed = args.seed
    return mobility.generate_trace(cfg, args.days)


# --- commands --------------------------------------------------------------


def cmd_analyze(args) -> int:
    trace = _load_trace(args)
    if args.p_thresh:
        frame = parse_duration(args.frame)
        rows = analysis.threshold_study(trace, frame, _floats(args.p_thresh))
        _emit(_table(analysis.WindowMetrics.HEADER, [m.row() for m in rows]), args.out)
        return 0
    chosen, rows = analysis.characteristic_frame(
        trace, parse_sweep(args.delta_sweep), min_path_prob=args.min_path_prob, min_connected=args.min_connected
    )
    _emit(_table(analysis.WindowMetrics.HEADER, [m.row() for m in rows]), args.out)
    print(f"characteristic_frame_s={_fmt(chosen) if chosen is not None else 'none'}", file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    trace = _load_trace(args)
    grid = SlotGrid.for_trace(trace, parse_duration(args.slot), args.frame_slots, args.history)
    frames = beta_frames_for_trace(trace, grid, first_frame=args.first_frame, p_thresh=args.p_thresh)
    lines = [",".join(str(v) for v in (a, b, beta.z, *beta.betas)) for (a, b), beta in sorted(frames.items())]
    _emit("".join(line + "\n" for line in lines), args.out)
    return 0


def cmd_generate_trace(args) -> int:
    cfg = mobility.TvcmConfig.load(args.config) if args.config else mobility.TvcmConfig()
    if args.nodes is not None:
        cfg.nodes = args.nodes
    if args.seed is not None:
        cfg.rng_seed = args.seed
    cfg.validate()
    trace = mobility.generate_trace(cfg, args.days)
    text = "# node_a,node_b,start,end\n" + "".join(line + "\n" for line in trace.to_lines())
    _emit(text, args.out)
    if args.dump_config:
        with open(args.dump_config, "w", encoding="utf-8") as fh:
            fh.write(cfg.to_json() + "\n")
    return 0


def _sim_config(args) -> sim.SimConfig:
    return sim.SimConfig(
        destination=args.destination,
        slot_len_s=parse_duration(args.slot),
        frame_len_f=args.frame_slots,
        history_depth_h=args.history,
        p_thresh=args.p_thresh,
        link_rate_bps=args.link_rate,
        max_hops=args.max_hops,
        seed=args.seed if args.seed is not None else 0,
    )


def _workload(args, rate: float) -> sim.Workload:
    return sim.Workload(rate, args.packet_size, parse_duration(args.start), parse_duration(args.duration))


def cmd_simulate(args) -> int:
    trace = _trace_or_tvcm(args)
    cfg = _sim_config(args)
    if args.packets_log:
        cfg.keep_packets = True
    report = sim.run(trace, sim.ProtocolSpec.parse(args.protocol), _workload(args, args.rate), config=cfg)
    _emit(_table(sim.MetricsReport.HEADER, [report.row()]), args.out)
    if args.packets_log:
        with open(args.packets_log, "w", encoding="utf-8") as fh:
            for p in report.packets:
                rec = {
                    "id": p.id,
                    "source": p.source,
                    "created_at": p.created_at,
                    "fate": p.fate,
                    "delivered_at": p.delivered_at,
                    "hops": p.hops_taken,
                    "revisited": p.revisited,
                    "path": [[n, t] for n, t in p.path],
                }
                fh.write(json.dumps(rec) + "\n")
    return 0


def cmd_sweep(args) -> int:
    trace = _trace_or_tvcm(args)
    protocols = [sim.ProtocolSpec.parse(p) for p in args.protocols.split(",")]
    seeds = _ints(args.seeds) if args.seeds else [args.seed if args.seed is not None else 0]
    rows = sim.sweep(trace, _floats(args.rates), protocols, seeds, _sim_config(args), _workload(args, 0.0))
    _emit(_table(sim.MetricsReport.HEADER, [r.row() for r in rows]), args.out)
    return 0


def cmd_stabilize_test(args) -> int:
    rng = random.Random(args.seed if args.seed is not None else 0)
    if args.schedule:
        with open(args.schedule, encoding="utf-8") as fh:
            spec = json.load(fh)
        meetings = {tuple(map(int, k.split("-"))): tuple(v) for k, v in spec["meetings"].items()}
        F = int(spec["F"])
        dest = int(spec.get("destination", 0))
        K = int(spec.get("K", default_hops(len({n for k in meetings for n in k} | {dest}))))
    else:
        F, dest, K = args.frame_slots, 0, args.max_hops or default_hops(args.nodes)
        meetings = {}
        while not meetings:
            meetings = protocol.random_schedule(rng, args.nodes, F)
    net = protocol.Network.from_schedule(meetings, dest, K, F)
    for _ in range(args.warmup_frames):
        net.run_frame()
    faults = []
    if args.faults:
        with open(args.faults, encoding="utf-8") as fh:
            faults = protocol.parse_fault_script(fh)
    else:
        protocol.corrupt(net, rng, args.random_faults)
    report = protocol.stabilization_run(net, faults, frames=args.frames)
    header = ["step", "frame", "node", "action", "ladder_top", "c1", "c2", "c3", "c5"] + [f"V{r + 1}" for r in range(1, K + 1)]
    rows = []
    for i, (frame, node, action, top, counts, v) in enumerate(report.rows):
        rows.append([i, frame, "" if node is None else node, "" if action is None else action, top, *counts, *(int(v[r + 1]) for r in range(1, K + 1))])
    _emit(_table(header, rows), args.out)
    summary = (
        f"stabilized_after_frames={report.frames_to_stabilize} stayed={report.stayed} "
        f"variant_monotone={report.variant_monotone} levels_monotone={report.levels_monotone} "
        f"bound_frames={K + 1}"
    )
    print(summary, file=sys.stderr)
    return 0 if report.ok else 1


# --- parser ----------------------------------------------------------------


def _trace_flags(p, required: bool = True) -> None:
    p.add_argument("--trace", required=required, default=None, help="contact trace file")
    p.add_argument("--format", default="pairwise-csv", choices=["pairwise-csv", "haggle-events"])
    p.add_argument("--exclude", default="", help="comma separated node ids to drop (access points)")


def _grid_flags(p) -> None:
    p.add_argument("--slot", default="1h", help="slot length (default 1h)")
    p.add_argument("--frame-slots", type=int, default=24, help="slots per frame (default 24)")
    p.add_argument("--history", type=int, default=5, help="history depth in frames (default 5)")
    p.add_argument("--p-thresh", type=float, default=None, help="drop slot rates below this before estimation")


def _sim_flags(p) -> None:
    _trace_flags(p, required=False)
    p.add_argument("--config", default=None, help="mobility config (JSON) used when no --trace is given")
    p.add_argument("--days", type=int, default=7, help="days of generated mobility (default 7)")
    _grid_flags(p)
    p.add_argument("--destination", type=int, default=None, help="destination id (default: highest id)")
    p.add_argument("--link-rate", type=float, default=sim.SimConfig.link_rate_bps, help="shared channel rate in bit/s")
    p.add_argument("--max-hops", type=int, default=None, help="REAPER hop bound K (default ceil(log2 N)+1)")
    p.add_argument("--packet-size", type=int, default=500)
    p.add_argument("--start", default="2d", help="workload start (default 2d)")
    p.add_argument("--duration", default="86300", help="workload duration (default 86300 s)")
    p.add_argument("--seed", type=int, default=None, help="seed for mobility and workload")
    p.add_argument("--out", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reaper", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="window metrics and characteristic frame of a trace")
    _trace_flags(p)
    p.add_argument("--delta-sweep", default="1h:7d", help="window lengths: lo:hi (doubling), lo:hi:step or a list")
    p.add_argument("--min-path-prob", type=float, default=0.60)
    p.add_argument("--min-connected", type=float, default=0.90)
    p.add_argument("--p-thresh", default="", help="comma separated thresholds: run a threshold study at --frame")
    p.add_argument("--frame", default="1d", help="frame length for the threshold study")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("predict", help="beta-frames of every pair: a,b,z,beta_1..beta_z")
    _trace_flags(p)
    _grid_flags(p)
    p.add_argument("--first-frame", type=int, default=0, help="first history frame")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("generate-trace", help="community mobility trace in pairwise-csv format")
    p.add_argument("--config", default=None, help="JSON mobility config")
    p.add_argument("--nodes", type=int, default=None, help="mobile nodes (default 25)")
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 0)")
    p.add_argument("--dump-config", default=None, help="also write the effective config as JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate_trace)

    p = sub.add_parser("simulate", help="one simulation run")
    _sim_flags(p)
    p.add_argument("--protocol", default="reaper:96h", help="reaper:<deadline>, meed or prophet")
    p.add_argument("--rate", type=float, default=96.0, help="offered load in bit/s")
    p.add_argument("--packets-log", default=None, help="JSON lines, one record per packet fate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="rates x protocols x seeds table")
    _sim_flags(p)
    p.add_argument("--rates", default=",".join(_fmt(r) for r in sim.DEFAULT_RATES))
    p.add_argument("--protocols", default="reaper:96h,reaper:72h,reaper:48h,reaper:24h,meed,prophet")
    p.add_argument("--seeds", default="", help="comma separated seeds (default: --seed)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stabilize-test", help="corrupt a network and trace its convergence")
    p.add_argument("--faults", default=None, help="fault script; random faults when omitted")
    p.add_argument("--schedule", default=None, help="JSON {F, destination, K, meetings: {'a-b': [slots]}}")
    p.add_argument("--nodes", type=int, default=5)
    p.add_argument("--frame-slots", type=int, default=8)
    p.add_argument("--max-hops", type=int, default=None)
    p.add_argument("--random-faults", type=int, default=8)
    p.add_argument("--warmup-frames", type=int, default=1, help="fault-free frames before the faults")
    p.add_argument("--frames", type=int, default=6, help="fault-free frames after the faults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stabilize_test)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"reaper {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
