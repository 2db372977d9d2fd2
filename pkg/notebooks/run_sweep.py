"""Default protocol sweep on a 7-day community mobility trace.

    python notebooks/run_sweep.py [--rates 96,9600] [--out sweep.csv]
"""

import argparse
import csv
import sys

from reaper.mobility import TvcmConfig, generate_trace
from reaper.sim import DEFAULT_PROTOCOLS, DEFAULT_RATES, MetricsReport, SimConfig, sweep


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rates", default=",".join(str(r) for r in DEFAULT_RATES))
    ap.add_argument("--days", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = TvcmConfig(rng_seed=args.seed)
    trace = generate_trace(cfg, args.days)
    rates = [float(r) for r in args.rates.split(",")]
    rows = sweep(trace, rates, DEFAULT_PROTOCOLS, config=SimConfig(destination=cfg.station_id))

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(MetricsReport.HEADER)
    for r in rows:
        w.writerow(r.row())
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
