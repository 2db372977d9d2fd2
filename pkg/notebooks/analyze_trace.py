"""Window metrics, characteristic frame and beta-frames of a synthetic trace.

    python notebooks/analyze_trace.py
"""

from reaper.analysis import characteristic_frame, threshold_study
from reaper.mobility import TvcmConfig, generate_trace
from reaper.predict import beta_frames_for_trace
from reaper.trace import SlotGrid

HOUR = 3600.0


def main() -> None:
    cfg = TvcmConfig()
    trace = generate_trace(cfg, 7)
    print(f"{len(trace)} contacts, {len(trace.nodes)} nodes")

    sweep = [24 * HOUR * 2.0**k for k in range(-4, 3)]
    chosen, rows = characteristic_frame(trace, sweep)
    print("delta_h  avg_link  connected  avg_path  diameter")
    for m in rows:
        print(f"{m.window_len_delta / HOUR:7.1f}  {m.avg_link_prob:8.3f}  {m.connected_link_fraction:9.3f}  {m.avg_path_prob:8.3f}  {m.diameter_hops:8d}")
    print(f"characteristic frame: {chosen / HOUR if chosen else None} h")

    for m in threshold_study(trace, 24 * HOUR, [0.0, 0.35, 0.7]):
        print(f"p_thresh {m.p_thresh:.2f}: connected {m.connected_link_fraction:.3f}, diameter {m.diameter_hops}")

    grid = SlotGrid.for_trace(trace, HOUR, 24, 5)
    frames = beta_frames_for_trace(trace, grid)
    for (a, b), beta in sorted(frames.items())[:5]:
        print(f"beta-frame of pair ({a}, {b}): {beta.betas}")


if __name__ == "__main__":
    main()
