#!/usr/bin/env python3
"""Run every bundled scenario and print a one-line metrics summary per run.

CSV logs land in --out-dir/<scenario>/. Handy for eyeballing the whole
testbed after a change:

    python scripts/run_all_scenarios.py --out-dir out
"""

import argparse
import sys
import time
from pathlib import Path

from rosetrack.config import parse_config
from rosetrack.harness import export_csv, run_scenario

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("out"))
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    for path in sorted(CONFIG_DIR.glob("*.cfg")):
        overrides = [f"run.seed={args.seed}"] if args.seed is not None else []
        cfg = parse_config(path, overrides)
        start = time.perf_counter()
        result = run_scenario(cfg)
        wall = time.perf_counter() - start
        sub = args.out_dir / path.stem
        sub.mkdir(parents=True, exist_ok=True)
        export_csv(result.track, sub / "track.csv")
        export_csv(result.truth, sub / "truth.csv")
        export_csv(result.scans, sub / "scans.csv")
        export_csv(result.metrics, sub / "metrics.csv")
        m = result.metrics
        print(f"{path.stem:24s} wall={wall:5.1f}s rmse={m.rmse:8.4f} "
              f"stationary={m.mean_error_stationary:8.4f} moving={m.mean_error_moving:8.4f} "
              f"detect={m.detection_distance:7.1f} redetect={m.redetect_latency:6.3f} "
              f"lock={m.initial_lock_time:6.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
