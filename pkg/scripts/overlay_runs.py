#!/usr/bin/env python3
"""Overlay repeated missions into an occupancy heatmap and report the
cross-run path consistency score (1.0 = every run visits the same cells).

Runs the same exploration mission once per seed, superposes the
trajectories on a 1 m grid, and writes occupancy.csv / occupancy.svg /
consistency.json to --out.

Usage:
    python3 scripts/overlay_runs.py [--seeds A..B] [--iterations N] [--out DIR]
"""

import argparse
import json
from pathlib import Path

from quadsitl.cli import _parse_seed_range, heatmap_svg, occupancy_csv
from quadsitl.geom import Vec3
from quadsitl.metrics import superpose
from quadsitl.mission import MissionConfig, PolicySpec, WorldSpec, run_mission


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", default="0..4", help="inclusive range A..B")
    parser.add_argument("--iterations", type=int, default=800)
    parser.add_argument("--cell-size", type=float, default=1.0)
    parser.add_argument("--out", default="overlay")
    args = parser.parse_args()

    logs = []
    for seed in _parse_seed_range(args.seeds):
        config = MissionConfig(
            iterations=args.iterations,
            seed=seed,
            start=Vec3(0.0, 0.0, -10.0),
            world=WorldSpec(name="forest"),
            policy=PolicySpec("random_explorer", {"step_length": 4.0}),
        )
        logs.append(run_mission(config))
        print(f"seed {seed}: {len(logs[-1])} records")

    grid, score = superpose(logs, cell_size=args.cell_size)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    occupancy_csv(grid, out_dir / "occupancy.csv")
    (out_dir / "occupancy.svg").write_text(heatmap_svg(grid), encoding="utf-8")
    (out_dir / "consistency.json").write_text(
        json.dumps({"consistency": score, "runs": len(logs)}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"consistency: {score:.6f}")
    print(f"wrote {out_dir}/occupancy.csv, occupancy.svg, consistency.json")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
