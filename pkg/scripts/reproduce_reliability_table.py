#!/usr/bin/env python3
"""Fly a batch of missions across the three worlds and print the summary
table (interventions, reliability, duration, distance, behaviour).

Usage:
    python3 scripts/reproduce_reliability_table.py [--iterations N] [--out DIR]

Writes one telemetry log per mission when --out is given.
"""

import argparse
from pathlib import Path

from quadsitl.cli import render_table, summary_payload
from quadsitl.geom import Vec3
from quadsitl.mission import (
    MissionConfig,
    PolicySpec,
    WorldSpec,
    build_world,
    run_mission,
    telemetry_header,
    write_telemetry,
)

# long carrot, low heading jitter, late avoidance: brisk forward flight
# that still threads close enough to trunks to collect interventions
EXPLORER = {
    "step_length": 10.0,
    "wander_sd": 0.02,
    "avoid_range": 3.0,
    "turn_gain": 0.4,
}


def mission_matrix(iterations: int) -> list[tuple[str, MissionConfig]]:
    rows = []
    for seed in range(4):
        rows.append(
            (
                f"forest_seed{seed}",
                MissionConfig(
                    iterations=iterations,
                    seed=seed,
                    start=Vec3(0.0, 0.0, -10.0),
                    world=WorldSpec(name="forest"),
                    policy=PolicySpec("random_explorer", dict(EXPLORER)),
                ),
            )
        )
    rows.append(
        (
            "mountain_seed0",
            MissionConfig(
                iterations=iterations,
                seed=0,
                start=Vec3(70.0, -450.0, -12.0),
                world=WorldSpec(name="snowy_mountain"),
                policy=PolicySpec("random_explorer", dict(EXPLORER)),
            ),
        )
    )
    rows.append(
        (
            "plain_seed0",
            MissionConfig(
                iterations=iterations,
                seed=0,
                start=Vec3(0.0, 0.0, -10.0),
                world=WorldSpec(name="plain_field"),
                policy=PolicySpec(
                    "waypoint_list",
                    {"waypoints": [[60.0, 0.0, -10.0], [60.0, 60.0, -10.0]],
                     "step_length": 25.0},
                ),
            ),
        )
    )
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=1500)
    parser.add_argument("--out", default=None, help="directory for telemetry logs")
    args = parser.parse_args()

    table_rows = []
    for name, config in mission_matrix(args.iterations):
        records = run_mission(config)
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            header = telemetry_header(config, build_world(config))
            write_telemetry(out_dir / f"{name}.jsonl", records, header)
        table_rows.append((name, summary_payload(records)))
    print(render_table(table_rows))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
