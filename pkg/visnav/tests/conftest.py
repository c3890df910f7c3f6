"""Shared fixtures: one short forest flight and its rendered samples."""

import pytest


@pytest.fixture(scope="session")
def fine_log(tmp_path_factory):
    """Slow, gently wandering explorer flight through the forest.

    Small steps keep the action targets near the network's dropout noise
    floor, which the capacity checks rely on; the heading wander keeps
    the rendered views distinct frame to frame.
    """
    pytest.importorskip("visnav.dataset")
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

    config = MissionConfig(
        iterations=60,
        start=Vec3(0.0, 0.0, -10.0),
        seed=1,
        policy=PolicySpec(
            "random_explorer",
            {"step_length": 0.03, "wander_sd": 0.03, "turn_gain": 0.0},
        ),
        world=WorldSpec(name="forest"),
    )
    records = run_mission(config)
    path = tmp_path_factory.mktemp("logs") / "fine_forest.jsonl"
    write_telemetry(path, records, telemetry_header(config, build_world(config)))
    return path


@pytest.fixture(scope="session")
def fine_samples(fine_log):
    from visnav.dataset import samples_from_telemetry

    return samples_from_telemetry(fine_log, image_size=56)
