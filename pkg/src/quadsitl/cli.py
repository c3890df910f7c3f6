"""Command-line front end.

Subcommands: run, replay, analyze, superpose, serve-check.
Exit codes: 0 success, 1 usage or config error, 2 mission abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import socket
import sys
from pathlib import Path

from .geom import Vec3
from .metrics import (
    OccupancyGrid,
    classify_behaviour,
    count_interventions,
    dispersion_stats,
    infer_dt,
    reliability,
    superpose,
    total_distance,
)
from .mission import (
    ConfigError,
    MissionAbort,
    MissionConfig,
    TelemetryRecord,
    build_world,
    config_from_dict,
    record_from_dict,
    run_mission,
    telemetry_header,
    write_telemetry,
)
from .policy import PolicyError, decode_response, encode_request, Observation
from .dynamics import initial_state
from .sensors import ImuReading

CORRUPT_LINE_BUDGET = 0.01  # tolerated fraction of unparseable lines per log


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors by default; 2 means mission abort
    here, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_code_on_error(message))

    def exit_code_on_error(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return 1


def _apply_override(raw: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override '{assignment}' is not key=value")
    dotted, text = assignment.split("=", 1)
    keys = dotted.split(".")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text  # bare strings need no quoting on the command line
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path '{dotted}' crosses a non-object value")
    node[keys[-1]] = value


def _load_raw_config(args) -> dict:
    if args.config is not None:
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    else:
        raw = {}
    for assignment in args.set or []:
        _apply_override(raw, assignment)
    if getattr(args, "iterations", None) is not None:
        raw["iterations"] = args.iterations
    return raw


def _parse_seed_range(text: str) -> list[int]:
    if ".." not in text:
        raise ConfigError(f"seed range '{text}' must look like A..B")
    lo_text, hi_text = text.split("..", 1)
    try:
        lo, hi = int(lo_text), int(hi_text)
    except ValueError as exc:
        raise ConfigError(f"seed range '{text}' must be integers") from exc
    if hi < lo:
        raise ConfigError(f"seed range '{text}' is empty")
    return list(range(lo, hi + 1))


def summary_payload(records: list[TelemetryRecord]) -> dict:
    """Summary dict shared by `run` and `analyze` so the two agree byte for
    byte on the same log. Short logs degrade to behaviour "unknown"."""
    n = len(records)
    interventions = count_interventions(records)
    distance = total_distance(records) if n >= 2 else 0.0
    dt = infer_dt(records) if n >= 2 else 0.0
    duration = n * dt
    try:
        behaviour = classify_behaviour(records)
    except ValueError:
        behaviour = "unknown"
    if interventions == 0 and (distance == 0.0 or behaviour == "hovering"):
        score = None
    elif distance > 0.0:
        score = reliability(distance, interventions)
    else:
        score = 0.0
    if n >= 2:
        stats = dispersion_stats(records)
        y_var, rms = stats.y_delta_variance, stats.heading_change_rms
    else:
        y_var, rms = 0.0, 0.0
    return {
        "records": n,
        "interventions": interventions,
        "reliability": score,
        "duration_s": duration,
        "duration_min": duration / 60.0,
        "distance_m": distance,
        "behaviour": behaviour,
        "y_delta_variance": y_var,
        "heading_change_rms": rms,
    }


def _write_summary(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _run_one(config: MissionConfig, out_dir: Path, stem: str) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"{stem}.jsonl"
    header = telemetry_header(config, build_world(config))
    try:
        records = run_mission(config)
    except MissionAbort as abort:
        write_telemetry(log_path, abort.records, header, fault=abort.fault)
        _write_summary(out_dir / f"{stem}.summary.json", summary_payload(abort.records))
        print(f"mission aborted: {abort.fault}", file=sys.stderr)
        return 2
    write_telemetry(log_path, records, header)
    _write_summary(out_dir / f"{stem}.summary.json", summary_payload(records))
    print(log_path)
    return 0


def cmd_run(args) -> int:
    raw = _load_raw_config(args)
    out_dir = Path(args.out)
    if args.seeds is not None:
        for seed in _parse_seed_range(args.seeds):
            raw["seed"] = seed
            code = _run_one(config_from_dict(raw), out_dir, f"mission_seed{seed}")
            if code != 0:
                return code
        return 0
    if args.seed is not None:
        raw["seed"] = args.seed
    config = config_from_dict(raw)
    return _run_one(config, out_dir, f"mission_seed{config.seed}")


def cmd_replay(args) -> int:
    log_path = Path(args.log)
    raw = _load_raw_config(args)
    if args.config is None:
        # reconstruct the flight envelope from the source log's header
        try:
            with open(log_path, "r", encoding="utf-8") as fh:
                first = json.loads(fh.readline())
            body_lines = sum(1 for _ in open(log_path, "r", encoding="utf-8")) - 1
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read log {log_path}: {exc}") from exc
        if "schema" not in first:
            raise ConfigError(f"{log_path}: missing telemetry header line")
        raw.setdefault("dt", first.get("dt", 0.05))
        raw.setdefault("seed", first.get("seed", 0))
        raw.setdefault("start", first.get("start", [0.0, 0.0, 0.0]))
        raw.setdefault("world", {"name": first.get("world", "plain_field")})
        raw.setdefault("iterations", max(1, body_lines))
    raw["policy"] = {"kind": "replay", "path": str(log_path)}
    config = config_from_dict(raw)
    return _run_one(config, Path(args.out), f"replay_{log_path.stem}")


def load_tolerant(path: Path) -> tuple[list[TelemetryRecord], int, int]:
    """Read a telemetry log, skipping corrupt lines with a warning.

    Returns (records, corrupt_count, total_line_count)."""
    records: list[TelemetryRecord] = []
    corrupt = 0
    total = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                payload = json.loads(line)
                if not isinstance(payload, dict):
                    raise ValueError("line is not an object")
                if "schema" in payload or "fault" in payload:
                    continue
                records.append(record_from_dict(payload))
            except (ValueError, KeyError, TypeError) as exc:
                corrupt += 1
                print(f"warning: {path}:{lineno}: skipping corrupt line ({exc})",
                      file=sys.stderr)
    return records, corrupt, total


def _dash(value: float | None, fmt: str) -> str:
    return "-" if value is None else format(value, fmt)


def render_table(rows: list[tuple[str, dict]]) -> str:
    header = ("Log", "NI", "Reliability", "Duration", "Distance (m)", "Behaviour")
    body = []
    for name, s in rows:
        body.append(
            (
                name,
                str(s["interventions"]),
                _dash(s["reliability"], ".2f"),
                f"{s['duration_min']:.2f} min",
                f"{s['distance_m']:.2f}",
                s["behaviour"],
            )
        )
    widths = [
        max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i])
        for i in range(len(header))
    ]
    lines = []
    for row in [header] + body:
        cells = [row[0].ljust(widths[0])]
        cells += [row[i].rjust(widths[i]) for i in range(1, 5)]
        cells.append(row[5])
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def cmd_analyze(args) -> int:
    rows = []
    worst = 0
    for log in args.logs:
        path = Path(log)
        if not path.exists():
            print(f"error: no such log {path}", file=sys.stderr)
            return 1
        records, corrupt, total = load_tolerant(path)
        if not records:
            print(f"error: {path} holds no readable records", file=sys.stderr)
            return 1
        if total and corrupt / total > CORRUPT_LINE_BUDGET:
            print(
                f"error: {path}: {corrupt}/{total} lines corrupt, over the "
                f"{CORRUPT_LINE_BUDGET:.0%} budget",
                file=sys.stderr,
            )
            worst = 1
        payload = summary_payload(records)
        out_dir = Path(args.out) if args.out else path.parent
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_summary(out_dir / f"{path.stem}.summary.json", payload)
        rows.append((path.name, payload))
    print(render_table(rows))
    return worst


def occupancy_csv(grid: OccupancyGrid, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in grid.counts:
            writer.writerow([int(v) for v in row])


def heatmap_svg(grid: OccupancyGrid) -> str:
    """Static heatmap, north up: one rect per visited cell, shaded by how
    many runs passed through."""
    rows, cols = grid.counts.shape
    cell = max(2, min(12, 720 // max(rows, cols)))
    width, height = cols * cell, rows * cell
    peak = int(grid.counts.max()) or 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for i in range(rows):
        for j in range(cols):
            count = int(grid.counts[i, j])
            if count == 0:
                continue
            # north axis points up the page: last row index at the top
            y = (rows - 1 - i) * cell
            shade = 255 - int(205 * count / peak) - 50
            parts.append(
                f'<rect x="{j * cell}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_superpose(args) -> int:
    logs = []
    frames = set()
    for log in args.logs:
        path = Path(log)
        records, corrupt, total = load_tolerant(path)
        if not records:
            print(f"error: {path} holds no readable records", file=sys.stderr)
            return 1
        with open(path, "r", encoding="utf-8") as fh:
            first = json.loads(fh.readline())
        if "schema" in first and "world" in first:
            frames.add((first["world"], tuple(first.get("start", ()))))
        logs.append(records)
    if len(frames) > 1:
        print(f"error: logs come from different world frames: {sorted(frames)}",
              file=sys.stderr)
        return 1
    try:
        grid, score = superpose(logs, cell_size=args.cell_size)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    occupancy_csv(grid, out_dir / "occupancy.csv")
    (out_dir / "occupancy.svg").write_text(heatmap_svg(grid), encoding="utf-8")
    payload = {
        "consistency": score,
        "runs": len(logs),
        "cell_size": grid.cell_size,
        "origin": list(grid.origin.as_tuple()),
        "shape": list(grid.counts.shape),
    }
    (out_dir / "consistency.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
    print(f"consistency: {score:.6f}")
    return 0


def canonical_probe_request() -> str:
    state = initial_state(Vec3(0.0, 0.0, -10.0))
    imu = ImuReading(
        gyro=Vec3(0.0, 0.0, 0.0),
        accel=Vec3(0.0, 0.0, -9.81),
        mag=Vec3(1.0, 0.0, 0.0),
        time=0.0,
    )
    observation = Observation(
        state=state, imu=imu, range_sensors=(50.0,) * 8, iteration=0
    )
    return encode_request(observation)


def cmd_serve_check(args) -> int:
    request = canonical_probe_request()
    try:
        with socket.create_connection((args.host, args.port), timeout=args.timeout) as conn:
            conn.settimeout(args.timeout)
            conn.sendall((request + "\n").encode("utf-8"))
            reader = conn.makefile("r", encoding="utf-8")
            line = reader.readline()
    except socket.timeout:
        print("serve-check failed: timeout", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"serve-check failed: cannot connect ({exc})", file=sys.stderr)
        return 1
    if not line:
        print("serve-check failed: server closed the connection", file=sys.stderr)
        return 1
    try:
        output = decode_response(line)
    except PolicyError as exc:
        cause = "timeout" if "timed out" in str(exc) else str(exc)
        print(f"serve-check failed: {cause}", file=sys.stderr)
        return 1
    print(
        "serve-check ok: "
        f"dN={output.dn:.3f} dE={output.de:.3f} dD={output.dd:.3f}"
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="quadsitl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_config_flags(p, with_iterations=True):
        p.add_argument("--config", help="mission config JSON path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config field via dotted path (repeatable)",
        )
        if with_iterations:
            p.add_argument("--iterations", type=int, help="override iteration count")

    p_run = sub.add_parser("run", help="fly one mission and write telemetry")
    add_config_flags(p_run)
    p_run.add_argument("--seed", type=int, help="mission seed")
    p_run.add_argument("--seeds", help="inclusive seed range A..B, one run each")
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="re-fly the policy outputs of a log")
    p_replay.add_argument("log", help="source telemetry JSONL")
    add_config_flags(p_replay)
    p_replay.set_defaults(func=cmd_replay)

    p_analyze = sub.add_parser("analyze", help="summarize telemetry logs as a table")
    p_analyze.add_argument("logs", nargs="+", help="telemetry JSONL paths")
    p_analyze.add_argument("--out", default=None, help="directory for summary JSON")
    p_analyze.set_defaults(func=cmd_analyze)

    p_super = sub.add_parser(
        "superpose", help="overlay runs into an occupancy heatmap"
    )
    p_super.add_argument("logs", nargs="+", help="two or more telemetry JSONL paths")
    p_super.add_argument("--out", default=".", help="output directory")
    p_super.add_argument("--cell-size", type=float, default=1.0)
    p_super.set_defaults(func=cmd_superpose)

    p_check = sub.add_parser(
        "serve-check", help="probe a remote policy server for protocol conformance"
    )
    p_check.add_argument("--host", default="127.0.0.1")
    p_check.add_argument("--port", type=int, required=True)
    p_check.add_argument("--timeout", type=float, default=1.0)
    p_check.set_defaults(func=cmd_serve_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MissionAbort as exc:
        print(f"mission aborted: {exc.fault}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
