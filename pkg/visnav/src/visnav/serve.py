"""Policy server speaking the simulator's wire protocol.

One JSON object per line in, one per line out. Each request carries the
vehicle state and range fan (and optionally a client-rendered image);
the response is the seven-value action with the quaternion renormalized
to unit before sending. A malformed request gets an {"error": ...} line
and the connection stays open.

The view fed to the network comes from, in order of preference: the
request's own image, a render of the checkpoint's world geometry from
the request pose, or the banded range-fan fallback.

CLI:
    visnav-serve --checkpoint ckpt.pt [--host H] [--port N]
"""

from __future__ import annotations

import argparse
import base64
import json
import math
import socket
import sys
import threading

import numpy as np
import torch

from quadsitl.geom import Quaternion, Vec3, to_euler
from quadsitl.world import World, generate_world

from .dataset import channel_mean_subtract
from .model import TwoBranchPolicyNet
from .rasterize import rasterize, rasterize_rays
from .train import load_checkpoint

QUATERNION_FLOOR = 1e-8  # below this the head has no direction yet; send identity


def world_from_params(params: dict | None) -> World | None:
    if not params:
        return None
    return generate_world(
        params["name"],
        int(params["seed"]),
        center=Vec3(*params.get("center", (0.0, 0.0, 0.0))),
        size=float(params.get("size", 200.0)),
    )


def decode_image_b64(text: str, size: int) -> np.ndarray:
    """Raw little-endian float32 pixels, HxWx3 row-major, base64-wrapped."""
    raw = np.frombuffer(base64.b64decode(text), dtype="<f4")
    expected = size * size * 3
    if raw.size != expected:
        raise ValueError(f"image payload holds {raw.size} floats, "
                         f"expected {expected}")
    return raw.reshape(size, size, 3).copy()


class PolicyServer:
    """Blocking accept loop on a background thread.

    Serves one connection at a time, requests answered in arrival order,
    which matches the simulator's lockstep request/response cadence.
    """

    def __init__(
        self,
        model: TwoBranchPolicyNet,
        *,
        world: World | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.model = model.eval()
        self.world = world
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(1)
        self._sock.settimeout(0.2)  # lets the accept loop notice stop()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._active: socket.socket | None = None

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    def start(self) -> "PolicyServer":
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._active is not None:
            try:
                self._active.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        self._sock.close()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            self._active = conn
            with conn:
                reader = conn.makefile("r", encoding="utf-8", newline="\n")
                while not self._stop.is_set():
                    try:
                        line = reader.readline()
                    except OSError:
                        break
                    if not line:
                        break  # client hung up; go accept the next one
                    try:
                        conn.sendall(
                            (self.respond(line) + "\n").encode("utf-8")
                        )
                    except OSError:
                        break
            self._active = None

    def _view(self, payload: dict) -> np.ndarray:
        size = self.model.image_size
        if "image_b64" in payload:
            return decode_image_b64(payload["image_b64"], size)
        state = payload["state"]
        if self.world is not None:
            position = Vec3(*state["p"])
            yaw = to_euler(Quaternion(*state["q"])).yaw
            return rasterize(position, yaw, self.world, size=size)
        return rasterize_rays(payload["rays"], size=size)

    def respond(self, line: str) -> str:
        try:
            payload = json.loads(line)
            if not isinstance(payload, dict):
                raise ValueError("request must be a JSON object")
            image = channel_mean_subtract(self._view(payload))
        except (ValueError, KeyError, TypeError) as exc:
            return json.dumps({"error": f"bad request: {exc}"})

        x = torch.from_numpy(image.transpose(2, 0, 1)[None, :])
        with torch.no_grad():
            action = self.model.predict(x)[0].tolist()
        q = action[3:]
        norm = math.hypot(*q)
        if norm < QUATERNION_FLOOR or not math.isfinite(norm):
            q = [1.0, 0.0, 0.0, 0.0]
        else:
            q = [c / norm for c in q]
        return json.dumps(
            {"dN": action[0], "dE": action[1], "dD": action[2], "q": q},
            separators=(",", ":"),
        )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=5005)
    args = parser.parse_args(argv)

    try:
        model, meta = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        print(f"cannot load checkpoint: {exc}", file=sys.stderr)
        return 1
    world = world_from_params(meta.get("world_params"))
    server = PolicyServer(model, world=world, host=args.host, port=args.port)
    source = "world render" if world is not None else "range-fan fallback"
    print(f"serving on {args.host}:{server.port} ({source})")
    server.start()
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
