"""Wire-protocol server: responses, error recovery, view fallbacks."""

import base64
import json
import math
import socket
import time

import numpy as np
import pytest

torch = pytest.importorskip("torch")
pytest.importorskip("visnav.model")

from quadsitl.cli import main as quadsitl_main
from quadsitl.geom import Vec3

from visnav.dataset import channel_mean_subtract
from visnav.model import TwoBranchPolicyNet
from visnav.rasterize import rasterize, rasterize_rays
from visnav.serve import PolicyServer, decode_image_b64, world_from_params


def fresh_model(size=56):
    torch.manual_seed(3)
    return TwoBranchPolicyNet(image_size=size)


def request_line(**extra):
    payload = {
        "iteration": 0,
        "state": {
            "p": [0.0, 0.0, -10.0],
            "v": [0.0, 0.0, 0.0],
            "q": [1.0, 0.0, 0.0, 0.0],
            "omega": [0.0, 0.0, 0.0],
        },
        "rays": [50.0] * 8,
    }
    payload.update(extra)
    return json.dumps(payload)


def exchange(server, *lines):
    with socket.create_connection(("127.0.0.1", server.port), timeout=5) as conn:
        stream = conn.makefile("rw", encoding="utf-8", newline="\n")
        answers = []
        for line in lines:
            stream.write(line + "\n")
            stream.flush()
            answers.append(json.loads(stream.readline()))
    return answers


def local_forward(model, image):
    x = torch.from_numpy(channel_mean_subtract(image).transpose(2, 0, 1)[None, :])
    with torch.no_grad():
        return model.predict(x)[0]


@pytest.fixture()
def server():
    srv = PolicyServer(fresh_model(), world=None).start()
    yield srv
    srv.stop()


class TestResponses:
    def test_seven_value_response_with_unit_quaternion(self, server):
        (resp,) = exchange(server, request_line())
        assert sorted(resp) == ["dD", "dE", "dN", "q"]
        assert len(resp["q"]) == 4
        assert math.hypot(*resp["q"]) == pytest.approx(1.0, abs=1e-9)

    def test_identical_requests_identical_answers(self, server):
        first, second = exchange(server, request_line(), request_line())
        assert first == second

    def test_rays_fallback_matches_local_forward(self, server):
        (resp,) = exchange(server, request_line())
        action = local_forward(server.model, rasterize_rays([50.0] * 8, size=56))
        assert resp["dN"] == pytest.approx(action[0].item())
        assert resp["dE"] == pytest.approx(action[1].item())
        assert resp["dD"] == pytest.approx(action[2].item())

    def test_client_supplied_image_wins(self, server):
        rng = np.random.default_rng(0)
        img = rng.uniform(0.0, 1.0, size=(56, 56, 3)).astype("<f4")
        encoded = base64.b64encode(img.tobytes()).decode("ascii")
        (resp,) = exchange(server, request_line(image_b64=encoded))
        action = local_forward(server.model, img)
        assert resp["dN"] == pytest.approx(action[0].item())
        assert resp["dD"] == pytest.approx(action[2].item())

    def test_world_render_used_when_available(self):
        world = world_from_params(
            {"name": "forest", "seed": 3, "center": [0.0, 0.0, -10.0],
             "size": 200.0}
        )
        srv = PolicyServer(fresh_model(), world=world).start()
        try:
            (resp,) = exchange(srv, request_line())
            action = local_forward(
                srv.model, rasterize(Vec3(0.0, 0.0, -10.0), 0.0, world, size=56)
            )
            assert resp["dN"] == pytest.approx(action[0].item())
        finally:
            srv.stop()


class TestErrorRecovery:
    def test_malformed_then_valid_on_one_connection(self, server):
        bad, good = exchange(server, "this is not json", request_line())
        assert "bad request" in bad["error"]
        assert sorted(good) == ["dD", "dE", "dN", "q"]

    def test_non_object_request_rejected(self, server):
        (resp,) = exchange(server, "[1, 2, 3]")
        assert "error" in resp

    def test_missing_rays_rejected_without_world(self, server):
        payload = json.loads(request_line())
        del payload["rays"]
        (resp,) = exchange(server, json.dumps(payload))
        assert "error" in resp

    def test_wrong_image_payload_size_rejected(self, server):
        encoded = base64.b64encode(b"\x00" * 12).decode("ascii")
        (resp,) = exchange(server, request_line(image_b64=encoded))
        assert "floats" in resp["error"]


class TestLifecycle:
    def test_conformance_probe_passes(self, server, capsys):
        assert quadsitl_main(["serve-check", "--port", str(server.port)]) == 0
        assert "serve-check ok" in capsys.readouterr().out

    def test_sequential_connections_are_served(self, server):
        (first,) = exchange(server, request_line())
        (second,) = exchange(server, request_line())
        assert first == second

    def test_stop_returns_promptly_with_an_idle_client(self):
        srv = PolicyServer(fresh_model(), world=None).start()
        conn = socket.create_connection(("127.0.0.1", srv.port), timeout=5)
        try:
            time.sleep(0.3)  # let the accept loop adopt the connection
            began = time.monotonic()
            srv.stop()
            assert time.monotonic() - began < 2.0
        finally:
            conn.close()


def test_decode_rejects_wrong_length():
    with pytest.raises(ValueError, match="floats"):
        decode_image_b64(base64.b64encode(b"\x00" * 16).decode("ascii"), 56)


def test_decode_round_trips_pixels():
    rng = np.random.default_rng(1)
    img = rng.uniform(0.0, 1.0, size=(8, 8, 3)).astype("<f4")
    encoded = base64.b64encode(img.tobytes()).decode("ascii")
    assert np.array_equal(decode_image_b64(encoded, 8), img)


def test_serve_cli_rejects_missing_checkpoint(tmp_path, capsys):
    from visnav.serve import main

    rc = main(["--checkpoint", str(tmp_path / "missing.pt")])
    assert rc == 1
    assert "cannot load checkpoint" in capsys.readouterr().err
