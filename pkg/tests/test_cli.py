"""CLI tests: exit codes, machine-parsable errors, bench/render-still commands."""

import subprocess
import sys
import time

import numpy as np
import pytest

from nearport import bundled_scene
from nearport.cli import main
from nearport.images import read_ppm
from tests.conftest import GOLDEN_DIR


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestErrors:
    def test_bad_scene_path(self, capsys, tmp_path):
        code, _, err = run_cli(
            ["render-still", "--scene", "/nope/missing.scene",
             "--out", str(tmp_path / "x.ppm")],
            capsys,
        )
        assert code != 0
        assert err.startswith("error class=")
        assert "\n" not in err.strip()

    def test_scene_parse_error_class(self, capsys, tmp_path):
        bad = tmp_path / "bad.scene"
        bad.write_text("wedge = 1\n")
        code, _, err = run_cli(
            ["render-still", "--scene", str(bad), "--out", str(tmp_path / "x.ppm")],
            capsys,
        )
        assert code != 0
        assert "class=ParseError" in err

    def test_invalid_pose_matrix(self, capsys, tmp_path):
        pose = ",".join(["0"] * 16)
        code, _, err = run_cli(
            ["render-still", "--scene", str(bundled_scene("box.scene")),
             "--pose", pose, "--out", str(tmp_path / "x.ppm")],
            capsys,
        )
        assert code != 0
        assert "class=InvariantViolation" in err

    def test_malformed_trace_row_numbered(self, capsys, tmp_path):
        trace = tmp_path / "t.csv"
        trace.write_text("t_ms,tx,ty,tz,qx,qy,qz,qw\n0,0,0,0,0,0,0,1\nbroken\n")
        code, _, err = run_cli(
            ["replay", "--trace", str(trace), "--port", "1", "--out", str(tmp_path)],
            capsys,
        )
        assert code != 0
        assert "class=TraceError" in err and "row 3" in err


class TestRenderStill:
    def test_matches_bundled_golden(self, capsys, tmp_path):
        out = tmp_path / "still.ppm"
        code, stdout, _ = run_cli(
            ["render-still", "--scene", str(bundled_scene("box.scene")),
             "--out", str(out), "--width", "64", "--height", "48",
             "--fx", "60", "--fy", "60", "--cx", "32", "--cy", "24"],
            capsys,
        )
        assert code == 0
        golden = (GOLDEN_DIR / "box_64x48.ppm").read_bytes()
        assert out.read_bytes() == golden

    def test_empty_scene_gives_background(self, capsys, tmp_path):
        scene = tmp_path / "bg.scene"
        scene.write_text("background = 0.5 0.25 1.0\ncrop = -1 -1 -1 1 1 1\n")
        out = tmp_path / "bg.ppm"
        code, _, _ = run_cli(
            ["render-still", "--scene", str(scene), "--out", str(out),
             "--width", "8", "--height", "6"],
            capsys,
        )
        assert code == 0
        rgb = read_ppm(out)
        assert np.all(rgb == np.round(255 * np.array([0.5, 0.25, 1.0])))

    def test_png_output(self, capsys, tmp_path):
        out = tmp_path / "still.png"
        code, _, _ = run_cli(
            ["render-still", "--scene", str(bundled_scene("box.scene")),
             "--out", str(out), "--width", "16", "--height", "12"],
            capsys,
        )
        assert code == 0
        from PIL import Image

        assert Image.open(out).size == (16, 12)


class TestBenchCommand:
    def test_deterministic_across_runs(self, capsys, tmp_path):
        args = ["bench", "--duration-ms", "3000", "--delay-ms", "80",
                "--jitter-ms", "30", "--render-ms", "30:40", "--seed", "7",
                "--net-seed", "7"]
        code, _, _ = run_cli(args + ["--out", str(tmp_path / "a")], capsys)
        assert code == 0
        code, _, _ = run_cli(args + ["--out", str(tmp_path / "b")], capsys)
        assert code == 0
        for name in ("frames.csv", "fps_series.csv", "summary.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_headline_numbers_printed(self, capsys, tmp_path):
        code, out, _ = run_cli(
            ["bench", "--duration-ms", "3000", "--delay-ms", "100",
             "--out", str(tmp_path)],
            capsys,
        )
        assert code == 0
        assert "steady_fps" in out and "steady_mean_rtl" in out

    def test_config_file_with_flag_override(self, capsys, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text("duration_ms = 2000\ndelay_ms = 50\nseed = 3\n")
        out_a = tmp_path / "a"
        code, _, _ = run_cli(
            ["--config", str(cfg), "bench", "--out", str(out_a)], capsys
        )
        assert code == 0
        text = (out_a / "summary.txt").read_text()
        assert "duration_ms=2000.0" in text
        assert "delay_up_ms=50.0" in text
        # Flag wins over file value.
        out_b = tmp_path / "b"
        code, _, _ = run_cli(
            ["--config", str(cfg), "bench", "--delay-ms", "75", "--out", str(out_b)],
            capsys,
        )
        assert code == 0
        assert "delay_up_ms=75.0" in (out_b / "summary.txt").read_text()

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text("warp_factor = 9\n")
        code, _, err = run_cli(["--config", str(cfg), "bench"], capsys)
        assert code != 0
        assert "class=CliError" in err


class TestReplayCommand:
    def test_replay_against_live_server(self, capsys, tmp_path):
        from nearport.geometry import CameraIntrinsics
        from nearport.renderer import TestPatternRenderer
        from nearport.server import NearportServer, ServerConfig

        config = ServerConfig(
            intrinsics=CameraIntrinsics(16, 12, 10.0, 10.0, 8.0, 6.0),
            renderer_factory=lambda label: TestPatternRenderer(label, 5.0),
        )
        server = NearportServer(config, tcp_port=0, ws_port=0)
        server.start()
        trace = tmp_path / "trace.csv"
        trace.write_text(
            "t_ms,tx,ty,tz,qx,qy,qz,qw\n0,0,0,0,0,0,0,1\n1000,0.1,0,0,0,0,0,1\n"
        )
        out = tmp_path / "out"
        try:
            code, stdout, _ = run_cli(
                ["replay", "--trace", str(trace), "--port", str(server.tcp_port),
                 "--rate", "60", "--labels", "0,1", "--out", str(out)],
                capsys,
            )
        finally:
            server.shutdown()
        assert code == 0
        assert (out / "metrics_label0.csv").exists()
        assert (out / "metrics_label1.csv").exists()
        assert (out / "summary.txt").exists()
        assert "label0:" in stdout and "aggregate:" in stdout

    def test_inject_delay_raises_measured_rtl(self, capsys, tmp_path):
        from nearport.geometry import CameraIntrinsics
        from nearport.metrics import MetricsLog
        from nearport.renderer import TestPatternRenderer
        from nearport.server import NearportServer, ServerConfig

        config = ServerConfig(
            intrinsics=CameraIntrinsics(16, 12, 10.0, 10.0, 8.0, 6.0),
            renderer_factory=lambda label: TestPatternRenderer(label, 2.0),
        )
        server = NearportServer(config, tcp_port=0, ws_port=0)
        server.start()
        trace = tmp_path / "trace.csv"
        trace.write_text("t_ms,tx,ty,tz,qx,qy,qz,qw\n0,0,0,0,0,0,0,1\n800,0,0,0,0,0,0,1\n")
        out = tmp_path / "out"
        try:
            code, _, _ = run_cli(
                ["replay", "--trace", str(trace), "--port", str(server.tcp_port),
                 "--labels", "0", "--inject-delay-ms", "50", "--out", str(out)],
                capsys,
            )
        finally:
            server.shutdown()
        assert code == 0
        log = MetricsLog.import_csv(out / "metrics_label0.csv")
        mean_rtl = sum(s.rtl_ms for s in log.samples()) / len(log)
        assert mean_rtl >= 45.0  # shaped uplink shows up in measured RTL

    def test_connection_refused_reports_error(self, capsys, tmp_path):
        trace = tmp_path / "trace.csv"
        trace.write_text("t_ms,tx,ty,tz,qx,qy,qz,qw\n0,0,0,0,0,0,0,1\n")
        code, _, err = run_cli(
            ["replay", "--trace", str(trace), "--port", "1", "--out", str(tmp_path)],
            capsys,
        )
        assert code != 0
        assert "error class=" in err


class TestServeEnvOverride:
    def test_nearport_listen_env(self, monkeypatch, capsys):
        captured = {}

        class FakeServer:
            def __init__(self, config, host, tcp_port, ws_port, viewer_dir):
                captured.update(host=host, tcp_port=tcp_port)
                self.tcp_port, self.ws_port = tcp_port, ws_port

            def start(self):
                pass

            def serve_forever(self):
                pass

        monkeypatch.setenv("NEARPORT_LISTEN", "0.0.0.0:9123")
        monkeypatch.setattr("nearport.cli.NearportServer", FakeServer)
        code, _, _ = run_cli(["serve", "--renderer", "pattern"], capsys)
        assert code == 0
        assert captured == {"host": "0.0.0.0", "tcp_port": 9123}


@pytest.mark.slow
class TestServeSubprocess:
    def test_serve_starts_and_accepts(self, tmp_path):
        proc = subprocess.Popen(
            [sys.executable, "-m", "nearport.cli", "serve",
             "--renderer", "pattern", "--render-ms", "5",
             "--port", "0", "--ws-port", "0",
             "--width", "16", "--height", "12"],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
        )
        try:
            line = ""
            deadline = time.monotonic() + 10.0
            while time.monotonic() < deadline:
                line = proc.stdout.readline()
                if line.startswith("listening tcp="):
                    break
            assert line.startswith("listening tcp=")
            tcp_port = int(line.split("tcp=")[1].split()[0])
            from nearport.protocol import HelloMessage, decode_message, encode_message
            from nearport.transport import connect_tcp

            transport = connect_tcp("127.0.0.1", tcp_port)
            transport.send_message(encode_message(HelloMessage("smoke", (0,))))
            msg = decode_message(transport.recv_message())
            assert msg.viewpoint_label == 0
            transport.close()
        finally:
            proc.terminate()
            proc.wait(timeout=5)

    def test_serve_bad_scene_exits_nonzero(self):
        proc = subprocess.run(
            [sys.executable, "-m", "nearport.cli", "serve",
             "--renderer", "raymarch", "--scene", "/missing.scene", "--port", "0"],
            capture_output=True, text=True, timeout=30,
        )
        assert proc.returncode != 0
        assert "error class=" in proc.stderr
