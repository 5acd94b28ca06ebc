import json
import os
import signal
import subprocess
import sys
import time

import pytest
import requests

from dirmon.cli import main

from oracles import read_log


def run_cli(*args):
    return main([str(a) for a in args])


def base_run_args(store, **extra):
    args = [
        "run", "--nodes", 4, "--manager", 0, "--backups", "1",
        "--seed", 11, "--watchdog-timeout", 3, "--recovery-ticks", 2,
        "--store", store, "--headless",
    ]
    for key, value in extra.items():
        args += [f"--{key.replace('_', '-')}", value]
    return args


def test_empty_scenario_exits_zero_with_only_lifecycle_events(tmp_path, capsys):
    store = tmp_path / "run"
    assert run_cli(*base_run_args(store)) == 0
    summaries = [e["summary"] for e in read_log(store)]
    assert summaries == ["run started", "run ended"]
    out = capsys.readouterr().out
    assert "system survived" in out


def test_scenario_with_passing_expectations_exits_zero(tmp_path):
    scenario = tmp_path / "s.txt"
    scenario.write_text(
        "at 5 kill-thread 2 0 expect detected\n"
        "at 70 reboot 3 expect recovered\n"
    )
    assert run_cli(*base_run_args(tmp_path / "run", scenario=scenario)) == 0
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["all_passed"] and len(report["entries"]) == 2


def test_failing_expectation_exits_nonzero(tmp_path, capsys):
    scenario = tmp_path / "s.txt"
    scenario.write_text("at 5 trap segv 1 0 expect undetected\n")  # it IS detected
    assert run_cli(*base_run_args(tmp_path / "run", scenario=scenario)) == 1
    assert "FAIL" in capsys.readouterr().out


def test_undetected_expectation_passes_on_coverage_hole(tmp_path):
    scenario = tmp_path / "s.txt"
    scenario.write_text("at 5 trap segv 1 0 expect undetected\n")
    code = run_cli(
        *base_run_args(tmp_path / "run", scenario=scenario, unwatched="1:0", window=15)
    )
    assert code == 0


def test_scenario_parse_error_reports_line(tmp_path, capsys):
    scenario = tmp_path / "s.txt"
    scenario.write_text("at 5 reboot 1\nat nine reboot 2\n")
    assert run_cli(*base_run_args(tmp_path / "run", scenario=scenario)) == 1
    assert "line 2" in capsys.readouterr().err


def test_out_of_range_scenario_target_is_startup_error(tmp_path, capsys):
    scenario = tmp_path / "s.txt"
    scenario.write_text("at 5 reboot 9\n")
    assert run_cli(*base_run_args(tmp_path / "run", scenario=scenario)) == 2
    err = capsys.readouterr().err
    assert "line 1" in err and "out of range" in err


def test_determinism_same_seed_same_bytes(tmp_path):
    scenario = tmp_path / "s.txt"
    scenario.write_text(
        "at 5 kill-thread 2 0\nat 70 reboot 3\nat 140 trap divzero 1 1\n"
    )
    assert run_cli(*base_run_args(tmp_path / "a", scenario=scenario)) == 0
    assert run_cli(*base_run_args(tmp_path / "b", scenario=scenario)) == 0
    log_a = (tmp_path / "a" / "events.jsonl").read_bytes()
    log_b = (tmp_path / "b" / "events.jsonl").read_bytes()
    assert log_a == log_b and len(log_a) > 0


def test_replay_agrees_on_completed_run(tmp_path, capsys):
    store = tmp_path / "run"
    scenario = tmp_path / "s.txt"
    scenario.write_text("at 5 reboot 2\n")
    run_cli(*base_run_args(store, scenario=scenario))
    assert run_cli("replay", store) == 0
    assert "AGREE" in capsys.readouterr().out


def test_replay_detects_corruption(tmp_path, capsys):
    store = tmp_path / "run"
    run_cli(*base_run_args(store))
    snapshot = json.loads((store / "snapshot.json").read_text())
    snapshot["nodes"][0]["status"] = "Faulty"
    (store / "snapshot.json").write_text(json.dumps(snapshot, indent=2) + "\n")
    assert run_cli("replay", store) == 1
    assert "DISAGREE" in capsys.readouterr().out


def test_replay_of_empty_directory_errors(tmp_path, capsys):
    assert run_cli("replay", tmp_path / "void") == 2
    assert "error" in capsys.readouterr().err


def test_headless_run_captures_notifications(tmp_path):
    store = tmp_path / "run"
    scenario = tmp_path / "s.txt"
    scenario.write_text("at 5 reboot 2\n")
    run_cli(*base_run_args(store, scenario=scenario))
    frames = [
        json.loads(line)
        for line in (store / "notifications.jsonl").read_text().splitlines()
    ]
    assert frames[0]["kind"] == "hello"
    assert frames[-1]["kind"] == "shutdown"
    transitions = [f for f in frames if f["kind"] == "transition"]
    assert [f["event_id"] for f in transitions] == sorted(
        f["event_id"] for f in transitions
    )
    assert len(transitions) == len(read_log(store))


# -- gateway lifecycle --------------------------------------------------------------


def free_port():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.mark.slow
def test_two_runs_reuse_one_gateway(tmp_path):
    http_port, notify_port = free_port(), free_port()
    store = tmp_path / "run"
    args = [
        "run", "--nodes", "4", "--manager", "0", "--backups", "1",
        "--store", str(store),
        "--http", f"127.0.0.1:{http_port}", "--notify", f"127.0.0.1:{notify_port}",
        "--ticks", "3", "--seconds-per-tick", "0.01", "--fast",
    ]
    gateway_pid = None
    try:
        for _ in range(2):
            proc = subprocess.run(
                [sys.executable, "-m", "dirmon", *args],
                capture_output=True, text=True, timeout=60,
            )
            assert proc.returncode == 0, proc.stderr
            health = requests.get(
                f"http://127.0.0.1:{http_port}/api/health", timeout=2
            ).json()
            if gateway_pid is None:
                gateway_pid = health["pid"]
            else:
                assert health["pid"] == gateway_pid  # same process, reused
    finally:
        if gateway_pid is not None:
            os.kill(gateway_pid, signal.SIGTERM)


@pytest.mark.slow
def test_port_held_by_non_gateway_is_startup_error(tmp_path):
    import http.server
    import threading

    httpd = http.server.HTTPServer(("127.0.0.1", 0), http.server.SimpleHTTPRequestHandler)
    port = httpd.server_address[1]
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        code = run_cli(
            "run", "--nodes", 4, "--manager", 0, "--backups", "1",
            "--store", tmp_path / "run", "--ticks", 1,
            "--http", f"127.0.0.1:{port}", "--notify", f"127.0.0.1:{free_port()}",
        )
        assert code == 2
    finally:
        httpd.shutdown()


@pytest.mark.slow
def test_one_shot_inject_against_live_gateway(tmp_path, capsys):
    http_port, notify_port = free_port(), free_port()
    store = tmp_path / "run"
    runner = subprocess.Popen(
        [
            sys.executable, "-m", "dirmon", "run",
            "--nodes", "4", "--manager", "0", "--backups", "1",
            "--store", str(store),
            "--http", f"127.0.0.1:{http_port}", "--notify", f"127.0.0.1:{notify_port}",
            "--ticks", "600", "--seconds-per-tick", "0.02",
        ],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    gateway_pid = None
    try:
        deadline = time.monotonic() + 20
        while time.monotonic() < deadline:
            try:
                health = requests.get(
                    f"http://127.0.0.1:{http_port}/api/health", timeout=1
                ).json()
                gateway_pid = health["pid"]
                if health["run_active"]:
                    break
            except requests.RequestException:
                pass
            time.sleep(0.1)
        else:
            pytest.fail("run never attached to the gateway")

        code = run_cli("inject", "--http", f"127.0.0.1:{http_port}", "reboot", 2)
        assert code == 0
        receipt = json.loads(capsys.readouterr().out)
        assert receipt["accepted"] and receipt["routing"] == "SystemLevel"
        deadline = time.monotonic() + 20
        while time.monotonic() < deadline:
            payload = requests.get(
                f"http://127.0.0.1:{http_port}/api/global", timeout=2
            ).json()
            row = payload["nodes"][2]
            if row["status"] != "OK":
                assert row["status"] in ("Recovering", "Faulty", "Isolated")
                break
            time.sleep(0.05)
        else:
            pytest.fail("injected reboot never became visible")
    finally:
        runner.terminate()
        runner.wait(timeout=15)
        if gateway_pid is not None:
            os.kill(gateway_pid, signal.SIGTERM)
