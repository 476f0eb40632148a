"""End-to-end checks of the command-line surface and its exit codes."""
import http.client
import json
import os
import re
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from aerogreen.cli import load_manifest, main
from aerogreen.config import SimConfig
from aerogreen.datalog import replay


def test_sim_run_prints_energy_summary(tmp_path, capsys):
    code = main(["sim", "run", "--duration", "3600",
                 "--out", str(tmp_path / "logs")])
    assert code == 0
    out = capsys.readouterr().out
    assert "simulated 3600.0 s" in out
    assert "heater" in out and "supply_pump8" in out
    assert "water consumed" in out
    records = list(replay(tmp_path / "logs"))
    assert records, "run with --out must write a datalog"


def test_sim_run_rejects_zero_duration(capsys):
    assert main(["sim", "run", "--duration", "0"]) == 2
    assert "duration" in capsys.readouterr().err


def test_sim_run_rejects_missing_config(capsys):
    assert main(["sim", "run", "--config", "/nonexistent.json"]) == 2


def test_manifest_loading(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"seed": 9, "n_boxes": 3, "n_tanks": 3}))
    manifest_path = tmp_path / "run.json"
    manifest_path.write_text(json.dumps({
        "config": "cfg.json",  # relative to the manifest file
        "duration": 120.0,
        "seed": 77,
        "output_dir": str(tmp_path / "out"),
    }))
    manifest = load_manifest(manifest_path)
    assert manifest.config.n_boxes == 3
    assert manifest.config.seed == 77  # manifest seed wins over config file
    assert manifest.duration == 120.0

    inline = tmp_path / "inline.json"
    inline.write_text(json.dumps({"config": {"seed": 5}, "duration": 60}))
    assert load_manifest(inline).config.seed == 5

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"duratino": 60}))
    with pytest.raises(Exception, match="duratino"):
        load_manifest(bad)


def test_flags_override_manifest(tmp_path, capsys):
    manifest_path = tmp_path / "run.json"
    manifest_path.write_text(json.dumps({"duration": 86400.0}))
    code = main(["sim", "run", "--manifest", str(manifest_path),
                 "--duration", "300"])
    assert code == 0
    assert "simulated 300.0 s" in capsys.readouterr().out


def test_replay_counts_and_exit_codes(tmp_path, capsys):
    main(["sim", "run", "--duration", "600", "--out", str(tmp_path / "logs")])
    capsys.readouterr()
    assert main(["replay", str(tmp_path / "logs")]) == 0
    out = capsys.readouterr().out
    count = int(out.split()[0])
    log_file = tmp_path / "logs" / "ghlog-0.ndjson"
    assert count == len(log_file.read_text().splitlines())

    assert main(["replay", str(tmp_path / "missing")]) == 2

    lines = log_file.read_text().splitlines()
    lines[3] = '{"seq":3,broken'
    log_file.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(tmp_path / "logs")]) == 1


def test_replay_energy_totals_match_run(tmp_path, capsys):
    main(["sim", "run", "--duration", "1800", "--out", str(tmp_path / "logs")])
    run_out = capsys.readouterr().out
    assert main(["replay", str(tmp_path / "logs"), "--energy"]) == 0
    replay_out = capsys.readouterr().out
    run_total = re.search(r"total\s+([0-9.]+)", run_out).group(1)
    replay_total = re.search(r"total\s+([0-9.]+)", replay_out).group(1)
    assert run_total == replay_total


def test_synth_writes_class_directories(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path / "ds"), "--per-class", "4",
                 "--seed", "2"])
    assert code == 0
    for label in ("healthy", "drought", "rust"):
        files = list((tmp_path / "ds" / label).glob("*.ppm"))
        assert len(files) == 4
    assert main(["synth", "--out", str(tmp_path / "x"), "--per-class", "0"]) == 2


def test_train_then_eval_roundtrip(tmp_path, capsys):
    model_path = tmp_path / "leaf.npz"
    report_path = tmp_path / "report.json"
    code = main(["train", "--data", "synthetic:45", "--epochs", "2",
                 "--seed", "3", "--out", str(model_path),
                 "--report", str(report_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "true \\ predicted" in out
    assert model_path.is_file()
    doc = json.loads(report_path.read_text())
    assert len(doc["confusion"]) == 3
    assert len(doc["train_curve"]) == 2

    assert main(["eval", "--model", str(model_path),
                 "--data", "synthetic:30"]) == 0
    assert "total accuracy" in capsys.readouterr().out


def test_eval_without_model_is_validation_error(tmp_path, capsys):
    assert main(["eval", "--model", str(tmp_path / "none.npz"),
                 "--data", "synthetic:30"]) == 2


def test_train_rejects_bad_data(capsys):
    assert main(["train", "--data", "/no/such/dir", "--epochs", "1"]) == 2
    assert main(["train", "--data", "synthetic:zap", "--epochs", "1"]) == 2


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["warp"])
    assert err.value.code == 2


def start_serve(tmp_path, extra=()):
    proc = subprocess.Popen(
        [sys.executable, "-m", "aerogreen", "serve",
         "--listen-http", "127.0.0.1:0", "--duration", "600",
         "--accel", "100", "--out", str(tmp_path / "logs"), *extra],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    line = proc.stdout.readline()
    match = re.search(r"listening on ([\d.]+):(\d+)", line)
    assert match, f"no listen line, got {line!r}"
    return proc, (match.group(1), int(match.group(2)))


def wait_for_state(addr, deadline=10.0):
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        try:
            conn = http.client.HTTPConnection(*addr, timeout=2.0)
            conn.request("GET", "/api/state")
            resp = conn.getresponse()
            frames = json.loads(resp.read())
            conn.close()
            if frames:
                return frames
        except OSError:
            pass
        time.sleep(0.1)
    raise AssertionError("server never served state")


def test_serve_live_api_and_clean_shutdown(tmp_path):
    proc, addr = start_serve(tmp_path)
    try:
        frames = wait_for_state(addr)
        topics = {f["topic"] for f in frames}
        assert "gh/zone0/temp" in topics
        assert "gh/config/setpoints" in topics

        before = next(f["v"] for f in wait_for_state(addr)
                      if f["topic"] == "gh/tank1/volume")
        conn = http.client.HTTPConnection(*addr, timeout=15.0)
        conn.request("POST", "/api/command", body=json.dumps(
            {"kind": "recharge_tank", "payload": {"tank": 1, "volume": 30.0},
             "id": "cli-t-1"}))
        resp = conn.getresponse()
        ack = json.loads(resp.read())
        conn.close()
        assert resp.status == 200 and ack["ok"] is True

        after = next(f["v"] for f in wait_for_state(addr)
                     if f["topic"] == "gh/tank1/volume")
        assert after > before
    finally:
        proc.send_signal(signal.SIGTERM)
        out, err = proc.communicate(timeout=15.0)
    assert proc.returncode == 0, err
    assert "simulated" in out
    # shutdown must leave a replayable log
    records = list(replay(tmp_path / "logs"))
    assert records
    assert any(r["kind"] == "command" for r in records)
