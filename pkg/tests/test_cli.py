from __future__ import annotations

import json

import pytest

from leapverify.cli import build_config, build_parser, main
from leapverify.config import OUT_ENV_VAR, load_config

BASE = [
    "--task", "quad-bowl", "--seeds", "42", "--steps", "300", "--delta", "50",
    "--k-set", "5,10", "--tau-low", "-0.999", "--tau-high", "-0.99",
]


def run_all_args(out) -> list[str]:
    return ["run-all", *BASE, "--out", str(out)]


def test_no_subcommand_exits_with_usage():
    with pytest.raises(SystemExit):
        main([])


def test_unknown_flag_exits_with_usage():
    with pytest.raises(SystemExit):
        main(["train", "--velocity", "9"])


def test_build_config_flags_override_config_file(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("task = quad-bowl\nsteps = 250\ndelta = 25\n")
    args = build_parser().parse_args(
        ["train", "--config", str(cfg_file), "--steps", "300"])
    cfg = build_config(args)
    assert cfg.steps == 300   # flag wins
    assert cfg.delta == 25    # file wins over default
    assert cfg.task == "quad-bowl"


def test_run_all_writes_the_full_layout(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(run_all_args(out)) == 0
    assert (out / "report.json").exists()
    assert (out / "report.txt").exists()
    assert (out / "config.txt").exists()
    run_dir = out / "runs" / "quad-bowl" / "42"
    assert (run_dir / "sweep.csv").exists()
    assert (run_dir / "cascades.jsonl").exists()
    assert (run_dir / "loss_log.csv").exists()
    stdout = capsys.readouterr().out
    assert "report over seeds [42]" in stdout
    assert "single seed" in stdout
    # the stored effective config reparses and echoes resolved values
    cfg = load_config(out / "config.txt")
    assert cfg.task == "quad-bowl"
    assert cfg.lr == 0.05
    assert cfg.tau_low == -0.999


def test_run_all_refuses_to_overwrite(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(run_all_args(out)) == 0
    capsys.readouterr()
    assert main(run_all_args(out)) == 1
    err = capsys.readouterr().err
    assert "already exists" in err
    assert "--force" in err
    assert main(run_all_args(out) + ["--force"]) == 0


def test_run_all_rejects_invalid_settings(tmp_path, capsys):
    assert main(run_all_args(tmp_path / "x") + ["--epsilon", "2.0"]) == 1
    assert "error:" in capsys.readouterr().err


def test_report_rebuilds_identically_from_stored_outputs(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(run_all_args(out)) == 0
    original = json.loads((out / "report.json").read_text())
    (out / "report.json").unlink()
    assert main(["report", "--out", str(out)]) == 0
    rebuilt = json.loads((out / "report.json").read_text())
    assert rebuilt == original
    assert "report over seeds [42]" in capsys.readouterr().out


def test_report_without_runs_fails(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path / "empty")]) == 1
    assert "no run directories" in capsys.readouterr().err


def test_sweep_before_train_fails(tmp_path, capsys):
    assert main(["sweep", *BASE, "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_report_requires_the_sweep_pass(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["train", *BASE, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--task", "quad-bowl", "--out", str(out)]) == 1
    assert "run the sweep pass first" in capsys.readouterr().err


def test_train_sweep_cascade_pipeline(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["train", *BASE, "--out", str(out)]) == 0
    assert main(["train", *BASE, "--out", str(out)]) == 1  # refuses rerun
    assert "already exists" in capsys.readouterr().err
    assert main(["sweep", *BASE, "--out", str(out)]) == 0
    assert main(["cascade", *BASE, "--out", str(out)]) == 0
    assert main(["report", "--task", "quad-bowl", "--out", str(out)]) == 0
    assert (out / "report.json").exists()


def test_calibrate_stores_thresholds(tmp_path, capsys):
    out = tmp_path / "exp"
    cmd = ["calibrate", "--task", "quad-bowl", "--steps", "300", "--delta", "50",
           "--out", str(out)]
    assert main(cmd) == 0
    lines = (out / "thresholds.txt").read_text().splitlines()
    values = dict(line.split(" = ") for line in lines)
    tau_low, tau_high = float(values["tau_low"]), float(values["tau_high"])
    assert -1.0 <= tau_low < tau_high <= 1.0
    capsys.readouterr()

    # a later pass picks the stored thresholds up instead of recalibrating
    assert main(["train", "--task", "quad-bowl", "--steps", "300",
                 "--delta", "50", "--seeds", "42", "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "calibrating" not in stdout


def test_calibrate_with_explicit_taus_skips_runs(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["calibrate", "--task", "quad-bowl", "--tau-low", "0.5",
                 "--tau-high", "0.9", "--out", str(out)]) == 0
    assert "calibration skipped" in capsys.readouterr().out
    text = (out / "thresholds.txt").read_text()
    assert "0.5" in text and "0.9" in text


def test_invalid_tau_pair_fails_cleanly(tmp_path, capsys):
    assert main(["calibrate", "--task", "quad-bowl", "--tau-low", "0.9",
                 "--tau-high", "0.5", "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_live_applies_leaps(tmp_path, capsys):
    out = tmp_path / "exp"
    cfg_file = tmp_path / "live.cfg"
    cfg_file.write_text(
        "task = quad-bowl\nnoise = 0.0\nseeds = 42\nsteps = 300\ndelta = 50\n"
        "tau_low = -0.999\ntau_high = -0.99\n")
    cmd = ["live", "--config", str(cfg_file), "--out", str(out),
           "--live-predictor", "linear", "--live-k", "30", "--criterion", "strict"]
    assert main(cmd) == 0
    stdout = capsys.readouterr().out
    assert "3 speculations, 1 leaps, 30 steps skipped" in stdout
    live_dir = out / "live" / "quad-bowl" / "42"
    assert (live_dir / "loss_log.csv").exists()
    assert (live_dir / "events.jsonl").exists()
    events = [json.loads(line) for line in
              (live_dir / "events.jsonl").read_text().splitlines()]
    assert sum(e["applied"] for e in events) == 1
    # live runs refuse to clobber themselves too
    assert main(cmd) == 1
    assert main(cmd + ["--force"]) == 0


def test_out_env_var_is_honored(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV_VAR, str(tmp_path / "from-env"))
    assert main(["calibrate", "--task", "quad-bowl", "--tau-low", "0.5",
                 "--tau-high", "0.9"]) == 0
    assert (tmp_path / "from-env" / "thresholds.txt").exists()


def test_help_lists_all_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    stdout = capsys.readouterr().out
    for name in ("calibrate", "train", "sweep", "cascade", "live", "report", "run-all"):
        assert name in stdout
