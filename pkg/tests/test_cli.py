import json
import subprocess
import sys

import pytest

from tkcla.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, ConfigError, main, parse_config

EXAMPLE = "ctmc --d 2 --V 64 --kappa 1 --lambda 0.015625 --delta 0.015625 --t-end 1e5 --seed 7".split()
SWITCH = "switching --V 16 --kappa 1 --lambda 1/32 --delta 1/32 --n-traj 20 --seed 3".split()


def test_example_parses():
    cfg = parse_config(EXAMPLE)
    assert cfg["d"] == 2 and cfg["V"] == 64.0 and cfg["t_end"] == 1e5 and cfg["seed"] == 7
    assert cfg.params().lambda_ == 1.0
    echo = cfg.echo()
    assert echo["raw_kappa"] == 1 / 64 and echo["raw_lambda"] == 1.0
    assert "threads" not in echo and "output" not in echo


def test_fractions_accepted():
    assert parse_config(SWITCH)["lambda"] == 1 / 32


def test_file_then_flag_precedence(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# model\nd = 2\nV = 64   # volume\nkappa = 1\nlambda = 1/64\ndelta = 1/64\nt_end = 10\n")
    cfg = parse_config(["ctmc", "--config", str(f), "--V", "128"])
    assert cfg["V"] == 128.0 and cfg["t_end"] == 10.0
    assert cfg.sources["V"] == "--V" and cfg.sources["d"].endswith(":2")


@pytest.mark.parametrize(
    "argv, fragment",
    [
        (["ctmc", "--d", "1", "--V", "1", "--kappa", "1", "--lambda", "1", "--delta", "1", "--t-end", "1"], "--d"),
        (["ctmc", "--V", "1", "--kappa", "1", "--lambda", "1", "--delta", "1", "--t-end", "1"], "missing required"),
        (["ctmc", "--d", "two"], "--d"),
        (["ctmc", "--bins", "3"], "unrecognized"),
        (["cycling", "--d", "2", "--V", "1", "--kappa", "1", "--lambda", "1", "--delta", "1"], "d >= 3"),
        (["hitting", "--V", "1", "--kappa", "1", "--lambda", "1", "--delta", "1", "--format", "csv"], "JSON"),
        (SWITCH + ["--n-traj", "0"], "--n-traj"),
    ],
)
def test_config_errors(argv, fragment, capsys):
    assert main(argv) == EXIT_CONFIG
    assert fragment in capsys.readouterr().err


def test_config_file_errors_name_the_line(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("V = 64\nfoo = 1\n")
    with pytest.raises(ConfigError, match=r"bad.cfg:2: unknown key 'foo'"):
        parse_config(["ctmc", "--config", str(f)])
    f.write_text("V = lots\n")
    with pytest.raises(ConfigError, match=r"bad.cfg:1"):
        parse_config(["ctmc", "--config", str(f)])
    f.write_text("bins = 4\n")
    with pytest.raises(ConfigError, match=r"bad.cfg:1"):
        parse_config(["ctmc", "--config", str(f)])


def test_ctmc_output_has_header(capsys):
    assert main(EXAMPLE[:-4] + ["--t-end", "5", "--seed", "7"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "# raw_lambda = 1.0" in out and "# seed = 7" in out
    assert "t,x1,x2" in out


def test_switching_json_and_thread_invariance(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(SWITCH + ["--output", str(a)]) == EXIT_OK
    assert main(SWITCH + ["--threads", "4", "--output", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    data = json.loads(a.read_text())
    assert data["summary"]["n"] == 20 and data["time_unit"] == "volume"
    assert data["config"]["n_traj"] == 20


def test_switching_csv(capsys):
    assert main(SWITCH + ["--format", "csv", "--n-traj", "3"]) == EXIT_OK
    lines = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert lines[0] == "index,time,scaled_time" and len(lines) == 4


def test_failed_trajectories_exit_runtime(capsys):
    assert main(SWITCH + ["--t-end", "1e-3", "--n-traj", "2"]) == EXIT_RUNTIME
    assert "HorizonExceededError" in capsys.readouterr().err


def test_hitting_json(capsys):
    assert main("hitting --V 64 --kappa 1 --lambda 1/256 --delta 1/256".split()) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["value"] == pytest.approx(390.1954, rel=1e-6)
    assert data["grid_points_used"] >= 256 and data["config"]["n"] == 2.0


def test_stationary_csv(capsys):
    argv = "stationary --d 2 --V 8 --kappa 1 --lambda 1/8 --delta 1/8 --t-end 200 --bins 8".split()
    assert main(argv) == EXIT_OK
    assert "# edges0" in capsys.readouterr().out


def test_console_script_verify_exit_code():
    r = subprocess.run([sys.executable, "-m", "tkcla.cli", "verify"], capture_output=True, text=True)
    data = json.loads(r.stdout)
    assert r.returncode == (0 if not data["failed"] else 3)
    assert r.returncode == 0
