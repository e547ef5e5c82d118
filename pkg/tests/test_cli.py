import json
import math
import subprocess
import sys

import numpy as np
import pytest

from qbattery.cli import main
from qbattery.drive_model import DriveConfig, h_system
from qbattery.propagator import SaturationTrace


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def h_config(tmp_path):
    return write_json(tmp_path / "h.json", h_system(1.53, 1.0).to_dict())


def test_simulate_reaches_full_charge(tmp_path, h_config):
    out = tmp_path / "trace.csv"
    assert main(["simulate", "--config", h_config, "--t-max", "5", "--dt", "1e-3", "--out", str(out)]) == 0
    trace = SaturationTrace.from_csv(out.read_text())
    k = int(np.argmax(trace.eta))
    assert trace.eta[k] >= 1 - 1e-6
    assert trace.times[k] == pytest.approx(math.sqrt(2) * math.pi / 1.53, abs=2e-3)
    manifest = json.loads((tmp_path / "trace.manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["outputs"] == [str(out)]
    assert DriveConfig.from_dict(manifest["config"]) == h_system(1.53, 1.0)


def test_simulate_is_byte_deterministic(tmp_path, h_config):
    outs = []
    for name in ("a.csv", "b.csv"):
        main(["simulate", "--config", h_config, "--t-max", "2", "--out", str(tmp_path / name)])
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_zero_drive_gives_zero_column(tmp_path, capsys):
    cfg = write_json(tmp_path / "zero.json", {"n_units": 3})
    assert main(["simulate", "--config", cfg, "--t-max", "3"]) == 0
    trace = SaturationTrace.from_csv(capsys.readouterr().out)
    assert np.all(trace.eta == 0)


def test_malformed_json_exits_1_without_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "o.csv"
    assert main(["simulate", "--config", str(bad), "--out", str(out)]) == 1
    assert not out.exists()
    assert "[config]" in capsys.readouterr().err


def test_unknown_config_key_exits_1(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"amplitude": 1})
    assert main(["simulate", "--config", cfg]) == 1


def test_nonconvergence_exits_2(tmp_path, h_config, capsys):
    assert main(["simulate", "--config", h_config, "--t-max", "3", "--tol", "1e-14"]) == 2
    assert "NonConvergence" in capsys.readouterr().err


def test_usage_errors_exit_1(h_config):
    for argv in (["simulate"], ["bogus"], ["simulate", "--config", h_config, "--seedless=yes"]):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 1


def test_analytic_optimal(capsys):
    assert main(["analytic", "--mode", "optimal", "--k", "1"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["A"] == pytest.approx(1.53, abs=0.01)
    assert data["omega"] == pytest.approx(0.81, abs=0.01)
    assert data["t_min"] == pytest.approx(3.88, abs=0.01)
    assert set(data) >= {"z", "A", "omega", "t_min"}


def test_analytic_circular_and_parallel(tmp_path):
    out = tmp_path / "c.csv"
    t_star = math.sqrt(2) * math.pi / 1.53
    assert main(["analytic", "--mode", "circular", "--A", "1.53", "--w", "1",
                 "--t-max", str(2 * t_star), "--dt", str(t_star / 100), "--out", str(out)]) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert rows[100, 1] == pytest.approx(1.0, abs=1e-9)
    assert main(["analytic", "--mode", "parallel", "--out", str(out)]) == 0
    assert np.all(np.loadtxt(out, delimiter=",", skiprows=1)[:, 1] == 0)
    assert main(["analytic", "--mode", "chrwa", "--A", "1.2"]) == 1


def test_analytic_noroot_exits_2(capsys):
    # A(1 - xi) stays above 2 J1(A xi / w) on all of [0, 1]
    assert main(["analytic", "--mode", "chrwa", "--A", "10", "--w", "2", "--t-max", "1"]) == 2
    err = capsys.readouterr().err
    assert "NoRoot" in err and "[0.0, 1.0]" in err


def test_floquet_command(tmp_path):
    cfg = write_json(tmp_path / "e1.json", h_system(1.0, 1.0).to_dict())
    out = tmp_path / "q.csv"
    assert main(["floquet", "--config", cfg, "--nmax", "30", "--out", str(out)]) == 0
    report = json.loads((tmp_path / "q.convergence.json").read_text())
    assert report["max_deviation"] <= 1e-4
    for suffix in (".floquet.csv", ".numeric.csv", ".manifest.json"):
        assert (tmp_path / f"q{suffix}").exists()
    assert out.read_text().startswith("alpha,quasienergy,central_weight")


def test_floquet_static_config_folds_levels(tmp_path):
    cfg = write_json(tmp_path / "s.json", {"n_units": 2, "omega0": 1.0})
    out = tmp_path / "s.csv"
    assert main(["floquet", "--config", cfg, "--nmax", "4", "--t-max", "2", "--out", str(out)]) == 0
    eps = np.loadtxt(out, delimiter=",", skiprows=1)[:, 1]
    assert np.allclose(eps, 0.0)


def test_floquet_incommensurate_exits_2(tmp_path, capsys):
    cfg = write_json(tmp_path / "i.json", {"ax": 1, "ay": 1, "wx": 1, "wy": math.sqrt(2)})
    assert main(["floquet", "--config", cfg, "--out", str(tmp_path / "i.csv")]) == 2
    assert "IncommensurateFrequencies" in capsys.readouterr().err


def sweep_spec(family, grid, t_max=6.0):
    return {
        "family": family, "base": h_system(1.0, 1.0).to_dict(),
        "param_grid": grid, "t_grid": np.round(np.linspace(0, t_max, 61), 10).tolist(),
    }


def test_sweep_command(tmp_path):
    spec = write_json(tmp_path / "s.json", sweep_spec("phi_distribution", [0.0, math.pi / 4]))
    out = tmp_path / "m.csv"
    assert main(["sweep", "--config", spec, "--dt", "1e-3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "param,t,eta" and len(lines) == 1 + 2 * 61
    assert json.loads((tmp_path / "m.spec.json").read_text())["family"] == "phi_distribution"
    assert json.loads((tmp_path / "m.manifest.json").read_text())["failures"] == []


def test_sweep_records_row_failures(tmp_path):
    spec = write_json(tmp_path / "s.json", sweep_spec("perturb_wx", [-0.1, 0.0], t_max=3.0))
    out = tmp_path / "m.csv"
    assert main(["sweep", "--config", spec, "--tol", "1e-14", "--out", str(out)]) == 2
    failures = json.loads((tmp_path / "m.manifest.json").read_text())["failures"]
    assert [f["row"] for f in failures] == [0, 1]
    assert not out.exists()


def test_sweep_empty_grid_exits_1(tmp_path):
    spec = write_json(tmp_path / "s.json", sweep_spec("perturb_wx", []))
    assert main(["sweep", "--config", spec, "--out", str(tmp_path / "m.csv")]) == 1


def test_optimize_command(tmp_path):
    data = sweep_spec("perturb_wxy_opposite", [-0.1, 0.0, 0.1], t_max=4.0)
    spec = write_json(tmp_path / "o.json", data)
    out = tmp_path / "cands.csv"
    assert main(["optimize", "--config", spec, "--threshold", "0.4", "--dt", "1e-3", "--out", str(out)]) == 0
    winner = json.loads((tmp_path / "cands.winner.json").read_text())
    assert winner["family"] == "perturb_wxy_opposite" and winner["p"] < 0
    assert out.read_text().splitlines()[0] == "family,param,time"
    assert main(["optimize", "--config", spec, "--out", str(out)]) == 1


def test_module_entry_point(h_config):
    proc = subprocess.run([sys.executable, "-m", "qbattery", "analytic", "--mode", "optimal"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and '"t_min"' in proc.stdout
