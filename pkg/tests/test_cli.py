import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bogoliubov.cli import ConfigError, load_config, main, resolve, run_mode

KAPPAS = "[0.5, 1, 2, 4, 8, 16, 32]"


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_minimize_vacuum(tmp_path):
    out = tmp_path / "o"
    assert main(["minimize", "--set", "physics.mu=-1", "--output", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["report"]["energy"]["total"] == 0.0
    assert doc["config"]["physics"]["mu"] == -1.0


def test_minimize_and_verify(tmp_path):
    out = tmp_path / "o"
    assert main(["minimize", "--set", "physics.mu=1", "--output", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["report"]["energy"]["total"] < -0.5
    assert doc["report"]["converged"]
    profile = _rows(out / "profile.csv")
    assert list(profile[0]) == ["p", "gamma", "alpha", "A", "B"] and len(profile) == 1024
    assert (out / "profile.csv").read_text().startswith("# config = {")
    assert main(["verify", str(out / "state.txt"), "--output", str(tmp_path / "v")]) == 0
    ver = json.loads((tmp_path / "v" / "verification.json").read_text())
    assert ver["verification"]["passed"]


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["minimize", "--set", "physics.mu=0.7", "--set", "grid.n=256", "--output"]
    assert main(args + [str(a)]) == 0
    assert main(args + [str(b)]) == 0
    for name in ("report.json", "state.txt", "profile.csv"):
        ta = (a / name).read_text().replace(str(a), "DIR")
        tb = (b / name).read_text().replace(str(b), "DIR")
        assert ta == tb


def test_malformed_config(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid\nn = 3\n")
    assert main(["minimize", "--config", str(bad)]) == 2
    bad.write_text("[grid]\nn = many\n")
    assert main(["minimize", "--config", str(bad)]) == 2
    bad.write_text("[grid]\nnodes = 10\n")
    assert main(["minimize", "--config", str(bad)]) == 2
    assert main(["minimize", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["minimize", "--set", "physics.mu"]) == 2
    assert main(["minimize", "--set", "potential.amplitude=0"]) == 2
    assert main(["bogus"]) == 2


def test_config_file_and_modes(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[potential]\nfamily = exponential\nrate = 2\n[grid]\nn = 128\n[physics]\nmu = 0.5\n")
    config = resolve(load_config(cfg))
    assert config["potential"] == {"family": "exponential", "amplitude": 1.0, "rate": 2.0}
    assert run_mode(config) == "minimize"
    assert run_mode(resolve(load_config(cfg, ["physics.kappa_list=1,2"]))) == "kappa_sweep"
    with pytest.raises(ConfigError):
        run_mode(resolve(load_config(cfg, ["physics.mu_list=1,2"])))
    with pytest.raises(ConfigError):
        run_mode(resolve(load_config(cfg, ["physics.lambda=0.1"])))
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0


def test_verify_errors(tmp_path):
    out = tmp_path / "o"
    assert main(["minimize", "--set", "physics.mu=1", "--set", "grid.n=256", "--output", str(out)]) == 0
    state = out / "state.txt"
    assert main(["verify", str(tmp_path / "nope.txt")]) == 2
    assert main(["verify", str(state), "--set", "grid.n=512", "--output", str(tmp_path / "v")]) == 2
    lines = state.read_text().splitlines()
    i = next(k for k, l in enumerate(lines) if not l.startswith("#"))
    p, g, a = lines[i].split()
    lines[i] = f"{p} -0.25 0"
    edited = tmp_path / "edited.txt"
    edited.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(edited), "--output", str(tmp_path / "v")]) == 1


def test_kappa_sweep(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["sweep", "--set", f"physics.kappa_list={KAPPAS}", "--set", "physics.mu=1", "--output", str(out)])
    assert code == 0
    rows = _rows(out / "sweep.csv")
    e = [float(r["path_energy"]) for r in rows]
    assert all(b <= a for a, b in zip(e, e[1:]))
    assert "kappa*: 4.0" in capsys.readouterr().out
    assert len(list(out.glob("state_kappa_*.txt"))) == 7


@pytest.mark.parametrize("jobs", ["1", "3"])
def test_mu_sweep(tmp_path, jobs):
    out = tmp_path / "o"
    assert main(["sweep", "--set", "physics.mu_list=0.5,1,2", "--jobs", jobs, "--output", str(out)]) == 0
    rows = _rows(out / "sweep.csv")
    assert [float(r["mu"]) for r in rows] == [0.5, 1.0, 2.0]
    assert all(float(r["condensate_fraction"]) > 0.5 for r in rows)


def test_empty_sweep_is_usage_error():
    assert main(["sweep", "--set", "physics.mu_list=[]"]) == 2
    assert main(["sweep", "--set", "physics.mu=1"]) == 2


def test_fixed_density(tmp_path):
    out = tmp_path / "o"
    args = ["fixed-density", "--set", "physics.mu=1", "--set", "physics.lambda=0", "--set", "physics.rho0=1"]
    assert main(args + ["--output", str(out)]) == 0
    assert float(_rows(out / "fixed_density.csv")[0]["f"]) == -0.5
    assert main(["fixed-density", "--set", "physics.lambda=-1", "--set", "physics.rho0=1"]) == 2


def test_fixed_density_grid_and_jobs(tmp_path, ref_report):
    lams = ", ".join(repr(float(v)) for v in ref_report.rho_gamma * np.linspace(0.5, 1.5, 9))
    base = ["fixed-density", "--set", f"physics.lambda_list={lams}",
            "--set", f"physics.rho0={ref_report.state.rho0!r}"]
    assert main(base + ["--output", str(tmp_path / "a")]) == 0
    assert main(base + ["--jobs", "3", "--output", str(tmp_path / "b")]) == 0
    text_a = (tmp_path / "a" / "fixed_density.csv").read_text()
    text_b = (tmp_path / "b" / "fixed_density.csv").read_text()
    assert "# convexity" in text_a and ": pass" in text_a
    assert text_a.split("\n", 1)[1] == text_b.split("\n", 1)[1]


def test_module_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "bogoliubov", "minimize", "--set", "physics.mu=0",
                             "--output", str(tmp_path / "o")], capture_output=True, text=True)
    assert result.returncode == 0
    assert "vacuum" in result.stdout
