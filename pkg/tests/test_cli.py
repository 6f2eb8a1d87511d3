import json

import numpy as np
import pytest

from lodsim.cli import run


def test_equilibrium_spot_value(tmp_path):
    out = tmp_path / "z.csv"
    code = run(["equilibrium", "--s", "0.001", "--u", "0.0005", "--nu0", "0",
                "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "s,u,nu0,nu1,z_inf"
    assert lines[1].split(",")[-1] == "0.5"
    assert (tmp_path / "z.csv.manifest.json").exists()


def test_duality_subcommand_passes(tmp_path):
    out = tmp_path / "dual.json"
    code = run(["duality", "--limit", "det", "--s", "1", "--u", "0.5",
                "--nu1", "1", "--x", "0.3", "--t", "1", "--n", "1",
                "--reps", "100000", "--seed", "7", "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["pass"] is True


def test_fearnhead_neutral_column(tmp_path):
    out = tmp_path / "f.csv"
    code = run(["fearnhead", "--sigma", "0", "--theta", "5", "--nu1", "0.5",
                "--nmax", "64", "--out", str(out)])
    assert code == 0
    rows = out.read_text().splitlines()[1:]
    values = [float(r.split(",")[1]) for r in rows]
    assert values[0] == 1.0
    assert all(v == 0.0 for v in values[1:])


def test_validation_failure_exit_code(tmp_path):
    code = run(["equilibrium", "--s", "0.001", "--u", "0.001", "--nu0", "0.7",
                "--nu1", "0.7", "--out", str(tmp_path / "z.csv")])
    assert code == 2


def test_regime_failure_exit_code(tmp_path):
    code = run(["diffusion-moments", "--sigma", "1", "--theta", "0",
                "--nu0", "0.5", "--out", str(tmp_path / "m.csv")])
    assert code == 2


def test_nonconvergence_exit_code(tmp_path):
    code = run(["diffusion-moments", "--sigma", "1", "--theta", "0.5",
                "--nu0", "0.5", "--tol", "1e-30",
                "--out", str(tmp_path / "m.csv")])
    assert code == 3


def test_statistical_failure_exit_code(tmp_path):
    # an absurd acceptance threshold turns a healthy fit into a failure
    code = run(["ldasg", "--limit", "det", "--s", "1", "--u", "2", "--nu0", "0",
                "--reps", "20000", "--seed", "5", "--gof",
                "--gof-alpha", "0.999999", "--out", str(tmp_path / "t.csv")])
    assert code == 1
    gof = json.loads((tmp_path / "t.csv.gof.json").read_text())
    assert gof["pass"] is False


def test_ldasg_gof_passes_at_default_alpha(tmp_path):
    out = tmp_path / "t.csv"
    code = run(["ldasg", "--limit", "det", "--s", "1", "--u", "2", "--nu0", "0",
                "--reps", "50000", "--seed", "5", "--gof", "--out", str(out)])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header == "n,a,se"


def test_moran_subcommand_and_events(tmp_path):
    out = tmp_path / "freq.csv"
    ev = tmp_path / "events.txt"
    code = run(["moran", "--N", "50", "--s", "0.02", "--u", "0.05",
                "--nu0", "0.3", "--x", "0.5", "--t", "5", "--seed", "3",
                "--events-out", str(ev), "--out", str(out)])
    assert code == 0
    assert out.read_text().startswith("time,frequency")
    assert ev.read_text().startswith("# moran-events")


def test_ode_subcommand(tmp_path):
    out = tmp_path / "ode.csv"
    code = run(["ode", "--s", "0.5", "--u", "0.1", "--nu0", "0.3", "--x", "0.2",
                "--t", "10", "--out", str(out)])
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "time,z"
    assert len(rows) == 202


def test_killed_asg_subcommand(tmp_path):
    out = tmp_path / "prof.json"
    code = run(["killed-asg", "--limit", "det", "--s", "1", "--u", "2",
                "--nu0", "0", "--n", "1", "--reps", "2000", "--seed", "1",
                "--out", str(out)])
    assert code == 0
    prof = json.loads(out.read_text())
    assert prof["p_zero"] == 1.0


def test_ancestral_subcommand(tmp_path):
    out = tmp_path / "h.json"
    code = run(["ancestral", "--limit", "det", "--s", "0.001", "--u", "0.0005",
                "--nu0", "0", "--x-rule", "zinf", "--out", str(out)])
    assert code == 0
    assert json.loads(out.read_text())["h"] == 1.0


def test_param_file_flag(tmp_path):
    pf = tmp_path / "params.txt"
    pf.write_text("s=0.001\nu=0.0005\nnu0=0\nnu1=1\n")
    out = tmp_path / "z.csv"
    assert run(["equilibrium", "--params", str(pf), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1].endswith("0.5")


def test_phase_diagram_fig2_left(tmp_path):
    out = tmp_path / "pd.csv"
    code = run(["phase-diagram", "--figure", "fig2-left", "--s", "0.001",
                "--nu0", "0", "--grid", "0:0.002:5", "--out", str(out)])
    assert code == 0
    rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
    vals = {float(u): float(v) for u, _, v in rows}
    assert vals[0.0] == 1.0
    assert vals[0.0005] == 0.5
    assert vals[0.002] == 0.0


def test_phase_diagram_fig8_left(tmp_path):
    out = tmp_path / "pd8.csv"
    code = run(["phase-diagram", "--figure", "fig8-left", "--s", "0.001",
                "--nu0", "0", "--grid", "0.00025:0.002:8", "--out", str(out)])
    assert code == 0
    rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
    for u, _, v in rows:
        assert float(v) == (1.0 if float(u) < 0.001 else 0.0)


def test_manifest_reproducibility(tmp_path):
    a = tmp_path / "a" / "dual.json"
    b = tmp_path / "b" / "dual.json"
    argv = ["duality", "--limit", "diff", "--sigma", "2", "--theta", "1",
            "--nu0", "0.5", "--x", "0.4", "--t", "0.3", "--n", "2",
            "--reps", "5000", "--seed", "11"]
    assert run(argv + ["--out", str(a)]) == 0
    manifest = json.loads((tmp_path / "a" / "dual.json.manifest.json").read_text())
    rerun_argv = list(manifest["argv"])
    rerun_argv[rerun_argv.index(str(a))] = str(b)
    assert run(rerun_argv) == 0
    assert a.read_bytes() == b.read_bytes()


def test_csv_significant_digits(tmp_path):
    out = tmp_path / "m.csv"
    assert run(["diffusion-moments", "--sigma", "10", "--theta", "20",
                "--nu0", "0.005", "--nmax", "3", "--out", str(out)]) == 0
    row = out.read_text().splitlines()[2]
    value = row.split(",")[1]
    assert len(value.replace(".", "").replace("-", "").lstrip("0")) <= 12
    assert float(value) == pytest.approx(0.99050002, abs=1e-6)


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("LOD_SEED", "99")
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    argv = ["killed-asg", "--limit", "det", "--s", "0.5", "--u", "1",
            "--nu0", "0.2", "--n", "1", "--reps", "500"]
    assert run(argv + ["--out", str(a)]) == 0
    assert run(argv + ["--seed", "99", "--out", str(b)]) == 0
    assert json.loads(a.read_text()) == json.loads(b.read_text())
