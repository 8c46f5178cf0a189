import csv
import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from entropic_tail.cli import main


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def two_point_space(tmp_path):
    path = tmp_path / "space.csv"
    path.write_text("a,b\n0,1\n1,0\n")
    return path


def test_bound_compute_two_points(tmp_path):
    out = tmp_path / "out"
    rc = main(["bound", "compute", "--space", str(two_point_space(tmp_path)), "--psi", "const",
               "--set", "psi.b=4.0", "--u-grid", "20:100:5:linear", "--out", str(out), "--no-plots"])
    assert rc == 0
    summary = json.loads((out / "bound_summary.json").read_text())
    assert summary["theta"] == pytest.approx(9 * math.sqrt(2), rel=1e-12)
    header, rows = read_csv(out / "bound.csv")
    assert header == ["u", "bound", "provenance"]
    u = np.array([float(r[0]) for r in rows])
    b = np.array([float(r[1]) for r in rows])
    assert np.allclose(b, (9 * math.sqrt(2) / u) ** 4, rtol=1e-9)
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_status"] == 0 and man["command"] == "bound compute"
    assert "bound.csv" in man["outputs"] and len(man["config_hash"]) == 64


def test_unknown_flag_exits_2(tmp_path, capsys):
    assert main(["bound", "compute", "--no-such-flag"]) == 2
    assert main(["nonsense", "run"]) == 2


def test_config_unknown_key_names_it(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[model]\nname = "gaussian_circle"\nfoo_bar = 3\n')
    assert main(["psi", "estimate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "foo_bar" in capsys.readouterr().err


def test_config_bad_value_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[grids.u]\nmin = 5.0\nmax = 1.0\ncount = 10\nspacing = "log"\n')
    assert main(["bound", "compute", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "grids.u" in capsys.readouterr().err
    assert main(["bound", "compute", "--config", str(tmp_path / "missing.toml")]) == 2


def test_missing_partition_file_exits_2(tmp_path):
    rc = main(["partition", "search", "--model", "counterexample", "--N", "8",
               "--partition-file", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o"), "--no-plots"])
    assert rc == 2


def test_divergent_field_exits_3(tmp_path):
    # x^(-1/8) has infinite moments from p = 8 on
    out = tmp_path / "o"
    rc = main(["bound", "compute", "--model", "counterexample", "--N", "8", "--psi", "sqrt_p",
               "--p-grid", "1:9:17:linear", "--out", str(out), "--no-plots"])
    assert rc == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_status"] == 3
    summary = json.loads((out / "bound_summary.json").read_text())
    assert summary["theta"] == "inf" and summary["diagnostics"]


def test_negative_control_fails_with_exit_0(tmp_path):
    out = tmp_path / "o"
    rc = main(["verify", "mc", "--model", "gaussian_circle", "--set", "model.n_points=8",
               "--paths", "20000", "--bound-scale", "0.01", "--out", str(out), "--no-plots"])
    assert rc == 0
    rep = json.loads((out / "mc_report.json").read_text())
    assert rep["verdict"] == "FAIL" and rep["violations"]


def test_verify_mc_passes(tmp_path):
    out = tmp_path / "o"
    rc = main(["verify", "mc", "--model", "gaussian_circle", "--set", "model.n_points=8",
               "--paths", "20000", "--out", str(out), "--no-plots"])
    assert rc == 0
    assert json.loads((out / "mc_report.json").read_text())["verdict"] == "PASS"


def test_counterexample_run_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["counterexample", "run", "--beta", "1", "--N", "64", "--out", str(out), "--no-plots"]) == 0
    s = json.loads((out / "counterexample.json").read_text())
    assert {"C_beta", "C2_fit", "tail_sup_ratio"} <= set(s)
    for name in ("moments.csv", "exact_tail.csv", "manifest.json"):
        assert (out / name).exists()


def test_plots_written(tmp_path):
    out = tmp_path / "o"
    assert main(["conjugate", "eval", "--psi", "sqrt_p", "--out", str(out)]) == 0
    assert (out / "conjugate.png").stat().st_size > 0
    header, rows = read_csv(out / "conjugate.csv")
    assert header == ["x", "vstar", "nustar"] and len(rows) == 51


def run_all(out, seed=0):
    cmds = [
        ["psi", "estimate", "--model", "gaussian_circle", "--set", "model.n_points=8"],
        ["bound", "compute", "--model", "counterexample", "--N", "16"],
        ["partition", "search", "--model", "counterexample", "--N", "8", "--budget", "20", "--seed", str(seed)],
        ["continuity", "certify", "--model", "counterexample", "--N", "16"],
        ["verify", "mc", "--model", "gaussian_circle", "--set", "model.n_points=8", "--paths", "5000",
         "--seed", str(seed)],
    ]
    for k, c in enumerate(cmds):
        assert main(c + ["--out", str(out / str(k)), "--no-plots"]) == 0


def snapshot(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_reruns_are_byte_identical(tmp_path):
    out = tmp_path / "run"
    run_all(out)
    first = snapshot(out)
    shutil.rmtree(out)
    run_all(out)
    second = snapshot(out)
    assert first.keys() == second.keys() and first == second


def test_console_script(tmp_path):
    exe = shutil.which("entropic-tail")
    if exe is None:
        pytest.skip("console script not installed")
    r = subprocess.run([exe, "conjugate", "eval", "--psi", "sqrt_p", "--out", str(tmp_path), "--no-plots"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0 and "conjugate eval" in r.stdout
