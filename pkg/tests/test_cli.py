import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from becvortex import cli, gp
from becvortex.pattern import result_from_dict, result_to_dict


def run_json(args, capsys):
    code = cli.run(args)
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip().startswith("{") else out.out), out.err


def test_ladder_example(capsys):
    code, doc, _ = run_json(["ladder", "--s", "2", "--lambda", "1", "--epsilon", "0.01", "--n-max", "5"], capsys)
    assert code == 0
    assert doc["command"] == "ladder" and doc["c1"] == pytest.approx(2 / math.sqrt(4 / math.pi))
    assert len(doc["omega_n"]) == 5
    assert doc["params"] == {"s": 2.0, "lambda": 1.0, "epsilon": 0.01, "delta": 0.1}


def test_ladder_csv(capsys):
    assert cli.run(["ladder", "--epsilon", "0.01", "--n-max", "3", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n,omega_n" and len(lines) == 4


def test_pattern_example(tmp_path):
    out = tmp_path / "p3.json"
    assert cli.run(["pattern", "--n", "3", "--omega", "50", "--s", "2", "--lambda", "1", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    lines = (tmp_path / "p3.csv").read_text().splitlines()
    assert lines[0] == "x_tilde,y_tilde" and len(lines) == 4
    pts = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.allclose(np.hypot(*pts.T), np.hypot(*pts.T)[0], atol=1e-8)
    # JSON re-parses into the originating record
    res = result_from_dict(doc)
    assert result_to_dict(res) == {k: v for k, v in doc.items() if k not in ("command", "params")}


def test_gp_solve_outputs(tmp_path):
    out = tmp_path / "gp.json"
    code = cli.run(["gp-solve", "--epsilon", "0.1", "--omega", "4.5", "--vortex", "0,0", "-o", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["converged"] and [v["winding"] for v in doc["vortices"]] == [1]
    assert len(doc["vortices_tilde"]) == 1
    snap = gp.read_snapshot(tmp_path / "gp.bin")
    assert (snap.nx, snap.ny) == (doc["params"]["nx"], doc["params"]["ny"])
    rep = gp.SolveReport.from_dict(doc)
    assert {k: doc[k] for k in rep.as_dict()} == rep.as_dict()


def test_gp_solve_explicit_grid_and_snapshot(tmp_path):
    snap = tmp_path / "field.bin"
    code = cli.run(["gp-solve", "--epsilon", "0.1", "--omega", "0", "--nx", "64",
                    "--snapshot", str(snap), "-o", str(tmp_path / "r.json")])
    assert code == 0 and gp.read_snapshot(snap).nx == 64


def test_nonconvergence_exit_code(tmp_path):
    code = cli.run(["gp-solve", "--epsilon", "0.1", "--omega", "3", "--gp-max-iters", "3",
                    "-o", str(tmp_path / "r.json")])
    assert code == 2
    assert json.loads((tmp_path / "r.json").read_text())["converged"] is False


@pytest.mark.parametrize("args, needle", [
    (["ladder", "--epsilon", "0.5"], "epsilon"),
    (["ladder", "--epsilon", "0.01", "--s", "1"], "s >= 2"),
    (["ladder", "--epsilon", "0.01", "--lambda", "2"], "lambda"),
    (["ladder"], "--epsilon"),
    (["frobnicate"], "invalid choice"),
    ([], "command"),
    (["pattern", "--omega", "10"], "--n"),
    (["gp-solve", "--epsilon", "0.05", "--omega", "1", "--nx", "20"], "too coarse"),
    (["ladder", "--epsilon", "0.01", "-o", "/nonexistent/dir/x.json"], "not writable"),
    (["report"], "at least one"),
    (["tf", "--format", "csv"], "CSV"),
])
def test_domain_errors(args, needle, capsys):
    assert cli.run(args) == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and needle in err


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nepsilon = 0.001\nlambda=0.5\nn-max = 2\n")
    _, doc, _ = run_json(["ladder", "--config", str(cfg)], capsys)
    assert doc["params"]["epsilon"] == 0.001 and doc["params"]["lambda"] == 0.5
    assert len(doc["omega_n"]) == 2
    _, doc, _ = run_json(["ladder", "--config", str(cfg), "--epsilon", "0.01"], capsys)
    assert doc["params"]["epsilon"] == 0.01 and doc["params"]["lambda"] == 0.5
    _, doc, _ = run_json(["ladder", "--epsilon", "0.01"], capsys)
    assert doc["params"]["lambda"] == 1.0 and len(doc["omega_n"]) == 5


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert cli.run(["ladder", "--config", str(cfg)]) == 1


def test_tf_chi_predict(capsys):
    _, doc, _ = run_json(["tf", "--s", "flat", "--lambda", "0.5", "--resolution", "256"], capsys)
    assert doc["params"]["s"] == "flat" and doc["mu"] == pytest.approx(1 / math.pi)
    assert doc["normalization_residual"] < 1e-5
    _, doc, _ = run_json(["chi", "--s", "2", "--epsilon", "0.01"], capsys)
    assert doc["bound_holds"] and all(1.8 <= o <= 2.2 for o in doc["pde_orders"])
    _, doc, _ = run_json(["predict", "--epsilon", "0.01", "--omega-min", "0", "--omega-max", "20",
                          "--steps", "4"], capsys)
    assert doc["predictions"][0] == {"omega": 0.0, "count": 0}


def test_report_join(tmp_path, capsys):
    lad, sw = tmp_path / "l.json", tmp_path / "s.json"
    assert cli.run(["ladder", "--epsilon", "0.1", "--n-max", "2", "-o", str(lad)]) == 0
    assert cli.run(["sweep", "--epsilon", "0.1", "--mode", "grid", "--omega-min", "0",
                    "--omega-max", "4.5", "--steps", "1", "-o", str(sw)]) == 0
    _, doc, _ = run_json(["report", str(lad), str(sw)], capsys)
    rows = {r["omega"]: r for r in doc["rows"]}
    assert rows[0.0]["measured_count"] == 0 and rows[0.0]["predicted_count"] == 0
    assert rows[4.5]["measured_count"] == 1
    assert sum("ladder_n" in r for r in doc["rows"]) == 2


def test_report_pattern_vs_gp(tmp_path, capsys):
    pat, sol = tmp_path / "p.json", tmp_path / "g.json"
    assert cli.run(["pattern", "--n", "1", "--omega", "4.5", "-o", str(pat)]) == 0
    assert cli.run(["gp-solve", "--epsilon", "0.1", "--omega", "4.5", "--vortex", "0,0", "-o", str(sol)]) == 0
    _, doc, _ = run_json(["report", str(pat), str(sol)], capsys)
    row = [r for r in doc["rows"] if r["omega"] == 4.5][0]
    assert row["gp_count"] == 1 and row["max_mismatch"] < 0.1
    assert row["constraint_residuals"] == [0.0, 0.0]


def test_report_incompatible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.run(["ladder", "--epsilon", "0.1", "-o", str(a)])
    cli.run(["ladder", "--epsilon", "0.05", "-o", str(b)])
    assert cli.run(["report", str(a), str(b)]) == 1


def test_determinism_and_threads(tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("BECVORTEX_THREADS", threads)
        path = tmp_path / f"p{threads}.json"
        cli.run(["pattern", "--n", "4", "--omega", "200", "--seed", "5", "--multistarts", "9", "-o", str(path)])
        outs.append((path.read_bytes(), path.with_suffix(".csv").read_bytes()))
    assert outs[0] == outs[1]


def test_console_script_entry_point(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "becvortex", "ladder", "--epsilon", "0.5"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 1 and "error" in proc.stderr
