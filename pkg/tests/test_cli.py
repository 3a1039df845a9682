import csv
import json
import subprocess
import sys

import pytest

from fracthermistor.cli import OUTPUT_DIR_ENV, ConfigError, check_schema, load_config, main

REFERENCE_PROBLEM = {
    "alpha": 0.25,
    "lambda": 1.0,
    "u0": 0.0,
    "horizon_T": 1.0,
    "delta": 1.0,
    "conductivity": {"family": "bounded-oscillatory", "params": {"c": 2.0, "eps": 1.0}},
    "constants": {"c1": 2.0, "c2": 3.0, "L_f": 1.0, "M": 12.0},
}

ESCAPE_PROBLEM = {
    "alpha": 0.25,
    "lambda": 20.0,
    "u0": 1.0,
    "horizon_T": 5.0,
    "delta": 1.0,
    "conductivity": {"family": "affine-growth", "params": {"c3": 1.0, "c4": 10.0}},
    "constants": {"c1": 1.0, "c2": 1e6, "L_f": 10.0, "M": 10.0, "c3": 1.0, "c4": 10.0, "c5": 1.0},
}


def make_config(tmp_path, mode="local", problem=None, name="run.json", **sections):
    cfg = {"mode": mode, "problem": json.loads(json.dumps(problem or REFERENCE_PROBLEM))}
    cfg["outputs"] = {"trajectory_path": "out/traj.csv", "report_path": "out/report.json"}
    cfg.update(sections)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_report(tmp_path):
    return json.loads((tmp_path / "out" / "report.json").read_text())


def read_csv(tmp_path):
    with (tmp_path / "out" / "traj.csv").open() as fh:
        return list(csv.reader(fh))


# -- solve ---------------------------------------------------------------------


def test_local_solve_outputs(tmp_path):
    path = make_config(tmp_path, solver={"grid_points": 64})
    assert main(["--quiet", "solve", str(path)]) == 0
    report = read_report(tmp_path)
    for key in ("mode", "verdict", "h", "beta", "iterations", "integral_residual", "differential_residual",
                "certificate", "timings_ms"):
        assert key in report
    assert report["verdict"] == "converged" and report["integral_residual"] <= 1e-9
    rows = read_csv(tmp_path)
    assert rows[0] == ["t", "u", "I", "S", "residual"]
    assert len(rows) == 66
    assert float(rows[1][0]) == 0.0 and float(rows[1][1]) == 0.0


def test_global_exit_codes(tmp_path):
    zero = dict(REFERENCE_PROBLEM, **{"lambda": 0.0})
    assert main(["solve", str(make_config(tmp_path, "global", zero)), "--quiet"]) == 0
    assert read_report(tmp_path)["verdict"] == "reached-horizon"

    assert main(["--quiet", "solve", str(make_config(tmp_path, "global", ESCAPE_PROBLEM,
                                                      continuation={"blowup_B": 10.0}))]) == 2
    report = read_report(tmp_path)
    assert report["verdict"] == "noncontinuable-escape" and report["t_star"] > 0.0

    assert main(["--quiet", "solve", str(make_config(tmp_path, "global", solver={"max_iter": 1}))]) == 1
    assert read_report(tmp_path)["verdict"] == "solver-failure"


def test_gronwall_mode(tmp_path):
    problem = dict(REFERENCE_PROBLEM, horizon_T=2.0)
    assert main(["--quiet", "solve", str(make_config(tmp_path, "gronwall", problem))]) == 0
    report = read_report(tmp_path)
    assert report["certificate"]["holds"] is True and report["certificate"]["iterations"] > 0
    assert report["beta"] == pytest.approx(2.0)


def test_local_failure_exit(tmp_path):
    path = make_config(tmp_path, solver={"max_iter": 1, "grid_points": 32})
    assert main(["--quiet", "solve", str(path)]) == 1
    assert read_report(tmp_path)["verdict"] == "max-iter"


# -- validate ------------------------------------------------------------------


def test_validate_exit_codes(tmp_path):
    assert main(["--quiet", "validate", str(make_config(tmp_path, "validate", validate={"which": ["H1"]}))]) == 0
    assert read_report(tmp_path)["verdict"] == "holds"
    path = make_config(tmp_path, "validate", validate={"which": ["H1", "H2"], "s_range": [0.0, 1.0]})
    assert main(["--quiet", "validate", str(path)]) == 2
    report = read_report(tmp_path)
    assert report["verdict"] == "violated"
    assert report["hypotheses"]["verdicts"]["H2"]["holds"] is False


# -- converge ------------------------------------------------------------------


def test_converge_caputo(tmp_path):
    conv = {"target": "caputo", "function": "t^2", "order": 0.5, "ladder": [256, 512, 1024]}
    assert main(["--quiet", "converge", str(make_config(tmp_path, "converge", converge=conv))]) == 0
    rows = read_csv(tmp_path)
    assert rows[0] == ["N", "error", "order"]
    assert rows[1][2] == "" and abs(float(rows[2][2]) - 1.5) <= 0.25


@pytest.mark.parametrize("target", ["caputo", "rl"])
@pytest.mark.parametrize("function", ["1", "t", "t^2"])
def test_converge_every_pair_passes(tmp_path, target, function):
    conv = {"target": target, "function": function, "order": 0.25, "ladder": [128, 256, 512]}
    assert main(["--quiet", "converge", str(make_config(tmp_path, "converge", converge=conv))]) == 0
    assert read_report(tmp_path)["ladder"][-1]["error"] < 1e-4


def test_converge_exact_pair_hits_the_floor(tmp_path):
    conv = {"target": "rl", "function": "1", "order": 0.5, "ladder": [64, 128, 256]}
    assert main(["--quiet", "converge", str(make_config(tmp_path, "converge", converge=conv))]) == 0
    for row in read_report(tmp_path)["ladder"]:
        assert row["error"] < 1e-13 and row["order"] is None


def test_converge_solve(tmp_path):
    zero = dict(REFERENCE_PROBLEM, **{"lambda": 0.0})
    conv = {"target": "solve", "ladder": [16, 32, 64]}
    assert main(["--quiet", "converge", str(make_config(tmp_path, "converge", zero, converge=conv))]) == 0
    assert all(r["error"] == 0.0 for r in read_report(tmp_path)["ladder"])
    conv = {"target": "solve", "ladder": [32, 64, 128]}
    assert main(["--quiet", "converge", str(make_config(tmp_path, "converge", converge=conv))]) == 0
    orders = [r["order"] for r in read_report(tmp_path)["ladder"][1:]]
    assert all(q >= 0.75 for q in orders)


# -- configuration errors ------------------------------------------------------------


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda c: c["problem"]["constants"].update(Q=1.0), "problem.constants.Q: unknown key"),
        (lambda c: c["problem"].pop("u0"), "problem.u0: missing required key"),
        (lambda c: c["problem"].update(alpha="0.25"), "problem.alpha: expected number"),
        (lambda c: c["problem"].update(alpha=0.7), "(0, 0.5)"),
        (lambda c: c.update(mode="explode"), "mode: must be one of"),
        (lambda c: c.update(solver={"tol": 0.0}), "solver.tol"),
        (lambda c: c.update(converge={"ladder": [64, 128]}), "converge.ladder: needs at least 3"),
        (lambda c: c.update(converge={"ladder": [64, 32, 128]}), "strictly increasing"),
        (lambda c: c.update(continuation={"max_extension": 3.0}), "continuation:"),
        (lambda c: c["problem"]["conductivity"].update(family="nope"), "problem.conductivity"),
        (lambda c: c["problem"]["constants"].update(c1=-1.0), "problem.constants"),
        (lambda c: c["problem"]["conductivity"].update(table_path="missing.csv"), "table_path"),
    ],
)
def test_config_errors_name_the_field(tmp_path, capsys, mutate, message):
    path = make_config(tmp_path)
    cfg = json.loads(path.read_text())
    mutate(cfg)
    path.write_text(json.dumps(cfg))
    assert main(["solve", str(path)]) == 1
    assert message in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_unreadable_configs(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "absent.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "config not found" in err and "invalid JSON" in err


def test_subcommand_must_match_mode(tmp_path, capsys):
    assert main(["validate", str(make_config(tmp_path, "local"))]) == 1
    assert main(["solve", str(make_config(tmp_path, "converge"))]) == 1
    assert "mode:" in capsys.readouterr().err


def test_check_schema_root():
    with pytest.raises(ConfigError, match="<root>"):
        check_schema([])


# -- outputs ---------------------------------------------------------------------


def test_relative_outputs_resolve_against_config_dir(tmp_path, monkeypatch):
    sub = tmp_path / "cfgdir"
    sub.mkdir()
    path = make_config(sub, solver={"grid_points": 16})
    monkeypatch.chdir(tmp_path)
    assert main(["--quiet", "solve", str(path)]) == 0
    assert (sub / "out" / "traj.csv").exists()


def test_output_dir_override(tmp_path, monkeypatch):
    target = tmp_path / "redirect"
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(target))
    path = make_config(tmp_path, solver={"grid_points": 16})
    assert load_config(path).trajectory_path == target / "traj.csv"
    assert main(["--quiet", "solve", str(path)]) == 0
    assert (target / "traj.csv").exists() and (target / "report.json").exists()
    assert not (tmp_path / "out").exists()


def test_trajectories_are_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    for d in (a, b):
        assert main(["--quiet", "solve", str(make_config(d, "global"))]) == 0
    assert (a / "out" / "traj.csv").read_bytes() == (b / "out" / "traj.csv").read_bytes()


def test_module_entry_point(tmp_path):
    path = make_config(tmp_path, solver={"grid_points": 16})
    proc = subprocess.run([sys.executable, "-m", "fracthermistor", "solve", str(path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "verdict=converged" in proc.stderr


@pytest.mark.parametrize("mode", ["local", "global"])
def test_report_is_recomputable_from_csv(tmp_path, mode):
    import numpy as np

    from fracthermistor.fracops import SampledFn, TimeGrid
    from fracthermistor.picard import existence_radius, residuals

    path = make_config(tmp_path, mode, dict(REFERENCE_PROBLEM, horizon_T=1.5), solver={"grid_points": 64})
    assert main(["--quiet", "solve", str(path)]) == 0
    report = read_report(tmp_path)
    rows = read_csv(tmp_path)[1:]
    t = np.array([float(r[0]) for r in rows])
    u = SampledFn(TimeGrid(t), np.array([float(r[1]) for r in rows]))
    spec = load_config(path).spec
    assert report["h"] == existence_radius(1.0, spec)
    assert (report["integral_residual"], report["differential_residual"]) == residuals(u, spec)
    assert max(float(r[4]) for r in rows) == report["integral_residual"]
    if mode == "global":
        assert report["beta"] == t[-1] == pytest.approx(1.5)
        assert report["verdict"] == "reached-horizon"
    else:
        assert report["beta"] == t[-1] == report["h"]
