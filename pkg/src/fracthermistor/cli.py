"""Command-line front end.

::

    fracthermistor solve run.json      # mode local | global | gronwall
    fracthermistor validate run.json   # hypothesis audit
    fracthermistor converge run.json   # grid-refinement study

Exit codes: 0 for converged / reached-horizon / holds / orders met, 2 for
noncontinuable escape or a violated hypothesis, 1 for solver failure and
any configuration or I/O error.  Relative output paths are resolved against
the config file's directory; ``FRACTHERMISTOR_OUTPUT_DIR`` redirects every
output file into that directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import continuation as cont
from .fracops import SampledFn, caputo_derivative, gamma_fn, rl_integral, uniform_grid
from .model import (
    ConductivitySpec,
    HypothesisConstants,
    ProblemSpec,
    eval_conductivity,
    load_conductivity_table,
    source_values,
    validate_hypotheses,
)
from .picard import LocalBall, apply_A, existence_radius, residuals, solve_local

__all__ = ["ConfigError", "RunConfig", "convergence_study", "load_config", "main", "run"]

log = logging.getLogger("fracthermistor")

OUTPUT_DIR_ENV = "FRACTHERMISTOR_OUTPUT_DIR"
MODES = ("local", "global", "validate", "converge", "gronwall")
SOLVE_MODES = ("local", "global", "gronwall")
EXIT_OK, EXIT_FAIL, EXIT_INFO = 0, 1, 2


class ConfigError(ValueError):
    """Schema or invariant violation; the message starts with the field path."""


# -- schema ----------------------------------------------------------------

NUM, INT, STR, BOOL = "number", "integer", "string", "boolean"

_PROBLEM = {
    "alpha": (NUM, True),
    "lambda": (NUM, True),
    "u0": (NUM, True),
    "horizon_T": (NUM, True),
    "delta": (NUM, False),
    "denominator": (STR, False),
    "conductivity": (
        {
            "family": (STR, True),
            "params": ("numbers", False),
            "table_path": (STR, False),
        },
        True,
    ),
    "constants": (
        {
            "c1": (NUM, True),
            "c2": (NUM, True),
            "L_f": (NUM, True),
            "M": (NUM, True),
            "omega": (NUM, False),
            "c3": (NUM, False),
            "c4": (NUM, False),
            "c5": (NUM, False),
        },
        True,
    ),
}

SCHEMA = {
    "mode": (STR, True),
    "problem": (_PROBLEM, True),
    "solver": (
        {"b": (NUM, False), "tol": (NUM, False), "max_iter": (INT, False), "grid_points": (INT, False)},
        False,
    ),
    "continuation": (
        {
            "step_b": (NUM, False),
            "blowup_B": (NUM, False),
            "max_segments": (INT, False),
            "grid_density": (NUM, False),
            "grading": (NUM, False),
            "min_points": (INT, False),
            "max_points": (INT, False),
            "max_extension": (NUM, False),
        },
        False,
    ),
    "validate": (
        {"s_range": ("pair", False), "u_range": ("pair", False), "samples": (INT, False), "which": ("strings", False)},
        False,
    ),
    "converge": (
        {
            "target": (STR, False),
            "function": (STR, False),
            "order": (NUM, False),
            "ladder": ("integers", False),
            "reference_points": (INT, False),
        },
        False,
    ),
    "outputs": ({"trajectory_path": (STR, False), "report_path": (STR, False)}, False),
}


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_leaf(kind: str, value, path: str) -> None:
    ok = {
        NUM: _is_num(value),
        INT: isinstance(value, int) and not isinstance(value, bool),
        STR: isinstance(value, str) and value != "",
        BOOL: isinstance(value, bool),
        "pair": isinstance(value, list) and len(value) == 2 and all(_is_num(v) for v in value),
        "numbers": isinstance(value, dict) and all(_is_num(v) for v in value.values()),
        "strings": isinstance(value, list) and all(isinstance(v, str) for v in value),
        "integers": isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value),
    }[kind]
    if not ok:
        raise ConfigError(f"{path}: expected {kind}, got {value!r}")


def check_schema(obj, schema=SCHEMA, path: str = "") -> None:
    """Fail-closed structural check: unknown keys, missing keys, wrong types."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    for key in obj:
        if key not in schema:
            raise ConfigError(f"{path + key}: unknown key")
    for key, (kind, required) in schema.items():
        where = path + key
        if key not in obj or obj[key] is None:
            if required:
                raise ConfigError(f"{where}: missing required key")
            continue
        if isinstance(kind, dict):
            check_schema(obj[key], kind, where + ".")
        else:
            _check_leaf(kind, obj[key], where)


@dataclass
class RunConfig:
    mode: str
    spec: ProblemSpec
    b: float
    tol: float
    max_iter: int
    grid_points: int
    continuation: cont.ContinuationConfig
    validate: dict
    converge: dict
    trajectory_path: Path | None
    report_path: Path | None


def _invariant(path: str, build):
    try:
        return build()
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _output_path(raw: str | None, base: Path) -> Path | None:
    if raw is None:
        return None
    override = os.environ.get(OUTPUT_DIR_ENV)
    if override:
        return Path(override) / Path(raw).name
    p = Path(raw)
    return p if p.is_absolute() else base / p


def load_config(path) -> RunConfig:
    """Read, schema-check and build every typed object before any compute."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"<file>: config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: invalid JSON: {exc}") from exc
    check_schema(raw)
    mode = raw["mode"]
    if mode not in MODES:
        raise ConfigError(f"mode: must be one of {MODES}, got {mode!r}")
    base = path.parent

    prob = raw["problem"]
    cond = prob["conductivity"]
    table = None
    if cond.get("table_path") is not None:
        tpath = Path(cond["table_path"])
        tpath = tpath if tpath.is_absolute() else base / tpath
        table = _invariant("problem.conductivity.table_path", lambda: load_conductivity_table(tpath))
    f = _invariant(
        "problem.conductivity",
        lambda: ConductivitySpec(cond["family"], dict(cond.get("params") or {}), table),
    )
    consts = {k: v for k, v in prob["constants"].items() if v is not None}
    constants = _invariant("problem.constants", lambda: HypothesisConstants(**consts))
    spec = _invariant(
        "problem",
        lambda: ProblemSpec(
            alpha=prob["alpha"],
            lam=prob["lambda"],
            u0=prob["u0"],
            f=f,
            constants=constants,
            horizon_T=prob["horizon_T"],
            delta=prob.get("delta"),
            denominator=prob.get("denominator") or "inner",
        ),
    )

    solver = raw.get("solver") or {}
    b = solver.get("b", 1.0)
    tol = solver.get("tol", 1e-10)
    max_iter = solver.get("max_iter", 200)
    grid_points = solver.get("grid_points", 512)
    for name, ok, rule in (
        ("b", b > 0, "> 0"),
        ("tol", tol > 0, "> 0"),
        ("max_iter", max_iter >= 1, ">= 1"),
        ("grid_points", grid_points >= 2, ">= 2"),
    ):
        if not ok:
            raise ConfigError(f"solver.{name}: must be {rule}, got {solver[name]!r}")

    cc = {k: v for k, v in (raw.get("continuation") or {}).items() if v is not None}
    ccfg = _invariant("continuation", lambda: cont.ContinuationConfig(**cc))

    val = dict(raw.get("validate") or {})
    if "samples" in val and val["samples"] < 2:
        raise ConfigError(f"validate.samples: must be >= 2, got {val['samples']}")
    conv = dict(raw.get("converge") or {})
    if conv.get("target", "solve") not in ("solve", "caputo", "rl"):
        raise ConfigError(f"converge.target: must be one of solve, caputo, rl, got {conv['target']!r}")
    if conv.get("function", "t^2") not in _FUNCTIONS:
        raise ConfigError(f"converge.function: must be one of {sorted(_FUNCTIONS)}, got {conv['function']!r}")
    order = conv.get("order", 0.5)
    if not 0.0 < order < 1.0:
        raise ConfigError(f"converge.order: must lie in (0, 1), got {order}")
    ladder = conv.get("ladder", [128, 256, 512, 1024])
    if len(ladder) < 3:
        raise ConfigError(f"converge.ladder: needs at least 3 entries, got {len(ladder)}")
    if any(n < 2 for n in ladder) or sorted(set(ladder)) != list(ladder):
        raise ConfigError("converge.ladder: entries must be strictly increasing integers >= 2")
    if "reference_points" in conv and conv["reference_points"] < ladder[-1]:
        raise ConfigError("converge.reference_points: must be >= the largest ladder entry")

    outs = raw.get("outputs") or {}
    return RunConfig(
        mode=mode,
        spec=spec,
        b=float(b),
        tol=float(tol),
        max_iter=int(max_iter),
        grid_points=int(grid_points),
        continuation=ccfg,
        validate=val,
        converge=conv,
        trajectory_path=_output_path(outs.get("trajectory_path"), base),
        report_path=_output_path(outs.get("report_path"), base),
    )


# -- outputs ---------------------------------------------------------------


def _num(x):
    """JSON-safe float: non-finite values become null."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _fmt(x) -> str:
    return repr(float(x))


def trajectory_rows(u: SampledFn, spec: ProblemSpec):
    """Rows ``t, u, I, S, residual``; ``S`` is blank where the source is singular."""
    t, v = u.t, u.values
    f = eval_conductivity(spec.f, t, v)
    I = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
    res = np.abs(v - apply_A(u, spec).values)
    if spec.lam == 0.0:
        S = np.zeros(t.size)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = (spec.delta + I) ** 2
            S = np.where(denom > 0.0, spec.lam * f / np.where(denom > 0.0, denom, 1.0), np.nan)
    for k in range(t.size):
        s_cell = _fmt(S[k]) if math.isfinite(S[k]) else ""
        yield [_fmt(t[k]), _fmt(v[k]), _fmt(I[k]), s_cell, _fmt(res[k])]


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_report(path: Path, report: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _base_report(mode: str) -> dict:
    return {
        "mode": mode,
        "verdict": None,
        "h": None,
        "beta": None,
        "iterations": None,
        "integral_residual": None,
        "differential_residual": None,
        "certificate": {"holds": None, "iterations": None},
        "timings_ms": {},
    }


# -- modes -------------------------------------------------------------------


def _run_local(cfg: RunConfig, report: dict) -> tuple[int, SampledFn | None]:
    ball = LocalBall.for_spec(cfg.spec, cfg.b)
    grid = uniform_grid(0.0, ball.h, cfg.grid_points)
    u, rep = solve_local(cfg.spec, ball, grid, cfg.tol, cfg.max_iter)
    report.update(
        verdict=rep.status,
        h=ball.h,
        beta=ball.h,
        iterations=rep.iterations,
        integral_residual=_num(rep.integral_residual),
        differential_residual=_num(rep.differential_residual),
        in_ball=rep.in_ball,
        warnings=rep.warnings,
    )
    if rep.converged:
        return EXIT_OK, u
    return EXIT_FAIL, (None if u.blowup else u)


def _run_global(cfg: RunConfig, report: dict, need_certificate: bool) -> tuple[int, SampledFn | None]:
    sol = cont.global_solve(cfg.spec, cfg.continuation, cfg.tol, cfg.max_iter, b=cfg.b)
    verdict = sol.verdict
    report.update(
        verdict=verdict.kind,
        h=existence_radius(cfg.b, cfg.spec),
        beta=sol.beta,
        iterations=sum(r.iterations for r in sol.reports),
        segments=len(sol.segments),
        t_star=_num(verdict.t_star),
        bound=_num(verdict.bound),
    )
    traj = sol.trajectory() if sol.segments else None
    if traj is not None and len(traj) >= 3:
        integral, differential = residuals(traj, cfg.spec)
        report.update(integral_residual=_num(integral), differential_residual=_num(differential))
    cert = sol.certificate
    if cert is not None:
        report["certificate"] = {"holds": cert.holds, "iterations": cert.iterations, "status": cert.status}
    if verdict.kind == cont.ESCAPE:
        return EXIT_INFO, traj
    if verdict.kind != cont.REACHED:
        return EXIT_FAIL, traj
    if need_certificate:
        if cert is None:
            report["certificate"]["status"] = "hypothesis-violated"
            return EXIT_INFO, traj
        if cert.status == "unavailable":
            return EXIT_FAIL, traj
        return (EXIT_OK if cert.holds else EXIT_INFO), traj
    return EXIT_OK, traj


def _run_validate(cfg: RunConfig, report: dict) -> int:
    spec = cfg.spec
    val = cfg.validate
    s_range = tuple(val.get("s_range", (0.0, spec.horizon_T)))
    u_range = tuple(val.get("u_range", (spec.u0 - cfg.b, spec.u0 + cfg.b)))
    audit = validate_hypotheses(spec, s_range, u_range, val.get("samples", 41), val.get("which"))
    report.update(
        verdict="holds" if audit.all_hold else "violated",
        h=existence_radius(cfg.b, spec),
        hypotheses=audit.as_dict(),
    )
    return EXIT_OK if audit.all_hold else EXIT_INFO


_FUNCTIONS = {
    "1": (lambda t: np.ones_like(t), 0.0),
    "t": (lambda t: t, 1.0),
    "t^2": (lambda t: t**2, 2.0),
}


def _analytic(function: str, target: str, order: float, t):
    """Exact Caputo derivative or RL integral of ``t**p``."""
    _, p = _FUNCTIONS[function]
    if target == "caputo":
        if p == 0.0:
            return np.zeros_like(t)
        return gamma_fn(p + 1.0) / gamma_fn(p + 1.0 - order) * t ** (p - order)
    return gamma_fn(p + 1.0) / gamma_fn(p + 1.0 + order) * t ** (p + order)


EXACTNESS_FLOOR = 1e-13


def convergence_study(cfg: RunConfig) -> tuple[bool, list[dict]]:
    """Sup errors and empirical orders over the grid ladder.

    Errors below ``EXACTNESS_FLOOR`` (relative to the reference scale) count as
    exact; orders between two exact entries are not judged.
    """
    conv = cfg.converge
    target = conv.get("target", "solve")
    ladder = list(conv.get("ladder", [128, 256, 512, 1024]))
    spec = cfg.spec
    errors = []
    if target == "solve":
        ball = LocalBall.for_spec(spec, cfg.b)
        n_ref = conv.get("reference_points", 8 * ladder[-1])
        n_ref = ladder[-1] * math.ceil(n_ref / ladder[-1])
        uref, rep = solve_local(spec, ball, uniform_grid(0.0, ball.h, n_ref), cfg.tol, cfg.max_iter)
        if not rep.converged:
            raise RuntimeError(f"reference solve did not converge ({rep.status})")
        scale = max(1.0, uref.sup_norm())
        expected = min(2.0 - spec.order, 1.0)
        for n in ladder:
            if n_ref % n:
                raise ConfigError(f"converge.reference_points: {n_ref} is not a multiple of {n}")
            u, rep = solve_local(spec, ball, uniform_grid(0.0, ball.h, n), cfg.tol, cfg.max_iter)
            if not rep.converged:
                raise RuntimeError(f"solve at N={n} did not converge ({rep.status})")
            errors.append(float(np.max(np.abs(u.values - uref.values[:: n_ref // n]))))
        judge = lambda q: q >= expected - 0.25  # noqa: E731
    else:
        function = conv.get("function", "t^2")
        order = conv.get("order", 0.5)
        g_fn = _FUNCTIONS[function][0]
        op = caputo_derivative if target == "caputo" else rl_integral
        expected = 2.0 - order if target == "caputo" else 2.0
        scale = 1.0
        for n in ladder:
            grid = uniform_grid(0.0, 1.0, n)
            got = op(SampledFn(grid, g_fn(grid.points)), order).values
            ref = _analytic(function, target, order, grid.points)
            scale = max(scale, float(np.max(np.abs(ref))))
            errors.append(float(np.max(np.abs(got - ref))))
        judge = lambda q: abs(q - expected) <= 0.25  # noqa: E731
    floor = EXACTNESS_FLOOR * scale
    rows = []
    ok = True
    for i, (n, e) in enumerate(zip(ladder, errors)):
        row = {"N": n, "error": e, "order": None}
        if i > 0:
            prev = errors[i - 1]
            if prev > floor and e > floor:
                row["order"] = math.log2(prev / e) / math.log2(n / ladder[i - 1])
                ok &= judge(row["order"])
            elif prev > floor:
                row["order"] = math.inf
        rows.append(row)
    return ok, rows


def _run_converge(cfg: RunConfig, report: dict) -> tuple[int, list[dict]]:
    ok, rows = convergence_study(cfg)
    report.update(
        verdict="pass" if ok else "fail",
        h=existence_radius(cfg.b, cfg.spec),
        ladder=[{"N": r["N"], "error": _num(r["error"]), "order": _num(r["order"])} for r in rows],
        target=cfg.converge.get("target", "solve"),
    )
    return (EXIT_OK if ok else EXIT_FAIL), rows


def run(config_path, subcommand: str | None = None) -> int:
    """Execute one config; returns the process exit code."""
    t_start = time.perf_counter()
    try:
        cfg = load_config(config_path)
        if subcommand == "solve" and cfg.mode not in SOLVE_MODES:
            raise ConfigError(f"mode: 'solve' runs {SOLVE_MODES}, got {cfg.mode!r}")
        if subcommand in ("validate", "converge") and cfg.mode != subcommand:
            raise ConfigError(f"mode: '{subcommand}' needs mode {subcommand!r}, got {cfg.mode!r}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_FAIL

    report = _base_report(cfg.mode)
    traj = None
    rows = None
    t_compute = time.perf_counter()
    try:
        if cfg.mode == "local":
            code, traj = _run_local(cfg, report)
        elif cfg.mode in ("global", "gronwall"):
            code, traj = _run_global(cfg, report, need_certificate=cfg.mode == "gronwall")
        elif cfg.mode == "validate":
            code = _run_validate(cfg, report)
        else:
            code, rows = _run_converge(cfg, report)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_FAIL
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        log.error("%s failed: %s", cfg.mode, exc)
        report.update(verdict="error", error=str(exc))
        code = EXIT_FAIL
    report["timings_ms"]["compute"] = round(1e3 * (time.perf_counter() - t_compute), 3)

    try:
        if cfg.trajectory_path is not None:
            if rows is not None:
                _write_csv(
                    cfg.trajectory_path,
                    ["N", "error", "order"],
                    ([r["N"], _fmt(r["error"]), "" if r["order"] is None else _fmt(r["order"])] for r in rows),
                )
            elif traj is not None:
                _write_csv(cfg.trajectory_path, ["t", "u", "I", "S", "residual"], trajectory_rows(traj, cfg.spec))
        report["timings_ms"]["total"] = round(1e3 * (time.perf_counter() - t_start), 3)
        if cfg.report_path is not None:
            _write_report(cfg.report_path, report)
    except OSError as exc:
        log.error("cannot write outputs: %s", exc)
        return EXIT_FAIL
    log.info("%s: verdict=%s exit=%d", cfg.mode, report["verdict"], code)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracthermistor",
        description="Fractional nonlocal thermistor solver (Caputo order 2*alpha).",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("solve", "run a local, global or gronwall-mode config"),
        ("validate", "audit the hypothesis constants on a sample"),
        ("converge", "grid-refinement study with empirical orders"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("config", type=Path, help="JSON run configuration")
        cmd.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress progress lines")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.ERROR if args.quiet else logging.INFO)
    return run(args.config, args.command)


if __name__ == "__main__":
    sys.exit(main())
