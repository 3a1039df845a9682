r"""Global solver: continuation past a local solution, termination, Gronwall bounds.

Past the right end ``beta`` of the computed solution the fixed-point map is

.. math::

    (Kv)(t) = u_1(t) + \frac{\lambda}{\Gamma(2\alpha)} \int_\beta^t (t-s)^{2\alpha-1}
              \frac{f(s, v(s))}{(\delta + I)^2}\, ds,

where the memory term :math:`u_1` integrates the stored solution over
``[0, beta]``.  On the concatenated grid this is the same discrete map as the
local one with the first ``m + 1`` nodes frozen, so the memory sums are
computed once per extension.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .fracops import SampledFn, TimeGrid, caputo_derivative, gamma_fn, graded_grid, history_sums
from .model import ProblemSpec, eval_conductivity, source_values, validate_hypotheses
from .picard import (
    IntegralMap,
    LocalBall,
    SolveReport,
    _update_diagnostics,
    existence_radius,
    picard_iterate,
    solve_local,
)

__all__ = [
    "ContinuationConfig",
    "GlobalSolution",
    "GronwallCertificate",
    "TerminationVerdict",
    "apply_K",
    "classify_termination",
    "extend_segment",
    "global_solve",
    "gronwall_majorant",
    "history_term_u1",
]

log = logging.getLogger(__name__)

REACHED = "reached-horizon"
ESCAPE = "noncontinuable-escape"
FAILURE = "solver-failure"
RUNNING = "running"

EXTENSION_CLAMP = 1.0
_DENSE_LIMIT = 4096


@dataclass(frozen=True)
class ContinuationConfig:
    """Knobs for :func:`global_solve`.

    ``grid_density`` is grid intervals per unit time; each segment gets
    ``ceil(density * length)`` intervals, clipped to
    ``[min_points, max_points]``.  ``grading > 1`` clusters extension nodes
    toward the segment's left end.  ``max_extension`` tightens the per-step
    clamp ``h <= 1``.  ``blowup_B=None`` means ``1e6 * max(1, |u0|)``.
    """

    step_b: float = 1.0
    blowup_B: float | None = None
    max_segments: int = 1000
    grid_density: float = 200.0
    grading: float = 1.0
    min_points: int = 16
    max_points: int = 4096
    max_extension: float = EXTENSION_CLAMP

    def __post_init__(self):
        if not self.step_b > 0:
            raise ValueError(f"step_b must be > 0, got {self.step_b}")
        if self.blowup_B is not None and not self.blowup_B > 0:
            raise ValueError(f"blowup_B must be > 0, got {self.blowup_B}")
        if self.max_segments < 1:
            raise ValueError(f"max_segments must be >= 1, got {self.max_segments}")
        if not self.grid_density > 0:
            raise ValueError(f"grid_density must be > 0, got {self.grid_density}")
        if not self.grading >= 1.0:
            raise ValueError(f"grading must be >= 1, got {self.grading}")
        if not 1 <= self.min_points <= self.max_points:
            raise ValueError("need 1 <= min_points <= max_points")
        if not 0.0 < self.max_extension <= EXTENSION_CLAMP:
            raise ValueError(f"max_extension must lie in (0, {EXTENSION_CLAMP}], got {self.max_extension}")

    def threshold(self, u0: float) -> float:
        return self.blowup_B if self.blowup_B is not None else 1e6 * max(1.0, abs(u0))

    def intervals(self, length: float) -> int:
        n = math.ceil(self.grid_density * length - 1e-9)
        return int(min(max(n, self.min_points), self.max_points))


@dataclass(frozen=True)
class TerminationVerdict:
    kind: str
    t_star: float | None = None
    bound: float | None = None
    report: SolveReport | None = None

    @property
    def terminal(self) -> bool:
        return self.kind != RUNNING

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t_star": self.t_star,
            "bound": self.bound,
            "report": None if self.report is None else self.report.as_dict(),
        }


@dataclass(frozen=True, eq=False)
class GronwallCertificate:
    """Outcome of :func:`gronwall_majorant`.

    ``status`` is one of ``holds``, ``fails`` (``v`` exceeds the majorant),
    ``hypothesis-violated`` or ``unavailable`` (iteration did not settle).
    """

    w: SampledFn
    a: float
    exponent: float
    majorant: SampledFn | None
    iterations: int
    holds: bool
    status: str
    witness_index: int | None = None
    witness_t: float | None = None
    tail: float = 0.0

    @property
    def available(self) -> bool:
        return self.status != "unavailable"

    def as_dict(self) -> dict:
        return {
            "holds": self.holds,
            "iterations": self.iterations,
            "status": self.status,
            "a": self.a,
            "exponent": self.exponent,
            "witness_index": self.witness_index,
            "witness_t": self.witness_t,
            "tail": self.tail,
        }


@dataclass(eq=False)
class GlobalSolution:
    """Glued segments; the shared boundary node is stored in both, bit-identical."""

    spec: ProblemSpec
    segments: list[SampledFn]
    verdict: TerminationVerdict = field(default_factory=lambda: TerminationVerdict(RUNNING))
    reports: list[SolveReport] = field(default_factory=list)
    certificate: GronwallCertificate | None = None

    @property
    def beta(self) -> float:
        return self.segments[-1].grid.end if self.segments else 0.0

    def trajectory(self) -> SampledFn:
        """All segments on one grid (boundary nodes once)."""
        if not self.segments:
            raise ValueError("solution has no segments")
        t = [self.segments[0].t]
        v = [self.segments[0].values]
        for seg in self.segments[1:]:
            t.append(seg.t[1:])
            v.append(seg.values[1:])
        return SampledFn(TimeGrid(np.concatenate(t)), np.concatenate(v))


def _trapezoid_cumulative(t, y, start=0.0):
    out = np.empty(t.size)
    out[0] = start
    out[1:] = start + np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def history_term_u1(
    solution: GlobalSolution, t: float, spec: ProblemSpec, extension: SampledFn | None = None
) -> float:
    """Memory term ``u1(t)``, integrating the stored solution over ``[0, beta]``.

    With the outer denominator, ``I(t)`` continues past ``beta`` along
    ``extension`` (default: the constant ``u(beta)``).
    """
    traj = solution.trajectory()
    beta = traj.grid.end
    t = float(t)
    if t < beta:
        raise ValueError(f"t = {t} lies before beta = {beta}")
    if spec.lam == 0.0:
        return spec.u0
    th, uh = traj.t, traj.values
    f = eval_conductivity(spec.f, th, uh)
    I = _trapezoid_cumulative(th, f)
    mu = spec.order - 1.0
    left, right, _ = kernels.cell_weights(t - th[1:], np.diff(th), mu)
    coef = spec.lam / gamma_fn(spec.order)
    if spec.denominator == "inner":
        x = f / (spec.delta + I) ** 2
        return spec.u0 + coef * float(left @ x[:-1] + right @ x[1:])
    if extension is None:
        s = np.array([beta, t]) if t > beta else np.array([beta])
        ext_u = np.full(s.size, uh[-1])
    else:
        if extension.grid.start != beta:
            raise ValueError("extension must start at beta")
        inside = extension.t[extension.t < t]
        s = np.append(inside, t)
        ext_u = np.interp(s, extension.t, extension.values)
    It = I[-1]
    if s.size > 1:
        It = _trapezoid_cumulative(s, eval_conductivity(spec.f, s, ext_u), I[-1])[-1]
    num = float(left @ f[:-1] + right @ f[1:])
    return spec.u0 + coef * num / (spec.delta + It) ** 2


def _continuation_map(solution: GlobalSolution, spec: ProblemSpec, new_t) -> tuple[IntegralMap, TimeGrid]:
    traj = solution.trajectory()
    grid = TimeGrid(np.concatenate([traj.t, new_t[1:]]))
    return IntegralMap(spec, grid, traj.values), grid


def apply_K(v: SampledFn, solution: GlobalSolution, spec: ProblemSpec) -> SampledFn:
    """One application of ``K`` on ``v``'s grid, which must start at ``beta``.

    The frozen value at ``beta`` is the stored ``u(beta)``; the returned
    value there is ``u1(beta)``.
    """
    beta = solution.beta
    if v.grid.start != beta:
        raise ValueError(f"grid misalignment: v starts at {v.grid.start}, beta = {beta}")
    kmap, _ = _continuation_map(solution, spec, v.t)
    out = np.empty(len(v))
    out[0] = history_term_u1(solution, beta, spec)
    out[1:] = kmap(v.values)
    return SampledFn(v.grid, out)


def _escape_index(values, bound):
    bad = ~(np.abs(values) <= bound)  # catches nan too
    hits = np.flatnonzero(bad)
    return int(hits[0]) if hits.size else None


def _segment_report(kmap, glued: SampledFn, m: int, spec, updates, status, b, h) -> SolveReport:
    contraction, notes = _update_diagnostics([u for u in updates if math.isfinite(u)])
    if status == "blow-up":
        return SolveReport(len(updates), updates, math.inf, math.inf, False, status, b, h, contraction, notes)
    v = glued.values[m:]
    integral = float(np.max(np.abs(kmap(v) - v[1:])))
    dcap = caputo_derivative(glued, spec.order).values
    f = eval_conductivity(spec.f, glued.t, glued.values)
    I = _trapezoid_cumulative(glued.t, f)
    idx = slice(m + 1, len(glued) - 1)
    differential = 0.0
    if idx.start < idx.stop:
        src = source_values(spec, glued.t[idx], glued.values[idx], I[idx])
        differential = float(np.max(np.abs(dcap[idx] - src)))
    in_ball = bool(np.max(np.abs(v - v[0])) <= b)
    return SolveReport(len(updates), updates, integral, differential, in_ball, status, b, h, contraction, notes)


def extend_segment(
    solution: GlobalSolution,
    spec: ProblemSpec,
    config: ContinuationConfig,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> GlobalSolution:
    """Append one converged segment ``[beta, beta + h]`` (or record why not).

    ``h`` comes from :func:`existence_radius` with ``config.step_b``, clamped
    to ``config.max_extension <= 1`` and to the horizon.
    """
    if solution.verdict.terminal:
        raise ValueError(f"solution is already terminal ({solution.verdict.kind})")
    if not solution.segments:
        raise ValueError("extend_segment needs a first segment")
    beta = solution.beta
    h = existence_radius(config.step_b, spec, cap=config.max_extension)
    end = min(beta + h, spec.horizon_T)
    if not end > beta:
        raise ValueError(f"nothing to extend: beta = {beta}, horizon = {spec.horizon_T}")
    new_grid = graded_grid(beta, end, config.intervals(end - beta), config.grading)
    kmap, grid = _continuation_map(solution, spec, new_grid.points)
    m = kmap.m
    u_beta = solution.segments[-1].values[-1]

    def step(v):
        out = np.empty_like(v)
        out[0] = u_beta
        out[1:] = kmap(v)
        return out

    v, updates, status = picard_iterate(step, np.full(len(new_grid), u_beta), tol, max_iter)
    B = config.threshold(spec.u0)
    if status == "blow-up":
        report = _segment_report(kmap, None, m, spec, updates, status, config.step_b, h)
        j = _escape_index(v, B)
        verdict = TerminationVerdict(ESCAPE, float(new_grid.points[j]), B, report)
        return replace(solution, verdict=verdict, reports=solution.reports + [report])

    segment = SampledFn(new_grid, v)
    glued = SampledFn(grid, np.concatenate([solution.trajectory().values, v[1:]]))
    report = _segment_report(kmap, glued, m, spec, updates, status, config.step_b, h)
    if status != "converged":
        verdict = TerminationVerdict(FAILURE, None, None, report)
        return replace(solution, verdict=verdict, reports=solution.reports + [report])
    extended = replace(solution, segments=solution.segments + [segment], reports=solution.reports + [report])
    return replace(extended, verdict=classify_termination(extended, config))


def _status_verdict(solution: GlobalSolution, config: ContinuationConfig) -> GlobalSolution:
    return replace(solution, verdict=classify_termination(solution, config))


def classify_termination(solution: GlobalSolution, config: ContinuationConfig) -> TerminationVerdict:
    """Escape beats horizon: a node with ``|u| > B`` is reported even when ``beta >= T``.

    While neither applies the verdict is ``running`` if the last segment
    converged, else ``solver-failure`` carrying its report.
    """
    B = config.threshold(solution.spec.u0)
    last = solution.reports[-1] if solution.reports else None
    if solution.segments:
        traj = solution.trajectory()
        j = _escape_index(traj.values, B)
        if j is not None:
            return TerminationVerdict(ESCAPE, float(traj.t[j]), B, last)
        if solution.beta >= solution.spec.horizon_T * (1.0 - 1e-12):
            return TerminationVerdict(REACHED, None, B, last)
    if last is not None and last.converged and solution.segments:
        if len(solution.segments) >= config.max_segments:
            return TerminationVerdict(FAILURE, None, B, last)
        return TerminationVerdict(RUNNING, None, B, last)
    return TerminationVerdict(FAILURE, None, B, last)


def global_solve(
    spec: ProblemSpec,
    config: ContinuationConfig,
    tol: float = 1e-10,
    max_iter: int = 200,
    b: float | None = None,
    certify: bool = True,
) -> GlobalSolution:
    """Local solve on ``[0, h0]``, then extend until a terminal verdict.

    ``b`` is the first segment's ball radius (default ``config.step_b``).  A
    Gronwall certificate is attached when the sampled H1/H2 checks pass on the
    computed range.
    """
    ball = LocalBall.for_spec(spec, config.step_b if b is None else b)
    grid = graded_grid(0.0, ball.h, config.intervals(ball.h), 1.0)
    u, report = solve_local(spec, ball, grid, tol, max_iter)
    solution = GlobalSolution(spec, [], reports=[report])
    B = config.threshold(spec.u0)
    if report.status == "blow-up":
        j = _escape_index(u.values, B)
        return replace(solution, verdict=TerminationVerdict(ESCAPE, float(u.t[j]), B, report))
    if not report.converged:
        return replace(solution, verdict=TerminationVerdict(FAILURE, None, B, report))
    solution = _status_verdict(replace(solution, segments=[u]), config)
    while not solution.verdict.terminal:
        solution = extend_segment(solution, spec, config, tol, max_iter)
        log.debug("segment %d reached beta = %.6g", len(solution.segments), solution.beta)
    if certify and solution.verdict.kind == REACHED:
        solution = replace(solution, certificate=certify_solution(solution, tol))
    return solution


def certify_solution(solution: GlobalSolution, tol: float = 1e-10, samples: int = 41) -> GronwallCertificate | None:
    """Bound ``|u|`` by a Gronwall majorant built from the hypothesis constants.

    With inner or outer placement the denominator is at least ``delta**2``
    and, by (H1), ``f <= c2 + L_f |u|`` (or ``c5 + c4 |u|`` when the growth
    envelope is claimed and passes), so

    ``|u(t)| <= |u0| + lam c t**(2a) / (delta**2 Gamma(2a+1))
    + lam c' / (delta**2 Gamma(2a)) int (t-s)**(2a-1) |u(s)| ds``.

    Returns ``None`` when ``delta = 0`` or the sampled checks fail.
    """
    spec = solution.spec
    if spec.delta == 0.0 or not solution.segments:
        return None
    traj = solution.trajectory()
    lo, hi = float(np.min(traj.values)), float(np.max(traj.values))
    pad = max(1e-6, 0.05 * (hi - lo))
    which = ["H1", "H2-regularized"]
    k = spec.constants
    if k.has_growth:
        which.append("growth")
    audit = validate_hypotheses(spec, (0.0, traj.grid.end), (lo - pad, hi + pad), samples, which)
    if not audit.holds("H1", "H2-regularized"):
        return None
    if k.has_growth and audit.holds("growth"):
        c, c_lin = k.c5, k.c4
    else:
        c, c_lin = k.c2, k.L_f
    order = spec.order
    scale = spec.lam / spec.delta**2
    # slack for the Picard tolerance
    w = abs(spec.u0) + scale * c * traj.t**order / gamma_fn(order + 1.0) + 10.0 * tol
    a = scale * c_lin / gamma_fn(order)
    v = SampledFn(traj.grid, np.abs(traj.values))
    return gronwall_majorant(v, SampledFn(traj.grid, w), a, 1.0 - order)


class _KernelOperator:
    """``x -> int_0^{t_k} (t_k - s)**mu x(s) ds`` on a fixed grid (0 at the first node)."""

    def __init__(self, grid: TimeGrid, mu: float):
        self.grid = grid
        self.mu = mu
        self.dense = None
        n = len(grid)
        if grid.uniform_step() is None and n <= _DENSE_LIMIT:
            t = grid.points
            d = np.diff(t)
            W = np.zeros((n, n))
            for k in range(1, n):
                left, right, _ = kernels.cell_weights(t[k] - t[1 : k + 1], d[:k], mu)
                W[k, :k] += left
                W[k, 1 : k + 1] += right
            self.dense = W

    def __call__(self, x):
        if self.dense is not None:
            return self.dense @ x
        out = np.zeros(len(self.grid))
        out[1:] = history_sums(self.grid, x, self.mu)
        return out


def gronwall_majorant(
    v: SampledFn,
    w: SampledFn,
    a: float,
    exponent: float,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> GronwallCertificate:
    r"""Constructive majorant for ``v <= w + a int_0^t v(s) (t-s)**(-exponent) ds``.

    The hypothesis is checked on the grid first.  The majorant is the last
    iterate of ``m <- w + a K m`` (from ``m = w``) plus a geometric tail
    estimate ``inc q / (1 - q)`` built from the last two increments, so that
    it sits above the discrete fixed point.
    """
    if not np.array_equal(v.t, w.t):
        raise ValueError("v and w must share a grid")
    if not 0.0 < exponent < 1.0:
        raise ValueError(f"exponent must lie in (0, 1), got {exponent}")
    if not (a >= 0.0 and math.isfinite(a)):
        raise ValueError(f"a must be finite and >= 0, got {a}")
    if np.any(w.values < 0.0):
        raise ValueError("forcing w must be nonnegative")
    op = _KernelOperator(w.grid, -exponent)
    wv, vv = w.values, v.values
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = wv + a * op(vv)
    # per-node rounding slack, so a large late majorant cannot mask an early node
    excess = vv - rhs - 1e-12 * np.maximum(1.0, np.maximum(np.abs(vv), np.abs(rhs)))
    bad = np.flatnonzero(excess > 0.0)
    hyp_ok = bad.size == 0

    m = wv.copy()
    incs: list[float] = []
    settled = False
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            new = wv + a * op(m)
            inc = float(np.max(np.abs(new - m)))
        m = new
        incs.append(inc)
        if not math.isfinite(inc):
            break
        if inc <= tol:
            settled = True
            break
    iterations = len(incs)
    if not settled:
        log.warning("Gronwall iteration did not settle in %d sweeps (last increment %s)", iterations, incs[-1])
        idx = int(bad[0]) if bad.size else None
        return GronwallCertificate(
            w, a, exponent, None, iterations, False, "unavailable",
            idx, None if idx is None else float(w.t[idx]),
        )
    tail = incs[-1]
    if len(incs) >= 2 and 0.0 < incs[-2] and incs[-1] < incs[-2]:
        q = incs[-1] / incs[-2]
        tail = incs[-1] * q / (1.0 - q)
    majorant = SampledFn(w.grid, m + tail)
    if not hyp_ok:
        idx = int(bad[0])
        return GronwallCertificate(
            w, a, exponent, majorant, iterations, False, "hypothesis-violated", idx, float(w.t[idx]), tail
        )
    over = np.flatnonzero(vv > majorant.values + 1e-12 * np.maximum(1.0, np.abs(majorant.values)))
    if over.size:
        idx = int(over[0])
        return GronwallCertificate(w, a, exponent, majorant, iterations, False, "fails", idx, float(w.t[idx]), tail)
    return GronwallCertificate(w, a, exponent, majorant, iterations, True, "holds", None, None, tail)
