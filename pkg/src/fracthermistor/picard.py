r"""Local solver on ``[0, h]``.

The integral form

.. math::

    u(t) = u_0 + \frac{\lambda}{\Gamma(2\alpha)} \int_0^t (t - s)^{2\alpha - 1}
           \frac{f(s, u(s))}{(\delta + I)^2}\, ds

is iterated from the constant guess ``u_0``.  Existence on ``[0, h]`` comes
from a non-constructive fixed-point argument, so convergence of the Picard
sweeps is observed, not guaranteed; every report says so.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fracops import SampledFn, TimeGrid, caputo_derivative, gamma_fn, history_sums, uniform_grid
from .model import ProblemSpec, SingularSourceError, eval_conductivity, source_values

__all__ = [
    "IntegralMap",
    "LocalBall",
    "SolveReport",
    "apply_A",
    "equicontinuity_constant",
    "existence_radius",
    "residuals",
    "solve_local",
]

log = logging.getLogger(__name__)

EMPIRICAL_CAVEAT = "Picard convergence is empirical; the existence argument gives no contraction guarantee"


def existence_radius(b: float, spec: ProblemSpec, cap: float | None = None) -> float:
    """``min{(b Gamma(2a+1) c1**2 / (lambda M))**(1/(2a)), cap}``.

    ``cap`` defaults to the horizon ``T``.  With ``lambda = 0`` the first
    branch is infinite and the result is ``cap``.
    """
    if not b > 0:
        raise ValueError(f"ball radius b must be > 0, got {b}")
    cap = spec.horizon_T if cap is None else float(cap)
    k = spec.constants
    if spec.lam == 0.0:
        return cap
    order = spec.order
    growth = spec.lam * k.M / (gamma_fn(order + 1.0) * k.c1**2)
    try:
        radius = (b / growth) ** (1.0 / order)
    except OverflowError:
        radius = math.inf
    return min(radius, cap)


@dataclass(frozen=True)
class LocalBall:
    """Sup-norm ball of radius ``b`` around ``u0`` on ``[0, h]``."""

    b: float
    h: float

    @classmethod
    def for_spec(cls, spec: ProblemSpec, b: float = 1.0) -> "LocalBall":
        return cls(b, existence_radius(b, spec))

    def check(self, spec: ProblemSpec) -> None:
        expected = existence_radius(self.b, spec)
        if not math.isclose(self.h, expected, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"ball h={self.h} does not match existence_radius(b={self.b}) = {expected}")


class IntegralMap:
    """The fixed-point map with history frozen on nodes ``0..m`` of ``grid``.

    Calling it with values ``v`` on nodes ``m..n-1`` returns the map's values
    on nodes ``m+1..n-1``.  The value at node ``m`` is always taken from the
    history, so ``v[0]`` is ignored.  ``m = 0`` is the local operator; ``m > 0`` is the
    continuation operator, whose frozen-history part (the memory term) is
    summed once at construction.
    """

    def __init__(self, spec: ProblemSpec, grid: TimeGrid, history):
        history = np.atleast_1d(np.asarray(history, dtype=float))
        self.spec = spec
        self.grid = grid
        self.m = m = history.size - 1
        self.u_frozen = float(history[-1])
        t = grid.points
        if m >= t.size - 1:
            raise ValueError("grid has no nodes beyond the frozen history")
        self.mu = spec.order - 1.0
        self.coef = spec.lam / gamma_fn(spec.order)
        self.x = np.zeros(t.size)
        self.I = np.zeros(t.size)
        if spec.lam == 0.0:
            return
        f_hist = eval_conductivity(spec.f, t[: m + 1], history)
        self.I[1 : m + 1] = np.cumsum(0.5 * (f_hist[1:] + f_hist[:-1]) * np.diff(t[: m + 1]))
        if spec.denominator == "inner":
            self.x[: m + 1] = self._inner(f_hist, self.I[: m + 1])
        else:
            self.x[: m + 1] = f_hist
        if m > 0:
            self.H = history_sums(grid, self.x, self.mu, k0=m + 1, c_lo=0, c_hi=m)
        else:
            self.H = np.zeros(t.size - 1)

    def _inner(self, f, I):
        denom = (self.spec.delta + I) ** 2
        if np.any(denom == 0.0):
            raise SingularSourceError("source denominator (delta + I(s))^2 vanished; use delta > 0")
        return f / denom

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        spec = self.spec
        m = self.m
        t = self.grid.points
        if v.size != t.size - m:
            raise ValueError(f"expected {t.size - m} values on nodes {m}..{t.size - 1}, got {v.size}")
        if spec.lam == 0.0:
            return np.full(v.size - 1, spec.u0)
        tn = t[m:]
        v = v.copy()
        v[0] = self.u_frozen
        f_new = eval_conductivity(spec.f, tn, v)
        I_new = self.I[m] + np.concatenate([[0.0], np.cumsum(0.5 * (f_new[1:] + f_new[:-1]) * np.diff(tn))])
        self.I[m:] = I_new
        if spec.denominator == "inner":
            self.x[m:] = self._inner(f_new, I_new)
        else:
            self.x[m:] = f_new
        num = self.H + history_sums(self.grid, self.x, self.mu, k0=m + 1, c_lo=m)
        if spec.denominator == "outer":
            denom = (spec.delta + I_new[1:]) ** 2
            if np.any(denom == 0.0):
                raise SingularSourceError("source denominator (delta + I(t))^2 vanished; use delta > 0")
            num = num / denom
        return spec.u0 + self.coef * num


def apply_A(u: SampledFn, spec: ProblemSpec) -> SampledFn:
    """One application of the local fixed-point operator; ``(Au)(t_0) = u0``."""
    if u.t[0] != 0.0:
        raise ValueError("apply_A needs a grid starting at t = 0")
    amap = IntegralMap(spec, u.grid, u.values[:1])
    out = np.empty(len(u))
    out[0] = spec.u0
    out[1:] = amap(u.values)
    return SampledFn(u.grid, out)


@dataclass
class SolveReport:
    iterations: int
    sup_update: list[float]
    integral_residual: float
    differential_residual: float
    in_ball: bool
    status: str  # converged | max-iter | blow-up
    b: float = math.nan
    h: float = math.nan
    contraction_estimate: float | None = None
    warnings: list[str] = field(default_factory=lambda: [EMPIRICAL_CAVEAT])

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "sup_update": list(self.sup_update),
            "integral_residual": self.integral_residual,
            "differential_residual": self.differential_residual,
            "in_ball": self.in_ball,
            "status": self.status,
            "b": self.b,
            "h": self.h,
            "contraction_estimate": self.contraction_estimate,
            "warnings": list(self.warnings),
        }


def _update_diagnostics(updates: list[float]) -> tuple[float | None, list[str]]:
    notes = [EMPIRICAL_CAVEAT]
    ratios = [b / a for a, b in zip(updates[:-1], updates[1:]) if a > 0.0]
    contraction = ratios[-1] if ratios else None
    # "eventually nonincreasing": look at the second half of the run
    tail = updates[len(updates) // 2 :]
    if any(b > a for a, b in zip(tail[:-1], tail[1:])):
        notes.append("sup-norm updates were not eventually nonincreasing")
        log.warning("Picard updates not eventually nonincreasing: %s", tail)
    return contraction, notes


def picard_iterate(step, start, tol: float, max_iter: int):
    """Iterate ``v <- step(v)`` from ``start``.

    Returns ``(v, updates, status)``; ``status`` is ``converged``, ``max-iter``
    or ``blow-up``.
    """
    v = np.asarray(start, dtype=float)
    updates: list[float] = []
    for _ in range(max_iter):
        new = step(v)
        if not np.all(np.isfinite(new)):
            updates.append(math.inf)
            return new, updates, "blow-up"
        upd = float(np.max(np.abs(new - v)))
        updates.append(upd)
        v = new
        if upd <= tol:
            return v, updates, "converged"
    return v, updates, "max-iter"


def solve_local(
    spec: ProblemSpec,
    ball: LocalBall,
    grid: TimeGrid,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> tuple[SampledFn, SolveReport]:
    """Picard iteration of ``A`` on ``grid`` (which must span ``[0, ball.h]``).

    Non-convergence and blow-up come back as a report status, not an
    exception.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    ball.check(spec)
    if grid.start != 0.0 or not math.isclose(grid.end, ball.h, rel_tol=1e-12):
        raise ValueError(f"grid must span [0, {ball.h}], got [{grid.start}, {grid.end}]")

    amap = IntegralMap(spec, grid, [spec.u0])

    def step(v):
        out = np.empty_like(v)
        out[0] = spec.u0
        out[1:] = amap(v)
        return out

    v, updates, status = picard_iterate(step, np.full(len(grid), spec.u0), tol, max_iter)
    contraction, notes = _update_diagnostics([u for u in updates if math.isfinite(u)])
    if status == "blow-up":
        u = SampledFn(grid, v, blowup=True)
        return u, SolveReport(len(updates), updates, math.inf, math.inf, False, status, ball.b, ball.h, contraction, notes)

    u = SampledFn(grid, v)
    integral, differential = residuals(u, spec)
    in_ball = bool(np.max(np.abs(v - spec.u0)) <= ball.b)
    if status == "converged":
        if not in_ball:
            notes.append("converged iterate left the ball D_h")
        if integral > 10 * tol:
            notes.append(f"integral residual {integral:.3e} exceeds 10*tol")
    report = SolveReport(len(updates), updates, integral, differential, in_ball, status, ball.b, ball.h, contraction, notes)
    return u, report


def residuals(u: SampledFn, spec: ProblemSpec, t_min: float = 0.0) -> tuple[float, float]:
    """``(||u - Au||_sup, sup |D^{2a} u - S(t, u)|)``.

    The differential residual is taken over interior nodes with ``t >= t_min``
    (all interior nodes by default).  The grid must start at 0.
    """
    if u.t[0] != 0.0:
        raise ValueError("residuals need a grid starting at t = 0")
    au = apply_A(u, spec)
    integral = float(np.max(np.abs(u.values - au.values)))
    try:
        with np.errstate(over="ignore"):
            dcap = caputo_derivative(u, spec.order).values
    except ValueError:
        # difference quotients overflowed on a finite but huge iterate
        return integral, math.inf
    f = eval_conductivity(spec.f, u.t, u.values)
    I = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(u.t))])
    interior = slice(1, len(u) - 1)
    mask = u.t[interior] >= t_min
    if len(u) < 3 or not np.any(mask):
        return integral, 0.0
    src = source_values(spec, u.t[interior], u.values[interior], I[interior])
    differential = float(np.max(np.abs(dcap[interior] - src)[mask]))
    return integral, differential


def equicontinuity_constant(u: SampledFn, exponent: float, max_nodes: int = 512) -> float:
    """Smallest ``C`` with ``|u(t2) - u(t1)| <= C (|dt|**exponent + |dt|)`` over node pairs.

    At most ``max_nodes`` evenly spaced nodes are used, so the cost stays
    bounded on fine grids.
    """
    idx = np.unique(np.linspace(0, len(u) - 1, min(len(u), max_nodes)).round().astype(int))
    t = u.t[idx]
    v = u.values[idx]
    dt = np.abs(t[:, None] - t[None, :])
    dv = np.abs(v[:, None] - v[None, :])
    off = dt > 0
    return float(np.max(dv[off] / (dt[off] ** exponent + dt[off])))


def reference_grid(ball: LocalBall, n_intervals: int) -> TimeGrid:
    return uniform_grid(0.0, ball.h, n_intervals)
