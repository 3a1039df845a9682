r"""Fractional-calculus primitives on (possibly nonuniform) time grids.

The Riemann-Liouville integral

.. math::

    I^{\gamma}[g](t) = \frac{1}{\Gamma(\gamma)} \int_0^t (t - s)^{\gamma - 1} g(s)\, ds

is discretized by product integration: the singular kernel is integrated in
closed form against the piecewise-linear interpolant of ``g``.  The Caputo
derivative (order ``0 < gamma < 1``)

.. math::

    D^{\gamma}[g](t) = \frac{1}{\Gamma(1 - \gamma)} \int_0^t (t - s)^{-\gamma} g'(s)\, ds

uses the L1 scheme (cell difference quotients for ``g'``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = [
    "QuadWeights",
    "SampledFn",
    "TimeGrid",
    "caputo_derivative",
    "gamma_fn",
    "graded_grid",
    "history_sums",
    "rl_derivative",
    "rl_integral",
    "singular_weights",
    "uniform_grid",
]

GAMMA_MAX_ARG = 170.0
_UNIFORM_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time nodes, starting at or after 0."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("time grid points must be finite")
        if pts[0] < 0.0:
            raise ValueError(f"time grid must start at t >= 0, got {pts[0]!r}")
        if np.any(np.diff(pts) <= 0.0):
            raise ValueError("time grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    @property
    def start(self) -> float:
        return float(self.points[0])

    @property
    def end(self) -> float:
        return float(self.points[-1])

    def uniform_step(self) -> float | None:
        """Common spacing if the grid is uniform (to rounding), else ``None``."""
        d = np.diff(self.points)
        mean = (self.points[-1] - self.points[0]) / d.size
        if np.max(np.abs(d - mean)) <= _UNIFORM_RTOL * mean:
            return float(mean)
        return None


def uniform_grid(t0: float, t1: float, n_intervals: int) -> TimeGrid:
    return TimeGrid(np.linspace(t0, t1, n_intervals + 1))


def graded_grid(t0: float, t1: float, n_intervals: int, grading: float = 1.0) -> TimeGrid:
    """Nodes ``t0 + (t1 - t0) (j/n)**grading``; ``grading > 1`` clusters them near ``t0``."""
    if grading < 1.0:
        raise ValueError("grading exponent must be >= 1")
    x = np.linspace(0.0, 1.0, n_intervals + 1)
    pts = t0 + (t1 - t0) * x**grading
    pts[-1] = t1
    return TimeGrid(pts)


@dataclass(frozen=True, eq=False)
class SampledFn:
    """Values of a function on a :class:`TimeGrid`.

    ``blowup`` marks records that are allowed to carry non-finite values.
    """

    grid: TimeGrid
    values: np.ndarray
    blowup: bool = False

    def __post_init__(self):
        if not isinstance(self.grid, TimeGrid):
            object.__setattr__(self, "grid", TimeGrid(self.grid))
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.points.shape:
            raise ValueError(
                f"values have length {vals.size}, grid has {self.grid.points.size} points"
            )
        if not self.blowup and not np.all(np.isfinite(vals)):
            raise ValueError("sampled values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def t(self) -> np.ndarray:
        return self.grid.points

    def __len__(self):
        return self.values.size

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class QuadWeights:
    """Node weights for ``int_0^{t_k} (t_k - s)**kernel_exponent v(s) ds``."""

    target_index: int
    weights: np.ndarray
    kernel_exponent: float = field(default=0.0)

    def apply(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


def gamma_fn(x: float) -> float:
    """Euler gamma function for ``x > 0``.

    Raises ``ValueError`` for ``x <= 0`` and ``OverflowError`` above 170.
    """
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"gamma_fn is defined here only for x > 0, got {x!r}")
    if x > GAMMA_MAX_ARG:
        raise OverflowError(f"gamma({x!r}) overflows double precision")
    return math.gamma(x)


def _check_order(order: float) -> float:
    order = float(order)
    if not 0.0 < order < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {order!r}")
    return order


def _check_exponent(mu: float) -> float:
    mu = float(mu)
    if not -1.0 < mu < 0.0:
        raise ValueError(f"kernel exponent must lie in (-1, 0), got {mu!r}")
    return mu


def singular_weights(grid: TimeGrid, target_index: int, kernel_exponent: float) -> QuadWeights:
    """Exact product-integration weights at node ``target_index``.

    ``sum_j w_j v_j`` equals the integral of ``(t_k - s)**kernel_exponent``
    against the piecewise-linear interpolant of ``v`` over ``[t_0, t_k]``.
    Nodes beyond ``t_k`` get weight zero.
    """
    mu = _check_exponent(kernel_exponent)
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    n = len(grid)
    k = int(target_index)
    if not 1 <= k < n:
        raise ValueError(f"target_index must be in [1, {n - 1}], got {target_index!r}")
    t = grid.points
    left, right, _ = kernels.cell_weights(t[k] - t[1 : k + 1], np.diff(t[: k + 1]), mu)
    w = np.zeros(n)
    w[:k] += left
    w[1 : k + 1] += right
    return QuadWeights(target_index=k, weights=w, kernel_exponent=mu)


def _toeplitz_tables(n: int, step: float, mu: float):
    m = np.arange(n - 1, dtype=float)
    left, right, f1 = kernels.cell_weights(m, 1.0, mu)
    scale = step ** (mu + 1.0)
    return left * scale, right * scale, f1 * scale


def history_sums(grid: TimeGrid, values, mu: float, k0: int = 1, c_lo: int = 0, c_hi: int | None = None):
    """Product-integration sums at every node ``k >= k0``.

    Entry ``k - k0`` is the integral of ``(t_k - s)**mu`` against the linear
    interpolant of ``values`` over the cells ``c_lo <= c < min(c_hi, k)``.
    Restricting the cell range splits a sum into a frozen history part and a
    live part, which is how the continuation solver reuses work.
    """
    t = grid.points
    n = t.size
    if c_hi is None:
        c_hi = n - 1
    v = np.asarray(values, dtype=float)
    step = grid.uniform_step()
    if step is None:
        return kernels.product_sums(t, v, mu, k0, c_lo, c_hi)
    left, right, _ = _toeplitz_tables(n, step, mu)
    return kernels.toeplitz_sums(left, v[:-1], k0, c_lo, c_hi, n) + kernels.toeplitz_sums(
        right, v[1:], k0, c_lo, c_hi, n
    )


def rl_integral(g: SampledFn, order: float) -> SampledFn:
    """Riemann-Liouville integral of ``g`` of the given order in (0, 1).

    The value at the first node is 0.
    """
    order = _check_order(order)
    sums = history_sums(g.grid, g.values, order - 1.0)
    out = np.empty(len(g))
    out[0] = 0.0
    out[1:] = sums / gamma_fn(order)
    return SampledFn(g.grid, out)


def caputo_derivative(g: SampledFn, order: float) -> SampledFn:
    """L1 approximation of the Caputo derivative of order in (0, 1).

    Constant input gives an exactly zero result.  The value at the first node
    is set to 0.
    """
    order = _check_order(order)
    if len(g) < 2:
        raise ValueError("caputo_derivative needs at least 2 grid points")
    t = g.t
    d = np.diff(t)
    q = np.diff(g.values) / d
    mu = -order
    step = g.grid.uniform_step()
    if step is None:
        sums = kernels.l1_sums(t, q, mu)
    else:
        _, _, f1 = _toeplitz_tables(t.size, step, mu)
        sums = np.zeros(t.size)
        sums[1:] = kernels.toeplitz_sums(f1, q, 1, 0, t.size - 1, t.size)
    return SampledFn(g.grid, sums / gamma_fn(1.0 - order))


def rl_derivative(g: SampledFn, order: float) -> SampledFn:
    """Riemann-Liouville derivative, for diagnostics only.

    Backward difference of the order ``1 - order`` integral.  The result lives
    on the grid without its first node, where the derivative is generally
    singular.
    """
    order = _check_order(order)
    j = rl_integral(g, 1.0 - order).values
    t = g.t
    return SampledFn(TimeGrid(t[1:]), np.diff(j) / np.diff(t))
