r"""The nonlocal thermistor problem.

.. math::

    D^{2\alpha} u(t) = \frac{\lambda f(t, u(t))}{\big(\delta + \int_0^t f(x, u(x))\,dx\big)^2},
    \qquad u(0) = u_0,

with conductivity ``f`` from a closed registry of families (or a gridded
table), the running accumulator ``I(t) = int_0^t f``, and a denominator shift
``delta >= 0``.  ``delta = 0`` is the unregularized model; any ``f`` that is
positive at ``s = 0`` makes that source non-integrable at the origin.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .fracops import SampledFn, TimeGrid

__all__ = [
    "ConductivitySpec",
    "ConductivityTable",
    "HypothesisConstants",
    "HypothesisReport",
    "NonlocalState",
    "ProblemSpec",
    "SingularSourceError",
    "Verdict",
    "accumulate",
    "eval_conductivity",
    "load_conductivity_table",
    "source_term",
    "source_values",
    "validate_hypotheses",
]

FAMILIES = ("constant", "bounded-oscillatory", "quadratic-time", "affine-growth", "user-table")
DENOMINATORS = ("inner", "outer")

_FAMILY_PARAMS = {
    "constant": {"c": None},
    "bounded-oscillatory": {"c": None, "eps": None},
    "quadratic-time": {"a": None, "eps": 0.0},
    "affine-growth": {"c3": None, "c4": None, "cap": 1e6},
    "user-table": {},
}


class SingularSourceError(ArithmeticError):
    """The source denominator ``(delta + I(t))**2`` vanished."""


@dataclass(frozen=True, eq=False)
class ConductivityTable:
    """Gridded ``f(s, u)`` samples, bilinearly interpolated."""

    s: np.ndarray
    u: np.ndarray
    f: np.ndarray  # shape (len(s), len(u))

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        u = np.asarray(self.u, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if s.size < 2 or u.size < 2:
            raise ValueError("conductivity table needs at least 2 values on each axis")
        if np.any(np.diff(s) <= 0) or np.any(np.diff(u) <= 0):
            raise ValueError("conductivity table axes must be strictly ascending")
        if f.shape != (s.size, u.size):
            raise ValueError(f"table values have shape {f.shape}, expected {(s.size, u.size)}")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValueError("conductivity table values must be finite and >= 0")
        for name, arr in (("s", s), ("u", u), ("f", f)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __call__(self, s, u):
        s, u = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(u, dtype=float))
        if np.any(s < self.s[0]) or np.any(s > self.s[-1]) or np.any(u < self.u[0]) or np.any(u > self.u[-1]):
            raise ValueError(
                f"conductivity table queried outside [{self.s[0]}, {self.s[-1]}] x [{self.u[0]}, {self.u[-1]}]"
            )
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, self.s.size - 2)
        j = np.clip(np.searchsorted(self.u, u, side="right") - 1, 0, self.u.size - 2)
        ws = (s - self.s[i]) / (self.s[i + 1] - self.s[i])
        wu = (u - self.u[j]) / (self.u[j + 1] - self.u[j])
        f = self.f
        return (
            (1 - ws) * (1 - wu) * f[i, j]
            + ws * (1 - wu) * f[i + 1, j]
            + (1 - ws) * wu * f[i, j + 1]
            + ws * wu * f[i + 1, j + 1]
        )


def load_conductivity_table(path) -> ConductivityTable:
    """Read a ``s,u,f`` CSV laid out row-major (``s`` outer, ``u`` inner).

    Errors name the offending line.
    """
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: empty conductivity table") from None
        if [h.strip() for h in header] != ["s", "u", "f"]:
            raise ValueError(f"{path}:1: header must be 's,u,f', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                vals = tuple(float(c) for c in row)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            if vals[2] < 0:
                raise ValueError(f"{path}:{lineno}: conductivity must be >= 0, got {vals[2]}")
            rows.append((lineno, vals))
    if not rows:
        raise ValueError(f"{path}: conductivity table has no data rows")

    u_axis = []
    for lineno, (s, u, _) in rows:
        if s != rows[0][1][0]:
            break
        if u_axis and u <= u_axis[-1]:
            raise ValueError(f"{path}:{lineno}: u axis must be strictly ascending")
        u_axis.append(u)
    nu = len(u_axis)
    if len(rows) % nu:
        raise ValueError(f"{path}:{rows[-1][0]}: table is not rectangular ({len(rows)} rows, {nu} u values)")
    s_axis = []
    values = np.empty((len(rows) // nu, nu))
    for idx, (lineno, (s, u, f)) in enumerate(rows):
        i, j = divmod(idx, nu)
        if j == 0:
            if s_axis and s <= s_axis[-1]:
                raise ValueError(f"{path}:{lineno}: s axis must be strictly ascending")
            s_axis.append(s)
        elif s != s_axis[-1]:
            raise ValueError(f"{path}:{lineno}: expected s = {s_axis[-1]} within this block, got {s}")
        if u != u_axis[j]:
            raise ValueError(f"{path}:{lineno}: expected u = {u_axis[j]} (row-major order), got {u}")
        values[i, j] = f
    if len(s_axis) < 2 or nu < 2:
        raise ValueError(f"{path}: table needs at least 2 distinct s and u values")
    return ConductivityTable(np.array(s_axis), np.array(u_axis), values)


@dataclass(frozen=True)
class ConductivitySpec:
    """One member of the conductivity registry.

    ============================  ==========================================
    family                        f(s, u)
    ============================  ==========================================
    ``constant``                  ``c``
    ``bounded-oscillatory``       ``c + eps sin(u)**2``
    ``quadratic-time``            ``a s**2 (1 + eps sin(u)**2)``
    ``affine-growth``             ``min(c3 + c4 |u|, cap)``
    ``user-table``                bilinear interpolation of ``table``
    ============================  ==========================================
    """

    family: str
    params: dict = field(default_factory=dict)
    table: ConductivityTable | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown conductivity family {self.family!r}; expected one of {FAMILIES}")
        expected = _FAMILY_PARAMS[self.family]
        unknown = set(self.params) - set(expected)
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for family {self.family!r}")
        full = {}
        for name, default in expected.items():
            value = self.params.get(name, default)
            if value is None:
                raise ValueError(f"family {self.family!r} requires parameter {name!r}")
            value = float(value)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"conductivity parameter {name!r} must be finite and >= 0, got {value!r}")
            full[name] = value
        object.__setattr__(self, "params", full)
        if self.family == "user-table" and self.table is None:
            raise ValueError("family 'user-table' requires a table")

    @property
    def u_independent(self) -> bool:
        p = self.params
        if self.family == "constant":
            return True
        if self.family in ("bounded-oscillatory", "quadratic-time"):
            return p["eps"] == 0.0
        if self.family == "affine-growth":
            return p["c4"] == 0.0
        return False

    def lower_bound_at_zero(self) -> float:
        """Infimum over ``u`` of ``f(0, u)``."""
        p = self.params
        if self.family in ("constant", "bounded-oscillatory"):
            return p["c"]
        if self.family == "quadratic-time":
            return 0.0
        if self.family == "affine-growth":
            return min(p["c3"], p["cap"])
        return float(self.table.f[0].min()) if self.table.s[0] <= 0.0 else 0.0

    def __call__(self, s, u):
        return eval_conductivity(self, s, u)


def eval_conductivity(f: ConductivitySpec, s, u):
    """Evaluate ``f(s, u)``; scalars in, float out, arrays broadcast."""
    s_arr = np.asarray(s, dtype=float)
    u_arr = np.asarray(u, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("conductivity is only defined for s >= 0")
    p = f.params
    fam = f.family
    if fam == "constant":
        out = np.broadcast_to(p["c"], np.broadcast_shapes(s_arr.shape, u_arr.shape)).astype(float)
    elif fam == "bounded-oscillatory":
        out = p["c"] + p["eps"] * np.sin(u_arr) ** 2 + 0.0 * s_arr
    elif fam == "quadratic-time":
        out = p["a"] * s_arr**2 * (1.0 + p["eps"] * np.sin(u_arr) ** 2)
    elif fam == "affine-growth":
        out = np.minimum(p["c3"] + p["c4"] * np.abs(u_arr), p["cap"]) + 0.0 * s_arr
    else:
        out = f.table(s_arr, u_arr)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class HypothesisConstants:
    """Constants claimed for the conductivity.

    ``c1 <= f <= c2`` and Lipschitz constant ``L_f`` in ``u``; ``f <= M s**2``;
    ``|f(s,u) - f(s,v)| <= s**omega |u - v|``; optional growth envelope
    ``c3 <= |f| <= c4 |u| + c5``.
    """

    c1: float
    c2: float
    L_f: float
    M: float
    omega: float = 2.0
    c3: float | None = None
    c4: float | None = None
    c5: float | None = None

    def __post_init__(self):
        if not 0.0 < self.c1 <= self.c2:
            raise ValueError(f"constants need 0 < c1 <= c2, got c1={self.c1}, c2={self.c2}")
        if not self.L_f > 0.0:
            raise ValueError(f"L_f must be > 0, got {self.L_f}")
        if not self.M > 0.0:
            raise ValueError(f"M must be > 0, got {self.M}")
        if not self.omega >= 2.0:
            raise ValueError(f"omega must be >= 2, got {self.omega}")
        if self.c3 is not None and not self.c3 > 0.0:
            raise ValueError(f"c3 must be > 0, got {self.c3}")
        for name in ("c4", "c5"):
            value = getattr(self, name)
            if value is not None and not value >= 0.0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    @property
    def has_growth(self) -> bool:
        return self.c3 is not None and self.c4 is not None and self.c5 is not None


@dataclass(frozen=True)
class ProblemSpec:
    """The full initial value problem.

    ``denominator`` selects where the nonlocal integral is evaluated inside the
    integral form: ``"inner"`` uses ``I(s)`` under the kernel integral, which
    makes the integral form equivalent to the fractional ODE; ``"outer"`` uses
    ``I(t)`` at the output time, as the equations are literally printed.
    ``delta=None`` picks the default shift (0 for the outer placement with a
    conductivity vanishing at ``s = 0``, else 1).
    """

    alpha: float
    lam: float
    u0: float
    f: ConductivitySpec
    constants: HypothesisConstants
    horizon_T: float
    delta: float | None = None
    denominator: str = "inner"

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5) (Caputo order 2*alpha in (0, 1)), got {self.alpha}")
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if not math.isfinite(self.u0):
            raise ValueError(f"u0 must be finite, got {self.u0}")
        if not (self.horizon_T > 0.0 and math.isfinite(self.horizon_T)):
            raise ValueError(f"horizon_T must be finite and > 0, got {self.horizon_T}")
        if self.denominator not in DENOMINATORS:
            raise ValueError(f"denominator must be one of {DENOMINATORS}, got {self.denominator!r}")
        delta = self.delta
        if delta is None:
            vanishing = self.f.lower_bound_at_zero() == 0.0
            delta = 0.0 if (self.denominator == "outer" and vanishing) else 1.0
            object.__setattr__(self, "delta", delta)
        if not (delta >= 0.0 and math.isfinite(delta)):
            raise ValueError(f"delta must be finite and >= 0, got {delta}")
        if delta == 0.0 and self.lam > 0.0:
            if self.denominator == "inner":
                raise ValueError("delta must be > 0 with the inner denominator (source is not integrable at t = 0)")
            if self.f.lower_bound_at_zero() > 0.0:
                raise ValueError(
                    "delta must be > 0 when f(0, u) is bounded below by a positive constant "
                    "(source is not integrable at t = 0)"
                )

    @property
    def order(self) -> float:
        """Caputo order ``2 alpha``."""
        return 2.0 * self.alpha


@dataclass
class NonlocalState:
    """Running trapezoid accumulator ``I(t_k) = int_0^{t_k} f(s, u(s)) ds``."""

    t: np.ndarray
    I: np.ndarray

    @property
    def last_index(self) -> int:
        return self.I.size - 1

    def as_sampled(self) -> SampledFn:
        return SampledFn(TimeGrid(self.t), self.I)

    def extend(self, f: ConductivitySpec, u: SampledFn) -> "NonlocalState":
        """Append the segment ``u`` (whose first node is the current last node)."""
        if u.t[0] != self.t[-1]:
            raise ValueError(f"segment starts at {u.t[0]}, accumulator ends at {self.t[-1]}")
        fv = eval_conductivity(f, u.t, u.values)
        inc = np.cumsum(0.5 * (fv[1:] + fv[:-1]) * np.diff(u.t))
        self.t = np.concatenate([self.t, u.t[1:]])
        self.I = np.concatenate([self.I, self.I[-1] + inc])
        return self

    def value_at(self, t: float) -> float:
        if not self.t[0] <= t <= self.t[-1]:
            raise ValueError(f"accumulator covers [{self.t[0]}, {self.t[-1]}], asked for t={t}")
        return float(np.interp(t, self.t, self.I))


def accumulate(f: ConductivitySpec, u: SampledFn) -> NonlocalState:
    """Trapezoid accumulation of ``f(s, u(s))`` from ``t = 0``."""
    if u.t[0] != 0.0:
        raise ValueError("accumulate needs a grid starting at t = 0")
    state = NonlocalState(np.array([0.0]), np.array([0.0]))
    return state.extend(f, u)


def source_values(spec: ProblemSpec, t, u, I):
    """Vectorized ``lambda f(t, u) / (delta + I)**2``."""
    t = np.asarray(t, dtype=float)
    denom = (spec.delta + np.asarray(I, dtype=float)) ** 2
    if spec.lam == 0.0:
        return np.zeros(np.broadcast_shapes(t.shape, np.shape(u), denom.shape))
    if np.any(denom == 0.0):
        raise SingularSourceError("source denominator (delta + I(t))^2 vanished; use delta > 0")
    return spec.lam * eval_conductivity(spec.f, t, u) / denom


def source_term(spec: ProblemSpec, t: float, u_t: float, state: NonlocalState) -> float:
    """Right-hand side ``lambda f(t, u_t) / (delta + I(t))**2``."""
    return float(source_values(spec, t, u_t, state.value_at(t)))


# -- hypothesis audit --------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    name: str
    holds: bool
    witness: dict | None = None
    note: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "holds": self.holds, "witness": self.witness, "note": self.note}


@dataclass
class HypothesisReport:
    """Sample-based verdicts; ``holds`` means "holds on the sample", never a proof."""

    verdicts: dict[str, Verdict]
    s_range: tuple[float, float]
    u_range: tuple[float, float]
    samples: int
    inconsistency_window: tuple[float, float] | None = None

    def holds(self, *names: str) -> bool:
        return all(self.verdicts[n].holds for n in names)

    @property
    def all_hold(self) -> bool:
        return all(v.holds for v in self.verdicts.values())

    def as_dict(self) -> dict:
        return {
            "s_range": list(self.s_range),
            "u_range": list(self.u_range),
            "samples": self.samples,
            "inconsistency_window": None if self.inconsistency_window is None else list(self.inconsistency_window),
            "verdicts": {k: v.as_dict() for k, v in self.verdicts.items()},
        }


_RTOL = 1e-12


def _refined(lo: float, hi: float, samples: int) -> np.ndarray:
    # grid plus midpoints
    return np.linspace(lo, hi, 2 * samples - 1)


def _verdict(name, excess, S, U, note=""):
    """``excess > 0`` marks a violation; the witness is the worst sample."""
    idx = np.unravel_index(np.argmax(excess), excess.shape)
    worst = float(excess[idx])
    if worst <= 0.0:
        return Verdict(name, True, None, note)
    witness = {"s": float(S[idx]), "u": float(U[idx]), "excess": worst}
    return Verdict(name, False, witness, note)


def validate_hypotheses(
    spec: ProblemSpec,
    s_range: tuple[float, float],
    u_range: tuple[float, float],
    samples: int,
    which: Iterable[str] | None = None,
) -> HypothesisReport:
    """Audit the claimed constants of ``spec`` on a sample of ``(s, u)``.

    Available checks: ``H1`` (bounds and Lipschitz quotient), ``H2``
    (``f <= M s**2``), ``H2-regularized`` (``f <= (M/c1**2)(delta + c1 s)**2``,
    the form the local existence estimate needs once the denominator is
    shifted), ``H3`` and ``growth``.  By default every check whose constants
    are available is run.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2 per axis")
    s0, s1 = map(float, s_range)
    u0, u1 = map(float, u_range)
    if not (0.0 <= s0 < s1 and u0 < u1):
        raise ValueError("ranges must be nonempty with s >= 0")
    k = spec.constants
    available = ["H1", "H2", "H3"]
    if spec.delta > 0.0:
        available.append("H2-regularized")
    if k.has_growth:
        available.append("growth")
    requested = list(available if which is None else which)
    for name in requested:
        if name not in available:
            raise ValueError(f"hypothesis {name!r} is not available for this spec (have {available})")

    s = _refined(s0, s1, samples)
    u = _refined(u0, u1, samples)
    S, U = np.meshgrid(s, u, indexing="ij")
    F = np.asarray(eval_conductivity(spec.f, S, U), dtype=float)
    scale = max(1.0, float(np.max(np.abs(F))))
    tol = _RTOL * scale
    dF = np.abs(np.diff(F, axis=1))
    du = np.diff(u)
    Sm = S[:, 1:]
    Um = 0.5 * (U[:, 1:] + U[:, :-1])

    verdicts = {}
    for name in requested:
        if name == "H1":
            bounds = np.maximum(k.c1 - F, F - k.c2)
            lips = dF / du - k.L_f
            v_b = _verdict("H1", bounds - tol, S, U)
            v_l = _verdict("H1", lips - tol, Sm, Um)
            if not v_b.holds:
                verdicts[name] = Verdict("H1", False, v_b.witness, "bounds c1 <= f <= c2 violated")
            elif not v_l.holds:
                verdicts[name] = Verdict("H1", False, v_l.witness, "Lipschitz quotient exceeds L_f")
            else:
                verdicts[name] = Verdict("H1", True)
        elif name == "H2":
            verdicts[name] = _verdict(name, F - k.M * S**2 - tol, S, U, "f <= M s^2")
        elif name == "H2-regularized":
            bound = (k.M / k.c1**2) * (spec.delta + k.c1 * S) ** 2
            verdicts[name] = _verdict(name, F - bound - tol, S, U, "f <= (M/c1^2)(delta + c1 s)^2")
        elif name == "H3":
            verdicts[name] = _verdict(name, dF - Sm**k.omega * du - tol, Sm, Um, "|f(s,u)-f(s,v)| <= s^omega |u-v|")
        elif name == "growth":
            env = np.maximum(k.c3 - np.abs(F), np.abs(F) - (k.c4 * np.abs(U) + k.c5))
            verdicts[name] = _verdict(name, env - tol, S, U, "c3 <= |f| <= c4 |u| + c5")

    window = None
    if "H1" in requested and ("H2" in requested or "H2-regularized" in requested):
        edge = math.sqrt(k.c1 / k.M)
        if edge > s0:
            window = (s0, min(edge, s1))
    return HypothesisReport(verdicts, (s0, s1), (u0, u1), samples, window)
