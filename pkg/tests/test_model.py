import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import REF_CONSTANTS, REF_F, reference_spec
from fracthermistor.fracops import SampledFn, graded_grid, uniform_grid
from fracthermistor.model import (
    ConductivitySpec,
    ConductivityTable,
    HypothesisConstants,
    ProblemSpec,
    SingularSourceError,
    accumulate,
    eval_conductivity,
    load_conductivity_table,
    source_term,
    source_values,
    validate_hypotheses,
)

QUAD = ConductivitySpec("quadratic-time", {"a": 1.0, "eps": 0.0})


def quad_spec(**kw):
    args = dict(alpha=0.25, lam=1.0, u0=0.0, f=QUAD, constants=REF_CONSTANTS, horizon_T=1.0, denominator="outer")
    args.update(kw)
    return ProblemSpec(**args)


# -- conductivity -----------------------------------------------------------


def test_conductivity_examples():
    assert eval_conductivity(ConductivitySpec("constant", {"c": 2.0}), 0.7, -3.0) == 2.0
    assert eval_conductivity(REF_F, 0.3, math.pi / 2) == 3.0
    assert eval_conductivity(ConductivitySpec("quadratic-time", {"a": 3.0, "eps": 0.0}), 2.0, 5.0) == 12.0


def test_affine_growth_is_capped():
    f = ConductivitySpec("affine-growth", {"c3": 1.0, "c4": 2.0, "cap": 10.0})
    assert eval_conductivity(f, 0.0, -2.0) == 5.0
    assert eval_conductivity(f, 1.0, 100.0) == 10.0


@given(
    family=st.sampled_from(["constant", "bounded-oscillatory", "quadratic-time", "affine-growth"]),
    s=st.floats(0.0, 1e3),
    u=st.floats(-1e6, 1e6),
)
def test_every_family_is_finite_and_nonnegative(family, s, u):
    params = {
        "constant": {"c": 1.5},
        "bounded-oscillatory": {"c": 1.0, "eps": 2.0},
        "quadratic-time": {"a": 2.0, "eps": 0.5},
        "affine-growth": {"c3": 1.0, "c4": 3.0},
    }[family]
    val = eval_conductivity(ConductivitySpec(family, params), s, u)
    assert math.isfinite(val) and val >= 0.0


def test_vectorized_evaluation_broadcasts():
    out = eval_conductivity(REF_F, np.array([0.0, 1.0]), np.array([[0.0], [math.pi / 2]]))
    assert out.shape == (2, 2)
    assert np.allclose(out, [[2.0, 2.0], [3.0, 3.0]])


@pytest.mark.parametrize(
    ("family", "params"),
    [("unknown", {}), ("constant", {}), ("constant", {"c": -1.0}), ("constant", {"c": 1.0, "x": 2.0}),
     ("user-table", {})],
)
def test_conductivity_spec_validation(family, params):
    with pytest.raises(ValueError):
        ConductivitySpec(family, params)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        eval_conductivity(REF_F, -0.1, 0.0)


# -- user tables ------------------------------------------------------------


def _write_table(path, rows, header="s,u,f"):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n", encoding="utf-8")
    return path


def test_table_interpolation_reproduces_bilinear_functions(tmp_path):
    s_axis = [0.0, 0.5, 2.0]
    u_axis = [-1.0, 0.0, 3.0]
    bilinear = lambda s, u: 1.0 + 2.0 * s + 0.5 * u + 0.25 * s * u + 2.0  # noqa: E731
    rows = [(s, u, bilinear(s, u)) for s in s_axis for u in u_axis]
    table = load_conductivity_table(_write_table(tmp_path / "f.csv", rows))
    f = ConductivitySpec("user-table", table=table)
    rng = np.random.default_rng(3)
    s = rng.uniform(0.0, 2.0, 50)
    u = rng.uniform(-1.0, 3.0, 50)
    assert np.allclose(eval_conductivity(f, s, u), bilinear(s, u), rtol=1e-14)
    with pytest.raises(ValueError, match="outside"):
        eval_conductivity(f, 2.5, 0.0)


@pytest.mark.parametrize(
    ("content", "line"),
    [
        ("s,u,g\n0,0,1\n", ":1:"),
        ("s,u,f\n0,0,1\n0,1\n", ":3:"),
        ("s,u,f\n0,0,1\n0,x,1\n", ":3:"),
        ("s,u,f\n0,0,1\n0,1,-2\n", ":3:"),
        ("s,u,f\n0,0,1\n0,1,1\n1,1,1\n1,0,1\n", ":4:"),
        ("s,u,f\n0,0,1\n0,1,1\n0,0.5,1\n", ":4:"),
    ],
)
def test_malformed_tables_name_the_line(tmp_path, content, line):
    path = tmp_path / "bad.csv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ValueError, match=line):
        load_conductivity_table(path)


def test_table_object_validation():
    with pytest.raises(ValueError):
        ConductivityTable(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([[1.0, 1.0], [1.0, -1.0]]))
    with pytest.raises(ValueError):
        ConductivityTable(np.array([0.0, 0.0]), np.array([0.0, 1.0]), np.ones((2, 2)))


# -- constants and problem --------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [dict(c1=0.0), dict(c1=4.0), dict(L_f=0.0), dict(M=-1.0), dict(omega=1.5), dict(c3=0.0), dict(c4=-1.0)],
)
def test_hypothesis_constant_invariants(kw):
    args = dict(c1=2.0, c2=3.0, L_f=1.0, M=12.0)
    args.update(kw)
    with pytest.raises(ValueError):
        HypothesisConstants(**args)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.7, -0.1])
def test_alpha_bound_message(alpha):
    with pytest.raises(ValueError, match=r"\(0, 0\.5\)"):
        reference_spec(alpha=alpha)


def test_problem_invariants_and_delta_defaults():
    with pytest.raises(ValueError):
        reference_spec(lam=-1.0)
    with pytest.raises(ValueError):
        reference_spec(horizon_T=0.0)
    with pytest.raises(ValueError):
        reference_spec(delta=0.0)
    with pytest.raises(ValueError):
        reference_spec(denominator="middle")
    assert reference_spec(delta=None).delta == 1.0
    assert quad_spec().delta == 0.0
    assert quad_spec(denominator="inner").delta == 1.0
    assert reference_spec(delta=0.0, lam=0.0).delta == 0.0
    assert reference_spec().order == 0.5


# -- accumulator and source --------------------------------------------------


def test_accumulate_examples():
    grid = uniform_grid(0.0, 3.0, 7)
    u = SampledFn(grid, np.sin(grid.points))
    state = accumulate(ConductivitySpec("constant", {"c": 2.0}), u)
    assert state.I[-1] == pytest.approx(6.0, rel=1e-15)
    assert state.I[0] == 0.0
    assert state.last_index == 7


def test_accumulate_quadratic_second_order():
    errs = []
    for n in (64, 128, 256):
        grid = uniform_grid(0.0, 1.0, n)
        errs.append(abs(accumulate(QUAD, SampledFn(grid, np.zeros(n + 1))).I[-1] - 1.0 / 3.0))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=1e-6)
    assert errs[2] < 1e-5


def test_accumulate_is_incremental():
    grid = uniform_grid(0.0, 2.0, 20)
    u = SampledFn(grid, np.cos(grid.points))
    whole = accumulate(REF_F, u)
    head = accumulate(REF_F, SampledFn(uniform_grid(0.0, 1.0, 10), u.values[:11]))
    head.extend(REF_F, SampledFn(grid.points[10:], u.values[10:]))
    assert np.allclose(head.I, whole.I, rtol=1e-15, atol=0.0)
    with pytest.raises(ValueError):
        head.extend(REF_F, SampledFn(grid.points[5:], u.values[5:]))


@given(seed=st.integers(0, 2**16), family=st.sampled_from(["bounded-oscillatory", "quadratic-time", "affine-growth"]))
def test_accumulator_is_nondecreasing(seed, family):
    params = {"bounded-oscillatory": {"c": 0.0, "eps": 1.0}, "quadratic-time": {"a": 1.0, "eps": 1.0},
              "affine-growth": {"c3": 0.0, "c4": 1.0}}[family]
    rng = np.random.default_rng(seed)
    grid = graded_grid(0.0, 2.0, 30, 1.5)
    u = SampledFn(grid, rng.normal(scale=5.0, size=31))
    assert np.all(np.diff(accumulate(ConductivitySpec(family, params), u).I) >= 0.0)


def test_source_examples():
    spec = quad_spec(lam=1.0)
    grid = uniform_grid(0.0, 1.0, 2)
    state = accumulate(QUAD, SampledFn(grid, np.zeros(3)))
    # trapezoid I(1) on 2 cells is 0.375; compare with the closed form at that I
    assert source_term(spec, 1.0, 0.0, state) == pytest.approx(1.0 / 0.375**2)
    assert float(source_values(spec, 1.0, 0.0, 1.0 / 3.0)) == pytest.approx(9.0)
    const = ProblemSpec(0.25, 1.0, 0.0, ConductivitySpec("constant", {"c": 2.0}), REF_CONSTANTS, 1.0, delta=1.0)
    assert float(source_values(const, 0.0, 0.0, 0.0)) == 2.0
    assert float(source_values(const, 1.0, 0.0, 2.0)) == pytest.approx(2.0 / 9.0, rel=1e-15)


def test_singular_source():
    with pytest.raises(SingularSourceError):
        source_values(quad_spec(), 0.0, 0.0, 0.0)


@given(d1=st.floats(0.0, 10.0), d2=st.floats(0.0, 10.0), I=st.floats(0.01, 10.0), u=st.floats(-5, 5))
def test_source_is_nonincreasing_in_delta(d1, d2, I, u):
    lo, hi = sorted((d1, d2))
    s_lo = float(source_values(quad_spec(delta=lo), 0.5, u, I))
    s_hi = float(source_values(quad_spec(delta=hi), 0.5, u, I))
    assert s_hi <= s_lo


@given(seed=st.integers(0, 2**16))
def test_source_bound_under_sampled_hypotheses(seed):
    # H1 gives I(t) >= c1 t; regularized H2 gives f <= (M/c1^2)(delta + c1 t)^2; so S <= lam M / c1^2
    spec = reference_spec()
    report = validate_hypotheses(spec, (0.0, 1.0), (-5.0, 5.0), 21, ["H1", "H2-regularized"])
    assert report.holds("H1", "H2-regularized")
    rng = np.random.default_rng(seed)
    grid = uniform_grid(0.0, 1.0, 50)
    u = SampledFn(grid, rng.uniform(-5.0, 5.0, size=51))
    I = accumulate(spec.f, u).I
    assert np.all(I >= spec.constants.c1 * grid.points - 1e-12)
    S = source_values(spec, grid.points, u.values, I)
    assert np.all(S <= spec.lam * spec.constants.M / spec.constants.c1**2)


def test_envelope_on_sampled_window():
    spec = reference_spec()
    grid = uniform_grid(0.0, 1.0, 100)
    u = SampledFn(grid, 3.0 * np.sin(7.0 * grid.points))
    I = accumulate(spec.f, u).I
    tau = 0.2
    k0 = 20
    assert validate_hypotheses(spec, (tau, 1.0), (-3.0, 3.0), 21, ["H1"]).holds("H1")
    dt = grid.points[k0:] - tau
    assert np.all(I[k0:] - I[k0] >= 2.0 * dt - 1e-12)
    assert np.all(I[k0:] - I[k0] <= 3.0 * dt + 1e-12)


# -- hypothesis audit --------------------------------------------------------


def test_h1_example_holds():
    report = validate_hypotheses(reference_spec(), (0.0, 1.0), (-5.0, 5.0), 41, ["H1"])
    assert report.holds("H1")


def test_h2_example_violated_near_zero_with_window():
    spec = reference_spec(constants=HypothesisConstants(c1=2.0, c2=3.0, L_f=1.0, M=10.0))
    report = validate_hypotheses(spec, (0.0, 1.0), (-5.0, 5.0), 41, ["H1", "H2"])
    v = report.verdicts["H2"]
    assert not v.holds
    assert v.witness["s"] < math.sqrt(2.0 / 10.0)
    lo, hi = report.inconsistency_window
    assert lo == 0.0 and hi == pytest.approx(math.sqrt(0.2))


def test_quadratic_time_example_holds():
    f = ConductivitySpec("quadratic-time", {"a": 1.0, "eps": 1.0})
    k = HypothesisConstants(c1=1.0, c2=2.0, L_f=1.0, M=2.0, omega=2.0)
    spec = ProblemSpec(0.25, 1.0, 0.0, f, k, 1.0, denominator="outer")
    report = validate_hypotheses(spec, (0.0, 1.0), (-5.0, 5.0), 41, ["H2", "H3"])
    assert report.holds("H2", "H3")


def test_wrong_lipschitz_constant_is_caught():
    spec = reference_spec(constants=HypothesisConstants(c1=2.0, c2=3.0, L_f=0.5, M=12.0))
    v = validate_hypotheses(spec, (0.0, 1.0), (-5.0, 5.0), 41, ["H1"]).verdicts["H1"]
    assert not v.holds and "Lipschitz" in v.note


def test_growth_envelope_audit():
    f = ConductivitySpec("affine-growth", {"c3": 1.0, "c4": 2.0})
    good = HypothesisConstants(c1=1.0, c2=100.0, L_f=2.0, M=10.0, c3=1.0, c4=2.0, c5=1.0)
    bad = HypothesisConstants(c1=1.0, c2=100.0, L_f=2.0, M=10.0, c3=1.0, c4=1.0, c5=1.0)
    for consts, expected in ((good, True), (bad, False)):
        spec = ProblemSpec(0.25, 1.0, 0.0, f, consts, 1.0, delta=1.0)
        assert validate_hypotheses(spec, (0.0, 1.0), (-5.0, 5.0), 21, ["growth"]).holds("growth") is expected


def test_audit_argument_errors():
    spec = reference_spec()
    with pytest.raises(ValueError):
        validate_hypotheses(spec, (0.0, 1.0), (-1.0, 1.0), 1)
    with pytest.raises(ValueError):
        validate_hypotheses(spec, (1.0, 0.0), (-1.0, 1.0), 5)
    with pytest.raises(ValueError):
        validate_hypotheses(spec, (0.0, 1.0), (-1.0, 1.0), 5, ["growth"])
    d = validate_hypotheses(spec, (0.0, 1.0), (-1.0, 1.0), 5).as_dict()
    assert set(d["verdicts"]) == {"H1", "H2", "H3", "H2-regularized"}
