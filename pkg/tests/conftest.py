import math

import pytest
from hypothesis import settings

from fracthermistor.model import ConductivitySpec, HypothesisConstants, ProblemSpec

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

REF_CONSTANTS = HypothesisConstants(c1=2.0, c2=3.0, L_f=1.0, M=12.0)
REF_F = ConductivitySpec("bounded-oscillatory", {"c": 2.0, "eps": 1.0})


def reference_spec(horizon_T=1.0, **kw):
    """f = 2 + sin^2(u), delta = 1, lambda = 1, alpha = 0.25, u0 = 0."""
    args = dict(alpha=0.25, lam=1.0, u0=0.0, f=REF_F, constants=REF_CONSTANTS, horizon_T=horizon_T, delta=1.0)
    args.update(kw)
    return ProblemSpec(**args)


def escape_spec(horizon_T=5.0):
    """Affine growth f = 1 + 10|u| with a strong coupling; leaves [-10, 10] quickly."""
    k = HypothesisConstants(c1=1.0, c2=1e6, L_f=10.0, M=10.0, c3=1.0, c4=10.0, c5=1.0)
    f = ConductivitySpec("affine-growth", {"c3": 1.0, "c4": 10.0})
    return ProblemSpec(alpha=0.25, lam=20.0, u0=1.0, f=f, constants=k, horizon_T=horizon_T, delta=1.0)


def constant_spec(lam=1.0, horizon_T=1.0, c=2.0, **kw):
    k = HypothesisConstants(c1=c, c2=c, L_f=1.0, M=12.0)
    args = dict(alpha=0.25, lam=lam, u0=0.0, f=ConductivitySpec("constant", {"c": c}), constants=k,
                horizon_T=horizon_T, delta=1.0)
    args.update(kw)
    return ProblemSpec(**args)


def orders(errors, ns):
    return [math.log2(e0 / e1) / math.log2(n1 / n0) for e0, e1, n0, n1 in zip(errors, errors[1:], ns, ns[1:])]


@pytest.fixture
def ref_spec():
    return reference_spec()


_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _CRITERIA[props["criterion"]] = (props.get("title", ""), report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {verdict}  {title}  {detail}".rstrip())
