import numpy as np
import pytest

import noether_dt as nd
from noether_dt.expr import parse

ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store one acceptance outcome; a criterion fails if any of its parts fails."""
    prev = ACCEPTANCE.get(criterion)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[c]
        terminalreporter.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'}  {detail}")


def bilinear_problem(N=4, x_end=(5.875, 3.4375, 6.90625)):
    return nd.ProblemSpec(
        nd.Horizon(0, N), 3, 2, parse("u1^2 - u2^2"),
        tuple(parse(t) for t in ("x2 + u1", "x1 + u2", "x2*u1")),
        x_start=(1.0, 1.0, 0.0), x_end=tuple(x_end),
    )


def bilinear_family(coef="2"):
    return nd.SymmetryFamily(
        1,
        tuple(parse(t) for t in (f"x1 + {coef}*s1", "x2 + s1", "x3 + s1*x1")),
        parse("2*(x1 + x2)*s1"),
        (parse("u1 + s1"), parse("u2 - s1")),
    )


def generating_rollout(N):
    """Rollout of u1 = x1, u2 = -x2/2 from (1, 1, 0)."""
    p = bilinear_problem(N)
    x = np.array([1.0, 1.0, 0.0])
    us = []
    for k in range(N):
        u = [x[0], -x[1] / 2]
        us.append(u)
        x = np.array(p.phi(k, x, u))
    return nd.rollout(p, us)


@pytest.fixture
def bil():
    return bilinear_problem()


@pytest.fixture
def bil_family():
    return bilinear_family()
