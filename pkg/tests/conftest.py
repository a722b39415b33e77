"""Shared charts and sample points for the test suite."""

import numpy as np
import pytest

from fefferlab.cr_geometry import BaseCoframe, expr_field, rescaled_coframe, unitarize
from fefferlab.fefferman import FeffermanChart, PerturbationData

HEIS_THETA = ["-y", "x", "1"]
HEIS_THETA1 = ["1", "i", "0"]
RIGID_THETA = ["-(y+0.05*x^2)", "x+0.4*x^3+0.1*x*y", "1"]
# A contact rescaling of the rigid coframe; its torsion, Webster scalar and
# Cartan tensor are all nonzero, so every closed-form term is exercised.
GENERIC_RESCALING = "0.3*x*y+0.2*u*x+0.1*x^2-0.2*u*y"

GENERIC_ALPHA = {
    0: "0.1*x+0.05*i*y+0.07*x*y-0.03*i*x*x+0.02*x^3+0.04*i*u+0.03*u*y-0.02*i*y^3",
    -2: "0.1+0.05*x*y+0.03*i*u",
}
GENERIC_ZERO = {
    4: "(0.1+0.2*i)*(1+0.3*x-0.2*y*y)",
    2: "0.05*x+0.02*i*u*y",
    0: "0.1*y+0.2*x*x+0.1*u*x",
}


def heisenberg_coframe() -> BaseCoframe:
    return BaseCoframe.from_expressions(HEIS_THETA, HEIS_THETA1, "heisenberg")


def rigid_coframe() -> BaseCoframe:
    return unitarize(BaseCoframe.from_expressions(RIGID_THETA, HEIS_THETA1, "rigid"))


def generic_coframe() -> BaseCoframe:
    return rescaled_coframe(rigid_coframe(), expr_field(GENERIC_RESCALING))


def sample(n: int, seed: int = 1, box: float = 0.4) -> np.ndarray:
    pts = np.random.default_rng(seed).uniform(-box, box, (4, n))
    pts[3] = np.random.default_rng(seed + 100).uniform(-np.pi, np.pi, n)
    near = np.abs(np.cos(pts[3])) < 0.1
    pts[3, near] += 0.3
    return pts


@pytest.fixture(scope="session")
def heis():
    return heisenberg_coframe()


@pytest.fixture(scope="session")
def rigid():
    return rigid_coframe()


@pytest.fixture(scope="session")
def generic():
    return generic_coframe()


@pytest.fixture(scope="session")
def generic_pert():
    return PerturbationData.build(GENERIC_ALPHA, GENERIC_ZERO)


@pytest.fixture(scope="session")
def generic_chart(generic, generic_pert):
    return FeffermanChart(generic, generic_pert, "generic")


@pytest.fixture
def points():
    return sample(12)


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
