import numpy as np
import pytest

from platelet_sim.geometry import Circle, Ellipse, shape_platelet
from platelet_sim.grid import Grid, OuterBC, classify


def one_circle_model(n=32, bc="periodic-x,neumann-y", center=(0.5, 0.5), radius=0.2, n_s=100, analytic=True):
    geom = shape_platelet(Circle(center, radius), 50, n_s, 0.9, "C", analytic=analytic)
    return classify(Grid(n, bc=OuterBC.parse(bc)), [geom])


def two_platelet_model(n=32, bc="periodic-x,neumann-y", n_s=50):
    c1 = shape_platelet(Circle((0.2, 0.4), 0.0995), 50, n_s, 0.9, "C1", analytic=True)
    e1 = shape_platelet(Ellipse((0.8, 0.4), 0.15, 0.1), 50, n_s, 0.9, "E1", analytic=True)
    return classify(Grid(n, bc=OuterBC.parse(bc)), [c1, e1])


@pytest.fixture(scope="session")
def circle_model():
    return one_circle_model()


@pytest.fixture(scope="session")
def pair_model():
    return two_platelet_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
