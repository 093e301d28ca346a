import numpy as np
import pytest

from mixedgreen.fem import FESpace
from mixedgreen.geometry import BoundaryDecomposition, PolygonalDomain
from mixedgreen.mesh import triangulate

UNIT_SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]
# edge 0 bottom, 1 right, 2 top, 3 left
BOTTOM, RIGHT, TOP, LEFT = 0, 1, 2, 3


def square(d_edges, M=2.0, R0=0.25):
    dom = PolygonalDomain(UNIT_SQUARE, M=M, R0=R0)
    return dom, BoundaryDecomposition.from_edges(dom, d_edges)


_SPACES = {}


def square_space(d_edges, h):
    """Cached FE space on the unit square with Dirichlet edges ``d_edges``."""
    key = (tuple(d_edges), h)
    if key not in _SPACES:
        dom, dec = square(d_edges)
        _SPACES[key] = FESpace(triangulate(dom, dec, h))
    return _SPACES[key]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
