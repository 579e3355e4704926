import numpy as np
import pytest

from brepforge.bspline import line_ctrl
from brepforge.core import GeometryAttrs, build_topology
from brepforge.patches import boundary_box, boundary_patches

CUBE_VERTS = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
    dtype=float,
)
# faces: 0 bottom, 1 top, 2 front (y=0), 3 right (x=1), 4 back (y=1), 5 left (x=0)
CUBE_EV = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)]
CUBE_EF = [(0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (1, 3), (1, 4), (1, 5), (2, 5), (2, 3), (3, 4), (4, 5)]


def make_cube():
    return build_topology(CUBE_EF, CUBE_EV)


def cube_geometry(t=None, scale=1.0):
    """Exact planar geometry for the cube fixture, straight edges and bilinear faces."""
    t = make_cube() if t is None else t
    verts = CUBE_VERTS * scale
    ectrl = np.array([line_ctrl(verts[a], verts[b]) for a, b in t.ev])
    boxes = np.array([boundary_box(t, f, ectrl) for f in range(t.num_faces)])
    return GeometryAttrs(boxes, verts.copy(), ectrl, boundary_patches(t, ectrl))


@pytest.fixture
def cube():
    return make_cube()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cube_geo(cube):
    return cube_geometry(cube)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
