import functools

import numpy as np
import pytest

from fluidsurf import geometry as geo
from fluidsurf.mesh import LinearSurfaceMesh, generate_icosphere


@functools.lru_cache(maxsize=None)
def sphere(level, k=2, radius=1.0):
    mesh = generate_icosphere(level, radius)
    return geo.build_curved_geometry(mesh, geo.sphere_map(radius), k=k)


@pytest.fixture(scope="session")
def sphere_geom():
    return sphere


def grid_patch(n=6, lo=-1.0, hi=1.0):
    """Open triangulated square ``[lo, hi]^2`` in the plane z = 0."""
    s = np.linspace(lo, hi, n + 1)
    X, Y = np.meshgrid(s, s, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    idx = np.arange(verts.shape[0]).reshape(n + 1, n + 1)
    tris = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            tris += [[a, b, c], [a, c, d]]
    return LinearSurfaceMesh(verts, np.array(tris), validate=False)


@pytest.fixture
def flat_patch():
    return grid_patch()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERIA_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
