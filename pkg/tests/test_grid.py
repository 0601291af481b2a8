import numpy as np
import pytest

from platelet_sim.errors import GridError
from platelet_sim.geometry import Circle, shape_platelet
from platelet_sim.grid import Grid, OuterBC, PointKind, classify

from conftest import one_circle_model


def test_outer_bc_parse():
    assert OuterBC.parse("periodic-x,neumann-y") == OuterBC("periodic", "periodic", "neumann", "neumann")
    assert OuterBC.parse("x=dirichlet, y=neumann") == OuterBC("dirichlet", "dirichlet", "neumann", "neumann")
    assert OuterBC.parse("dirichlet,neumann,neumann,neumann").left == "dirichlet"
    for bad in ("periodic-x", "wobbly-x,neumann-y", "nonsense"):
        with pytest.raises(GridError):
            OuterBC.parse(bad)
    with pytest.raises(GridError):
        OuterBC("periodic", "neumann")


def test_grid_node_counts():
    g = Grid(8, bc=OuterBC.parse("periodic-x,neumann-y"))
    assert (g.nx, g.ny) == (8, 9)
    g = Grid(8, bc=OuterBC.parse("periodic-x,periodic-y"))
    assert (g.nx, g.ny) == (8, 8)
    i, j = g.ij(g.index(3, 5))
    assert (int(i), int(j)) == (3, 5)
    assert sorted(g.neighbors(g.index(0, 0))) == sorted([g.index(7, 0), g.index(1, 0), g.index(0, 7), g.index(0, 1)])


def test_classification_matches_brute_force():
    model = one_circle_model(n=40, radius=0.17)
    grid = model.grid
    pts = grid.points()
    inside = np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.5) < 0.17
    for k in range(grid.size):
        if not inside[k]:
            expect = PointKind.FLUID
        elif any(not inside[m] for m in grid.neighbors(k)):
            expect = PointKind.FORCING
        else:
            expect = PointKind.SOLID
        assert model.labels[k] == expect, k


def test_forcing_records_pair_with_normal_foot_points():
    model = one_circle_model(n=40, radius=0.17)
    pts = model.grid.points()
    assert len(model.records) == np.count_nonzero(model.labels == PointKind.FORCING)
    for rec in model.records:
        x = pts[rec.grid_index]
        b = np.array(rec.boundary_point)
        n = np.array(rec.inward_normal)
        assert abs(np.hypot(*(b - 0.5)) - 0.17) <= 1e-12
        # the normal line through the boundary point passes through the forcing point
        off = b - x
        assert abs(off[0] * n[1] - off[1] * n[0]) <= 1e-10
        assert off @ n > 0
        assert np.isclose(rec.distance, np.linalg.norm(off))
        assert rec.distance <= model.grid.h * np.sqrt(2)


def test_overlap_and_outer_boundary_errors():
    grid = Grid(32)
    a = shape_platelet(Circle((0.5, 0.5), 0.2), 50, 50, 0.9, "A", analytic=True)
    b = shape_platelet(Circle((0.6, 0.5), 0.2), 50, 50, 0.9, "B", analytic=True)
    with pytest.raises(GridError, match="overlap"):
        classify(grid, [a, b])
    c = shape_platelet(Circle((0.05, 0.5), 0.1), 50, 50, 0.9, "C", analytic=True)
    with pytest.raises(GridError, match="outer boundary"):
        classify(grid, [c])
