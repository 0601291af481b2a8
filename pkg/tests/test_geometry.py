import numpy as np
import pytest

from platelet_sim.errors import GeometryError
from platelet_sim.geometry import (
    Circle,
    Ellipse,
    PerturbedEllipse,
    Superquadric,
    chordal_distance,
    equispaced_nodes,
    fit_platelet,
    make_circle,
    make_ellipse,
    parse_platelet_line,
    read_platelet_file,
    shape_from_spec,
    shape_platelet,
)


def test_chordal_distance():
    assert np.isclose(chordal_distance(0.0, np.pi), 2.0)
    assert np.isclose(chordal_distance(0.3, 0.3 + 2 * np.pi), 0.0, atol=1e-7)
    assert np.isclose(chordal_distance(0.0, np.pi / 2), np.sqrt(2.0))


@pytest.mark.parametrize("shape", [Circle((0.5, 0.5), 0.2), Ellipse((0.3, 0.6), 0.15, 0.1)], ids=["circle", "ellipse"])
def test_rbf_model_reproduces_conics(shape):
    # x and y of a conic are trigonometric polynomials of degree 1, which the
    # MQ interpolant on the circle reproduces to rounding
    g = shape_platelet(shape, 50, 200, 0.9)
    lam = g.sample_nodes
    assert np.abs(g.sample_sites - shape.position(lam)).max() <= 1e-12
    assert np.abs(g.sample_normals - shape.normal(lam)).max() <= 1e-11


def test_perturbed_ellipse_fit_is_accurate():
    shape = PerturbedEllipse((0.2, 0.4), 0.15, 0.1)
    g = shape_platelet(shape, 50, 200, 0.9)
    assert np.abs(g.sample_sites - shape.position(g.sample_nodes)).max() <= 1e-8
    assert np.abs(g.sample_normals - shape.normal(g.sample_nodes)).max() <= 1e-6


def test_normals_point_into_the_fluid_for_either_orientation():
    nodes = equispaced_nodes(40)
    ccw = make_circle((0.5, 0.5), 0.2, 40)
    for data, orient in ((ccw, 1.0), (ccw[::-1].copy(), -1.0)):
        g = fit_platelet(nodes, data, 0.9, 64)
        assert g.orientation == orient
        out = g.sample_sites - np.array([0.5, 0.5])
        assert np.all(np.einsum("ki,ki->k", out, g.sample_normals) > 0)
        assert np.allclose(np.linalg.norm(g.sample_normals, axis=1), 1.0)


def test_analytic_geometry_injects_closed_form():
    shape = Superquadric((0.5, 0.5), 0.0995, 0.2, 0.9, 1.0)
    g = shape_platelet(shape, 50, 128, 0.9, analytic=True)
    assert np.array_equal(g.sample_sites, shape.position(g.sample_nodes))
    assert np.array_equal(g.sample_normals, shape.normal(g.sample_nodes))


def test_inside_test_matches_analytic_membership(rng):
    shape = Ellipse((0.5, 0.5), 0.15, 0.1)
    g = shape_platelet(shape, 50, 200, 0.9)
    pts = rng.uniform(0.3, 0.7, size=(4000, 2))
    assert np.array_equal(g.contains(pts), shape.inside(pts))
    # points very close to the curve on either side
    lam = rng.uniform(0, 2 * np.pi, 200)
    on = shape.position(lam)
    n = shape.normal(lam)
    assert np.all(g.contains(on - 1e-7 * n))
    assert not np.any(g.contains(on + 1e-7 * n))


def test_fit_rejects_repeated_nodes():
    nodes = np.r_[equispaced_nodes(10), 0.0]
    sites = np.vstack([make_ellipse((0, 0), 1, 0.5, 10), [[1.0, 0.0]]])
    with pytest.raises(GeometryError):
        fit_platelet(nodes, sites, 0.9, 20)


def test_too_few_data_sites():
    with pytest.raises(ValueError):
        make_circle((0, 0), 1.0, 4)


def test_platelet_lines(tmp_path):
    spec = parse_platelet_line("kind=superquadric cx=0.5 cy=0.5 r=0.1 m=0.2 px=0.8 nd=40  # comment")
    assert spec["px"] == "0.8" and spec["nd"] == "40"
    shape = shape_from_spec(spec)
    assert isinstance(shape, Superquadric) and shape.px == 0.8 and shape.py == 1.0
    assert parse_platelet_line("   # only a comment") is None
    for bad in ("kind=hexagon cx=0", "kind=circle cx=0 cy=0", "kind=circle cx=0 cy=0 r=1 colour=red", "circle"):
        with pytest.raises(GeometryError):
            parse_platelet_line(bad)
    f = tmp_path / "p.txt"
    f.write_text("kind=circle cx=0.2 cy=0.4 r=0.0995\n\nkind=ellipse cx=0.8 cy=0.4 a=0.15 b=0.1 name=E1\n")
    specs = read_platelet_file(f)
    assert [s["kind"] for s in specs] == ["circle", "ellipse"]
    assert specs[1]["name"] == "E1"
