import numpy as np
import pytest
from scipy.integrate import solve_ivp

from platelet_sim.errors import SolverError
from platelet_sim.geometry import Circle, Ellipse, PerturbedEllipse, shape_platelet
from platelet_sim.surface_pde import (
    SurfaceChemistry,
    SurfaceModel,
    SurfaceState,
    SurfaceStepper,
    build_surface_operators,
    nearest_stencils,
    projector,
    rbf_fd_weights,
    sbdf1_bootstrap,
    sbdf2_step_model1,
    sbdf2_step_model2,
)

SHAPES = [Circle((0.2, 0.4), 0.0995), Ellipse((0.8, 0.4), 0.15, 0.1), PerturbedEllipse((0.2, 0.4), 0.15, 0.1)]


@pytest.fixture(scope="module", params=range(3), ids=["circle", "ellipse", "perturbed"])
def ops(request):
    geom = shape_platelet(SHAPES[request.param], 50, 100, 0.9)
    return geom, build_surface_operators(geom, 3, 35.0)


def test_projector_properties(rng):
    for a in rng.uniform(0, 2 * np.pi, 20):
        eta = np.array([np.cos(a), np.sin(a)])
        p = projector(eta)
        assert np.abs(p @ p - p).max() <= 1e-12
        assert np.abs(p @ eta).max() <= 1e-12
        assert np.abs(p - p.T).max() == 0
    with pytest.raises(ValueError):
        projector((1.0, 1.0))


def test_gradient_rows_sum_to_zero(ops):
    _, o = ops
    assert np.abs(o.gx.sum(axis=1)).max() <= 1e-10
    assert np.abs(o.gy.sum(axis=1)).max() <= 1e-10


def test_laplacian_annihilates_constants(ops):
    _, o = ops
    assert np.abs(o.laplacian @ np.ones(o.laplacian.shape[0])).max() <= 1e-9


def test_stencils_center_first_and_nearest(ops):
    geom, o = ops
    assert np.array_equal(o.stencils[:, 0], np.arange(geom.n_s))
    d = np.linalg.norm(geom.sample_sites[:, None] - geom.sample_sites[None], axis=-1)
    for i, row in enumerate(o.stencils):
        far = np.sort(d[i])[len(row) - 1]
        assert np.all(d[i, row] <= far + 1e-15)


def test_symmetric_stencil_weights_closed_form():
    # center (1, 0) with neighbours at angles +-t on the unit circle: the
    # x-weights vanish and the y-weights are +-w with
    # w = 2 e^2 exp(-e^2 r^2) sin t / (1 - exp(-4 e^2 sin^2 t)),  r^2 = 2 - 2 cos t
    eps, t = 2.0, 0.3
    sites = np.array([[1.0, 0.0], [np.cos(t), np.sin(t)], [np.cos(t), -np.sin(t)]])
    normals = sites.copy()
    wy = rbf_fd_weights(0, [1, 2], sites, normals, "y", eps)
    wx = rbf_fd_weights(0, [1, 2], sites, normals, "x", eps)
    w = 2 * eps**2 * np.exp(-eps**2 * (2 - 2 * np.cos(t))) * np.sin(t) / (1 - np.exp(-4 * eps**2 * np.sin(t) ** 2))
    assert np.allclose(wy, [0.0, w, -w], atol=1e-13, rtol=1e-12)
    assert np.abs(wx).max() <= 1e-13


def test_coincident_sites_are_reported():
    sites = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(SolverError, match="coincident"):
        rbf_fd_weights(0, [1, 2], sites, np.array([[1.0, 0.0]] * 3), "x", 35.0)


def test_nearest_stencils_tie_break_is_deterministic():
    sites = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert nearest_stencils(sites, 3)[0].tolist() == [0, 1, 2]


def test_surface_gradient_of_linear_field_is_tangential():
    geom = shape_platelet(Circle((0.0, 0.0), 1.0), 50, 400, 0.9)
    o = build_surface_operators(geom, 3, 0.01)
    x = geom.sample_sites[:, 0]
    t = np.stack([-geom.sample_normals[:, 1], geom.sample_normals[:, 0]], 1)
    gx_exact = t[:, 0] * t[:, 0]
    gy_exact = t[:, 0] * t[:, 1]
    assert np.abs(o.gx @ x - gx_exact).max() <= 1e-3
    assert np.abs(o.gy @ x - gy_exact).max() <= 1e-3


def test_reaction_only_step_matches_rk4_solution():
    # D_s = 0 isolates the reaction; SBDF2 is second order against the ODE solution
    chem = SurfaceChemistry(SurfaceModel.MODEL1, k_on=0.7, k_off=0.3, d_s=0.0)
    cf = 0.8
    exact = solve_ivp(lambda t, y: chem.bound_rate(y, 1 - y, cf), (0, 1), [0.1], method="RK45",
                      rtol=1e-12, atol=1e-14).y[0, -1]
    errs = []
    for nsteps in (20, 40, 80):
        dt = 1.0 / nsteps
        st = SurfaceState.initial(chem, [0.1])
        stepper = SurfaceStepper(np.zeros((1, 1)), dt)
        stepper.bootstrap(st, np.array([cf]))
        for _ in range(nsteps - 1):
            stepper.step(st, np.array([cf]), np.array([cf]))
        errs.append(abs(st.c_bound[0] - exact))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)


def test_model2_conserves_total_sitewise_with_equal_diffusion(ops):
    geom, o = ops
    lam = geom.sample_nodes
    chem = SurfaceChemistry(SurfaceModel.MODEL2, k_on=0.4, k_off=0.2, d_s_b=1.0, d_s_u=1.0)
    st = SurfaceState.initial(chem, np.cos(lam), 1 - np.cos(lam))
    stepper = SurfaceStepper(o.laplacian, 1e-3)
    cf = 0.5 + 0.3 * np.sin(lam)
    sbdf1_bootstrap(st, o.laplacian, cf, 1e-3, stepper)
    for k in range(50):
        sbdf2_step_model2(st, o.laplacian, cf * (1 + 0.01 * k), cf, 1e-3, stepper)
        assert np.abs(st.c_bound + st.c_unbound - 1.0).max() <= 1e-12


def test_printed_sign_breaks_conservation(ops):
    geom, o = ops
    lam = geom.sample_nodes
    chem = SurfaceChemistry(SurfaceModel.MODEL2, k_on=0.4, k_off=0.2, printed_unbinding_sign=True)
    st = SurfaceState.initial(chem, np.cos(lam), 1 - np.cos(lam))
    stepper = SurfaceStepper(o.laplacian, 1e-3)
    stepper.bootstrap(st, np.full(len(lam), 0.5))
    assert np.abs(st.c_bound + st.c_unbound - 1.0).max() > 1e-6


def test_model1_unbound_is_derived():
    chem = SurfaceChemistry(SurfaceModel.MODEL1, c_tot=2.0)
    st = SurfaceState.initial(chem, [0.5, 1.5])
    assert np.allclose(st.c_unbound, [1.5, 0.5])
    with pytest.raises(ValueError):
        SurfaceState.initial(SurfaceChemistry(SurfaceModel.MODEL2), [0.5])


def test_cf_levels_are_tagged():
    chem = SurfaceChemistry(SurfaceModel.MODEL1, k_on=1.0, k_off=1.0)
    st = SurfaceState.initial(chem, [0.2, 0.3])
    lap = np.zeros((2, 2))
    with pytest.raises(ValueError):
        sbdf2_step_model1(st, lap, np.ones(2), np.ones(2), 0.1)
    stepper = SurfaceStepper(lap, 0.1)
    a, b, c = np.full(2, 1.0), np.full(2, 2.0), np.full(2, 3.0)
    stepper.bootstrap(st, a)
    assert [lvl for lvl, _ in st.cf_levels] == [0]
    stepper.step(st, b, a)
    assert [lvl for lvl, _ in st.cf_levels] == [1, 0]
    stepper.step(st, c, b)
    assert [lvl for lvl, _ in st.cf_levels] == [2, 1]
    assert st.cf_levels[0][1] is c
    with pytest.raises(ValueError):
        stepper.bootstrap(st, a)
    with pytest.raises(ValueError):
        sbdf2_step_model2(st, lap, a, a, 0.1)


def test_surface_diffusion_second_order_in_flat_limit():
    errs = []
    for ns in (50, 100, 200):
        geom = shape_platelet(Circle((0.0, 0.0), 1.0), 50, ns, 0.9)
        o = build_surface_operators(geom, 3, 0.01)
        lam = geom.sample_nodes
        st = SurfaceState.initial(SurfaceChemistry(d_s=1.0), np.cos(lam) + np.sin(lam))
        stepper = SurfaceStepper(o.laplacian, 1e-3)
        z = np.zeros(ns)
        stepper.bootstrap(st, z)
        for _ in range(499):
            stepper.step(st, z, z)
        errs.append(np.sqrt(np.mean((st.c_bound - np.exp(-0.5) * (np.cos(lam) + np.sin(lam))) ** 2)))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8), orders
