"""Property-based checks of invariants that need no reference data."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from platelet_sim.cli import parse_config_text
from platelet_sim.experiments import error_norms
from platelet_sim.fluid_afm import hermite_matrices
from platelet_sim.kernels import RadialKernel
from platelet_sim.surface_pde import build_surface_operators, projector

finite = dict(allow_nan=False, allow_infinity=False)
kernels = st.builds(
    lambda kind, eps: RadialKernel.multiquadric(eps) if kind else RadialKernel.gaussian(eps),
    st.booleans(), st.floats(0.3, 8.0),
)
offsets = st.tuples(st.floats(-0.5, 0.5, **finite), st.floats(-0.5, 0.5, **finite)).map(np.array)


@settings(max_examples=60, deadline=None)
@given(kernels, offsets)
def test_kernel_gradient_consistent_with_value(kernel, d):
    h = 1e-6
    fd = np.array([(kernel.value_of_offset(d + h * e) - kernel.value_of_offset(d - h * e)) / (2 * h) for e in np.eye(2)])
    g = kernel.gradient(d)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-2)


@settings(max_examples=60, deadline=None)
@given(kernels, offsets)
def test_kernel_hessian_symmetric_and_even(kernel, d):
    hs = kernel.hessian(d)
    assert np.allclose(hs, hs.T, atol=0)
    assert np.allclose(hs, kernel.hessian(-d), rtol=1e-14, atol=1e-14)
    assert np.allclose(kernel.gradient(-d), -kernel.gradient(d), rtol=1e-14, atol=1e-14)


@given(st.floats(0, 2 * np.pi))
def test_projector_idempotent_and_kills_normal(a):
    eta = np.array([np.cos(a), np.sin(a)])
    p = projector(eta)
    assert np.abs(p @ p - p).max() <= 1e-12
    assert np.abs(p @ eta).max() <= 1e-12


class _Jittered:
    def __init__(self, sites, normals):
        self.sample_sites, self.sample_normals = sites, normals


@settings(max_examples=25, deadline=None)
@given(st.integers(20, 120), st.floats(0.0, 0.3), st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_rbf_fd_rows_annihilate_constants(n, jitter, seed, radius):
    lam = 2 * np.pi * (np.arange(n) + jitter * np.random.default_rng(seed).uniform(-1, 1, n)) / n
    normals = np.stack([np.cos(lam), np.sin(lam)], 1)
    ops = build_surface_operators(_Jittered(radius * normals, normals), 3, 35.0 * 0.0995 / radius)
    assert np.abs(ops.gx.sum(axis=1)).max() <= 1e-10
    assert np.abs(ops.gy.sum(axis=1)).max() <= 1e-10
    assert np.abs(ops.laplacian @ np.ones(n)).max() <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 1.0), st.floats(-2.0, 2.0))
def test_hermite_matrix_symmetric(seed, diffusion, k):
    rng = np.random.default_rng(seed)
    fp = rng.uniform(0, 0.1, (1, 3, 2))
    bp = rng.uniform(0, 0.1, (1, 3, 2))
    a = rng.uniform(0, 2 * np.pi, (1, 3))
    bn = np.stack([np.cos(a), np.sin(a)], -1)
    v = hermite_matrices(RadialKernel.multiquadric(5.0), diffusion, fp, bp, bn, np.full((1, 3), k))
    assert np.abs(v - np.swapaxes(v, 1, 2)).max() <= 1e-12 * max(1.0, np.abs(v).max())


# magnitudes kept clear of underflow in e**2
entries = st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100))
vectors = st.lists(entries, min_size=1, max_size=50).map(np.array)


@given(vectors, st.one_of(st.just(0.0), st.floats(1e-6, 10.0), st.floats(-10.0, -1e-6)), st.floats(1e-3, 1.0))
def test_error_norms_homogeneous(e, a, h):
    z = np.zeros_like(e)
    l2, linf = error_norms(e, z, h=h)
    l2a, linfa = error_norms(a * e, z, h=h)
    assert np.isclose(l2a, abs(a) * l2, rtol=1e-12, atol=1e-300)
    assert np.isclose(linfa, abs(a) * linf, rtol=1e-12, atol=1e-300)
    rms, _ = error_norms(e, z)
    assert rms <= linf * (1 + 1e-12)


@given(st.lists(st.integers(4, 4096), min_size=1, max_size=6), st.floats(1e-6, 10.0, **finite))
def test_config_roundtrip(grids, dt):
    text = f"grids = {', '.join(map(str, grids))}  # comment\ndt_base = {dt!r}\n"
    vals = parse_config_text(text)
    assert vals == {"grids": grids, "dt_base": dt}
