"""RBF-FD surface gradient / Laplace-Beltrami operators and IMEX surface chemistry.

The surface gradient at a site with unit normal ``eta`` is ``P grad`` with
``P = I - eta eta^T``.  The x and y components are approximated by local
RBF-FD weights (Gaussian kernel plus a constant), and the Laplace-Beltrami
operator by ``L = Gx Gx + Gy Gy``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .kernels import RadialKernel
from .linalg import dense_solve

__all__ = [
    "projector",
    "rbf_fd_weights",
    "SurfaceOperators",
    "build_surface_operators",
    "SurfaceModel",
    "SurfaceChemistry",
    "SurfaceState",
    "SurfaceStepper",
    "sbdf1_bootstrap",
    "sbdf2_step_model1",
    "sbdf2_step_model2",
]


def projector(normal):
    """Tangent-line projector ``I - eta eta^T``."""
    eta = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(eta) - 1.0) > 1e-8:
        raise ValueError(f"projector needs a unit normal, got |eta| = {np.linalg.norm(eta):.6g}")
    return np.eye(2) - np.outer(eta, eta)


def _stencil_weights(sites, normal_c, kernel):
    """Weights of both surface-gradient components for one stencil.

    ``sites[0]`` is the center.  Returns an ``(n, 2)`` array (columns x, y).
    """
    n = len(sites)
    diff = sites[:, None, :] - sites[None, :, :]
    a = np.ones((n + 1, n + 1))
    a[n, n] = 0.0
    a[:n, :n] = kernel.value_of_offset(diff)
    # grad_X phi(|X - X_j|) at X = X_center
    grad = kernel.gradient(sites[0] - sites)
    rhs = np.zeros((n + 1, 2))
    rhs[:n] = grad @ projector(normal_c).T
    try:
        w = dense_solve(a, rhs, what="RBF-FD saddle system")
    except SolverError as exc:
        raise SolverError(f"{exc} (coincident sample sites?)") from None
    return w[:n]


def rbf_fd_weights(center_index, neighbor_indices, sample_sites, normals, component, eps_fd):
    """RBF-FD weights for one component (``"x"`` or ``"y"``) of the surface gradient.

    The stencil is the center followed by ``neighbor_indices``; the Lagrange
    multiplier of the constant constraint is discarded.
    """
    idx = np.r_[center_index, np.asarray(neighbor_indices, dtype=int)]
    pts = np.asarray(sample_sites, float)[idx]
    w = _stencil_weights(pts, np.asarray(normals, float)[center_index], RadialKernel.gaussian(eps_fd))
    return w[:, {"x": 0, "y": 1}[component]]


@dataclass
class SurfaceOperators:
    gx: sp.csr_matrix
    gy: sp.csr_matrix
    laplacian: sp.csr_matrix
    stencils: np.ndarray  # (N_s, n), center first
    stencil_size: int
    eps_fd: float


def nearest_stencils(sites, n):
    sites = np.asarray(sites, float)
    if len(sites) < n:
        raise ValueError(f"need at least {n} sample sites for an {n}-point stencil")
    d = np.linalg.norm(sites[:, None, :] - sites[None, :, :], axis=-1)
    order = np.argsort(d, axis=1, kind="stable")[:, :n]
    # the center must come first even when a coincident site exists
    for i in range(len(sites)):
        if order[i, 0] != i:
            row = [i] + [j for j in order[i] if j != i]
            order[i] = row[:n]
    return order


def build_surface_operators(geometry, n=3, eps_fd=35.0, sites=None, normals=None):
    """Assemble ``Gx``, ``Gy`` and ``L`` on the platelet's sample sites."""
    sites = geometry.sample_sites if sites is None else np.asarray(sites, float)
    normals = geometry.sample_normals if normals is None else np.asarray(normals, float)
    ns = len(sites)
    kernel = RadialKernel.gaussian(eps_fd)
    stencils = nearest_stencils(sites, n)
    w = np.empty((ns, n, 2))
    for i in range(ns):
        w[i] = _stencil_weights(sites[stencils[i]], normals[i], kernel)
    rows = np.repeat(np.arange(ns), n)
    cols = stencils.ravel()
    gx = sp.csr_matrix((w[:, :, 0].ravel(), (rows, cols)), shape=(ns, ns))
    gy = sp.csr_matrix((w[:, :, 1].ravel(), (rows, cols)), shape=(ns, ns))
    lap = (gx @ gx + gy @ gy).tocsr()
    lap.sort_indices()
    return SurfaceOperators(gx=gx, gy=gy, laplacian=lap, stencils=stencils, stencil_size=n, eps_fd=eps_fd)


# ---------------------------------------------------------------------------
# Surface chemistry
# ---------------------------------------------------------------------------


class SurfaceModel(enum.Enum):
    MODEL1 = "model1"  # bound density only, C^u = C_tot - C^b
    MODEL2 = "model2"  # bound and unbound densities both diffuse


@dataclass(frozen=True)
class SurfaceChemistry:
    model: SurfaceModel = SurfaceModel.MODEL1
    k_on: float = 0.0
    k_off: float = 0.0
    c_tot: float = 1.0
    d_s: float = 1.0  # model 1
    d_s_b: float = 1.0  # model 2
    d_s_u: float = 1.0  # model 2
    printed_unbinding_sign: bool = False  # model 2: use "+k_off C^u" in the C^u equation

    def bound_rate(self, cb, cu, cf):
        return self.k_on * cu * cf - self.k_off * cb

    def unbound_rate(self, cb, cu, cf):
        if self.printed_unbinding_sign:
            return -self.k_on * cu * cf + self.k_off * cu
        return -self.bound_rate(cb, cu, cf)


@dataclass
class SurfaceState:
    """Densities at the sample sites at levels n and n-1 (``None`` before bootstrap)."""

    chemistry: SurfaceChemistry
    c_bound: np.ndarray
    c_unbound_m2: np.ndarray = None  # model 2 only
    prev_bound: np.ndarray = None
    prev_unbound_m2: np.ndarray = None
    steps: int = 0
    cf_levels: list = field(default_factory=list)  # (step index, c_f) consumed by the last step

    @classmethod
    def initial(cls, chemistry, c_bound, c_unbound=None):
        cb = np.array(c_bound, dtype=float)
        cu = None
        if chemistry.model is SurfaceModel.MODEL2:
            if c_unbound is None:
                raise ValueError("model 2 needs initial unbound densities")
            cu = np.array(c_unbound, dtype=float)
            if cu.shape != cb.shape:
                raise ValueError("bound and unbound vectors differ in length")
        return cls(chemistry=chemistry, c_bound=cb, c_unbound_m2=cu)

    @property
    def c_unbound(self):
        if self.chemistry.model is SurfaceModel.MODEL1:
            return self.chemistry.c_tot - self.c_bound
        return self.c_unbound_m2

    @property
    def prev_unbound(self):
        if self.chemistry.model is SurfaceModel.MODEL1:
            return None if self.prev_bound is None else self.chemistry.c_tot - self.prev_bound
        return self.prev_unbound_m2


class SurfaceStepper:
    """SBDF1/SBDF2 time stepping with cached sparse factorizations.

    Diffusion is implicit, reactions explicit.  Factorizations of
    ``I - gamma dt D L`` are cached per ``(gamma, D)`` since the platelet and
    the step size are fixed.
    """

    def __init__(self, laplacian, dt):
        self.laplacian = sp.csc_matrix(laplacian)
        self.dt = float(dt)
        self._lu = {}

    def _solve(self, gamma, diff, rhs):
        key = (gamma, diff)
        if key not in self._lu:
            n = self.laplacian.shape[0]
            m = sp.identity(n, format="csc") - (gamma * self.dt * diff) * self.laplacian
            try:
                self._lu[key] = spla.splu(m)
            except RuntimeError as exc:
                raise SolverError(f"surface implicit matrix is singular: {exc}") from None
        return self._lu[key].solve(rhs)

    def _diffusivities(self, chem):
        if chem.model is SurfaceModel.MODEL1:
            return chem.d_s, None
        return chem.d_s_b, chem.d_s_u

    def bootstrap(self, state, cf):
        """One SBDF1 step (implicit Euler diffusion, explicit Euler reaction)."""
        if state.steps != 0:
            raise ValueError("bootstrap must be the first step")
        chem, dt = state.chemistry, self.dt
        db, du = self._diffusivities(chem)
        cb, cu = state.c_bound, state.c_unbound
        rb = chem.bound_rate(cb, cu, cf)
        new_b = self._solve(1.0, db, cb + dt * rb)
        if chem.model is SurfaceModel.MODEL2:
            ru = chem.unbound_rate(cb, cu, cf)
            new_u = self._solve(1.0, du, cu + dt * ru)
            state.prev_unbound_m2, state.c_unbound_m2 = cu, new_u
        state.prev_bound, state.c_bound = cb, new_b
        state.cf_levels = [(0, cf)]
        state.steps = 1
        return state

    def step(self, state, cf_now, cf_prev):
        """One SBDF2 step; ``cf_now``/``cf_prev`` are fluid values at t_n, t_{n-1}."""
        if state.prev_bound is None:
            raise ValueError("SBDF2 needs two time levels; call bootstrap first")
        chem, dt = state.chemistry, self.dt
        db, du = self._diffusivities(chem)
        cb, cu = state.c_bound, state.c_unbound
        pb, pu = state.prev_bound, state.prev_unbound
        rhs_b = (4.0 / 3.0) * (cb + dt * chem.bound_rate(cb, cu, cf_now)) - (1.0 / 3.0) * (
            pb + 2.0 * dt * chem.bound_rate(pb, pu, cf_prev)
        )
        new_b = self._solve(2.0 / 3.0, db, rhs_b)
        if chem.model is SurfaceModel.MODEL2:
            rhs_u = (4.0 / 3.0) * (cu + dt * chem.unbound_rate(cb, cu, cf_now)) - (1.0 / 3.0) * (
                pu + 2.0 * dt * chem.unbound_rate(pb, pu, cf_prev)
            )
            new_u = self._solve(2.0 / 3.0, du, rhs_u)
            state.prev_unbound_m2, state.c_unbound_m2 = cu, new_u
        state.prev_bound, state.c_bound = cb, new_b
        state.cf_levels = [(state.steps, cf_now), (state.steps - 1, cf_prev)]
        state.steps += 1
        return state


def _check_model(state, model):
    if state.chemistry.model is not model:
        raise ValueError(f"state uses {state.chemistry.model.value}, expected {model.value}")


def sbdf1_bootstrap(state, laplacian, cf, dt, stepper=None):
    stepper = stepper or SurfaceStepper(laplacian, dt)
    return stepper.bootstrap(state, cf)


def sbdf2_step_model1(state, laplacian, cf_now, cf_prev, dt, stepper=None):
    _check_model(state, SurfaceModel.MODEL1)
    stepper = stepper or SurfaceStepper(laplacian, dt)
    return stepper.step(state, cf_now, cf_prev)


def sbdf2_step_model2(state, laplacian, cf_now, cf_prev, dt, stepper=None):
    _check_model(state, SurfaceModel.MODEL2)
    stepper = stepper or SurfaceStepper(laplacian, dt)
    return stepper.step(state, cf_now, cf_prev)
