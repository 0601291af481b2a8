"""Fractional-step coupling of surface chemistry and bulk diffusion.

Each step: interpolate the bulk field to every platelet, advance the surface
densities (SBDF2, SBDF1 for the first step), transfer the new densities to the
boundary points, then take one AFM Crank-Nicolson step with the resulting
Robin condition ``-D dc/d(eta) - k_on C^u c = -k_off C^b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import GridError
from .fluid_afm import AfmSystem
from .geometry import equispaced_nodes
from .grid import PointKind
from .linalg import DenseQR
from .surface_pde import SurfaceChemistry, SurfaceModel, SurfaceState, SurfaceStepper, build_surface_operators

__all__ = [
    "bilinear_matrix",
    "CfInterpolator",
    "interpolate_cf",
    "BoundaryTransfer",
    "densities_to_boundary",
    "PlateletSetup",
    "CoupledProblem",
]


def bilinear_matrix(model, points):
    """Sparse ``(len(points), N_T)`` bilinear interpolation from the grid.

    A cell with exactly one solid corner uses the planar extrapolation
    ``c_s = c_adj1 + c_adj2 - c_opposite`` for that corner; two or more solid
    corners is an error.
    """
    grid = model.grid
    h = grid.h
    pts = np.asarray(points, float)
    fx, fy = pts[:, 0] / h, pts[:, 1] / h
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    tx, ty = fx - i0, fy - j0

    def wrap(i, n, periodic):
        if periodic:
            return i % n
        if np.any((i < 0) | (i >= n)):
            raise GridError("interpolation point outside the grid")
        return i

    px = grid.bc.left == "periodic"
    py = grid.bc.bottom == "periodic"
    i1 = wrap(i0 + 1, grid.nx, px)
    j1 = wrap(j0 + 1, grid.ny, py)
    i0 = wrap(i0, grid.nx, px)
    j0 = wrap(j0, grid.ny, py)
    # corners in order 00, 10, 01, 11
    corners = np.stack([grid.index(i0, j0), grid.index(i1, j0), grid.index(i0, j1), grid.index(i1, j1)], 1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], 1)
    solid = model.labels[corners] == PointKind.SOLID
    nsolid = solid.sum(axis=1)
    if np.any(nsolid >= 2):
        k = int(np.argmax(nsolid >= 2))
        raise GridError(f"interpolation point {pts[k]} has {int(nsolid[k])} solid cell corners")
    # corner c: adjacent corners and opposite corner
    adj = {0: (1, 2, 3), 1: (0, 3, 2), 2: (0, 3, 1), 3: (1, 2, 0)}
    rows, cols, vals = [], [], []
    for m in range(len(pts)):
        wm = dict(zip(range(4), w[m]))
        if nsolid[m] == 1:
            s = int(np.argmax(solid[m]))
            a1, a2, op = adj[s]
            ws = wm.pop(s)
            wm[a1] += ws
            wm[a2] += ws
            wm[op] -= ws
        for c, v in wm.items():
            rows.append(m)
            cols.append(corners[m, c])
            vals.append(v)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), grid.size))
    mat.sum_duplicates()
    return mat


class CfInterpolator:
    """Grid field -> data sites (bilinear) -> sample sites (RBF, smoothed evaluation).

    The whole map is linear and fixed for a stationary platelet, so it is
    stored as a sparse bilinear matrix and a dense ``N_s x N_d`` matrix.
    """

    def __init__(self, model, geometry, eval_factor=0.99):
        self.bilinear = bilinear_matrix(model, geometry.data_sites)
        self.fit_eval = geometry.cardinal_matrix(geometry.sample_nodes, eval_factor * geometry.eps_geom)

    def data_values(self, c):
        return self.bilinear @ c

    def __call__(self, c):
        return self.fit_eval @ (self.bilinear @ c)


def interpolate_cf(c, model, geometry, eval_factor=0.99):
    return CfInterpolator(model, geometry, eval_factor)(c)


class BoundaryTransfer:
    """Least-squares fit ``min ||B g - C||`` on the sample sites, evaluated at boundary points."""

    def __init__(self, geometry, boundary_params):
        self.qr = DenseQR(geometry.eval_matrix_B)
        self.b_hat = geometry.eval_matrix(np.asarray(boundary_params, float))
        self.matrix = self.qr.left_apply(self.b_hat)

    def coefficients(self, values):
        return self.qr.lstsq(np.asarray(values, float))

    def __call__(self, values):
        return self.matrix @ np.asarray(values, float)


def densities_to_boundary(geometry, values, boundary_params):
    t = BoundaryTransfer(geometry, boundary_params)
    return t.b_hat @ t.coefficients(values)


@dataclass
class PlateletSetup:
    """Per-platelet surface machinery inside a coupled problem."""

    geometry: object
    chemistry: SurfaceChemistry
    record_index: np.ndarray  # positions of this platelet's records in model.records
    operators: object = None
    stepper: SurfaceStepper = None
    state: SurfaceState = None
    cf: CfInterpolator = None
    transfer: BoundaryTransfer = None
    cf_cache: dict = field(default_factory=dict)  # step index -> c_f


class CoupledProblem:
    """Bulk field plus surface densities on stationary platelets.

    ``chemistry`` holds one :class:`SurfaceChemistry` per platelet (in
    ``model.platelets`` order).  Initial surface data are callables of the
    sample-node parameter.
    """

    def __init__(self, model, chemistry, diffusion, dt, eps_fd=35.0, eps_herm=5.0, stencil_size=3,
                 eval_factor=0.99, solver="iterative", source=None):
        if len(chemistry) != len(model.platelets):
            raise ValueError("need one surface chemistry per platelet")
        self.model = model
        self.dt = float(dt)
        self.diffusion = float(diffusion)
        self.fluid = AfmSystem(model, diffusion, dt, source=source, eps_herm=eps_herm, solver=solver)
        self.platelets = []
        for pid, (geom, chem) in enumerate(zip(model.platelets, chemistry)):
            idx = np.array([k for k, r in enumerate(model.records) if r.platelet_id == pid], dtype=int)
            ops = build_surface_operators(geom, stencil_size, eps_fd)
            params = np.array([model.records[k].boundary_param for k in idx])
            self.platelets.append(PlateletSetup(
                geometry=geom,
                chemistry=chem,
                record_index=idx,
                operators=ops,
                stepper=SurfaceStepper(ops.laplacian, dt),
                cf=CfInterpolator(model, geom, eval_factor),
                transfer=BoundaryTransfer(geom, params),
            ))
        self.c = None
        self.steps = 0
        self.reports = []

    @property
    def time(self):
        return self.steps * self.dt

    def initialize(self, c0, bound0, unbound0=None):
        """``c0(x, y)`` on the grid; ``bound0(lam)``/``unbound0(lam)`` on each platelet."""
        pts = self.model.grid.points()
        self.c = np.asarray(c0(pts[:, 0], pts[:, 1]), float)
        for p in self.platelets:
            lam = p.geometry.sample_nodes
            cb = bound0(lam)
            cu = None
            if p.chemistry.model is SurfaceModel.MODEL2:
                cu = unbound0(lam) if unbound0 is not None else p.chemistry.c_tot - cb
            p.state = SurfaceState.initial(p.chemistry, cb, cu)
            p.cf_cache = {}
        self.steps = 0
        return self

    def _cf(self, p, level):
        if level not in p.cf_cache:
            if level != self.steps:
                raise RuntimeError(f"c_f at level {level} is not cached")
            p.cf_cache[level] = p.cf(self.c)
        return p.cf_cache[level]

    def _boundary_data(self):
        nf = self.fluid.n_forcing
        kappa = np.zeros(nf)
        data = np.zeros(nf)
        for p in self.platelets:
            if len(p.record_index) == 0:
                continue
            chem = p.chemistry
            cb = p.transfer(p.state.c_bound)
            cu = p.transfer(p.state.c_unbound)
            kappa[p.record_index] = chem.k_on * cu
            data[p.record_index] = -chem.k_off * cb
        return kappa, data

    def step(self, report=False):
        n = self.steps
        for p in self.platelets:
            cf_now = self._cf(p, n)
            if n == 0:
                p.stepper.bootstrap(p.state, cf_now)
            else:
                p.stepper.step(p.state, cf_now, self._cf(p, n - 1))
            p.cf_cache.pop(n - 1, None)
        kappa, data = self._boundary_data()
        self.fluid.set_boundary(kappa, data)
        out = self.fluid.step(self.c, n * self.dt, report=report)
        if report:
            self.c, rep = out
            self.reports.append(rep)
        else:
            self.c = out
        self.steps += 1
        return self

    def run(self, t_final, report=False, callback=None):
        nsteps = int(round(t_final / self.dt))
        if abs(nsteps * self.dt - t_final) > 1e-9 * max(1.0, t_final):
            raise ValueError(f"final time {t_final} is not a whole number of steps of {self.dt}")
        while self.steps < nsteps:
            self.step(report=report)
            if callback is not None:
                callback(self)
        return self

    def surface(self, pid):
        s = self.platelets[pid].state
        return s.c_bound, s.c_unbound


def sample_nodes_nested(n_coarse, n_fine):
    """Indices of the coarse equispaced nodes inside the fine set."""
    if n_fine % n_coarse:
        raise ValueError(f"{n_coarse} sample nodes are not nested in {n_fine}")
    idx = np.arange(n_coarse) * (n_fine // n_coarse)
    assert np.allclose(equispaced_nodes(n_fine)[idx], equispaced_nodes(n_coarse))
    return idx
