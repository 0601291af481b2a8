"""Augmented forcing method for the bulk diffusion equation.

Crank-Nicolson with the 5-point Laplacian is applied at every grid node.  At
each forcing point an extra unknown ``F`` enters the equation for that node,
and one closing row ``E c = r_bc`` ties the forcing-point value to a symmetric
Hermite RBF interpolant built from three nearby fluid values and the Robin
condition at three boundary points.  The block system::

    [A  P] [c]   [r   ]
    [E  0] [F] = [r_bc]

is solved through the Schur complement ``-E A^-1 P F = r_bc - E A^-1 r``
followed by ``A c = r - P F``.

Outer boundary rows: periodic sides wrap, Neumann sides use a reflected ghost
node (optionally with a prescribed flux), Dirichlet nodes carry identity rows
and are eliminated from their neighbours.  Rows on Neumann sides are scaled by
1/2 per side so that ``A`` stays symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, GridError, SolverError
from .grid import PointKind
from .kernels import RadialKernel, robin_apply_batch, robin_robin_batch
from .linalg import COND_LIMIT, MIC0, SolveInfo, TransformSolver, bicgstab, cg

__all__ = [
    "SOLVERS",
    "CrankNicolson",
    "assemble_cn",
    "HermiteStencil",
    "StencilSet",
    "select_stencil",
    "build_hermite_row",
    "HermiteRows",
    "hermite_matrices",
    "hermite_rows",
    "AfmSystem",
    "StepReport",
    "afm_solve_step",
    "ManufacturedSolution",
    "run_manufactured",
    "forcing_distance_study",
]

SOLVERS = ("iterative", "direct", "fast")


# ---------------------------------------------------------------------------
# Crank-Nicolson operator
# ---------------------------------------------------------------------------


class CrankNicolson:
    """``(I - tau Lap_h) c^{n+1} = (I + tau Lap_h) c^n + dt s^{n+1/2}`` with ``tau = D dt / 2``.

    ``boundary_value(x, y, t)`` gives Dirichlet data (default 0) and
    ``boundary_gradient(x, y, t) -> (N, 2)`` the gradient whose outward normal
    component is the Neumann flux (default no flux).
    """

    def __init__(self, grid, diffusion, dt, boundary_value=None, boundary_gradient=None):
        if diffusion < 0 or dt <= 0:
            raise ValueError("need diffusion >= 0 and dt > 0")
        self.grid = grid
        self.diffusion = float(diffusion)
        self.dt = float(dt)
        self.tau = 0.5 * self.diffusion * self.dt
        self.boundary_value = boundary_value
        self.boundary_gradient = boundary_gradient
        self._build()

    def _build(self):
        g = self.grid
        nx, ny, h = g.nx, g.ny, g.h
        bc = g.bc
        i, j = g.ij(np.arange(g.size))
        dirichlet = np.zeros(g.size, dtype=bool)
        if bc.left == "dirichlet":
            dirichlet |= i == 0
        if bc.right == "dirichlet":
            dirichlet |= i == nx - 1
        if bc.bottom == "dirichlet":
            dirichlet |= j == 0
        if bc.top == "dirichlet":
            dirichlet |= j == ny - 1
        # (side, on-side mask, outward normal)
        self._neumann_sides = []
        weight = np.ones(g.size)
        for side, mask, normal in (
            ("left", i == 0, (-1.0, 0.0)),
            ("right", i == nx - 1, (1.0, 0.0)),
            ("bottom", j == 0, (0.0, -1.0)),
            ("top", j == ny - 1, (0.0, 1.0)),
        ):
            if getattr(bc, side) == "neumann":
                m = mask & ~dirichlet
                self._neumann_sides.append((m, np.array(normal)))
                weight[m] *= 0.5

        rows, cols, vals = [], [], []
        inv = 1.0 / h**2
        for axis, n_ax, idx, lo_kind, hi_kind in (
            (0, nx, i, bc.left, bc.right),
            (1, ny, j, bc.bottom, bc.top),
        ):
            for step in (-1, 1):
                nb = idx + step
                kind = lo_kind if step < 0 else hi_kind
                off_edge = (nb < 0) | (nb >= n_ax)
                if kind == "periodic":
                    nb = nb % n_ax
                    valid = np.ones(g.size, dtype=bool)
                elif kind == "neumann":
                    # reflected ghost: c_{-1} = c_1 (+ flux term in the rhs)
                    nb = np.where(off_edge, idx - step, nb)
                    valid = np.ones(g.size, dtype=bool)
                else:
                    valid = ~off_edge
                ii = np.where(axis == 0, nb, i)
                jj = np.where(axis == 1, nb, j)
                k = np.arange(g.size)
                sel = valid & ~dirichlet
                rows.append(k[sel])
                cols.append(g.index(ii[sel], jj[sel]))
                vals.append(np.full(int(sel.sum()), inv))
        k = np.arange(g.size)
        sel = ~dirichlet
        rows.append(k[sel])
        cols.append(k[sel])
        vals.append(np.full(int(sel.sum()), -4.0 * inv))
        lap = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.size, g.size)
        )
        lap.sum_duplicates()
        self.laplacian = lap
        self.dirichlet = dirichlet
        self.row_weight = weight

        keep = sp.diags((~dirichlet).astype(float))
        lap_inner = (lap @ keep).tocsr()  # columns of Dirichlet nodes removed
        self._lap_to_dirichlet = (lap @ sp.diags(dirichlet.astype(float))).tocsr()
        a0 = sp.identity(g.size, format="csr") - self.tau * lap_inner
        self.a0 = a0.tocsr()
        a = (sp.diags(weight) @ a0).tocsr()
        a.sum_duplicates()
        a.sort_indices()
        self.a_matrix = a
        self._points = g.points()

    def _neumann_term(self, t):
        """``2 g / h`` per Neumann side, g the outward flux."""
        out = np.zeros(self.grid.size)
        if self.boundary_gradient is None:
            return out
        for mask, normal in self._neumann_sides:
            idx = np.nonzero(mask)[0]
            if len(idx) == 0:
                continue
            p = self._points[idx]
            grad = np.asarray(self.boundary_gradient(p[:, 0], p[:, 1], t), float)
            out[idx] += 2.0 * (grad @ normal) / self.grid.h
        return out

    def _dirichlet_values(self, t):
        out = np.zeros(self.grid.size)
        if self.boundary_value is not None and self.dirichlet.any():
            p = self._points[self.dirichlet]
            out[self.dirichlet] = self.boundary_value(p[:, 0], p[:, 1], t)
        return out

    def rhs(self, c_n, t_n, source=None):
        """Scaled right-hand side ``W r`` for the step ``t_n -> t_n + dt``."""
        c_n = np.asarray(c_n, float)
        t1 = t_n + self.dt
        g1 = self._dirichlet_values(t1)
        r = c_n + self.tau * (self.laplacian @ c_n + self._neumann_term(t_n) + self._neumann_term(t1))
        r += self.tau * (self._lap_to_dirichlet @ g1)
        if source is not None:
            p = self._points
            r += self.dt * np.asarray(source(p[:, 0], p[:, 1], t_n + 0.5 * self.dt), float)
        r[self.dirichlet] = g1[self.dirichlet]
        return self.row_weight * r


def assemble_cn(model, diffusion, dt, source, t_n, c_n, boundary_value=None, boundary_gradient=None):
    """Return ``(A, r)`` for one Crank-Nicolson step on the classified grid."""
    cn = CrankNicolson(model.grid, diffusion, dt, boundary_value, boundary_gradient)
    return cn.a_matrix, cn.rhs(c_n, t_n, source)


# ---------------------------------------------------------------------------
# Hermite stencils
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HermiteStencil:
    forcing_index: int
    forcing_point: tuple
    fluid_indices: tuple  # 3 grid indices
    fluid_points: np.ndarray  # (3, 2)
    boundary_records: tuple  # record positions of p_a, p_b, p_c
    boundary_points: np.ndarray  # (3, 2)
    boundary_normals: np.ndarray  # (3, 2), into the fluid
    boundary_params: np.ndarray  # (3,)


def _grid_position(grid, i, j):
    return np.stack([i * grid.h, j * grid.h], axis=-1)


def select_stencil(record, model, all_records, position=None, search=3, anchor="boundary"):
    """Geometry of one Hermite stencil.

    ``p_a`` is the record's boundary point, ``p_b``/``p_c`` the two nearest
    other boundary points of the same platelet; the fluid points are the three
    fluid nodes nearest ``p_a`` (within ``3 h``).
    """
    grid = model.grid
    if position is None:
        position = {r.grid_index: k for k, r in enumerate(all_records)}
    own = position[record.grid_index]
    same = [k for k, r in enumerate(all_records) if r.platelet_id == record.platelet_id]
    if len(same) < 3:
        raise GridError(
            f"platelet {record.platelet_id} has {len(same)} forcing points; a Hermite stencil needs 3"
        )
    pa = np.array(record.boundary_point)
    others = np.array([k for k in same if k != own])
    bp = np.array([all_records[k].boundary_point for k in others])
    dist = np.linalg.norm(bp - pa, axis=1)
    order = np.lexsort((others, dist))[:2]
    chosen = (own, int(others[order[0]]), int(others[order[1]]))

    fb = _grid_position(grid, *grid.ij(record.grid_index))
    # fluid candidates in a window around p_a
    ci = int(np.floor(pa[0] / grid.h))
    cj = int(np.floor(pa[1] / grid.h))
    offs = np.arange(-search, search + 2)
    ii, jj = np.meshgrid(ci + offs, cj + offs)
    ii, jj = ii.ravel(), jj.ravel()
    pos = _grid_position(grid, ii, jj)
    if grid.bc.left == "periodic":
        ii = ii % grid.nx
    if grid.bc.bottom == "periodic":
        jj = jj % grid.ny
    ok = (ii >= 0) & (ii < grid.nx) & (jj >= 0) & (jj < grid.ny)
    ii, jj, pos = ii[ok], jj[ok], pos[ok]
    kk = grid.index(ii, jj)
    fl = model.labels[kk] == PointKind.FLUID
    kk, pos = kk[fl], pos[fl]
    d = np.linalg.norm(pos - pa, axis=1)
    near = d <= 3.0 * grid.h * (1 + 1e-12)
    kk, pos, d = kk[near], pos[near], d[near]
    if anchor == "forcing":
        d = np.linalg.norm(pos - fb, axis=1)
    if len(kk) < 3:
        raise GridError(
            f"forcing point at grid index {record.grid_index}: only {len(kk)} fluid points within 3h "
            f"of its boundary point (grid too coarse for the geometry)"
        )
    pick = np.lexsort((kk, d))[:3]
    recs = [all_records[k] for k in chosen]
    return HermiteStencil(
        forcing_index=record.grid_index,
        forcing_point=(float(fb[0]), float(fb[1])),
        fluid_indices=tuple(int(k) for k in kk[pick]),
        fluid_points=pos[pick],
        boundary_records=chosen,
        boundary_points=np.array([r.boundary_point for r in recs]),
        boundary_normals=np.array([r.inward_normal for r in recs]),
        boundary_params=np.array([r.boundary_param for r in recs]),
    )


@dataclass
class StencilSet:
    """All stencils of a grid model packed into arrays (cached geometry)."""

    stencils: list
    forcing: np.ndarray  # (N_F,) grid indices
    b_points: np.ndarray  # (N_F, 2) forcing-point positions
    fluid_idx: np.ndarray  # (N_F, 3)
    fluid_pts: np.ndarray  # (N_F, 3, 2)
    bnd_rec: np.ndarray  # (N_F, 3)
    bnd_pts: np.ndarray  # (N_F, 3, 2)
    bnd_nrm: np.ndarray  # (N_F, 3, 2)

    @classmethod
    def build(cls, model, anchor="boundary"):
        recs = model.records
        position = {r.grid_index: k for k, r in enumerate(recs)}
        st = [select_stencil(r, model, recs, position, anchor=anchor) for r in recs]
        n = len(st)
        if n == 0:
            z = np.zeros
            return cls([], z(0, int), z((0, 2)), z((0, 3), int), z((0, 3, 2)), z((0, 3), int),
                       z((0, 3, 2)), z((0, 3, 2)))
        return cls(
            stencils=st,
            forcing=np.array([s.forcing_index for s in st]),
            b_points=np.array([s.forcing_point for s in st]),
            fluid_idx=np.array([s.fluid_indices for s in st]),
            fluid_pts=np.array([s.fluid_points for s in st]),
            bnd_rec=np.array([s.boundary_records for s in st]),
            bnd_pts=np.array([s.boundary_points for s in st]),
            bnd_nrm=np.array([s.boundary_normals for s in st]),
        )

    def __len__(self):
        return len(self.stencils)


@dataclass
class HermiteRows:
    v: np.ndarray  # (N, 6, 6)
    s: np.ndarray  # (N, 6)
    q: np.ndarray  # (N, 6)


def hermite_matrices(kernel, diffusion, fluid_pts, bnd_pts, bnd_nrm, reaction):
    """Batched ``V_B = [G R; R^T H]`` and ``S_B``; ``reaction`` is ``(N, 3)``."""
    fp, bp, bn, k = fluid_pts, bnd_pts, bnd_nrm, np.asarray(reaction, float)
    n = fp.shape[0]
    g = kernel.value_of_offset(fp[:, :, None, :] - fp[:, None, :, :])
    # R[i, m] = D_{p_m} phi(|p_i - x|)
    shape = (n, 3, 3, 2)
    r = robin_apply_batch(
        kernel, diffusion, k[:, None, :],
        np.broadcast_to(bn[:, None, :, :], shape),
        np.broadcast_to(fp[:, :, None, :], shape),
        np.broadcast_to(bp[:, None, :, :], shape),
    )
    hh = robin_robin_batch(
        kernel,
        diffusion, k[:, :, None], np.broadcast_to(bn[:, :, None, :], shape), np.broadcast_to(bp[:, :, None, :], shape),
        diffusion, k[:, None, :], np.broadcast_to(bn[:, None, :, :], shape), np.broadcast_to(bp[:, None, :, :], shape),
    )
    v = np.empty((n, 6, 6))
    v[:, :3, :3] = g
    v[:, :3, 3:] = r
    v[:, 3:, :3] = np.swapaxes(r, 1, 2)
    v[:, 3:, 3:] = hh
    return v


def hermite_rows(kernel, diffusion, b_points, fluid_pts, bnd_pts, bnd_nrm, reaction, cond_limit=COND_LIMIT):
    v = hermite_matrices(kernel, diffusion, fluid_pts, bnd_pts, bnd_nrm, reaction)
    b = np.asarray(b_points, float)
    k = np.asarray(reaction, float)
    s = np.empty((len(b), 6))
    s[:, :3] = kernel.value_of_offset(b[:, None, :] - fluid_pts)
    s[:, 3:] = robin_apply_batch(kernel, diffusion, k, bnd_nrm, np.broadcast_to(b[:, None, :], bnd_pts.shape), bnd_pts)
    if len(b):
        cond = np.linalg.cond(v)
        bad = ~np.isfinite(cond) | (cond > cond_limit)
        if bad.any():
            m = int(np.argmax(bad))
            raise SolverError(
                f"Hermite matrix for stencil {m} is singular or ill-conditioned "
                f"(condition {cond[m]:.3e}); coincident stencil points?"
            )
        q = np.linalg.solve(v, s[:, :, None])[:, :, 0]  # V symmetric: Q^T = V^-1 S^T
    else:
        q = np.zeros((0, 6))
    return HermiteRows(v=v, s=s, q=q)


def build_hermite_row(stencil, kernel, diffusion, reaction, data=None):
    """E-row weights and the ``r_bc`` entry for one stencil.

    Returns ``(columns, weights, rbc)`` with columns ``(B, p1, p2, p3)`` and
    weights ``(-1, q1, q2, q3)``, and ``rbc = -(q4 d_a + q5 d_b + q6 d_c)``
    (``None`` when ``data`` is not given).
    """
    rows = hermite_rows(
        kernel, diffusion,
        np.array([stencil.forcing_point]),
        stencil.fluid_points[None], stencil.boundary_points[None], stencil.boundary_normals[None],
        np.asarray(reaction, float).reshape(1, 3),
    )
    q = rows.q[0]
    cols = np.array((stencil.forcing_index,) + tuple(stencil.fluid_indices))
    w = np.r_[-1.0, q[:3]]
    rbc = None if data is None else float(-(q[3:] @ np.asarray(data, float)))
    return cols, w, rbc, rows


# ---------------------------------------------------------------------------
# Block system and solver
# ---------------------------------------------------------------------------


@dataclass
class StepReport:
    block_residual: float  # ||A c + P F - r||
    bc_residual: float  # ||E c - r_bc||
    rhs_norm: float
    rbc_norm: float
    outer_iterations: int = 0
    inner_iterations: int = 0


class AfmSystem:
    """Owns ``A``, ``P``, cached stencil geometry and the per-step ``E``/``r_bc``.

    ``solver`` is ``"iterative"`` (BiCGSTAB on the Schur complement, inner CG
    with MIC(0)), ``"direct"`` (sparse LU of ``A`` and a dense Schur
    complement) or ``"fast"`` (the same with a transform solver for ``A``;
    only when each direction has one boundary kind).
    """

    def __init__(self, model, diffusion, dt, source=None, boundary_value=None, boundary_gradient=None,
                 eps_herm=5.0, solver="iterative", inner_tol=1e-11, outer_tol=1e-9, max_iter=500):
        if solver not in SOLVERS:
            raise ConfigError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")
        self.model = model
        self.grid = model.grid
        self.diffusion = float(diffusion)
        self.dt = float(dt)
        self.source = source
        self.kernel = RadialKernel.multiquadric(eps_herm)
        self.solver = solver
        self.inner_tol = inner_tol
        self.outer_tol = outer_tol
        self.max_iter = max_iter
        self.cn = CrankNicolson(self.grid, diffusion, dt, boundary_value, boundary_gradient)
        self.a_matrix = self.cn.a_matrix
        self.stencils = StencilSet.build(model)
        nf = len(self.stencils)
        self.n_forcing = nf
        self.forcing = self.stencils.forcing
        self.p_matrix = sp.csr_matrix(
            (np.ones(nf), (self.forcing, np.arange(nf))), shape=(self.grid.size, nf)
        )
        self.e_matrix = sp.csr_matrix((nf, self.grid.size))
        self.r_bc = np.zeros(nf)
        self.rows = None
        self._reaction = None
        self._schur_lu = None
        self._last_f = np.zeros(nf)
        asym = abs(self.a_matrix - self.a_matrix.T)
        self.symmetric = asym.nnz == 0 or asym.max() <= 1e-14 * abs(self.a_matrix).max()
        self._setup_solver()

    # -- A solves -----------------------------------------------------------
    def _setup_solver(self):
        self.inner_iterations = 0
        if self.solver == "iterative":
            self._mic = MIC0(self.a_matrix) if self.symmetric else None
        elif self.solver == "direct":
            self._lu = spla.splu(self.a_matrix.tocsc())
        else:
            bc = self.grid.bc
            kx, ky = bc.x_kind, bc.y_kind
            if kx is None or ky is None:
                raise ConfigError("fast solver needs the same boundary kind on opposite sides")
            self._fast = TransformSolver(self.grid.nx, self.grid.ny, self.grid.h, self.cn.tau, kx, ky)
        if self.solver in ("direct", "fast") and self.n_forcing:
            self._precompute_schur_columns()

    def solve_a(self, r, x0=None):
        if self.solver == "direct":
            return self._lu.solve(r)
        if self.solver == "fast":
            return self._fast.solve(r / self.cn.row_weight)
        if self._mic is not None:
            x, info = cg(self.a_matrix, r, tol=self.inner_tol, precond=self._mic, x0=x0)
        else:
            x, info = bicgstab(lambda v: self.a_matrix @ v, r, tol=self.inner_tol, max_iter=5000, x0=x0)
        self.inner_iterations += info.iterations
        return x

    def _precompute_schur_columns(self):
        st = self.stencils
        support = np.unique(np.r_[st.forcing, st.fluid_idx.ravel()])
        self._support = support
        nf = self.n_forcing
        cols = np.empty((len(support), nf))
        block = 64
        for start in range(0, nf, block):
            stop = min(nf, start + block)
            e = np.zeros((self.grid.size, stop - start))
            e[st.forcing[start:stop], np.arange(stop - start)] = 1.0
            if self.solver == "direct":
                x = self._lu.solve(e)
            else:
                x = np.stack([self._fast.solve(e[:, k] / self.cn.row_weight) for k in range(stop - start)], 1)
            cols[:, start:stop] = x[support]
        self._ainv_p = cols  # rows of A^-1 P on the E support
        where = np.searchsorted(support, np.c_[st.forcing, st.fluid_idx])
        self._support_pos = where  # (N_F, 4): B, p1, p2, p3

    # -- E rows -------------------------------------------------------------
    def set_boundary(self, reaction, data):
        """Install the Robin coefficient and data at every boundary point.

        ``reaction`` and ``data`` are indexed like ``model.records``.  ``E`` is
        rebuilt only when the coefficients change.
        """
        nf = self.n_forcing
        reaction = np.asarray(reaction, float).reshape(nf)
        data = np.asarray(data, float).reshape(nf)
        st = self.stencils
        if self._reaction is None or not np.array_equal(reaction, self._reaction):
            self.rows = hermite_rows(
                self.kernel, self.diffusion, st.b_points, st.fluid_pts, st.bnd_pts, st.bnd_nrm,
                reaction[st.bnd_rec],
            )
            q = self.rows.q
            rr = np.repeat(np.arange(nf), 4)
            cc = np.concatenate([st.forcing[:, None], st.fluid_idx], axis=1).ravel()
            vv = np.concatenate([-np.ones((nf, 1)), q[:, :3]], axis=1).ravel()
            self.e_matrix = sp.csr_matrix((vv, (rr, cc)), shape=(nf, self.grid.size))
            self._reaction = reaction.copy()
            self._schur_lu = None
        q = self.rows.q
        self.r_bc = -np.einsum("ki,ki->k", q[:, 3:], data[st.bnd_rec])

    # -- step ---------------------------------------------------------------
    def step(self, c_n, t_n, report=False):
        """Advance ``c`` from ``t_n`` to ``t_n + dt``; returns ``c`` (and a report)."""
        r = self.cn.rhs(c_n, t_n, self.source)
        self.inner_iterations = 0
        outer = 0
        nf = self.n_forcing
        if nf == 0:
            c = self.solve_a(r, x0=c_n)
            f = np.zeros(0)
        elif self.solver == "iterative":
            ainv_r = self.solve_a(r, x0=c_n)
            rhs = self.r_bc - self.e_matrix @ ainv_r

            def schur(fv):
                return -(self.e_matrix @ self.solve_a(self.p_matrix @ fv))

            try:
                f, info = bicgstab(schur, rhs, tol=self.outer_tol, max_iter=self.max_iter, x0=self._last_f)
            except SolverError as exc:
                raise SolverError(f"Schur complement solve at t = {t_n:.6g}: {exc}",
                                  residual=exc.residual, iterations=exc.iterations) from None
            outer = info.iterations
            c = self.solve_a(r - self.p_matrix @ f, x0=ainv_r)
        else:
            if self._schur_lu is None:
                # row k of E A^-1 P is -W[B_k] + sum_i q_i W[p_i]
                w, pos, q = self._ainv_p, self._support_pos, self.rows.q
                schur = w[pos[:, 0]] - np.einsum("ki,kij->kj", q[:, :3], w[pos[:, 1:]])
                self._schur_lu = scipy.linalg.lu_factor(schur)
            ainv_r = self.solve_a(r)
            rhs = self.r_bc - self.e_matrix @ ainv_r
            f = scipy.linalg.lu_solve(self._schur_lu, rhs)
            c = self.solve_a(r - self.p_matrix @ f)
        self._last_f = f
        if not report:
            return c
        rep = StepReport(
            block_residual=float(np.linalg.norm(self.a_matrix @ c + self.p_matrix @ f - r)),
            bc_residual=float(np.linalg.norm(self.e_matrix @ c - self.r_bc)) if nf else 0.0,
            rhs_norm=float(np.linalg.norm(r)),
            rbc_norm=float(np.linalg.norm(self.r_bc)),
            outer_iterations=outer,
            inner_iterations=self.inner_iterations,
        )
        return c, rep

    @property
    def forcing_values(self):
        return self._last_f


def afm_solve_step(system, c_n, t_n, report=False):
    return system.step(c_n, t_n, report=report)


# ---------------------------------------------------------------------------
# Manufactured solution runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedSolution:
    """``c = sin(pi x) sin(pi y) exp(-pi^2 t)`` with the source that makes it exact."""

    diffusion: float

    def value(self, x, y, t):
        return np.sin(np.pi * x) * np.sin(np.pi * y) * np.exp(-np.pi**2 * t)

    def gradient(self, x, y, t):
        e = np.exp(-np.pi**2 * t)
        return np.stack([
            np.pi * np.cos(np.pi * x) * np.sin(np.pi * y) * e,
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y) * e,
        ], axis=-1)

    def source(self, x, y, t):
        # c_t = -pi^2 c, Lap c = -2 pi^2 c
        return (2.0 * self.diffusion - 1.0) * np.pi**2 * self.value(x, y, t)

    def robin_data(self, points, normals, reaction, t):
        """``-D dc/d(eta) - k c`` at boundary points."""
        p = np.asarray(points, float)
        g = self.gradient(p[:, 0], p[:, 1], t)
        return -self.diffusion * np.einsum("ki,ki->k", g, normals) - reaction * self.value(p[:, 0], p[:, 1], t)


def run_manufactured(model, diffusion, dt, t_final, robin_reaction=-1.0, solver="iterative", eps_herm=5.0,
                     residuals=None, neumann_exact=True):
    """Advance the manufactured problem to ``t_final``; returns the grid field.

    Outer Dirichlet sides take the exact value, Neumann sides the exact flux
    (or zero flux when ``neumann_exact`` is false).  When ``residuals`` is a
    list, one :class:`StepReport` per step is appended.
    """
    sol = ManufacturedSolution(diffusion)
    system = AfmSystem(
        model, diffusion, dt, source=sol.source, boundary_value=sol.value,
        boundary_gradient=sol.gradient if neumann_exact else None,
        eps_herm=eps_herm, solver=solver,
    )
    pts = model.grid.points()
    c = sol.value(pts[:, 0], pts[:, 1], 0.0)
    recs = model.records
    bp = np.array([r.boundary_point for r in recs]).reshape(-1, 2)
    bn = np.array([r.inward_normal for r in recs]).reshape(-1, 2)
    kappa = np.full(len(recs), float(robin_reaction))
    nsteps = int(round(t_final / dt))
    if abs(nsteps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigError(f"final time {t_final} is not a whole number of steps of {dt}")
    for n in range(nsteps):
        t1 = (n + 1) * dt
        system.set_boundary(kappa, sol.robin_data(bp, bn, kappa, t1))
        if residuals is None:
            c = system.step(c, n * dt)
        else:
            c, rep = system.step(c, n * dt, report=True)
            residuals.append(rep)
    return c, system


def forcing_distance_study(p_values, axis="x", n=64, dt=0.0025, diffusion=0.2, t_final=0.5, n_d=50,
                           n_s=400, eps_geom=0.9, eps_herm=5.0, solver="fast", center=(0.5, 0.5),
                           r=0.0995, m=0.2, bc="dirichlet-x,neumann-y"):
    """Manufactured-solution error against the minimum forcing-to-boundary distance.

    The rounded square is squeezed along ``axis`` by ``p``.  A row is flagged
    when its forcing-point set differs from that of the first ``p``.
    """
    from .geometry import Superquadric, shape_platelet
    from .grid import Grid, OuterBC, classify

    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    grid = Grid(n, bc=OuterBC.parse(bc))
    sol = ManufacturedSolution(diffusion)
    rows = []
    base_set = None
    for p in p_values:
        px, py = (p, 1.0) if axis == "x" else (1.0, p)
        shape = Superquadric(tuple(center), r, m, px, py)
        geom = shape_platelet(shape, n_d, n_s, eps_geom, name="SQ", analytic=True)
        model = classify(grid, [geom])
        c, _ = run_manufactured(model, diffusion, dt, t_final, solver=solver, eps_herm=eps_herm)
        pts = grid.points()
        exact = sol.value(pts[:, 0], pts[:, 1], t_final)
        fluid = model.fluid_mask
        err = c[fluid] - exact[fluid]
        fset = frozenset(model.forcing_indices.tolist())
        if base_set is None:
            base_set = fset
        rows.append({
            "p": float(p),
            "min_distance": float(min(rec.distance for rec in model.records)),
            "l2_error": float(np.sqrt(grid.h**2 * np.sum(err**2))),
            "linf_error": float(np.max(np.abs(err))),
            "n_forcing": len(fset),
            "forcing_set_changed": fset != base_set,
        })
    return rows
