"""Linear-algebra substrate: dense solves, QR least squares, MIC(0), CG, BiCGSTAB.

Sparse storage is ``scipy.sparse.csr_matrix`` throughout.  The Krylov solvers
and the modified incomplete Cholesky preconditioner are written out here so the
reduction order (and therefore every iterate) is fixed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

COND_LIMIT = 1e14


@dataclass
class SolveInfo:
    iterations: int
    residual: float  # final relative residual


def _cond_estimate(lu_piv, anorm):
    lu, _ = lu_piv
    # LAPACK gecon on the existing factorization; returns reciprocal condition
    gecon = scipy.linalg.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    return np.inf if rcond == 0 else 1.0 / rcond


def _lu_factor_quiet(a):
    # singularity is reported through the condition estimate instead
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        return scipy.linalg.lu_factor(a, check_finite=True)


def dense_solve(matrix, rhs, cond_limit=COND_LIMIT, what="dense system"):
    """Solve a small dense system with partial pivoting and a condition guard."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise ValueError("right-hand side has inconsistent length")
    lu_piv = _lu_factor_quiet(a)
    cond = _cond_estimate(lu_piv, np.linalg.norm(a, 1))
    if not np.isfinite(cond) or cond > cond_limit:
        raise SolverError(f"{what} is singular to working precision (condition estimate {cond:.3e})")
    return scipy.linalg.lu_solve(lu_piv, b)


class DenseLU:
    """Reusable LU factorization of a square matrix with a condition guard."""

    def __init__(self, matrix, cond_limit=COND_LIMIT, what="dense system"):
        a = np.asarray(matrix, dtype=float)
        self.shape = a.shape
        self._lu = _lu_factor_quiet(a)
        self.condition = _cond_estimate(self._lu, np.linalg.norm(a, 1))
        if not np.isfinite(self.condition) or self.condition > cond_limit:
            raise SolverError(
                f"{what} is singular to working precision (condition estimate {self.condition:.3e})"
            )

    def solve(self, rhs):
        return scipy.linalg.lu_solve(self._lu, rhs)


class DenseQR:
    """Economic QR of a tall matrix; ``lstsq`` minimises ``||A g - c||_2``."""

    def __init__(self, matrix, rank_tol=1.0 / COND_LIMIT):
        a = np.asarray(matrix, dtype=float)
        m, n = a.shape
        if m < n:
            raise ValueError(f"least-squares matrix must be tall, got {a.shape}")
        self.q, self.r = scipy.linalg.qr(a, mode="economic")
        d = np.abs(np.diag(self.r))
        if d.min() <= rank_tol * d.max():
            raise SolverError(f"least-squares matrix is rank deficient (|R_min/R_max| = {d.min() / d.max():.3e})")

    def lstsq(self, rhs):
        return scipy.linalg.solve_triangular(self.r, self.q.T @ rhs)

    def pseudo_inverse(self):
        """Explicit ``R^{-1} Q^T`` for repeated application."""
        return scipy.linalg.solve_triangular(self.r, self.q.T)

    def left_apply(self, rows):
        """``rows @ R^{-1} Q^T`` by a transposed triangular solve.

        For ill-conditioned ``A`` whose evaluation rows lie near the row space
        of ``A`` this is far more accurate than forming ``R^{-1} Q^T`` first.
        """
        rows = np.atleast_2d(np.asarray(rows, float))
        return scipy.linalg.solve_triangular(self.r, rows.T, trans="T").T @ self.q.T


def dense_qr(matrix):
    return DenseQR(matrix)


# ---------------------------------------------------------------------------
# Modified incomplete Cholesky, zero fill
# ---------------------------------------------------------------------------


class MIC0:
    """Zero-fill modified incomplete factorization ``M = L U`` of a symmetric matrix.

    Fill entries outside the sparsity pattern of ``A`` are dropped and their
    contribution is added to the diagonal, so ``M @ ones == A @ ones``.  For a
    symmetric matrix ``U = diag(U) L^T``, i.e. this is the ``L D L^T`` form of
    MIC(0).
    """

    def __init__(self, a):
        a = sp.csr_matrix(a, dtype=float)
        a.sum_duplicates()
        a.sort_indices()
        n = a.shape[0]
        rows = []
        for i in range(n):
            lo, hi = a.indptr[i], a.indptr[i + 1]
            rows.append(dict(zip(a.indices[lo:hi].tolist(), a.data[lo:hi].tolist())))
        upper = [None] * n
        pivots = np.empty(n)
        for i in range(n):
            row = rows[i]
            if i not in row:
                raise SolverError(f"MIC(0): zero structural diagonal in row {i}")
            for k in sorted(c for c in row if c < i):
                lik = row[k] / pivots[k]
                row[k] = lik
                for j, ukj in upper[k].items():
                    if j in row:
                        row[j] -= lik * ukj
                    else:
                        row[i] -= lik * ukj
            piv = row[i]
            if not piv > 0:
                raise SolverError(f"MIC(0): non-positive pivot {piv:.3e} in row {i}")
            pivots[i] = piv
            upper[i] = {j: v for j, v in row.items() if j > i}
        self.pivots = pivots
        li, lj, lv, ui, uj, uv = [], [], [], [], [], []
        for i, row in enumerate(rows):
            for j, v in row.items():
                if j < i:
                    li.append(i), lj.append(j), lv.append(v)
                elif j >= i:
                    ui.append(i), uj.append(j), uv.append(v)
        eye = np.arange(n)
        self.lower = sp.csr_matrix(
            (np.r_[lv, np.ones(n)], (np.r_[li, eye], np.r_[lj, eye])), shape=(n, n)
        )
        self.upper = sp.csr_matrix((uv, (ui, uj)), shape=(n, n))

    def apply(self, r):
        y = spla.spsolve_triangular(self.lower, r, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(self.upper, y, lower=False)

    def matrix(self):
        return (self.lower @ self.upper).tocsr()


def cg(a, b, tol=1e-11, max_iter=None, precond=None, x0=None):
    """Preconditioned conjugate gradients; ``precond`` is an object with ``apply``."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), SolveInfo(0, 0.0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    z = precond.apply(r) if precond is not None else r.copy()
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    for it in range(1, max_iter + 1):
        if res <= tol:
            return x, SolveInfo(it - 1, res)
        ap = a @ p
        pap = p @ ap
        if pap <= 0:
            raise SolverError("CG breakdown: matrix is not positive definite", res, it)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r) / bnorm
        z = precond.apply(r) if precond is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if res <= tol:
        return x, SolveInfo(max_iter, res)
    raise SolverError(f"CG did not converge in {max_iter} iterations (residual {res:.3e})", res, max_iter)


def bicgstab(op: Callable, b, tol=1e-9, max_iter=500, x0=None):
    """Unpreconditioned BiCGSTAB for a matrix-free operator ``op(x) -> A x``."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if n == 0:
        return np.zeros(0), SolveInfo(0, 0.0)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), SolveInfo(0, 0.0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - op(x) if x0 is not None else b.copy()
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    res = np.linalg.norm(r) / bnorm
    tiny = np.finfo(float).tiny
    for it in range(1, max_iter + 1):
        if res <= tol:
            return x, SolveInfo(it - 1, res)
        rho_new = r_hat @ r
        if abs(rho_new) < tiny * 1e30 * bnorm * bnorm:
            raise SolverError("BiCGSTAB breakdown (rho ~ 0)", res, it)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = op(p)
        rv = r_hat @ v
        if rv == 0:
            raise SolverError("BiCGSTAB breakdown (r_hat . v = 0)", res, it)
        alpha = rho / rv
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm <= tol:
            x += alpha * p
            res = np.linalg.norm(s) / bnorm
            return x, SolveInfo(it, res)
        t = op(s)
        tt = t @ t
        if tt == 0:
            raise SolverError("BiCGSTAB breakdown (t = 0)", res, it)
        omega = (t @ s) / tt
        x += alpha * p + omega * s
        r = s - omega * t
        res = np.linalg.norm(r) / bnorm
        if omega == 0:
            raise SolverError("BiCGSTAB stagnation (omega = 0)", res, it)
    if res <= tol:
        return x, SolveInfo(max_iter, res)
    raise SolverError(
        f"BiCGSTAB did not converge in {max_iter} iterations (residual {res:.3e})", res, max_iter
    )


# ---------------------------------------------------------------------------
# Transform solver for I - tau * Laplacian_h on a uniform grid
# ---------------------------------------------------------------------------


class TransformSolver:
    """Direct solver for ``(I - tau Lap_h) c = r`` by FFT / DCT-I / DST-I.

    Each direction must have the same condition on both sides: ``"periodic"``
    (``n`` nodes, FFT), ``"neumann"`` (``n`` nodes including both ends, ghost
    reflection, DCT-I) or ``"dirichlet"`` (``n`` nodes including both ends,
    end nodes carry identity rows and the interior is solved with DST-I).
    Arrays are indexed ``[j, i]`` (y first) in the flattened lexicographic order.
    """

    def __init__(self, nx, ny, h, tau, kind_x, kind_y):
        self.nx, self.ny = nx, ny
        self.kinds = (kind_x, kind_y)
        mu_x = self._symbols(nx, h, kind_x)
        mu_y = self._symbols(ny, h, kind_y)
        self._denom = 1.0 - tau * (mu_y[:, None] + mu_x[None, :])

    @staticmethod
    def _symbols(n, h, kind):
        if kind == "periodic":
            k = np.arange(n)
            return -(4.0 / h**2) * np.sin(np.pi * k / n) ** 2
        if kind == "neumann":
            k = np.arange(n)
            return -(4.0 / h**2) * np.sin(np.pi * k / (2 * (n - 1))) ** 2
        if kind == "dirichlet":
            k = np.arange(1, n - 1)
            return -(4.0 / h**2) * np.sin(np.pi * k / (2 * (n - 1))) ** 2
        raise ValueError(f"unsupported boundary kind {kind!r}")

    @staticmethod
    def _forward(a, axis, kind):
        if kind == "periodic":
            return scipy.fft.fft(a, axis=axis)
        if kind == "neumann":
            return scipy.fft.dct(a, type=1, axis=axis)
        return scipy.fft.dst(a, type=1, axis=axis)

    @staticmethod
    def _inverse(a, axis, kind):
        if kind == "periodic":
            return scipy.fft.ifft(a, axis=axis)
        if kind == "neumann":
            return scipy.fft.idct(a, type=1, axis=axis)
        return scipy.fft.idst(a, type=1, axis=axis)

    def solve(self, r):
        kx, ky = self.kinds
        out = np.array(r, dtype=float).reshape(self.ny, self.nx)
        sy = slice(1, -1) if ky == "dirichlet" else slice(None)
        sx = slice(1, -1) if kx == "dirichlet" else slice(None)
        core = out[sy, sx]
        t = self._forward(core, 1, kx)
        t = self._forward(t, 0, ky)
        t = t / self._denom
        t = self._inverse(t, 0, ky)
        t = self._inverse(t, 1, kx)
        out[sy, sx] = np.real(t)
        return out.ravel()
