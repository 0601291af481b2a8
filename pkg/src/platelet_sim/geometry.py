"""Parametric RBF model of closed curves, analytic test shapes and inside tests.

A platelet boundary is ``X(lam) = sum_k alpha_k phi(r(lam, lam_k))`` with the
chordal distance ``r = sqrt(2 - 2 cos(lam - lam_k))`` and a multiquadric
``phi``.  Shapes used by the experiments (circle, ellipse, superquadric,
perturbed ellipse) are also available in closed form, so that reference runs
can use exact sample sites and normals.
"""
from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import GeometryError
from .linalg import COND_LIMIT, _cond_estimate

TWO_PI = 2.0 * math.pi


def equispaced_nodes(n):
    return TWO_PI * np.arange(n) / n


def chordal_distance(a, b):
    """Euclidean distance between the unit-circle points at angles ``a`` and ``b``."""
    return np.sqrt(np.maximum(2.0 - 2.0 * np.cos(np.subtract(a, b)), 0.0))


def mq_param_matrix(eval_nodes, nodes, eps):
    """``phi(r(lam_j, lam_k))`` for the MQ kernel, shape ``(len(eval), len(nodes))``."""
    diff = np.subtract.outer(np.asarray(eval_nodes, float), np.asarray(nodes, float))
    return np.sqrt(1.0 + eps**2 * (2.0 - 2.0 * np.cos(diff)))


def mq_param_derivative(eval_nodes, nodes, eps):
    """``d/dlam phi(r(lam, lam_k))`` in the 0/0-free form."""
    diff = np.subtract.outer(np.asarray(eval_nodes, float), np.asarray(nodes, float))
    return eps**2 * np.sin(diff) / np.sqrt(1.0 + eps**2 * (2.0 - 2.0 * np.cos(diff)))


# ---------------------------------------------------------------------------
# Analytic shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def position(self, lam):
        lam = np.asarray(lam, float)
        return np.stack([self.center[0] + self.radius * np.cos(lam),
                         self.center[1] + self.radius * np.sin(lam)], axis=-1)

    def normal(self, lam):
        lam = np.asarray(lam, float)
        return np.stack([np.cos(lam), np.sin(lam)], axis=-1)

    def inside(self, x):
        x = np.atleast_2d(x)
        return np.hypot(x[:, 0] - self.center[0], x[:, 1] - self.center[1]) < self.radius


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("semi-axes must be positive")

    def position(self, lam):
        lam = np.asarray(lam, float)
        return np.stack([self.center[0] + self.a * np.cos(lam),
                         self.center[1] + self.b * np.sin(lam)], axis=-1)

    def normal(self, lam):
        lam = np.asarray(lam, float)
        n = np.stack([self.b * np.cos(lam), self.a * np.sin(lam)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def inside(self, x):
        x = np.atleast_2d(x)
        u = (x[:, 0] - self.center[0]) / self.a
        v = (x[:, 1] - self.center[1]) / self.b
        return u * u + v * v < 1.0


@dataclass(frozen=True)
class Superquadric:
    """``X = xc + r sign(cos)(px |cos|)^m``, ``Y = yc + r sign(sin)(py |sin|)^m``."""

    center: tuple
    r: float
    m: float
    px: float = 1.0
    py: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("radius must be positive")
        if not self.m > 0:
            raise ValueError("exponent m must be positive")
        if not (self.px > 0 and self.py > 0):
            raise ValueError("stretch factors must be positive")

    def position(self, lam):
        lam = np.asarray(lam, float)
        c, s = np.cos(lam), np.sin(lam)
        x = self.center[0] + self.r * np.sign(c) * (self.px * np.abs(c)) ** self.m
        y = self.center[1] + self.r * np.sign(s) * (self.py * np.abs(s)) ** self.m
        return np.stack([x, y], axis=-1)

    def normal(self, lam):
        # gradient of |u|^(2/m) + |v|^(2/m) with u = cos^m, v = sin^m (scaled)
        lam = np.asarray(lam, float)
        c, s = np.cos(lam), np.sin(lam)
        q = 2.0 / self.m - 1.0
        ax = self.r * self.px**self.m
        ay = self.r * self.py**self.m
        gx = np.sign(c) * np.abs(c) ** (self.m * q) / ax
        gy = np.sign(s) * np.abs(s) ** (self.m * q) / ay
        n = np.stack([gx, gy], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def inside(self, x):
        x = np.atleast_2d(x)
        u = np.abs(x[:, 0] - self.center[0]) / (self.r * self.px**self.m)
        v = np.abs(x[:, 1] - self.center[1]) / (self.r * self.py**self.m)
        p = 2.0 / self.m
        return u**p + v**p < 1.0


PERTURB_AMPLITUDE = 0.09
PERTURB_WIDTH = 0.1


@dataclass(frozen=True)
class PerturbedEllipse:
    """Ellipse whose offset from the center is scaled by ``1 + 0.09 exp(-(1-cos)^2/0.1)``."""

    center: tuple
    a: float
    b: float

    @staticmethod
    def scale(lam):
        lam = np.asarray(lam, float)
        return 1.0 + PERTURB_AMPLITUDE * np.exp(-((1.0 - np.cos(lam)) ** 2) / PERTURB_WIDTH)

    @staticmethod
    def _scale_derivative(lam):
        g = (1.0 - np.cos(lam)) ** 2 / PERTURB_WIDTH
        return PERTURB_AMPLITUDE * np.exp(-g) * (-2.0 * (1.0 - np.cos(lam)) * np.sin(lam) / PERTURB_WIDTH)

    def position(self, lam):
        lam = np.asarray(lam, float)
        s = self.scale(lam)
        return np.stack([self.center[0] + s * self.a * np.cos(lam),
                         self.center[1] + s * self.b * np.sin(lam)], axis=-1)

    def normal(self, lam):
        lam = np.asarray(lam, float)
        s, ds = self.scale(lam), self._scale_derivative(lam)
        tx = ds * self.a * np.cos(lam) - s * self.a * np.sin(lam)
        ty = ds * self.b * np.sin(lam) + s * self.b * np.cos(lam)
        n = np.stack([ty, -tx], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _check_nd(n_d):
    if n_d < 8:
        raise ValueError(f"need at least 8 data sites, got {n_d}")


def make_circle(center, radius, n_d):
    _check_nd(n_d)
    return Circle(tuple(center), float(radius)).position(equispaced_nodes(n_d))


def make_ellipse(center, a, b, n_d):
    _check_nd(n_d)
    return Ellipse(tuple(center), float(a), float(b)).position(equispaced_nodes(n_d))


def make_superquadric(center, r, m, px, py, n_d):
    _check_nd(n_d)
    return Superquadric(tuple(center), float(r), float(m), float(px), float(py)).position(
        equispaced_nodes(n_d)
    )


def make_perturbed_ellipse(center, a, b, n_d):
    _check_nd(n_d)
    return PerturbedEllipse(tuple(center), float(a), float(b)).position(equispaced_nodes(n_d))


# ---------------------------------------------------------------------------
# Parametric RBF geometry
# ---------------------------------------------------------------------------


@dataclass
class PlateletGeometry:
    """One closed curve: RBF model (or exact shape) plus its sample sites.

    ``exact`` holds an analytic shape when positions and normals are injected
    from closed form; the parameter-space matrices (``eval_matrix_B`` and the
    data-site factorization) are always the RBF ones.
    """

    name: str
    data_nodes: np.ndarray
    data_sites: np.ndarray
    sample_nodes: np.ndarray
    eps_geom: float
    coeffs_x: np.ndarray
    coeffs_y: np.ndarray
    orientation: float = 1.0
    exact: object = None
    sample_sites: np.ndarray = field(default=None, repr=False)
    sample_normals: np.ndarray = field(default=None, repr=False)
    eval_matrix_B: np.ndarray = field(default=None, repr=False)
    _lu: tuple = field(default=None, repr=False)
    _polyline: np.ndarray = field(default=None, repr=False)

    @property
    def n_d(self):
        return len(self.data_nodes)

    @property
    def n_s(self):
        return len(self.sample_nodes)

    def solve_coefficients(self, values):
        """Interpolation coefficients for data-site values (reuses the factorization)."""
        return scipy.linalg.lu_solve(self._lu, np.asarray(values, float))

    def cardinal_matrix(self, nodes, eps=None):
        """Map from data-site values to values at ``nodes`` (``B A^-1``).

        Solved from the left so the ill-conditioning of ``A`` cancels.
        """
        b = self.eval_matrix(np.atleast_1d(nodes), eps)
        return scipy.linalg.lu_solve(self._lu, b.T, trans=1).T

    def eval_matrix(self, nodes, eps=None):
        return mq_param_matrix(nodes, self.data_nodes, self.eps_geom if eps is None else eps)

    def evaluate_at(self, nodes, eps_eval=None):
        """Positions of the RBF interpolant at parameters ``nodes``."""
        b = self.eval_matrix(np.atleast_1d(nodes), eps_eval)
        return np.stack([b @ self.coeffs_x, b @ self.coeffs_y], axis=-1)

    def position(self, nodes):
        nodes = np.atleast_1d(np.asarray(nodes, float))
        if self.exact is not None:
            return self.exact.position(nodes)
        return self.evaluate_at(nodes)

    def tangent(self, nodes):
        nodes = np.atleast_1d(np.asarray(nodes, float))
        db = mq_param_derivative(nodes, self.data_nodes, self.eps_geom)
        return np.stack([db @ self.coeffs_x, db @ self.coeffs_y], axis=-1)

    def normal_at(self, nodes):
        """Unit normals pointing out of the platelet (into the fluid)."""
        nodes = np.atleast_1d(np.asarray(nodes, float))
        if self.exact is not None:
            return self.exact.normal(nodes)
        t = self.tangent(nodes)
        norm = np.linalg.norm(t, axis=-1)
        if np.any(norm <= 1e-14 * max(1.0, np.abs(self.data_sites).max())):
            raise GeometryError(f"platelet {self.name!r}: zero tangent (degenerate parameterisation)")
        n = self.orientation * np.stack([t[:, 1], -t[:, 0]], axis=-1)
        return n / norm[:, None]

    def polyline(self):
        if self._polyline is None:
            m = max(4 * self.n_s, 2048)
            self._polyline = self.position(equispaced_nodes(m))
        return self._polyline

    def bounding_box(self):
        p = self.polyline()
        return p.min(axis=0), p.max(axis=0)

    def contains(self, points):
        return point_inside(self, points)


def _signed_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def fit_platelet(data_nodes, data_sites, eps_geom, n_s, name="platelet", exact=None):
    """Fit the parametric MQ interpolant to the data sites and sample it."""
    data_nodes = np.asarray(data_nodes, float)
    data_sites = np.asarray(data_sites, float)
    if not eps_geom > 0:
        raise ValueError("geometric shape parameter must be positive")
    wrapped = np.mod(data_nodes, TWO_PI)
    if len(np.unique(np.round(wrapped, 14))) != len(wrapped):
        raise GeometryError(f"platelet {name!r}: data nodes are not distinct modulo 2*pi")
    a = mq_param_matrix(data_nodes, data_nodes, eps_geom)
    lu = scipy.linalg.lu_factor(a)
    cond = _cond_estimate(lu, np.linalg.norm(a, 1))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise GeometryError(
            f"platelet {name!r}: interpolation matrix is ill-conditioned (condition estimate {cond:.3e})"
        )
    coef = scipy.linalg.lu_solve(lu, data_sites)
    sample_nodes = equispaced_nodes(n_s)
    geom = PlateletGeometry(
        name=name,
        data_nodes=data_nodes,
        data_sites=data_sites,
        sample_nodes=sample_nodes,
        eps_geom=float(eps_geom),
        coeffs_x=coef[:, 0].copy(),
        coeffs_y=coef[:, 1].copy(),
        exact=exact,
        _lu=lu,
    )
    dense = geom.evaluate_at(equispaced_nodes(max(4 * n_s, 512)))
    geom.orientation = 1.0 if _signed_area(dense) > 0 else -1.0
    geom.eval_matrix_B = geom.eval_matrix(sample_nodes)
    geom.sample_sites = geom.position(sample_nodes)
    geom.sample_normals = geom.normal_at(sample_nodes)
    return geom


def shape_platelet(shape, n_d, n_s, eps_geom, name="platelet", analytic=False):
    """Build a platelet from an analytic shape.

    With ``analytic=True`` positions and normals come from the closed form; the
    RBF data-site model is still fitted for parameter-space operations.
    """
    nodes = equispaced_nodes(n_d)
    return fit_platelet(nodes, shape.position(nodes), eps_geom, n_s, name=name,
                        exact=shape if analytic else None)


# ---------------------------------------------------------------------------
# Inside test
# ---------------------------------------------------------------------------


def _even_odd(poly, pts):
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    crossings = np.count_nonzero(straddle & (px < xcross), axis=1)
    return crossings % 2 == 1


def _even_odd_chunked(poly, pts, chunk=512):
    return np.concatenate([_even_odd(poly, pts[s:s + chunk]) for s in range(0, len(pts), chunk)])


def _segment_distance(poly, pts, chunk=256):
    a = poly
    ab = np.roll(poly, -1, axis=0) - a
    ab2 = np.einsum("ki,ki->k", ab, ab)
    dmin = np.empty(len(pts))
    kmin = np.empty(len(pts), dtype=int)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pki,ki->pk", ap, ab) / ab2, 0.0, 1.0)
        dist = np.linalg.norm(ap - t[..., None] * ab[None], axis=-1)
        k = np.argmin(dist, axis=1)
        kmin[s:s + chunk] = k
        dmin[s:s + chunk] = dist[np.arange(len(p)), k]
    return dmin, kmin


def point_inside(geom, points):
    """Even-odd test against a dense polyline sampled from the curve.

    Points whose distance to the polyline is within the polyline's chord
    deviation are re-decided against the curve itself: the nearest curve
    point is found by a local search and the side is the sign of the normal
    component.  Points on the curve (to 1e-12) count as inside.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    poly = geom.polyline()
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    result = np.zeros(len(pts), dtype=bool)
    cand = np.all((pts >= lo - 1e-9) & (pts <= hi + 1e-9), axis=1)
    idx = np.nonzero(cand)[0]
    if len(idx) == 0:
        return result
    sub = pts[idx]
    inside = _even_odd_chunked(poly, sub)
    seg = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1).max()
    band = seg
    dist, k = _segment_distance(poly, sub)
    near = np.nonzero(dist < band)[0]
    if len(near):
        m = len(poly)
        lam0 = TWO_PI * k[near] / m
        dl = TWO_PI / m
        # golden-section style refinement of the nearest parameter on [lam0 - dl, lam0 + 2 dl]
        a = lam0 - dl
        b = lam0 + 2 * dl
        q = sub[near]
        gr = (math.sqrt(5.0) - 1.0) / 2.0
        for _ in range(60):
            c1 = b - gr * (b - a)
            c2 = a + gr * (b - a)
            f1 = np.linalg.norm(geom.position(c1) - q, axis=1)
            f2 = np.linalg.norm(geom.position(c2) - q, axis=1)
            left = f1 < f2
            b = np.where(left, c2, b)
            a = np.where(left, a, c1)
        lam = 0.5 * (a + b)
        foot = geom.position(lam)
        off = q - foot
        side = np.einsum("ki,ki->k", off, geom.normal_at(lam))
        on_curve = np.linalg.norm(off, axis=1) <= 1e-12
        inside[near] = (side < 0) | on_curve
    result[idx] = inside
    return result


# ---------------------------------------------------------------------------
# Platelet definition files
# ---------------------------------------------------------------------------

_KIND_KEYS = {
    "circle": {"cx", "cy", "r"},
    "ellipse": {"cx", "cy", "a", "b"},
    "superquadric": {"cx", "cy", "r", "m"},
    "perturbed_ellipse": {"cx", "cy", "a", "b"},
}
_OPTIONAL = {"nd", "px", "py", "name", "kon", "koff", "ds"}


def shape_from_spec(spec):
    kind = spec["kind"]
    c = (float(spec["cx"]), float(spec["cy"]))
    if kind == "circle":
        return Circle(c, float(spec["r"]))
    if kind == "ellipse":
        return Ellipse(c, float(spec["a"]), float(spec["b"]))
    if kind == "superquadric":
        return Superquadric(c, float(spec["r"]), float(spec["m"]),
                            float(spec.get("px", 1.0)), float(spec.get("py", 1.0)))
    if kind == "perturbed_ellipse":
        return PerturbedEllipse(c, float(spec["a"]), float(spec["b"]))
    raise GeometryError(f"unknown platelet kind {kind!r}")


def parse_platelet_line(line):
    """Parse ``kind=circle cx=0.2 cy=0.4 r=0.0995 [nd=50] ...`` into a dict."""
    spec = {}
    for tok in shlex.split(line, comments=True):
        if "=" not in tok:
            raise GeometryError(f"malformed token {tok!r} (expected key=value)")
        k, v = tok.split("=", 1)
        spec[k.strip()] = v.strip()
    if not spec:
        return None
    kind = spec.get("kind")
    if kind not in _KIND_KEYS:
        raise GeometryError(f"unknown or missing platelet kind {kind!r}")
    missing = _KIND_KEYS[kind] - spec.keys()
    if missing:
        raise GeometryError(f"{kind}: missing keys {sorted(missing)}")
    unknown = spec.keys() - _KIND_KEYS[kind] - _OPTIONAL - {"kind"}
    if unknown:
        raise GeometryError(f"{kind}: unknown keys {sorted(unknown)}")
    return spec


def read_platelet_file(path):
    specs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            spec = parse_platelet_line(line)
            if spec is not None:
                specs.append(spec)
    return specs
