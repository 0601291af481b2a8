"""Uniform Cartesian grid, point classification and forcing/boundary point pairing."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError
from .geometry import point_inside

BC_KINDS = ("periodic", "neumann", "dirichlet")


class PointKind(enum.IntEnum):
    FLUID = 0
    FORCING = 1
    SOLID = 2


@dataclass(frozen=True)
class OuterBC:
    left: str = "periodic"
    right: str = "periodic"
    bottom: str = "neumann"
    top: str = "neumann"

    def __post_init__(self):
        for side in ("left", "right", "bottom", "top"):
            kind = getattr(self, side)
            if kind not in BC_KINDS:
                raise GridError(f"unknown outer boundary condition {kind!r} on {side} side")
        if (self.left == "periodic") != (self.right == "periodic"):
            raise GridError("periodic boundary must be set on both left and right sides")
        if (self.bottom == "periodic") != (self.top == "periodic"):
            raise GridError("periodic boundary must be set on both bottom and top sides")

    @classmethod
    def parse(cls, text):
        """``"periodic-x,neumann-y"`` / ``"x=periodic,y=neumann"`` / four comma-separated kinds."""
        parts = [p.strip().lower() for p in text.replace(";", ",").split(",") if p.strip()]
        if len(parts) == 4 and all(p in BC_KINDS for p in parts):
            return cls(*parts)
        kinds = {}
        for p in parts:
            if p.endswith(("-x", "-y")):
                kinds[p[-1]] = p[:-2]
            elif p.startswith(("x=", "y=")):
                kinds[p[0]] = p[2:]
            else:
                raise GridError(f"cannot parse outer boundary specification {text!r}")
        try:
            return cls(kinds["x"], kinds["x"], kinds["y"], kinds["y"])
        except KeyError:
            raise GridError(f"outer boundary specification {text!r} must name both x and y") from None

    @property
    def x_kind(self):
        return self.left if self.left == self.right else None

    @property
    def y_kind(self):
        return self.bottom if self.bottom == self.top else None


@dataclass
class Grid:
    """Nodes ``(i h, j h)`` over ``[0, lx] x [0, ly]`` with ``n`` cells along x.

    A periodic direction stores ``cells`` nodes (the far edge is identified
    with the near one); other directions store ``cells + 1`` nodes.
    """

    n: int
    lx: float = 1.0
    ly: float = 1.0
    bc: OuterBC = field(default_factory=OuterBC)

    def __post_init__(self):
        if self.n < 2:
            raise GridError("grid needs at least 2 cells")
        self.h = self.lx / self.n
        cells_y = self.ly / self.h
        if abs(cells_y - round(cells_y)) > 1e-9:
            raise GridError("domain height is not a whole number of cells")
        self.cells_x = self.n
        self.cells_y = int(round(cells_y))
        self.nx = self.cells_x if self.bc.left == "periodic" else self.cells_x + 1
        self.ny = self.cells_y if self.bc.bottom == "periodic" else self.cells_y + 1
        self.x = self.h * np.arange(self.nx)
        self.y = self.h * np.arange(self.ny)

    @property
    def size(self):
        return self.nx * self.ny

    def index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def ij(self, k):
        k = np.asarray(k)
        return k % self.nx, k // self.nx

    def points(self):
        xx, yy = np.meshgrid(self.x, self.y)
        return np.stack([xx.ravel(), yy.ravel()], axis=-1)

    def neighbors(self, k):
        """Indices of the 4 axis neighbours of node ``k`` (missing ones omitted)."""
        i, j = self.ij(k)
        out = []
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ii, jj = i + di, j + dj
            if self.bc.left == "periodic":
                ii %= self.nx
            if self.bc.bottom == "periodic":
                jj %= self.ny
            if 0 <= ii < self.nx and 0 <= jj < self.ny:
                out.append(int(self.index(ii, jj)))
        return out

    def neighbor_table(self):
        """``(N_T, 4)`` neighbour indices, ``-1`` where a neighbour does not exist."""
        i, j = self.ij(np.arange(self.size))
        cols = []
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ii, jj = i + di, j + dj
            if self.bc.left == "periodic":
                ii = ii % self.nx
            if self.bc.bottom == "periodic":
                jj = jj % self.ny
            ok = (ii >= 0) & (ii < self.nx) & (jj >= 0) & (jj < self.ny)
            cols.append(np.where(ok, self.index(np.clip(ii, 0, self.nx - 1), np.clip(jj, 0, self.ny - 1)), -1))
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class ForcingRecord:
    grid_index: int
    platelet_id: int
    boundary_param: float
    boundary_point: tuple
    inward_normal: tuple  # unit normal at the boundary point, pointing into the fluid
    distance: float


@dataclass
class GridModel:
    grid: Grid
    labels: np.ndarray
    owner: np.ndarray  # platelet covering each node, -1 for fluid
    records: list
    platelets: list = field(default_factory=list, repr=False)

    @property
    def forcing_indices(self):
        return np.array([r.grid_index for r in self.records], dtype=int)

    @property
    def fluid_mask(self):
        return self.labels == PointKind.FLUID

    def counts(self):
        return {kind.name.lower(): int(np.count_nonzero(self.labels == kind)) for kind in PointKind}

    def records_for(self, platelet_id):
        return [r for r in self.records if r.platelet_id == platelet_id]


def _boundary_points(geom, targets, n_scan, tol=1e-12, max_bisect=200):
    """Boundary parameters whose normal line passes through each target point.

    Scans ``f(lam) = cross(eta(lam), B - X(lam))`` on ``n_scan`` parameters,
    keeps sign changes on the side where ``B`` lies behind the normal, refines
    each bracket by bisection, and returns the nearest admissible foot point.
    """
    lam = 2.0 * np.pi * np.arange(n_scan + 1) / n_scan
    xs = geom.position(lam)
    ns = geom.normal_at(lam)

    def residual(lam_v, b):
        x = geom.position(lam_v)
        n = geom.normal_at(lam_v)
        d = b - x
        return n[:, 0] * d[:, 1] - n[:, 1] * d[:, 0], d, n

    d = targets[:, None, :] - xs[None, :, :]
    f = ns[None, :, 0] * d[..., 1] - ns[None, :, 1] * d[..., 0]
    behind = -np.einsum("fsi,si->fs", d, ns) > 0
    change = (np.sign(f[:, :-1]) != np.sign(f[:, 1:])) | (f[:, :-1] == 0)
    admissible = change & behind[:, :-1] & behind[:, 1:]
    fi, si = np.nonzero(admissible)
    if len(fi) == 0:
        return None, np.zeros(len(targets), dtype=bool)
    lo = lam[si].copy()
    hi = lam[si + 1].copy()
    b = targets[fi]
    flo = f[fi, si].copy()
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        fm, _, _ = residual(mid, b)
        done = np.abs(fm) <= tol
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left & ~done, mid, lo)
        flo = np.where(left & ~done, fm, flo)
        hi = np.where(~left & ~done, mid, hi)
        lo = np.where(done, mid, lo)
        hi = np.where(done, mid, hi)
        if np.all(hi - lo <= 1e-15) or np.all(done):
            break
    root = np.mod(0.5 * (lo + hi), 2.0 * np.pi)
    fr, dr, nr = residual(root, b)
    back = -np.einsum("ki,ki->k", dr, nr) > 0
    dist = np.linalg.norm(dr, axis=1)
    dist = np.where(back, dist, np.inf)
    best = np.full(len(targets), -1)
    best_key = [None] * len(targets)
    for k in range(len(fi)):
        key = (dist[k], root[k])
        t = fi[k]
        if np.isfinite(dist[k]) and (best_key[t] is None or key < best_key[t]):
            best_key[t] = key
            best[t] = k
    found = best >= 0
    out = np.zeros((len(targets), 3))
    ok = best[found]
    out[found, 0] = root[ok]
    out[found, 1:] = geom.position(root[ok])
    return out, found


def classify(grid, platelets, scan_factor=16):
    """Label every node and pair each forcing point with its boundary point."""
    pts = grid.points()
    owner = np.full(grid.size, -1, dtype=int)
    for pid, geom in enumerate(platelets):
        lo, hi = geom.bounding_box()
        if lo[0] < 0 or lo[1] < 0 or hi[0] > grid.lx or hi[1] > grid.ly:
            raise GridError(f"platelet {geom.name!r} intersects the outer boundary")
        box = np.nonzero(np.all((pts >= lo - grid.h) & (pts <= hi + grid.h), axis=1))[0]
        inside = box[point_inside(geom, pts[box])]
        clash = inside[owner[inside] >= 0]
        if len(clash):
            other = platelets[owner[clash[0]]].name
            raise GridError(f"platelets {other!r} and {geom.name!r} overlap at grid index {int(clash[0])}")
        owner[inside] = pid
    covered = owner >= 0
    nbr = grid.neighbor_table()
    nbr_fluid = np.zeros(grid.size, dtype=bool)
    for c in range(4):
        has = nbr[:, c] >= 0
        nbr_fluid[has] |= ~covered[nbr[has, c]]
    labels = np.full(grid.size, PointKind.FLUID, dtype=np.int8)
    labels[covered & nbr_fluid] = PointKind.FORCING
    labels[covered & ~nbr_fluid] = PointKind.SOLID

    records = []
    for pid, geom in enumerate(platelets):
        idx = np.nonzero((labels == PointKind.FORCING) & (owner == pid))[0]
        if len(idx) == 0:
            continue
        found_pts, found = _boundary_points(geom, pts[idx], scan_factor * geom.n_s)
        if found_pts is None or not np.all(found):
            bad = idx[0] if found_pts is None else idx[np.argmin(found)]
            raise GridError(
                f"forcing point at grid index {int(bad)} (platelet {geom.name!r}) has no admissible boundary point"
            )
        normals = geom.normal_at(found_pts[:, 0])
        for k, gi in enumerate(idx):
            xb = found_pts[k, 1:]
            records.append(ForcingRecord(
                grid_index=int(gi),
                platelet_id=pid,
                boundary_param=float(found_pts[k, 0]),
                boundary_point=(float(xb[0]), float(xb[1])),
                inward_normal=(float(normals[k, 0]), float(normals[k, 1])),
                distance=float(np.linalg.norm(pts[gi] - xb)),
            ))
    records.sort(key=lambda r: r.grid_index)
    return GridModel(grid=grid, labels=labels, owner=owner, records=records, platelets=list(platelets))
