"""Experiment definitions, refinement protocols and error norms.

Every study here is deterministic: no random numbers enter any pipeline.
"""
from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coupling import CoupledProblem, sample_nodes_nested
from .errors import ConfigError
from .fluid_afm import ManufacturedSolution, forcing_distance_study, run_manufactured
from .geometry import Circle, Ellipse, PerturbedEllipse, read_platelet_file, shape_from_spec, shape_platelet
from .grid import Grid, OuterBC, classify
from .surface_pde import SurfaceChemistry, SurfaceModel, SurfaceState, SurfaceStepper, build_surface_operators

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "TableRow",
    "ExperimentResult",
    "error_norms",
    "restrict_grid",
    "observed_orders",
    "platelet_catalog",
    "coupled_definition",
    "run_experiment",
]

EXPERIMENTS = (
    "surface-converge",
    "afm-converge",
    "forcing-distance",
    "coupled-1",
    "coupled-2",
    "coupled-3",
    "custom",
)

# per-experiment defaults for fields left as None
_DEFAULTS = {
    "surface-converge": dict(dt_base=1e-4, t_final=2.0, diffusion=0.1),
    "afm-converge": dict(dt_base=0.005, t_final=3.0, diffusion=0.1),
    "forcing-distance": dict(dt_base=0.0025, t_final=0.5, diffusion=0.2, bc="dirichlet-x,neumann-y"),
    "coupled-1": dict(dt_base=0.005, t_final=3.0, diffusion=0.1),
    "coupled-2": dict(dt_base=0.005, t_final=3.0, diffusion=0.1),
    "coupled-3": dict(dt_base=0.005, t_final=3.0, diffusion=0.1),
    "custom": dict(dt_base=0.005, t_final=1.0, diffusion=0.1),
}


@dataclass
class ExperimentConfig:
    experiment: str = "custom"
    grids: list = field(default_factory=lambda: [32, 64, 128])
    ref_grid: int = 256
    n_d: int = 50
    ns: list = field(default_factory=lambda: [50, 100, 200])
    ref_ns: int = 400
    dt_base: float = None
    t_final: float = None
    diffusion: float = None
    surface_diffusion: float = 1.0
    eps_geom: float = 0.9
    eps_fd: float = 35.0
    eps_herm: float = 5.0
    eval_factor: float = 0.99
    stencil_size: int = 3
    bc: str = "periodic-x,neumann-y"
    solver: str = "fast"
    inner_tol: float = 1e-11
    outer_tol: float = 1e-9
    max_iter: int = 500
    surface_radius: float = 1.0
    p_values: list = field(default_factory=lambda: [1.1, 1.05, 1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7])
    axes: list = field(default_factory=lambda: ["x", "y"])
    model: str = "model1"
    printed_unbinding_sign: bool = False
    c_tot: float = 1.0
    platelets: str = ""
    out: str = "results"
    plot: bool = False
    check: bool = False

    def resolved(self):
        """Copy with per-experiment defaults filled in and values validated."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        cfg = dataclasses.replace(self)
        base = _DEFAULTS[self.experiment]
        for key, value in base.items():
            if key == "bc":
                if self.bc == ExperimentConfig.bc:
                    cfg.bc = value
            elif getattr(cfg, key) is None:
                setattr(cfg, key, value)
        if cfg.solver not in ("iterative", "direct", "fast"):
            raise ConfigError(f"unknown solver {cfg.solver!r}")
        if cfg.model not in ("model1", "model2"):
            raise ConfigError(f"unknown surface model {cfg.model!r}")
        if any(int(n) < 4 for n in cfg.grids):
            raise ConfigError("grid sizes must be at least 4")
        if cfg.dt_base <= 0 or cfg.t_final <= 0:
            raise ConfigError("dt_base and t_final must be positive")
        try:
            OuterBC.parse(cfg.bc)
        except Exception as exc:
            raise ConfigError(str(exc)) from None
        if cfg.experiment == "custom" and not cfg.platelets:
            raise ConfigError("custom experiment needs a platelet file (platelets = FILE)")
        if cfg.experiment == "afm-converge" or cfg.experiment.startswith("coupled-"):
            bad = [n for n in cfg.grids if n >= cfg.ref_grid or cfg.ref_grid % n]
            if bad:
                raise ConfigError(f"grids {bad} are not nested in the reference grid {cfg.ref_grid}")
            if cfg.experiment.startswith("coupled-"):
                bad = [n for n in cfg.ns if cfg.ref_ns % n]
                if bad:
                    raise ConfigError(f"sample counts {bad} are not nested in the reference count {cfg.ref_ns}")
            for n in list(cfg.grids) + [cfg.ref_grid]:
                dt = cfg.dt_base * cfg.grids[0] / n
                steps = cfg.t_final / dt
                if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                    raise ConfigError(f"final time {cfg.t_final} is not a whole number of steps on grid {n}")
        return cfg

    def as_dict(self):
        return dataclasses.asdict(self)


def _threads():
    raw = os.environ.get("PLATELET_SIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PLATELET_SIM_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn, items):
    """Ordered map, optionally over worker threads."""
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Norms and refinement bookkeeping
# ---------------------------------------------------------------------------


def error_norms(computed, reference, mask=None, h=None):
    """``(l2, linf)`` of ``computed - reference``.

    With ``h`` given (grid fields) ``l2 = sqrt(h^2 sum e^2)`` over ``mask``;
    otherwise (surface fields) ``l2`` is the RMS error.
    """
    a = np.asarray(computed, float)
    b = np.asarray(reference, float)
    if a.shape != b.shape:
        raise ValueError(f"fields are not at coincident points: shapes {a.shape} and {b.shape}")
    e = a - b
    if mask is not None:
        e = e[np.asarray(mask, bool)]
    if e.size == 0:
        return 0.0, 0.0
    linf = float(np.max(np.abs(e)))
    if h is None:
        return float(np.sqrt(np.mean(e**2))), linf
    return float(np.sqrt(h**2 * np.sum(e**2))), linf


def restrict_grid(fine, fine_grid, coarse_grid):
    """Sample a fine-grid field at the nodes of a nested coarse grid."""
    if fine_grid.n % coarse_grid.n or fine_grid.bc != coarse_grid.bc:
        raise ValueError(f"grid {coarse_grid.n} is not nested in grid {fine_grid.n}")
    s = fine_grid.n // coarse_grid.n
    out = np.asarray(fine, float).reshape(fine_grid.ny, fine_grid.nx)[::s, ::s]
    if out.shape != (coarse_grid.ny, coarse_grid.nx):
        raise ValueError("grids are not nested")
    return out.ravel()


def observed_orders(errors):
    e = np.asarray(errors, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [None] + [float(np.log2(e[i] / e[i + 1])) for i in range(len(e) - 1)]


@dataclass
class TableRow:
    resolution: int
    n_samples: int
    dt: float
    l2_error: float
    linf_error: float
    order_l2: float = None
    order_linf: float = None


@dataclass
class ExperimentResult:
    experiment: str
    config: ExperimentConfig
    tables: dict  # name -> list[TableRow] or list[dict]
    notes: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


def _finish_table(rows):
    for key, okey in (("l2_error", "order_l2"), ("linf_error", "order_linf")):
        orders = observed_orders([getattr(r, key) for r in rows])
        for r, o in zip(rows, orders):
            setattr(r, okey, o)
    return rows


# ---------------------------------------------------------------------------
# Platelets and coupled problem definitions
# ---------------------------------------------------------------------------


def platelet_catalog():
    return {
        "C1": Circle((0.2, 0.4), 0.0995),
        "E1": Ellipse((0.8, 0.4), 0.15, 0.1),
        "PE1": PerturbedEllipse((0.2, 0.4), 0.15, 0.1),
    }


def coupled_definition(number):
    """Platelet names, rates and surface model of the three coupled problems."""
    if number == 1:
        return [("C1", 0.2, 0.4), ("E1", 0.4, 0.2)], SurfaceModel.MODEL1
    if number in (2, 3):
        model = SurfaceModel.MODEL1 if number == 2 else SurfaceModel.MODEL2
        return [("PE1", 0.2, 0.4), ("E1", 0.4, 0.2)], model
    raise ConfigError(f"no coupled problem {number}")


def _chemistry(cfg, model, k_on, k_off):
    return SurfaceChemistry(
        model=model, k_on=k_on, k_off=k_off, c_tot=cfg.c_tot,
        d_s=cfg.surface_diffusion, d_s_b=cfg.surface_diffusion, d_s_u=cfg.surface_diffusion,
        printed_unbinding_sign=cfg.printed_unbinding_sign,
    )


def _sin_sin(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def _one_minus_cos(lam):
    return 1.0 - np.cos(lam)


def run_coupled(cfg, number, n, ns, dt, analytic):
    names, model = coupled_definition(number)
    shapes = platelet_catalog()
    geoms = [shape_platelet(shapes[nm], cfg.n_d, ns, cfg.eps_geom, nm, analytic=analytic) for nm, _, _ in names]
    gm = classify(Grid(n, bc=OuterBC.parse(cfg.bc)), geoms)
    chem = [_chemistry(cfg, model, kon, koff) for _, kon, koff in names]
    prob = CoupledProblem(gm, chem, cfg.diffusion, dt, eps_fd=cfg.eps_fd, eps_herm=cfg.eps_herm,
                          stencil_size=cfg.stencil_size, eval_factor=cfg.eval_factor, solver=cfg.solver)
    prob.fluid.inner_tol = cfg.inner_tol
    prob.fluid.outer_tol = cfg.outer_tol
    prob.fluid.max_iter = cfg.max_iter
    prob.initialize(_sin_sin, np.cos, _one_minus_cos if model is SurfaceModel.MODEL2 else None)
    prob.run(cfg.t_final)
    return {
        "model": gm,
        "c": prob.c.copy(),
        "bound": [prob.surface(i)[0].copy() for i in range(len(geoms))],
        "unbound": [np.array(prob.surface(i)[1], float) for i in range(len(geoms))],
        "n_forcing": prob.fluid.n_forcing,
    }


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------


def _surface_converge(cfg):
    rows = []
    r = cfg.surface_radius
    for ns in cfg.ns:
        geom = shape_platelet(Circle((0.0, 0.0), r), cfg.n_d, ns, cfg.eps_geom, "unit circle")
        ops = build_surface_operators(geom, cfg.stencil_size, cfg.eps_fd)
        lam = geom.sample_nodes
        chem = SurfaceChemistry(d_s=cfg.surface_diffusion)
        state = SurfaceState.initial(chem, np.cos(lam) + np.sin(lam))
        stepper = SurfaceStepper(ops.laplacian, cfg.dt_base)
        nsteps = int(round(cfg.t_final / cfg.dt_base))
        zero = np.zeros(ns)
        stepper.bootstrap(state, zero)
        for _ in range(1, nsteps):
            stepper.step(state, zero, zero)
        exact = np.exp(-cfg.surface_diffusion * cfg.t_final / r**2) * (np.cos(lam) + np.sin(lam))
        l2, linf = error_norms(state.c_bound, exact)
        rows.append(TableRow(ns, ns, cfg.dt_base, l2, linf))
    return {"surface": _finish_table(rows)}


def _refinement_schedule(cfg):
    """(grid, n_s, dt) per level, fine reference last."""
    levels = []
    for k, n in enumerate(cfg.grids):
        ns = cfg.ns[k] if k < len(cfg.ns) else cfg.ns[-1]
        levels.append((int(n), int(ns), cfg.dt_base * cfg.grids[0] / n))
    levels.append((cfg.ref_grid, cfg.ref_ns, cfg.dt_base * cfg.grids[0] / cfg.ref_grid))
    return levels


def _afm_converge(cfg):
    platelets = platelet_catalog()
    levels = _refinement_schedule(cfg)

    def run(level):
        n, ns, dt = level
        geoms = [shape_platelet(platelets[nm], cfg.n_d, ns, cfg.eps_geom, nm) for nm in ("C1", "E1")]
        gm = classify(Grid(n, bc=OuterBC.parse(cfg.bc)), geoms)
        c, _ = run_manufactured(gm, cfg.diffusion, dt, cfg.t_final, solver=cfg.solver, eps_herm=cfg.eps_herm)
        return gm, c

    out = _map(run, levels)
    ref_model, ref_c = out[-1]
    sol = ManufacturedSolution(cfg.diffusion)
    rows, exact_rows = [], []
    for (n, ns, dt), (gm, c) in zip(levels[:-1], out[:-1]):
        ref = restrict_grid(ref_c, ref_model.grid, gm.grid)
        rows.append(TableRow(n, ns, dt, *error_norms(c, ref, gm.fluid_mask, gm.grid.h)))
    for (n, ns, dt), (gm, c) in zip(levels, out):
        pts = gm.grid.points()
        ex = sol.value(pts[:, 0], pts[:, 1], cfg.t_final)
        exact_rows.append(TableRow(n, ns, dt, *error_norms(c, ex, gm.fluid_mask, gm.grid.h)))
    return {"fluid": _finish_table(rows), "fluid_vs_exact": _finish_table(exact_rows)}


def _coupled(cfg, number):
    levels = _refinement_schedule(cfg)
    flags = [False] * (len(levels) - 1) + [True]
    out = _map(lambda a: run_coupled(cfg, number, *a[0], analytic=a[1]), list(zip(levels, flags)))
    ref = out[-1]
    fluid, bound, unbound = [], [], []
    for (n, ns, dt), run in zip(levels[:-1], out[:-1]):
        gm = run["model"]
        fluid.append(TableRow(n, ns, dt, *error_norms(
            run["c"], restrict_grid(ref["c"], ref["model"].grid, gm.grid), gm.fluid_mask, gm.grid.h)))
        idx = sample_nodes_nested(ns, cfg.ref_ns)
        cb = np.concatenate(run["bound"])
        cb_ref = np.concatenate([r[idx] for r in ref["bound"]])
        bound.append(TableRow(n, ns, dt, *error_norms(cb, cb_ref)))
        cu = np.concatenate(run["unbound"])
        cu_ref = np.concatenate([r[idx] for r in ref["unbound"]])
        unbound.append(TableRow(n, ns, dt, *error_norms(cu, cu_ref)))
    tables = {"fluid": _finish_table(fluid)}
    if number == 3:
        tables["surface_bound"] = _finish_table(bound)
        tables["surface_unbound"] = _finish_table(unbound)
    else:
        tables["surface"] = _finish_table(bound)
    return tables


def _forcing_distance(cfg):
    tables = {}
    for axis in cfg.axes:
        tables[f"distance_{axis}"] = forcing_distance_study(
            cfg.p_values, axis=axis, n=cfg.grids[0], dt=cfg.dt_base, diffusion=cfg.diffusion,
            t_final=cfg.t_final, n_d=cfg.n_d, n_s=cfg.ref_ns, eps_geom=cfg.eps_geom,
            eps_herm=cfg.eps_herm, solver=cfg.solver, bc=cfg.bc,
        )
    return tables


def _custom(cfg):
    specs = read_platelet_file(cfg.platelets)
    model = SurfaceModel(cfg.model)
    geoms, chem = [], []
    for k, spec in enumerate(specs):
        name = spec.get("name", f"P{k + 1}")
        geoms.append(shape_platelet(shape_from_spec(spec), int(spec.get("nd", cfg.n_d)), cfg.ns[0],
                                    cfg.eps_geom, name))
        ds = float(spec.get("ds", cfg.surface_diffusion))
        chem.append(SurfaceChemistry(
            model=model, k_on=float(spec.get("kon", 0.0)), k_off=float(spec.get("koff", 0.0)),
            c_tot=cfg.c_tot, d_s=ds, d_s_b=ds, d_s_u=ds, printed_unbinding_sign=cfg.printed_unbinding_sign,
        ))
    gm = classify(Grid(cfg.grids[0], bc=OuterBC.parse(cfg.bc)), geoms)
    prob = CoupledProblem(gm, chem, cfg.diffusion, cfg.dt_base, eps_fd=cfg.eps_fd, eps_herm=cfg.eps_herm,
                          stencil_size=cfg.stencil_size, eval_factor=cfg.eval_factor, solver=cfg.solver)
    prob.initialize(_sin_sin, np.cos, _one_minus_cos if model is SurfaceModel.MODEL2 else None)
    prob.run(cfg.t_final)
    surface = []
    for pid, geom in enumerate(geoms):
        cb, cu = prob.surface(pid)
        for k, lam in enumerate(geom.sample_nodes):
            surface.append({
                "platelet": geom.name, "lambda": float(lam),
                "x": float(geom.sample_sites[k, 0]), "y": float(geom.sample_sites[k, 1]),
                "c_bound": float(cb[k]), "c_unbound": float(cu[k]),
            })
    pts = gm.grid.points()
    fluid = [{"x": float(p[0]), "y": float(p[1]), "label": int(lab), "c": float(v)}
             for p, lab, v in zip(pts, gm.labels, prob.c)]
    return {"surface_state": surface, "fluid_state": fluid}


def run_experiment(config):
    cfg = config.resolved()
    notes = []
    if cfg.experiment == "surface-converge":
        tables = _surface_converge(cfg)
    elif cfg.experiment == "afm-converge":
        tables = _afm_converge(cfg)
    elif cfg.experiment == "forcing-distance":
        tables = _forcing_distance(cfg)
    elif cfg.experiment.startswith("coupled-"):
        tables = _coupled(cfg, int(cfg.experiment[-1]))
        notes.append("assumption: zero bulk source; outer boundary " + cfg.bc + "; C_tot = " + str(cfg.c_tot))
    else:
        tables = _custom(cfg)
    return ExperimentResult(cfg.experiment, cfg, tables, notes)
