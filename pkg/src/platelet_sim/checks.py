"""Frozen reference tables and tolerance checks used by ``--check``.

Reference errors are the published refinement tables; the verdict for the
self-convergence studies keys on observed orders only, since raw grid-error
magnitudes depend on the norm convention.
"""
from __future__ import annotations

import numpy as np

GOLDEN = {
    "surface-converge": {
        "surface": {"l2_error": [2.0591e-03, 5.0705e-04, 1.2152e-04], "order_l2": [2.02, 2.06]},
    },
    "afm-converge": {
        "fluid": {"l2_error": [9.0012e-07, 2.2716e-07, 5.2988e-08], "order_l2": [1.99, 2.10],
                  "linf_error": [3.3407e-06, 8.8616e-07, 2.0742e-07], "order_linf": [1.92, 2.10]},
    },
    "coupled-1": {
        "fluid": {"l2_error": [1.2841e-03, 3.2477e-04, 7.5756e-05], "order_l2": [1.98, 2.10]},
        "surface": {"l2_error": [1.5567e-03, 3.6238e-04, 8.3943e-05], "order_l2": [2.10, 2.11]},
    },
    "coupled-2": {
        "fluid": {"l2_error": [9.8668e-04, 2.5374e-04, 5.8373e-05], "order_l2": [1.96, 2.12]},
        "surface": {"l2_error": [1.1976e-03, 2.7351e-04, 6.1624e-05], "order_l2": [2.13, 2.15]},
    },
}
GOLDEN["coupled-3"] = {
    "fluid": GOLDEN["coupled-2"]["fluid"],
    "surface_bound": GOLDEN["coupled-2"]["surface"],
    "surface_unbound": GOLDEN["coupled-2"]["surface"],
}

ORDER_BAND = (1.7, 2.3)
SURFACE_ERROR_FACTOR = 0.5  # +-50 %
SURFACE_ORDER_TOL = 0.2
DISTANCE_RATIO_MAX = 1.5
IDENTICAL_TOL = 1e-10


def _orders(rows, key):
    return [getattr(r, key) for r in rows[1:]]


def _band(values, lo, hi):
    return all(v is not None and np.isfinite(v) and lo <= v <= hi for v in values)


def check_result(result):
    """List of ``(name, passed, detail)`` verdicts for one experiment result."""
    out = []
    exp = result.experiment
    tables = result.tables
    if exp == "surface-converge":
        rows = tables["surface"]
        gold = GOLDEN[exp]["surface"]
        errs = [r.l2_error for r in rows]
        ok = len(errs) == 3 and all(
            abs(e - g) <= SURFACE_ERROR_FACTOR * g for e, g in zip(errs, gold["l2_error"]))
        out.append(("surface errors within 50% of reference", ok, f"{errs}"))
        orders = _orders(rows, "order_l2")
        ok = len(orders) == 2 and all(
            o is not None and abs(o - g) <= SURFACE_ORDER_TOL for o, g in zip(orders, gold["order_l2"]))
        out.append(("surface orders within 0.2 of reference", ok, f"{orders}"))
    elif exp in ("afm-converge", "coupled-1", "coupled-2", "coupled-3"):
        names = ["fluid"] if exp == "afm-converge" else list(GOLDEN[exp])
        for name in names:
            rows = tables[name]
            for key in ("order_l2", "order_linf"):
                orders = _orders(rows, key)
                out.append((f"{name} {key} in [{ORDER_BAND[0]}, {ORDER_BAND[1]}]",
                            _band(orders, *ORDER_BAND), f"{orders}"))
        if exp == "coupled-3":
            b = np.array([r.l2_error for r in tables["surface_bound"]])
            u = np.array([r.l2_error for r in tables["surface_unbound"]])
            diff = float(np.max(np.abs(b - u)))
            out.append(("bound and unbound error tables identical", diff <= IDENTICAL_TOL, f"max diff {diff:.3e}"))
    elif exp == "forcing-distance":
        for name, rows in tables.items():
            errs = np.array([r["l2_error"] for r in rows])
            ratio = float(errs.max() / errs.min())
            out.append((f"{name} max/min error ratio <= {DISTANCE_RATIO_MAX}", ratio <= DISTANCE_RATIO_MAX,
                        f"ratio {ratio:.3f}"))
    return out
