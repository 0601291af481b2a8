"""Command-line harness: ``platelet-sim <experiment> [options]``.

Configuration precedence (later wins): built-in defaults, per-experiment
defaults, ``--config FILE`` (``key = value`` lines, ``#`` comments), then
command-line flags (including repeated ``--set key=value``).

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 tolerance failure in ``--check`` mode.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys
import time

from . import __version__
from .checks import check_result
from .errors import ConfigError, PlateletSimError, SolverError
from .experiments import EXPERIMENTS, ExperimentConfig, TableRow, run_experiment

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
TABLE_COLUMNS = ("resolution", "n_samples", "dt", "l2_error", "linf_error", "order_l2", "order_linf")

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_FIELDS = {"grids": int, "ns": int, "p_values": float, "axes": str}
_FLOAT_FIELDS = {"dt_base", "t_final", "diffusion"}


def _convert(key, text):
    key = key.strip().replace("-", "_")
    if key not in _FIELDS:
        raise ConfigError(f"unknown configuration key {key!r}")
    text = text.strip()
    try:
        if key in _LIST_FIELDS:
            return key, [_LIST_FIELDS[key](t) for t in text.split(",") if t.strip()]
        if key in _FLOAT_FIELDS:
            return key, float(text)
        default = _FIELDS[key].default
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(text)
            return key, low in ("true", "1", "yes", "on")
        if isinstance(default, int):
            return key, int(text)
        if isinstance(default, float):
            return key, float(text)
        return key, text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for configuration key {key!r}") from None


def parse_config_text(text):
    """``key = value`` lines to a dict of typed values; unknown keys are listed in the error."""
    values, unknown = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        norm = key.strip().replace("-", "_")
        if norm not in _FIELDS:
            unknown.append(norm)
            continue
        k, v = _convert(norm, value)
        values[k] = v
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    return values


def build_parser():
    p = argparse.ArgumentParser(
        prog="platelet-sim",
        description="Surface/bulk reaction-diffusion around stationary platelets: convergence studies.",
        epilog=(
            "Platelet files (custom experiment) hold one platelet per line, e.g. "
            "'kind=circle cx=0.2 cy=0.4 r=0.0995 kon=0.2 koff=0.4'; kinds: circle, ellipse "
            "(a, b), superquadric (r, m, px, py), perturbed_ellipse (a, b); optional nd, name, ds."
        ),
    )
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--grids", help="comma-separated grid sizes, e.g. 32,64,128")
    p.add_argument("--ref", type=int, help="reference grid size")
    p.add_argument("--ns", help="comma-separated sample-site counts")
    p.add_argument("--dt-base", type=float, help="time step on the coarsest grid")
    p.add_argument("--tfinal", type=float, help="final time")
    p.add_argument("--solver", choices=("iterative", "direct", "fast"))
    p.add_argument("--platelets", help="platelet definition file (custom experiment)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--check", action="store_true", help="compare against frozen tables (exit 4 on failure)")
    p.add_argument("--plot", action="store_true", help="write an SVG error plot per table")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def resolve_config(args):
    values = {"experiment": args.experiment}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        values["experiment"] = args.experiment
    flags = {
        "grids": args.grids, "ref_grid": args.ref, "ns": args.ns, "dt_base": args.dt_base,
        "t_final": args.tfinal, "solver": args.solver, "platelets": args.platelets, "out": args.out,
    }
    for key, raw in flags.items():
        if raw is None:
            continue
        if isinstance(raw, str) and key in _LIST_FIELDS:
            values[key] = _convert(key, raw)[1]
        else:
            values[key] = raw
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = _convert(*item.split("=", 1))
        values[k] = v
    if args.check:
        values["check"] = True
    if args.plot:
        values["plot"] = True
    return ExperimentConfig(**values).resolved()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, rows, cfg, notes=(), elapsed=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
        fh.write(f"# platelet-sim {__version__}\n")
        for k, v in cfg.as_dict().items():
            fh.write(f"# config {k} = {v}\n")
        for note in notes:
            fh.write(f"# note {note}\n")
        if elapsed is not None:
            fh.write(f"# elapsed_seconds = {elapsed:.2f}\n")
        if rows and isinstance(rows[0], TableRow):
            cols = TABLE_COLUMNS
            data = [[getattr(r, c) for c in cols] for r in rows]
        else:
            cols = tuple(rows[0].keys()) if rows else ()
            data = [[r[c] for c in cols] for r in rows]
        w = csv.writer(fh)
        w.writerow(cols)
        for row in data:
            w.writerow([_fmt(v) for v in row])


def svg_plot(rows, title, x_key="resolution", y_keys=("l2_error", "linf_error")):
    """Minimal log-log line chart as an SVG string."""
    width, height, pad = 480, 360, 60
    get = (lambda r, k: getattr(r, k)) if rows and isinstance(rows[0], TableRow) else (lambda r, k: r[k])
    xs = [float(get(r, x_key)) for r in rows]
    series = {k: [float(get(r, k)) for r in rows] for k in y_keys}
    pos = [v for vals in series.values() for v in vals if v > 0]
    if not rows or not pos or min(xs) <= 0:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"></svg>\n'
    lx0, lx1 = math.log10(min(xs)), math.log10(max(xs))
    ly0, ly1 = math.log10(min(pos)), math.log10(max(pos))
    lx1 = lx1 if lx1 > lx0 else lx0 + 1
    ly1 = ly1 if ly1 > ly0 else ly0 + 1

    def px(x):
        return pad + (math.log10(x) - lx0) / (lx1 - lx0) * (width - 2 * pad)

    def py(y):
        return height - pad - (math.log10(y) - ly0) / (ly1 - ly0) * (height - 2 * pad)

    colors = ("#1f77b4", "#d62728", "#2ca02c")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" font-size="12">{x_key} (log)</text>',
        f'<text x="15" y="{height / 2}" font-size="12" transform="rotate(-90 15 {height / 2})" '
        f'text-anchor="middle">error (log)</text>',
    ]
    for x in xs:
        parts.append(f'<text x="{px(x):.1f}" y="{height - pad + 16}" text-anchor="middle" font-size="10">{x:g}</text>')
    for k, (name, vals) in enumerate(series.items()):
        pts = [(px(x), py(y)) for x, y in zip(xs, vals) if y > 0]
        col = colors[k % len(colors)]
        if len(pts) > 1:
            d = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            parts.append(f'<polyline points="{d}" fill="none" stroke="{col}" stroke-width="2"/>')
        for a, b in pts:
            parts.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="3" fill="{col}"/>')
        parts.append(f'<text x="{width - pad - 100}" y="{pad + 16 * k}" font-size="11" fill="{col}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit(result, elapsed=None):
    cfg = result.config
    os.makedirs(cfg.out, exist_ok=True)
    paths = []
    for name, rows in result.tables.items():
        path = os.path.join(cfg.out, f"{result.experiment}_{name}.csv")
        write_csv(path, rows, cfg, result.notes, elapsed)
        paths.append(path)
        if cfg.plot and rows and (isinstance(rows[0], TableRow) or "l2_error" in rows[0]):
            x_key = "resolution" if isinstance(rows[0], TableRow) else "min_distance"
            svg = os.path.join(cfg.out, f"{result.experiment}_{name}.svg")
            with open(svg, "w", encoding="utf-8") as fh:
                fh.write(svg_plot(rows, f"{result.experiment}: {name}", x_key=x_key))
            paths.append(svg)
    return paths


def _print_tables(result, stream):
    for name, rows in result.tables.items():
        if not rows or not isinstance(rows[0], TableRow):
            if rows and "l2_error" in rows[0]:
                print(f"[{name}]", file=stream)
                for r in rows:
                    print("  " + "  ".join(f"{k}={_fmt(v)}" for k, v in r.items()), file=stream)
            continue
        print(f"[{name}]", file=stream)
        print("  resolution  n_s   dt          l2_error     order   linf_error   order", file=stream)
        for r in rows:
            o2 = "" if r.order_l2 is None else f"{r.order_l2:.2f}"
            oi = "" if r.order_linf is None else f"{r.order_linf:.2f}"
            print(f"  {r.resolution:<10d}  {r.n_samples:<4d}  {r.dt:<10.6g}  {r.l2_error:.4e}  {o2:>5}   "
                  f"{r.linf_error:.4e}  {oi:>5}", file=stream)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        result = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PlateletSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    elapsed = time.perf_counter() - t0
    paths = emit(result, elapsed)
    _print_tables(result, sys.stdout)
    for p in paths:
        print(f"wrote {p}")
    if cfg.check:
        verdicts = check_result(result)
        failed = 0
        for name, ok, detail in verdicts:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
            failed += not ok
        if failed:
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
