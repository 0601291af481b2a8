import csv
import io

import numpy as np
import pytest

from platelet_sim import cli
from platelet_sim.checks import check_result
from platelet_sim.errors import ConfigError
from platelet_sim.experiments import (
    ExperimentConfig,
    ExperimentResult,
    TableRow,
    error_norms,
    observed_orders,
    restrict_grid,
    run_experiment,
)
from platelet_sim.grid import Grid


# -- norms and orders ----------------------------------------------------------


def test_error_norms_trivial_cases():
    a = np.linspace(0, 1, 7)
    assert error_norms(a, a) == (0.0, 0.0)
    assert error_norms(np.ones(9), np.zeros(9)) == (1.0, 1.0)


def test_error_norms_hand_computed():
    # e = (3, -4, 0, 1): grid L2 = sqrt(0.25^2 * 26), Linf = 4; mask drops the third entry
    comp = np.array([3.0, -4.0, 0.0, 1.0])
    ref = np.zeros(4)
    l2, linf = error_norms(comp, ref, h=0.25)
    assert l2 == pytest.approx(0.25 * np.sqrt(26.0)) and linf == 4.0
    l2, linf = error_norms(comp, ref, mask=[True, False, True, True], h=0.25)
    assert l2 == pytest.approx(0.25 * np.sqrt(10.0)) and linf == 3.0
    rms, _ = error_norms(comp, ref)
    assert rms == pytest.approx(np.sqrt(26.0 / 4))


def test_error_norms_reject_non_coincident():
    with pytest.raises(ValueError):
        error_norms(np.zeros(4), np.zeros(5))


def test_restrict_grid_and_orders():
    fine, coarse = Grid(16), Grid(8)
    p = fine.points()
    f = p[:, 0] + 10 * p[:, 1]
    q = coarse.points()
    assert np.allclose(restrict_grid(f, fine, coarse), q[:, 0] + 10 * q[:, 1])
    with pytest.raises(ValueError):
        restrict_grid(f, fine, Grid(6))
    o = observed_orders([4e-3, 1e-3, 2.5e-4])
    assert o[0] is None and np.allclose(o[1:], [2.0, 2.0])


# -- configuration -------------------------------------------------------------


def test_config_text_parsing():
    vals = cli.parse_config_text("""
        # a comment
        grids = 16, 32   # trailing comment
        dt-base = 0.01
        solver = direct
        check = yes
    """)
    assert vals == {"grids": [16, 32], "dt_base": 0.01, "solver": "direct", "check": True}


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigError, match="colour, speed"):
        cli.parse_config_text("colour = red\nspeed = 3\ngrids = 16\n")
    with pytest.raises(ConfigError):
        cli.parse_config_text("just words")
    with pytest.raises(ConfigError):
        cli.parse_config_text("stencil_size = three")


def test_defaults_match_documented_values():
    cfg = ExperimentConfig("coupled-1").resolved()
    assert (cfg.eps_geom, cfg.eps_fd, cfg.eps_herm, cfg.eval_factor) == (0.9, 35.0, 5.0, 0.99)
    assert cfg.grids == [32, 64, 128] and cfg.ref_grid == 256
    assert cfg.dt_base == 0.005 and cfg.t_final == 3.0


def test_flags_override_config_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("grids = 8,16\ntfinal_unused_key_is_not_allowed = 1\n")
    with pytest.raises(ConfigError):
        cli.resolve_config(cli.build_parser().parse_args(["afm-converge", "--config", str(f)]))
    f.write_text("grids = 8,16\nt_final = 2\nsolver = direct\n")
    args = cli.build_parser().parse_args(["afm-converge", "--config", str(f), "--grids", "16,32", "--set", "solver=fast"])
    cfg = cli.resolve_config(args)
    assert cfg.grids == [16, 32] and cfg.t_final == 2.0 and cfg.solver == "fast"


def test_invalid_config_values():
    with pytest.raises(ConfigError):
        ExperimentConfig("afm-converge", grids=[32, 48], ref_grid=256).resolved()
    with pytest.raises(ConfigError):
        ExperimentConfig("nope").resolved()


# -- outputs -------------------------------------------------------------------


def _fake_result(tmp_path):
    cfg = ExperimentConfig("surface-converge", out=str(tmp_path), plot=True).resolved()
    rows = [TableRow(50, 50, 1e-4, 2.0e-3, 3.0e-3), TableRow(100, 100, 1e-4, 5.0e-4, 7.5e-4)]
    rows[1].order_l2 = rows[1].order_linf = 2.0
    return ExperimentResult("surface-converge", cfg, {"surface": rows}, ["note one"])


def test_csv_header_and_columns(tmp_path):
    res = _fake_result(tmp_path)
    paths = cli.emit(res, elapsed=1.0)
    csv_path = [p for p in paths if p.endswith(".csv")][0]
    text = open(csv_path, encoding="utf-8").read()
    header = [ln for ln in text.splitlines() if ln.startswith("#")]
    assert header[0] == f"# schema_version: {cli.SCHEMA_VERSION}"
    assert "# config eps_fd = 35.0" in header
    assert "# note note one" in header
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    assert tuple(rows[0]) == cli.TABLE_COLUMNS
    assert rows[1][5] == "" and float(rows[2][5]) == 2.0
    svg = [p for p in paths if p.endswith(".svg")][0]
    content = open(svg, encoding="utf-8").read()
    assert content.startswith("<svg") and "polyline" in content


def test_check_verdicts(tmp_path):
    res = _fake_result(tmp_path)
    verdicts = check_result(res)
    assert all(not ok for _, ok, _ in verdicts)  # wrong length of table


def test_main_exit_codes(tmp_path, capsys):
    assert cli.main(["surface-converge", "--set", "bogus=1"]) == cli.EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err
    out = str(tmp_path)
    code = cli.main(["surface-converge", "--ns", "50,100,200", "--tfinal", "2", "--set", "eps_fd=0.01",
                     "--out", out, "--check"])
    assert code == cli.EXIT_OK
    code = cli.main(["surface-converge", "--ns", "50,100,200", "--tfinal", "2", "--out", out, "--check"])
    assert code == cli.EXIT_CHECK
    code = cli.main(["custom", "--grids", "16", "--tfinal", "0.02", "--out", out])
    assert code == cli.EXIT_CONFIG  # custom needs a platelet file


def test_solver_failure_exit_code(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("kind=circle cx=0.5 cy=0.5 r=0.02\n")  # too small for a Hermite stencil
    code = cli.main(["custom", "--platelets", str(f), "--grids", "32", "--tfinal", "0.02", "--out", str(tmp_path)])
    assert code == cli.EXIT_SOLVER


def test_custom_run_and_rerun_bit_identical(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("kind=circle cx=0.3 cy=0.5 r=0.1 kon=0.2 koff=0.4\nkind=ellipse cx=0.7 cy=0.5 a=0.15 b=0.1\n")
    cfg = ExperimentConfig("custom", grids=[32], t_final=0.05, platelets=str(f), out=str(tmp_path)).resolved()
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a.tables["fluid_state"] == b.tables["fluid_state"]
    assert a.tables["surface_state"] == b.tables["surface_state"]


def test_small_afm_study_bit_identical_with_threads(monkeypatch):
    cfg = ExperimentConfig("afm-converge", grids=[16, 32], ref_grid=64, t_final=0.05).resolved()
    monkeypatch.setenv("PLATELET_SIM_THREADS", "1")
    a = run_experiment(cfg)
    monkeypatch.setenv("PLATELET_SIM_THREADS", "3")
    b = run_experiment(cfg)
    for name in a.tables:
        assert [r.l2_error for r in a.tables[name]] == [r.l2_error for r in b.tables[name]]
