import io

import numpy as np
import pytest

from poincare_vi.harness import (ConfigError, RunConfig, build, cmd_convergence, cmd_run, cmd_symplecticity,
                                 cmd_table, csv_header, fit_slope, load_config, load_preset, make_config,
                                 parse_config_text, preset_names, read_csv, step_jacobians, symplectic_deviation,
                                 write_csv)
from poincare_vi.harness.cli import main
from poincare_vi.integrators.base import as_state

# cheap adaptive run shared by the CSV tests
SMALL = dict(problem="kepler", ecc=0.5, integrator="euler-b", monitor="power", g_min=0.01, g_max=4.0,
             h=0.05, t_end=2.0)


# --- config -----------------------------------------------------------------

def test_config_file_and_override(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nproblem = kepler\necc = 0.9  # trailing\nintegrator = htvi4\n"
                    "monitor = power\ng-min = 0.01\ng_max = 8\nh = 0.1\nt-end = 10\n")
    cfg = load_config(path)
    assert (cfg.integrator, cfg.monitor, cfg.g_min, cfg.g_max, cfg.t_end) == ("htvi4", "power", 0.01, 8.0, 10.0)
    assert cfg.bounds == (0.01, 8.0)
    over = load_config(path, h=0.05, monitor=None)
    assert over.h == 0.05 and over.monitor == "power"


def test_dt_bounds_map_to_g_bounds():
    cfg = make_config(monitor="power", dt_min=1e-3, dt_max=0.4, h=0.1)
    assert cfg.bounds == pytest.approx((0.01, 4.0))


def test_config_errors_are_exhaustive():
    with pytest.raises(ConfigError) as info:
        make_config(problem="kepler", ecc=1.2, integrator="euler-b-fixed", monitor="trunc", h=-1.0,
                    g_min=2.0, g_max=1.0)
    msg = str(info.value)
    for needle in ("ecc", "h must be positive", "takes no monitor", "positive tol", "g_min < g_max"):
        assert needle in msg
    assert len(info.value.problems) >= 5


@pytest.mark.parametrize("values", [
    dict(integrator="rk4"),
    dict(monitor="curvature"),
    dict(monitor="none", g_min=0.1, g_max=1.0),
    dict(monitor="power", g_min=0.1),
    dict(monitor="power", g_min=0.1, g_max=1.0, dt_min=0.1, dt_max=1.0),
    dict(monitor="power", tol=1e-5),
    dict(t_end=0.0),
    dict(problem="free", monitor="trunc", tol=1e-5),
    dict(unknown_key=3),
])
def test_invalid_configs_rejected(values):
    with pytest.raises(ConfigError):
        make_config(**values)


def test_parse_config_text_reports_every_bad_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("h = abc\nfoo = 1\nno equals sign\nt_end = 5\n")
    assert len(info.value.problems) == 3
    assert parse_config_text("fourth-root = yes\ntol = none") == {"fourth_root": True, "tol": None}


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


def test_presets_load_and_validate():
    assert preset_names() == ["e09", "e099"]
    rows = {name: load_preset(name) for name in preset_names()}
    assert [r.monitor for r in rows["e09"]] == ["power", "energy", "arclength", "none"]
    assert all(isinstance(r, RunConfig) and r.ref_steps for rs in rows.values() for r in rs)
    assert [r.integrator for r in rows["e099"]][-1] == "stormer-verlet"
    with pytest.raises(ConfigError):
        load_preset("e05")


# --- CSV --------------------------------------------------------------------

def test_csv_header_exact():
    assert ",".join(csv_header(2)) == "step,tau,t,h_fictive,h_physical,q1,q2,p1,p2,pt,energy_error"


def test_empty_trajectory_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv(None, path, n=2)
    assert path.read_text() == "step,tau,t,h_fictive,h_physical,q1,q2,p1,p2,pt,energy_error\n"
    with pytest.raises(ValueError):
        write_csv(None, path)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("csv")
    out = io.StringIO()
    summary, _ = cmd_run(make_config(**SMALL, csv=str(d / "a.csv")), out=out)
    cmd_run(make_config(**SMALL, csv=str(d / "b.csv")))
    return summary, d / "a.csv", d / "b.csv", out.getvalue()


def test_csv_rows_and_initial_row(small_run):
    summary, path, _, _ = small_run
    header, rows = read_csv(path)
    assert len(rows) == summary.steps + 1
    assert header == csv_header(2)
    step, tau, t, hf, hp = rows[0, :5]
    assert (step, tau, t, hf, hp, rows[0, -1]) == (0, 0, 0, 0, 0, 0)
    np.testing.assert_array_equal(rows[:, 0], np.arange(summary.steps + 1))
    assert rows[-1, 2] == pytest.approx(SMALL["t_end"], abs=1e-10)


def test_csv_seventeen_significant_digits(small_run):
    _, path, _, _ = small_run
    lines = path.read_text().splitlines()
    # e.g. "0.10000000000000001": 17 digits round-trip any double
    for cell in lines[5].split(",")[1:]:
        mantissa = cell.split("e")[0].lstrip("-").replace(".", "").lstrip("0")
        assert len(mantissa) <= 17
    _, rows = read_csv(path)
    again = [format(v, ".17g") for v in rows[4]]
    assert again[1:] == lines[5].split(",")[1:]


def test_csv_is_deterministic(small_run):
    _, a, b, _ = small_run
    assert a.read_bytes() == b.read_bytes()


def test_summary_consistent_with_csv(small_run):
    summary, path, _, printed = small_run
    _, rows = read_csv(path)
    assert summary.max_energy_error == rows[:, -1].max()
    assert summary.steps == len(rows) - 1
    assert summary.min_dt <= summary.max_dt and summary.min_g <= summary.max_g
    ratio = rows[1:, 4] / rows[1:, 3]
    # Euler-B takes h_physical = h g(q_k) exactly, so the ratio is an observed g
    assert ratio.min() >= summary.min_g * (1 - 1e-12) and ratio.max() <= summary.max_g * (1 + 1e-12)
    assert "global_err" in printed and "euler-b" in printed


# --- commands ---------------------------------------------------------------

def test_convergence_validation():
    cfg = make_config(problem="harmonic", monitor="none")
    with pytest.raises(ConfigError, match="at least 3"):
        cmd_convergence(cfg, [0.2, 0.1])
    with pytest.raises(ConfigError, match="halve"):
        cmd_convergence(cfg, [0.2, 0.1, 0.04])


def test_fit_slope_exact_power_law():
    hs = np.array([0.2, 0.1, 0.05, 0.025])
    assert fit_slope(hs, 3.0 * hs ** 4) == pytest.approx(4.0, rel=1e-12)


def test_symplecticity_identity_at_zero_step():
    s = build(make_config(monitor="power", integrator="euler-b"))
    J, Jr = step_jacobians(s.stepper, s.system, as_state(s.x0), 0.0)
    assert np.abs(J - np.eye(6)).max() <= 1e-12
    assert symplectic_deviation(J) <= 1e-12 and symplectic_deviation(Jr) <= 1e-12


def test_symplecticity_detects_explicit_euler():
    res = cmd_symplecticity(make_config(problem="kepler", ecc=0.9, integrator="explicit-euler", h=0.01), samples=5)
    assert res.reduced >= 1e-3 and len(res.per_state_reduced) == 5


def test_table_reports_row_failures_and_continues():
    out = io.StringIO()
    rows = cmd_table("e09", out=out, rows=[0, 1], max_steps=5)
    assert len(rows) == 2 and all(r.error for r in rows)
    text = out.getvalue()
    assert text.count("FAILED") + text.count("failed") >= 2


# --- CLI --------------------------------------------------------------------

def test_cli_run_ok(tmp_path, capsys):
    path = tmp_path / "run.csv"
    code = main(["run", "--problem", "harmonic", "--integrator", "euler-b", "--h", "0.1", "--t-end", "1",
                 "--csv", str(path)])
    assert code == 0
    assert "steps" in capsys.readouterr().out
    _, rows = read_csv(path)
    assert len(rows) == 11


def test_cli_config_error(capsys):
    assert main(["run", "--monitor", "trunc", "--h", "0.1"]) == 2
    assert "positive tol" in capsys.readouterr().err
    assert main(["run", "--integrator", "nope"]) == 2
    assert main(["convergence", "--hs", "0.1,x"]) == 2
    assert main(["table", "e05"]) == 2
    assert main(["symplecticity", "--samples", "0"]) == 2


def test_cli_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("problem = harmonic\nintegrator = euler-b-fixed\nh = 0.5\nt_end = 1\n")
    assert main(["run", "--config", str(cfg), "--h", "0.25"]) == 0
    line = capsys.readouterr().out.splitlines()[1]
    assert line.split()[4] == "4"


def test_cli_solver_failure_flushes_partial_csv(tmp_path, capsys):
    path = tmp_path / "partial.csv"
    code = main(["run", "--problem", "harmonic", "--integrator", "euler-b", "--h", "0.1", "--t-end", "10",
                 "--max-steps", "7", "--csv", str(path)])
    assert code == 3
    assert "solver failure" in capsys.readouterr().err
    _, rows = read_csv(path)
    assert len(rows) == 8


def test_cli_io_failure(tmp_path, capsys):
    code = main(["run", "--problem", "harmonic", "--h", "0.1", "--t-end", "1", "--csv",
                 str(tmp_path / "missing" / "x.csv")])
    assert code == 4
    assert "I/O failure" in capsys.readouterr().err
