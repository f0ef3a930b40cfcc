import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiscale_is import cli
from multiscale_is import experiment as ex
from multiscale_is.estimators import CSV_FIELDS
from multiscale_is.simulator import FixedStep, PaperRule

NUMERIC = [f for f in CSV_FIELDS if f not in ("experiment_id", "estimator", "wall_seconds")]


def small_exit_spec(**kw):
    base = dict(
        epsilon=0.5, delta=0.1, n_paths=1500, experiment_id="drift-exit", fast_potential="zero",
        slow_potential="linear", mode="exit", x0=0.0, x_minus=-0.5, x_plus=0.5, subsolution="exit_linear",
        dt_rule=FixedStep(1e-3), T=2.0,
    )
    base.update(kw)
    return ex.ExperimentSpec(**base)


def test_preset_table1_row3():
    s = ex.preset(1, 3, 1e-3)
    assert (s.epsilon, s.delta, s.n_paths) == (0.063, 0.016, 10_000)
    assert s.dt_rule == PaperRule(0.01)
    assert (s.x0, s.T, s.mode, s.subsolution) == (0.05, 1.0, "finite_horizon", "terminal_quadratic")


def test_preset_table2_row1():
    s = ex.preset(2, 1, 1e-3)
    assert (s.epsilon, s.delta, s.x0, s.x_minus, s.x_plus) == (0.25, 0.1, 0.0, -0.5, 0.5)
    assert (s.fast_potential, s.slow_potential, s.subsolution) == ("gaussian_field", "linear", "exit_linear")


def test_preset_table3_geometry():
    s = ex.preset(3, 2, 1e-4)
    assert (s.x0, s.x_minus, s.x_plus, s.subsolution, s.n_paths) == (0.1, 0.0, 0.8, "exit_rest_point", 1000)


def test_preset_bad_row():
    with pytest.raises(ex.ConfigError):
        ex.preset(1, 8)
    with pytest.raises(ex.ConfigError):
        ex.preset(4, 1)


def test_benchmark_reference():
    assert ex.benchmark_reference(1, 1) == {"theta0": 0.226, "theta1": 0.225, "theta2": 0.226}
    assert ex.benchmark_reference(2, 6)["theta0"] is None


def test_config_round_trip_presets():
    for table, n_rows in ((1, 7), (2, 6), (3, 6)):
        for row in range(1, n_rows + 1):
            spec = ex.preset(table, row, 1e-3)
            assert ex.parse_config(ex.serialize_config(spec)) == spec


@settings(max_examples=40, deadline=None)
@given(
    eps=st.floats(1e-3, 10), delta=st.floats(1e-4, 1), n=st.integers(2, 10**9), seed=st.integers(0, 2**63),
    dt=st.floats(1e-9, 1), fixed=st.booleans(),
    estimators=st.lists(st.sampled_from(("theta0", "theta1", "theta2")), min_size=1, max_size=3, unique=True),
)
def test_config_round_trip(eps, delta, n, seed, dt, fixed, estimators):
    spec = ex.ExperimentSpec(
        epsilon=eps, delta=delta, n_paths=n, master_seed=seed, estimators=tuple(estimators),
        dt_rule=FixedStep(dt) if fixed else PaperRule(dt),
    )
    assert ex.parse_config(ex.serialize_config(spec)) == spec


def test_config_errors():
    with pytest.raises(ex.ConfigError, match="unknown key"):
        ex.parse_config("epsilon = 1\ndelta = 0.1\nn_paths = 10\ncolour = red\n")
    with pytest.raises(ex.ConfigError, match="missing"):
        ex.parse_config("epsilon = 1\n")
    with pytest.raises(ex.ConfigError, match="dt_rule"):
        ex.parse_config("epsilon = 1\ndelta = 0.1\nn_paths = 10\ndt_rule = adaptive\n")
    with pytest.raises(ex.ConfigError, match="positive"):
        ex.parse_config("epsilon = -1\ndelta = 0.1\nn_paths = 10\n")
    with pytest.raises(ex.ConfigError, match="estimators"):
        ex.parse_config("epsilon = 1\ndelta = 0.1\nn_paths = 10\nestimators = theta9\n")


def test_config_accepts_comments_and_scientific_counts():
    spec = ex.parse_config("# header\nepsilon = 0.25  # eps\ndelta = 0.1\nn_paths = 1e4\n")
    assert spec.n_paths == 10_000


def test_budget_refusal():
    spec = ex.preset(1, 7, 1.0)
    assert ex.estimated_steps(spec) > spec.step_ceiling
    with pytest.raises(ex.BudgetExceeded):
        ex.run_experiment(spec)


def test_runs_against_exact_oracle():
    res = ex.run_experiment(small_exit_spec(n_paths=4000, estimators=("theta0",)))
    oracle = (1 - math.exp(-1)) / (math.e - math.exp(-1))
    assert res.exact == pytest.approx(oracle, abs=1e-8)
    s = res.summaries["theta0"]
    assert abs(s.mean - oracle) < 3 * s.stderr + 0.01
    assert len(res.rows) == 1 and "exact exit probability" in res.format()


def test_worker_count_does_not_change_numbers():
    spec = small_exit_spec(n_paths=1200)
    a = ex.run_experiment(ex.with_overrides(spec, workers=1))
    b = ex.run_experiment(ex.with_overrides(spec, workers=2))
    for ra, rb in zip(a.rows, b.rows):
        assert {k: ra[k] for k in NUMERIC} == {k: rb[k] for k in NUMERIC}


def test_csv_round_trip(tmp_path):
    res = ex.run_experiment(small_exit_spec(n_paths=600))
    path = tmp_path / "out.csv"
    ex.write_csv(res.rows, path)
    assert ex.read_csv(path) == res.rows
    assert ex.write_csv(res.rows).splitlines()[0] == ",".join(CSV_FIELDS)


def _row(exp_id, eps, estimator, re_mean="0.1"):
    return {"experiment_id": exp_id, "epsilon": str(eps), "estimator": estimator, "re_mean": re_mean, "mean": "0.2"}


def test_plot_data_ordering(tmp_path):
    rows = [
        _row("table1-row3", 0.063, "theta1"), _row("table1-row1", 0.25, "theta1"),
        _row("table1-row2", 0.125, "theta0", "NA"), _row("table2-row1", 0.25, "theta0"),
    ]
    recs = ex.emit_plot_data(rows, tmp_path / "plot.csv")
    assert [(r["group"], r["estimator"], r["epsilon"]) for r in recs] == [
        ("table1", "theta0", 0.125), ("table1", "theta1", 0.25), ("table1", "theta1", 0.063), ("table2", "theta0", 0.25),
    ]
    assert recs[0]["re_mean"] is None
    assert (tmp_path / "plot.csv").read_text().splitlines()[0] == ",".join(ex.PLOT_FIELDS)


def test_plot_data_single_and_empty():
    assert len(ex.emit_plot_data([_row("custom", 0.5, "theta0")])) == 1
    with pytest.raises(ValueError):
        ex.emit_plot_data([])


def test_cli_run_writes_csv(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(ex.serialize_config(small_exit_spec(n_paths=600)))
    out, plot = tmp_path / "out.csv", tmp_path / "plot.csv"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--plot-data", str(plot), "-q"]) == 0
    rows = ex.read_csv(out)
    assert [r["estimator"] for r in rows] == ["theta0", "theta1", "theta2"]
    assert plot.exists()


def test_cli_stdout_and_seed_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(ex.serialize_config(small_exit_spec(n_paths=100, estimators=("theta0",))))
    monkeypatch.setenv(ex.SEED_ENV_VAR, "77")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.splitlines()[1].endswith(",77")
    assert cli.main(["run", "--config", str(cfg), "--seed", "5"]) == 0
    assert capsys.readouterr().out.splitlines()[1].endswith(",5")


def test_cli_dump_config(capsys):
    assert cli.main(["preset", "--table", "1", "--row", "1,2", "--dump-config", "--n-paths", "50"]) == 0
    specs = capsys.readouterr().out.split("# multiscale")[1:]
    assert len(specs) == 2
    assert ex.parse_config("#" + specs[1]).n_paths == 50


def test_cli_budget_refusal_exit_code():
    assert cli.main(["preset", "--table", "1", "--row", "7", "--scale-n", "1", "-q"]) == 2


def test_cli_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("epsilon = 0.5\nwhat = 1\n")
    assert cli.main(["run", "--config", str(cfg), "-q"]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg"), "-q"]) == 1


def test_cli_unwritable_output(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(ex.serialize_config(small_exit_spec(n_paths=50, estimators=("theta0",))))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "no" / "such" / "dir.csv"), "-q"]) == 1


def test_cli_rejects_bad_workers():
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", "x", "--workers", "0"])
