import csv
import json
import math

import numpy as np
import pytest

from tser.bench import (
    ExperimentConfig,
    default_ratio_grid,
    prepare,
    provenance,
    realized_ratio,
    report,
    run_integration_study,
    run_loo,
    run_ratio_sweep,
    sweep_labels,
)
from tser.errors import ConfigError, OutputError, RunError
from tser.series import SeriesCollection, TimeSeries

GEN = {"n_series": 5, "lengths": 80, "seed": 3, "heterogeneity": 1.0}


def small_config(**kw):
    base = dict(generator=dict(GEN), q=4, horizon=2, draws=1000, learner={"name": "knn", "k": 5}, k=3)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def loo():
    return run_loo(small_config(), audit=True)


def test_cell_count():
    coll = SeriesCollection(
        tuple(TimeSeries(f"s{i}", 5 + np.sin(np.arange(60) * (0.3 + 0.1 * i))) for i in range(3)), horizon=2
    )
    res = run_loo(small_config(methods=["GLOBAL", "LOCAL"]), collection=coll)
    assert len(res.cells) == 6
    assert set(res.report.avg_rank) == {"GLOBAL", "LOCAL"}


def test_run_is_deterministic(loo):
    again = run_loo(small_config(), audit=True)
    for m in loo.methods:
        np.testing.assert_array_equal(loo.table()[m], again.table()[m])


def test_ranks_within_bounds(loo):
    n = len(loo.methods)
    assert all(1 <= r <= n for r in loo.report.avg_rank.values())
    assert sum(loo.report.avg_rank.values()) == pytest.approx(n * (n + 1) / 2)


def test_global_is_shared_across_targets(loo):
    rows = {c.n_rows for c in loo.cells if c.method == "GLOBAL"}
    assert len(rows) == 1


def test_training_rows_never_touch_test_window():
    cfg = small_config(methods=["GLOBAL", "LOCAL", "TSER(SMOTE)", "TSER_LOCAL(SMOTE)", "TSER_ALL(SMOTE)"])
    res = run_loo(cfg, audit=True)
    prep = prepare(cfg)
    q, h = prep.q, prep.h
    for c in res.cells:
        n_train = prep.n_train[c.target_id]
        # a row with first target at time t covers observations t-q .. t+h-1
        touched = [t for sid, t in c.provenance if sid == c.target_id and t + h - 1 >= n_train]
        assert not touched, (c.target_id, c.method)
        assert c.provenance


def test_provenance_follows_parents():
    from conftest import make_dataset
    from tser.learn import Regime, assemble_training_set
    from tser.resample import ResamplePlan

    base = make_dataset(5, 10)
    out = assemble_training_set(base, Regime("TSER", ResamplePlan(k=2)), "T")
    assert provenance(out) <= provenance(base)
    only_target = assemble_training_set(base, Regime("TSER_LOCAL", ResamplePlan(k=2)), "T")
    assert {sid for sid, _ in provenance(only_target)} == {"T"}


def test_integration_study_methods():
    res = run_integration_study(small_config())
    assert res.methods == ["GLOBAL", "LOCAL", "TSER(SMOTE)", "TSER_LOCAL(SMOTE)", "TSER_ALL(SMOTE)"]
    tser = {c.target_id: c.n_rows for c in res.cells if c.method == "TSER(SMOTE)"}
    tall = {c.target_id: c.n_rows for c in res.cells if c.method == "TSER_ALL(SMOTE)"}
    glob = next(c.n_rows for c in res.cells if c.method == "GLOBAL")
    loc = {c.target_id: c.n_rows for c in res.cells if c.method == "LOCAL"}
    for sid in tser:
        assert tall[sid] - tser[sid] == math.ceil(0.5 * (glob - loc[sid]))


def test_ratio_grid():
    grid = default_ratio_grid()
    labels = sweep_labels(grid)
    assert len(labels) == 20
    assert labels[0] == "R00" and labels[-1] == "R19"
    assert grid[-1] == 1.0


def test_realized_ratio():
    assert realized_ratio(100, 900, 1.0) == 1.0
    assert realized_ratio(100, 900, 0.0) is None
    assert realized_ratio(100, 900, 0.5) == pytest.approx(0.3 / 0.7)


def test_sweep_endpoint_equals_global(loo):
    cfg = small_config(ratio_grid=[0.5, 1.0])
    sweep = run_ratio_sweep(cfg)
    assert sweep.methods == ["R00", "R01", "R02"]
    np.testing.assert_array_equal(sweep.table()["R00"], loo.table()["GLOBAL"])
    np.testing.assert_array_equal(
        sweep.table()["R02"], run_loo(small_config(methods=["TSER(SMOTE)"])).table()["TSER(SMOTE)"]
    )


def test_max_series_caps_targets():
    res = run_loo(small_config(max_series=2))
    assert len(res.targets) == 2


def test_failing_cells_become_nan():
    coll = SeriesCollection(
        (
            TimeSeries("flat", np.r_[np.full(40, 3.0), np.arange(1.0, 11.0)]),
            TimeSeries("b", 5 + np.sin(np.arange(50.0))),
            TimeSeries("c", 5 + np.cos(np.arange(50.0))),
        ),
        horizon=2,
    )
    res = run_loo(small_config(methods=["GLOBAL", "LOCAL"]), collection=coll)
    assert np.isnan(res.cell("flat", "GLOBAL").mase)
    assert "ScoringError" in res.cell("flat", "GLOBAL").error
    assert res.report.extra["complete_problems"] == ["b", "c"]


def test_zero_cells_is_run_error():
    coll = SeriesCollection(
        (TimeSeries("a", np.r_[np.full(40, 3.0), np.arange(1.0, 11.0)]), TimeSeries("b", np.r_[np.full(40, 2.0), np.ones(10)])),
        horizon=2,
    )
    with pytest.raises(RunError):
        run_loo(small_config(methods=["GLOBAL"]), collection=coll)


def test_other_series_gap_column(tmp_path):
    res = run_loo(small_config(other_series=True))
    assert set(res.report.gaps) == set(res.methods)
    report(res, tmp_path)
    header = (tmp_path / "summary.csv").read_text().splitlines()[0]
    assert header.endswith("other_series_gap")


def test_report_schema(loo, tmp_path):
    files = report(loo, tmp_path / "out")
    assert set(files) == {"per_series_scores.csv", "summary.csv", "manifest.json"}
    with open(files["summary.csv"]) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == loo.methods
    assert list(rows[0]) == ["method", "avg_rank", "pct_diff_vs_global", "pct_diff_vs_local", "p_win", "p_rope", "p_lose"]
    with open(files["per_series_scores.csv"]) as fh:
        scores = list(csv.DictReader(fh))
    assert len(scores) == len(loo.cells)
    manifest = json.loads(files["manifest.json"].read_text())
    assert manifest["seed"] == 0
    assert len(manifest["config_hash"]) == 64
    assert "manifest_hash" in manifest


def test_report_is_reproducible(loo, tmp_path):
    a = report(loo, tmp_path / "a")
    b = report(run_loo(small_config(), audit=True), tmp_path / "b")
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes()


def test_sweep_report_has_sweep_table(tmp_path):
    res = run_ratio_sweep(small_config(ratio_grid=[0.5, 1.0]))
    files = report(res, tmp_path)
    lines = files["sweep.csv"].read_text().splitlines()
    assert lines[0] == "grid_index,point,position,mean_ratio,avg_rank"
    assert len(lines) == 4


def test_empty_report_writes_nothing(loo, tmp_path):
    import dataclasses

    empty = dataclasses.replace(loo, cells=[])
    with pytest.raises(RunError):
        report(empty, tmp_path / "none")
    assert not (tmp_path / "none").exists()


def test_unwritable_output(loo, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        report(loo, blocker / "sub")


@pytest.mark.parametrize(
    "mapping",
    [
        {"generator": GEN, "bogus": 1},
        {"generator": GEN, "methods": []},
        {"generator": GEN, "ratio_grid": [0.5, 0.2]},
        {"generator": GEN, "ratio_grid": [0.0, 0.5]},
        {},
        {"generator": GEN, "data": "x.csv"},
        {"generator": GEN, "methods": ["TSER"]},
    ],
)
def test_config_validation(mapping):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(mapping)


def test_config_hash_ignores_output_location():
    a = small_config(out="x", jobs=1)
    b = small_config(out="y", jobs=2)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != small_config(seed=1).config_hash()


def test_parallel_matches_serial():
    serial = run_loo(small_config())
    parallel = run_loo(small_config(jobs=2))
    for m in serial.methods:
        np.testing.assert_array_equal(serial.table()[m], parallel.table()[m])


def test_generator_deviant_is_hard_for_global():
    cfg = ExperimentConfig(generator={"n_series": 20, "lengths": 300, "seed": 1}, horizon=6,
                           methods=["GLOBAL"], learner={"name": "knn", "k": 100}, draws=1000)
    res = run_loo(cfg)
    g = res.table()["GLOBAL"]
    i = res.targets.index("deviant")
    assert g[i] > np.mean(np.delete(g, i))
