import numpy as np
import pytest

from lanetcn.data import GeneratorConfig, generate_dataset, prepare, window_count, by_speed
from lanetcn.errors import ParameterError, ShapeError
from lanetcn.evaluation import (
    EvalReport,
    ExperimentConfig,
    Metrics,
    ReportRow,
    ablation_subsets,
    evaluate,
    fit_cell,
    grid_search,
    mae_bound_holds,
    mae_metric,
    metrics_from_dump,
    mse_metric,
    per_variable_mse,
    prediction_dump,
    relative_improvement,
    render_scaled,
    scenario_report,
    select_best,
    sensitivity_analysis,
    timing_benchmark,
)
from lanetcn.nn import ModelSpec, default_spec, init_params
from lanetcn.optim import TrainConfig


@pytest.fixture(scope="module")
def events():
    return generate_dataset(GeneratorConfig(n_drivers=4), seed=0)


def tiny_exp(**kw):
    base = dict(seed=0, train=TrainConfig(epochs=2, batch_size=32, patience=5), model={"channels": 4, "levels": 2})
    base.update(kw)
    return ExperimentConfig(**base)


def test_mae_examples(rng):
    y = rng.normal(size=(2, 3, 1))
    assert mae_metric(y, y) == 0.0
    assert mae_metric(np.array([[[1.0], [-3.0]]]), np.zeros((1, 2, 1))) == 2.0
    with pytest.raises(ShapeError):
        mae_metric(np.zeros((1, 2, 1)), np.zeros((1, 2, 2)))


def test_metrics_match_scalar_loops(rng):
    yh, y = rng.normal(size=(6, 4, 3)), rng.normal(size=(6, 4, 3))
    sq = ab = 0.0
    for n in range(6):
        for t in range(4):
            for d in range(3):
                e = yh[n, t, d] - y[n, t, d]
                sq += e * e
                ab += abs(e)
    assert abs(mse_metric(yh, y) - sq / 24) < 1e-12
    assert abs(mae_metric(yh, y) - ab / 24) < 1e-12


def test_per_variable_decomposition(rng):
    yh, y = rng.normal(size=(6, 4, 3)), rng.normal(size=(6, 4, 3))
    assert abs(per_variable_mse(yh, y).sum() - mse_metric(yh, y)) < 1e-12


def test_mae_squared_bound(rng):
    for _ in range(200):
        d = int(rng.integers(1, 4))
        yh, y = rng.normal(size=(3, 5, d)), rng.standard_cauchy(size=(3, 5, d))
        row = ReportRow("tcn", 5, 10, 60, ("alpha",), tuple("abc"[:d]), "normalized",
                        mse_metric(yh, y), mae_metric(yh, y), 3)
        assert mae_bound_holds(row)
        if d == 1:
            assert row.mae**2 <= row.mse * (1 + 1e-12)


def test_perfect_model_scores_zero(events):
    data = prepare(events, 10, 2, seed=0, speed=60)
    spec = ModelSpec("cnn", 3, 3, 2, 10, levels=1, channels=3, kernel_size=1, dropout=0.0)
    params = {k: np.zeros_like(v) for k, v in init_params(spec, np.random.default_rng(0)).items()}
    test = data.test
    test.targets[:] = 0.25
    params["head.bias"][:] = 0.25
    ev = evaluate(spec, params, test, denormalize_units=True)
    assert ev.normalized.mse == 0.0 and ev.normalized.mae == 0.0 and ev.physical.mse == 0.0


def test_evaluate_rejects_mismatched_windows(events, rng):
    data = prepare(events, 10, 2, seed=0, speed=60)
    spec = default_spec("tcn", 3, 3, 3, 10)
    with pytest.raises(ParameterError):
        evaluate(spec, init_params(spec, rng), data.test)


def test_physical_units_rescale_mse(events, rng):
    data = prepare(events, 10, 2, ("alpha",), seed=0, speed=60)
    spec = default_spec("tcn", 1, 1, 2, 10, channels=4, levels=2)
    ev = evaluate(spec, init_params(spec, rng), data.test, denormalize_units=True)
    span = data.stats.maxs[0] - data.stats.mins[0]
    assert ev.physical.mse == pytest.approx(ev.normalized.mse * span**2, rel=1e-9)


def test_dump_recomputes_metrics(events, rng):
    data = prepare(events, 10, 3, seed=0, speed=60)
    spec = default_spec("rnn", 3, 3, 3, 10, channels=4)
    ev = evaluate(spec, init_params(spec, rng), data.test)
    mse, mae, n = metrics_from_dump(prediction_dump(data.test, ev.predictions))
    assert abs(mse - ev.normalized.mse) <= 1e-12 and abs(mae - ev.normalized.mae) <= 1e-12
    assert n == len(data.test)


def test_select_best_ties_and_scaling():
    mse = {(10, 1): 2.0, (30, 1): 2.0, (50, 1): 3.0, (10, 5): 4.0, (30, 5): 1.0}
    assert select_best(mse) == {1: 10, 5: 30}
    assert select_best({k: v * 1e-7 for k, v in mse.items()}) == select_best(mse)


def test_single_candidate_grid(events):
    res = grid_search("tcn", [10], [1, 5], events, tiny_exp())
    assert res.best_L == {1: 10, 5: 10}
    lengths = [len(e) for e in by_speed(events, 60)]
    assert res.sample_size[(10, 5)] == window_count(lengths, 10, 5)
    assert [row[0] for row in res.table()] == [1, 5]


def test_grid_matches_independent_cell(events):
    exp = tiny_exp()
    res = grid_search("cnn", [10, 20], [3], events, exp)
    cell = fit_cell("cnn", 20, 3, events, exp)
    assert res.mse[(20, 3)] == cell.test_mse


def test_infeasible_cells_are_skipped(events):
    res = grid_search("tcn", [10, 5000], [1], events, tiny_exp())
    assert res.skipped == [(5000, 1)] and res.best_L == {1: 10}


def test_timing_benchmark(rng):
    spec = default_spec("tcn", 3, 1, 1, 30)
    params = init_params(spec, rng)
    x = rng.uniform(size=(8, 3, 30))
    out = timing_benchmark({"tcn": (spec, params)}, x, repetitions=20)
    assert out["tcn"] > 0
    with pytest.raises(ParameterError):
        timing_benchmark({"tcn": (spec, params)}, x, repetitions=5)


def test_timing_is_stable(rng):
    spec = default_spec("rnn", 3, 1, 1, 100)
    params = init_params(spec, rng)
    x = rng.uniform(size=(8, 3, 100))
    models = {"rnn": (spec, params)}
    a = timing_benchmark(models, x, 100)["rnn"]
    b = timing_benchmark(models, x, 200)["rnn"]
    c = timing_benchmark(models, x, 100)["rnn"]
    assert abs(b - a) / a < 0.2 and abs(c - a) / a < 0.2


def test_rnn_time_grows_with_length(rng):
    times = {}
    for L in (10, 100):
        spec = default_spec("rnn", 3, 1, 1, L)
        times[L] = timing_benchmark({"r": (spec, init_params(spec, rng))}, rng.uniform(size=(4, 3, L)), 50)["r"]
    assert times[100] > times[10]


def test_ablation_subsets():
    assert ablation_subsets("remove") == {
        "dx": ("alpha", "x", "y", "dy", "dv"),
        "dy": ("alpha", "x", "y", "dx", "dv"),
        "dv": ("alpha", "x", "y", "dx", "dy"),
    }
    assert ablation_subsets("add")["dy"] == ("alpha", "x", "y", "dy")
    with pytest.raises(ParameterError):
        ablation_subsets("both")


def test_sensitivity_rows(events):
    full = ("alpha", "x", "y", "dx", "dy", "dv")
    rows = sensitivity_analysis({"full_remove": full, "full_add": full, "no_dy": full[:4] + full[5:]}, 10, 3, events, tiny_exp())
    assert [r.label for r in rows] == ["full_remove", "full_add", "no_dy"]
    assert rows[0].mse == rows[1].mse and rows[0].mae == rows[1].mae
    with pytest.raises(ParameterError):
        sensitivity_analysis([()], 10, 3, events, tiny_exp())


def test_relative_improvement():
    assert round(100 * relative_improvement(284.21, 186.45), 1) == 34.4
    with pytest.raises(ParameterError):
        relative_improvement(0.0, 1.0)


def test_scenario_report():
    m = lambda v: Metrics(v, v**0.5, 10, {"alpha": v / 3, "x": v / 3, "y": v / 3})
    cells = {("tcn", 60): m(186.45), ("rnn", 60): m(284.21), ("tcn", 80): m(1.0), ("rnn", 80): m(1.0)}
    rep = scenario_report(cells, ("tcn", "rnn", "cnn"), (60, 80))
    assert round(100 * rep.improvement[("rnn", 60)], 1) == 34.4
    assert rep.rows[("tcn", 80)] == rep.rows[("rnn", 80)]
    assert set(rep.missing) == {("cnn", 60), ("cnn", 80)}
    assert set(rep.rows[("tcn", 60)].per_variable) == {"alpha", "x", "y"}


def test_report_csv_and_invariants():
    rep = EvalReport()
    rep.add(ReportRow("rnn", 10, 30, 60, ("alpha",), ("alpha",), "normalized", 4e-4, 1e-2, 5, {"alpha": 4e-4}, 12.5))
    rep.add(ReportRow("tcn", 1, 30, 60, ("alpha",), ("alpha",), "normalized", 1e-4, 5e-3, 5, {"alpha": 1e-4}, 3.0))
    text = rep.to_csv(include_timing=False).splitlines()
    assert text[0].startswith("family,horizon")
    assert text[1].startswith("rnn,10") and text[1].endswith(",")
    assert rep.check_invariants() == []
    rep.add(ReportRow("cnn", 1, 30, 60, ("alpha",), ("alpha",), "normalized", 1e-4, 1.0, 5))
    assert len(rep.check_invariants()) == 1
    assert render_scaled(1.8645e-2) == "186.45"
