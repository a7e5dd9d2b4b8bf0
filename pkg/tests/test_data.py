import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanetcn.data import (
    FEATURES,
    DriverParams,
    GeneratorConfig,
    LaneChangeEvent,
    MinMaxStats,
    by_speed,
    denormalize,
    generate_dataset,
    generate_synthetic_event,
    holdout_validation,
    make_drivers,
    minmax_fit,
    normalize,
    prepare,
    read_events,
    slide_windows,
    split_by_driver,
    window_count,
    write_events,
)
from lanetcn.errors import DegenerateFeatureError, ParameterError, SplitError
from lanetcn.seeding import derived_seed


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(seed=0)


def _toy_event(n, driver=0, speed=60, rng=None):
    rng = rng or np.random.default_rng(n)
    return LaneChangeEvent(driver, speed, rng.normal(size=(n, 6)))


def _assert_event_invariants(ev):
    assert len(ev) >= 224
    y = ev.feature("y")
    assert abs(abs(y[-1] - y[0]) - 3.5) <= 0.5
    assert np.all(np.diff(ev.feature("x")) > 0)
    assert np.all(np.diff(y) >= -1e-12)
    assert np.all(np.isfinite(ev.series))


def test_default_dataset_shape(dataset):
    assert len(dataset) == 141
    assert {e.speed_kmh for e in dataset} == {60, 80, 100}
    assert len({e.driver_id for e in dataset}) == 47
    assert all(len(by_speed(dataset, s)) == 47 for s in (60, 80, 100))
    for ev in dataset:
        _assert_event_invariants(ev)
        assert ev.dt == 1 / 60


def test_event_invariants_over_many_draws():
    rng = np.random.default_rng(1)
    config = GeneratorConfig()
    for i in range(10_000):
        driver = DriverParams(i, float(max(rng.normal(5.0, 1.0), 0.5)))
        _assert_event_invariants(generate_synthetic_event(driver, int(rng.choice([60, 80, 100])), rng, config))


def test_invalid_speed():
    with pytest.raises(ParameterError):
        generate_synthetic_event(DriverParams(0, 5.0), 70, np.random.default_rng(0))


def test_short_duration_padded_to_minimum():
    ev = generate_synthetic_event(DriverParams(0, 0.5), 100, np.random.default_rng(0))
    assert len(ev) == 224


def test_noiseless_event_is_symmetric():
    ev = generate_synthetic_event(DriverParams(0, 4.0), 80, np.random.default_rng(3), noise_scale=0.0)
    s, n = ev.maneuver
    alpha, y = ev.feature("alpha"), ev.feature("y")
    v = 80 / 3.6
    expected = GeneratorConfig().steering_gain * 0.5 * 3.5 * (np.pi / (n / 60)) ** 2 * np.cos(np.pi * np.arange(n) / n) / v**2
    assert np.allclose(alpha[s : s + n], expected, rtol=1e-12, atol=1e-12)
    assert not alpha[:s].any() and not alpha[s + n :].any()
    k = np.arange(1, n)
    assert np.allclose(alpha[s + k], -alpha[s + n - k], atol=1e-9)
    assert np.allclose(y[s + k] + y[s + n - k], 3.5, atol=1e-12)
    assert np.allclose(np.diff(ev.feature("x")), v / 60)
    assert not ev.feature("dv").any()


def test_relative_features_against_lead_vehicle():
    ev = generate_synthetic_event(DriverParams(0, 5.0), 60, np.random.default_rng(4), noise_scale=0.0)
    assert ev.feature("dx")[0] == 30.0
    assert np.allclose(ev.feature("dx"), 30.0)
    assert np.array_equal(ev.feature("dy"), ev.feature("y"))


def test_duration_distribution():
    drivers = make_drivers(GeneratorConfig(n_drivers=20_000), np.random.default_rng(0))
    d = np.array([p.duration for p in drivers])
    assert abs(d.mean() - 5.0) < 0.03 and abs(d.std() - 1.0) < 0.03
    events = generate_dataset(seed=2)
    drivers = make_drivers(GeneratorConfig(), np.random.default_rng(derived_seed(2, "drivers")))
    for ev in events:
        n_lc = ev.maneuver[1]
        want = int(round(drivers[ev.driver_id].duration * 60))
        assert n_lc == want or (n_lc > want and len(ev) == 224)


def test_generation_deterministic():
    a, b = generate_dataset(seed=7), generate_dataset(seed=7)
    assert all(np.array_equal(x.series, y.series) for x, y in zip(a, b))
    c = generate_dataset(seed=8)
    assert not np.array_equal(a[0].series, c[0].series)


def test_minmax_examples():
    stats = minmax_fit(np.array([[[0.0, 5.0, 10.0]]]), ["alpha"])
    assert (stats.mins[0], stats.maxs[0]) == (0.0, 10.0)
    assert np.array_equal(normalize(np.array([[0.0, 5.0, 10.0]]), stats, axis=0), [[0.0, 0.5, 1.0]])
    w = np.random.default_rng(0).normal(size=(1, 2, 7))
    s = minmax_fit(w, ["x", "y"])
    assert np.array_equal(s.mins, w[0].min(axis=1)) and np.array_equal(s.maxs, w[0].max(axis=1))


def test_minmax_degenerate_and_invalid():
    with pytest.raises(DegenerateFeatureError):
        minmax_fit(np.ones((3, 2, 4)), ["x", "y"])
    with pytest.raises(ParameterError):
        minmax_fit(np.zeros((0, 1, 4)), ["x"])
    with pytest.raises(ParameterError):
        MinMaxStats(("x",), np.array([1.0]), np.array([1.0]))


def test_normalize_passes_out_of_range_values():
    stats = MinMaxStats(("x",), np.array([0.0]), np.array([2.0]))
    assert np.array_equal(normalize(np.array([[-2.0, 4.0]]), stats, axis=0), [[-1.0, 2.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normalize_round_trip(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=rng.uniform(0.1, 200), size=(5, 3, 9)) + rng.normal(scale=100)
    stats = minmax_fit(w, ["alpha", "x", "y"])
    z = normalize(w, stats)
    assert z.min() >= 0.0 and z.max() <= 1.0
    assert np.allclose(denormalize(z, stats), w, rtol=0, atol=1e-12 * max(1.0, np.abs(w).max()))
    assert np.all(np.abs(denormalize(z, stats) - w) <= 1e-12 * np.maximum(1.0, np.abs(w)))


def test_train_stats_ignore_test_data(dataset):
    a = prepare(dataset, 10, 1, seed=0, speed=60)
    altered = list(dataset)
    for i in a.split.test:
        ev = altered[i]
        altered[i] = LaneChangeEvent(ev.driver_id, ev.speed_kmh, ev.series * 3.0 + 100.0)
    b = prepare(altered, 10, 1, seed=0, speed=60)
    assert np.array_equal(a.stats.mins, b.stats.mins) and np.array_equal(a.stats.maxs, b.stats.maxs)


def _enumerate(events, L, T, feats):
    xs, ys = [], []
    for ev in events:
        for j in range(len(ev)):
            if j + L + T <= len(ev):
                xs.append(ev.features(feats)[:, j : j + L])
                ys.append(ev.features(feats)[:, j + L : j + L + T].T)
    return xs, ys


def test_single_event_window_count():
    ds = slide_windows([_toy_event(224)], 10, 1)
    assert len(ds) == 214 == window_count([224], 10, 1)


def test_window_count_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(100):
        events = [_toy_event(int(n), rng=rng) for n in rng.integers(5, 60, size=rng.integers(1, 6))]
        L, T = int(rng.integers(1, 20)), int(rng.integers(1, 20))
        ds = slide_windows(events, L, T)
        xs, _ = _enumerate(events, L, T, ("alpha", "x", "y"))
        assert len(ds) == len(xs) == window_count([len(e) for e in events], L, T)


def test_window_contents_match_enumeration():
    events = [_toy_event(40), _toy_event(33, driver=1)]
    ds = slide_windows(events, 7, 4, ("alpha", "dy"), ("x",))
    xs, _ = _enumerate(events, 7, 4, ("alpha", "dy"))
    _, ys = _enumerate(events, 7, 4, ("x",))
    assert np.array_equal(ds.inputs, np.stack(xs)) and np.array_equal(ds.targets, np.stack(ys))


def test_window_count_grid(dataset):
    events = by_speed(dataset, 60)
    lengths = [len(e) for e in events]
    for L in (10, 30, 50, 80, 100):
        for T in (1, 10, 30, 50, 80, 100):
            assert len(slide_windows(events, L, T)) == window_count(lengths, L, T) == sum(n - L - T + 1 for n in lengths)


def test_table_count_identity():
    # published sample sizes for (L, T) = (10, 1) and (30, 10) over one scenario
    n_events = 46
    assert 22574 - 21240 == n_events * ((30 + 10) - (10 + 1))
    lengths = np.random.default_rng(0).integers(224, 600, size=n_events)
    assert window_count(lengths, 10, 1) - window_count(lengths, 30, 10) == n_events * 29


def test_one_window_per_event_at_boundary():
    events = [_toy_event(30), _toy_event(30, driver=1)]
    assert len(slide_windows(events, 20, 10)) == 2


def test_short_events_skipped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        ds = slide_windows([_toy_event(10), _toy_event(50)], 20, 5)
    assert ds.skipped == 1 and len(ds) == 26
    assert "skipped 1" in caplog.text


def test_split_two_thirds_per_driver(dataset):
    split = split_by_driver(dataset, seed=0)
    assert len(split.train) == 94 and len(split.test) == 47
    assert not set(split.train) & set(split.test)
    for d in range(47):
        assert sum(dataset[i].driver_id == d for i in split.train) == 2
    assert split_by_driver(dataset, 0) == split
    assert split_by_driver(dataset, 1) != split


def test_split_requires_two_events():
    with pytest.raises(SplitError):
        split_by_driver([_toy_event(30, driver=0), _toy_event(30, driver=1)], 0)


def test_validation_is_exact_floor():
    ds = slide_windows([_toy_event(1009)], 9, 1)
    assert len(ds) == 1000
    tr, va = holdout_validation(ds, 0)
    assert len(va) == 200 and len(tr) == 800
    ds2 = slide_windows([_toy_event(1013)], 9, 1)
    assert len(holdout_validation(ds2, 0)[1]) == 200


def test_prepared_partitions_disjoint_and_normalized(dataset):
    data = prepare(dataset, 30, 10, FEATURES, ("alpha",), seed=0, speed=60)
    tr, va, te = data.train.keys(), data.val.keys(), data.test.keys()
    assert not (tr & va) and not (tr & te) and not (va & te)
    assert len(data.val) == int(0.2 * (len(data.train) + len(data.val)))
    assert data.train.inputs.min() >= 0.0 and data.train.inputs.max() <= 1.0
    assert data.train.targets.min() >= 0.0 and data.train.targets.max() <= 1.0
    assert {dataset[i].speed_kmh for i in set(data.test.event_index.tolist())} == {60}
    assert data.sample_size == window_count([len(e) for e in by_speed(dataset, 60)], 30, 10)


def test_csv_round_trip(tmp_path, dataset):
    write_events(dataset[:4], tmp_path, root_seed=0)
    back = read_events(tmp_path)
    assert len(back) == 4
    for a, b in zip(dataset[:4], back):
        assert np.array_equal(a.series, b.series)
        assert (a.driver_id, a.speed_kmh, a.seed) == (b.driver_id, b.speed_kmh, b.seed)
        assert b.dt == pytest.approx(1 / 60, rel=1e-12)
    header = (tmp_path / "driver000_speed60.csv").read_text().splitlines()[0]
    assert header == "t,alpha,x,y,dx,dy,dv"


def test_external_csv_rejected_on_bad_header(tmp_path):
    from lanetcn.data import read_event_csv

    p = tmp_path / "e.csv"
    p.write_text("t,alpha,x\n0,1,2\n")
    with pytest.raises(ParameterError):
        read_event_csv(p, 0, 60)
