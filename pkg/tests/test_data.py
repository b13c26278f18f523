import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpstgn.data import (
    DAY_STEPS,
    NormStats,
    SplitSpec,
    TrafficSeries,
    check_alignment,
    fit_norm,
    horizon_steps,
    load_adjacency,
    load_series,
    normalize,
    reduce,
    save_adjacency,
    save_series,
    split,
    split_bounds,
    synth_generate,
    window,
    window_count,
)
from gpstgn.errors import ConfigError, DataError, GraphMismatchError, ParseError


def series(values, **kw):
    return TrafficSeries(np.asarray(values, dtype=np.float64), **kw)


def test_load_small_series(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1.5,2\n3,4\n")
    s = load_series(p)
    np.testing.assert_array_equal(s.values, [[1.5, 2.0], [3.0, 4.0]])
    assert s.sensor_ids == ("a", "b") and s.interval_minutes == 5.0


def test_interval_metadata_and_override(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# interval_minutes=1\na\n1\n2\n")
    assert load_series(p).interval_minutes == 1.0
    assert load_series(p, interval_minutes=5).interval_minutes == 5.0


@pytest.mark.parametrize("body,row,col", [
    ("a,b\n1,2\n3\n", 3, None),
    ("a,b\n1,x\n", 2, 2),
    ("a,b\n1,nan\n", 2, 2),
])
def test_parse_errors_carry_location(tmp_path, body, row, col):
    p = tmp_path / "s.csv"
    p.write_text(body)
    with pytest.raises(ParseError) as exc:
        load_series(p)
    assert exc.value.row == row
    if col is not None:
        assert exc.value.column == col


def test_series_round_trip_full_precision(tmp_path, rng):
    s = series(rng.normal(size=(7, 3)) * 1e3, interval_minutes=2.5, sensor_ids=("x", "y", "z"))
    save_series(tmp_path / "s.csv", s)
    back = load_series(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.values, s.values)
    assert back.sensor_ids == s.sensor_ids and back.interval_minutes == 2.5


def test_adjacency_examples(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b\n0,1\n1,0\n")
    g = load_adjacency(p)
    assert g.n == 2 and g.sensor_ids == ("a", "b")
    p.write_text("a,b\n0,1\n0.5,0\n")
    with pytest.raises(DataError, match="asymmetric"):
        load_adjacency(p)
    p.write_text("a,b\n0,-1\n-1,0\n")
    with pytest.raises(ParseError, match="negative"):
        load_adjacency(p)


def test_adjacency_round_trip(tmp_path):
    g, _ = synth_generate(6, 10, 3)
    save_adjacency(tmp_path / "a.csv", g)
    back = load_adjacency(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.adjacency, g.adjacency)


def test_header_mismatch_with_adjacency():
    g, s = synth_generate(3, 10, 0)
    check_alignment(s, g)
    renamed = TrafficSeries(s.values, s.interval_minutes, ("p", "q", "r"))
    with pytest.raises(GraphMismatchError):
        check_alignment(renamed, g)


def test_split_examples():
    for t, expect in [(100, (70, 15, 15)), (10, (7, 1, 2))]:
        parts = split(series(np.arange(t, dtype=float).reshape(t, 1)))
        assert tuple(p.t for p in parts) == expect
    with pytest.raises(ConfigError):
        SplitSpec(1.0, 0.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 3000), st.floats(0.1, 0.8), st.floats(0.05, 0.5))
def test_split_disjoint_ordered_covering(t, a, b):
    if a + b >= 0.95:
        return
    spec = SplitSpec(a, b, 1.0 - a - b)
    b1, b2 = split_bounds(t, spec)
    if b1 < 1 or b2 - b1 < 1 or t - b2 < 1:
        return
    s = series(np.arange(t, dtype=float).reshape(t, 1))
    tr, va, te = split(s, spec)
    joined = np.concatenate([tr.values, va.values, te.values]).reshape(-1)
    np.testing.assert_array_equal(joined, np.arange(t))


def test_fit_norm_examples():
    st_ = fit_norm(series([[0.0], [2.0]]))
    assert st_.mean == 1.0 and st_.std == 1.0
    with pytest.raises(DataError):
        fit_norm(series([[3.0], [3.0]]))
    per = fit_norm(series([[0.0, 10.0], [2.0, 30.0]]), "per_node")
    np.testing.assert_array_equal(per.mean, [1.0, 20.0])
    np.testing.assert_array_equal(per.std, [1.0, 10.0])


def test_per_node_zero_variance_names_sensor():
    with pytest.raises(DataError, match="'b'"):
        fit_norm(series([[0.0, 1.0], [2.0, 1.0]], sensor_ids=("a", "b")), "per_node")


def test_per_node_mismatch():
    stats = NormStats(np.zeros(2), np.ones(2), "per_node")
    with pytest.raises(GraphMismatchError):
        normalize(series(np.ones((3, 3))), stats)


@pytest.mark.parametrize("mode", ["global", "per_node"])
def test_normalize_statistics_and_reductor(rng, mode):
    s = series(rng.normal(40.0, 7.0, size=(200, 4)))
    tr, va, _ = split(s)
    stats = fit_norm(tr, mode)
    z = normalize(tr, stats).values
    axis = None if mode == "global" else 0
    np.testing.assert_allclose(z.mean(axis=axis), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=axis), 1.0, atol=1e-10)
    np.testing.assert_allclose(reduce(normalize(s, stats), stats).values, s.values, atol=1e-12, rtol=0)
    assert abs(normalize(va, stats).values.mean()) > 0


def test_stats_depend_only_on_train(rng):
    s = series(rng.normal(size=(100, 2)))
    tr, _, _ = split(s)
    before = fit_norm(tr)
    mutated = s.values.copy()
    mutated[80:] += 1000.0
    tr2, _, _ = split(series(mutated))
    after = fit_norm(tr2)
    assert before.mean == after.mean and before.std == after.std


def test_window_examples():
    w = window(series(np.arange(15.0).reshape(15, 1)), 12, 3)
    assert len(w) == 1 and w.y[0, 0] == 14.0
    np.testing.assert_array_equal(w.x[0, :, 0], np.arange(12.0))
    with pytest.warns(RuntimeWarning):
        assert len(window(series(np.arange(14.0).reshape(14, 1)), 12, 3)) == 0
    with pytest.raises(DataError):
        window(series(np.arange(14.0).reshape(14, 1)), 12, 3, strict=True)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 80), st.integers(1, 12), st.integers(1, 6))
def test_window_count_and_indexing(t, his, pred):
    v = np.arange(t * 2, dtype=float).reshape(t, 2)
    count = window_count(t, his, pred)
    if count == 0:
        return
    w = window(v, his, pred)
    assert len(w) == t - his - pred + 1
    for s_, sample in enumerate(w):
        np.testing.assert_array_equal(sample.x, v[s_:s_ + his])
        np.testing.assert_array_equal(sample.y, v[s_ + his + pred - 1])


def test_horizon_steps():
    assert horizon_steps(15, 5) == 3
    assert horizon_steps(30, 1) == 30
    with pytest.raises(ConfigError, match="remainder 2"):
        horizon_steps(12, 5)
    with pytest.raises(ConfigError):
        horizon_steps(0, 5)


def test_synth_determinism():
    g1, s1 = synth_generate(8, 300, 7)
    g2, s2 = synth_generate(8, 300, 7)
    assert np.array_equal(g1.adjacency, g2.adjacency) and np.array_equal(s1.values, s2.values)
    _, s3 = synth_generate(8, 300, 8)
    assert not np.array_equal(s1.values, s3.values)


def test_synth_daily_period():
    _, s = synth_generate(20, 2000, 42)
    for i in range(s.n):
        col = s.values[:, i] - s.values[:, i].mean()
        lags = np.arange(200, 400)
        ac = [np.dot(col[:-lag], col[lag:]) / (len(col) - lag) for lag in lags]
        assert abs(lags[int(np.argmax(ac))] - DAY_STEPS) <= 2


def test_synth_noise_free_is_periodic():
    _, s = synth_generate(5, 3 * DAY_STEPS, 1, noise=0.0)
    np.testing.assert_allclose(s.values[DAY_STEPS:], s.values[:-DAY_STEPS], atol=1e-9)


def test_synth_graph_threshold():
    g, _ = synth_generate(30, 5, 2)
    w = g.adjacency[g.adjacency > 0]
    assert np.all(w >= 0.5) and np.all(w <= 1.0)
