import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tser.errors import NormalizationError, StateError
from tser.preprocess import NormalizationState, denormalize, embed, normalize
from tser.series import SeriesCollection, TimeSeries, train_size


def coll(*values, h=1):
    return SeriesCollection(tuple(TimeSeries(f"s{i}", v) for i, v in enumerate(values)), horizon=h)


def test_normalize_by_mean():
    out, state = normalize(coll([2.0, 4.0, 6.0]), scale_fit="full")
    assert out["s0"].values.tolist() == [0.5, 1.0, 1.5]
    assert state["s0"] == 4.0


def test_constant_series_normalizes_to_one():
    out, _ = normalize(coll([5.0, 5.0, 5.0]))
    assert out["s0"].values.tolist() == [1.0, 1.0, 1.0]


def test_zero_mean_is_rejected():
    with pytest.raises(NormalizationError, match="s0"):
        normalize(coll([1.0, -1.0, 0.0]), scale_fit="full")


def test_scale_fitted_on_training_portion_by_default():
    values = np.arange(1.0, 11.0)
    _, state = normalize(coll(values), train_fraction=0.7)
    assert state["s0"] == pytest.approx(np.mean(values[:7]))
    _, full = normalize(coll(values), train_fraction=0.7, scale_fit="full")
    assert full["s0"] == pytest.approx(5.5)


def test_denormalize():
    state = NormalizationState({"a": 4.0})
    assert denormalize({"a": [0.5, 1.0]}, state)["a"].tolist() == [2.0, 4.0]


def test_denormalize_unknown_id():
    with pytest.raises(StateError):
        denormalize({"Z": [1.0]}, NormalizationState({"a": 1.0}))


@given(arrays(float, st.integers(3, 40), elements=st.floats(0.1, 1e4)))
def test_normalize_round_trip(values):
    c = coll(values)
    out, state = normalize(c)
    back = denormalize({"s0": out["s0"].values}, state)["s0"]
    np.testing.assert_allclose(back, values, rtol=1e-9)


@given(arrays(float, st.integers(3, 30), elements=st.floats(1.0, 100.0), unique=True))
def test_normalize_preserves_extrema_positive_mean(values):
    out, _ = normalize(coll(values), scale_fit="full")
    v = out["s0"].values
    assert values[np.argmax(v)] == pytest.approx(values.max(), rel=1e-12)
    assert values[np.argmin(v)] == pytest.approx(values.min(), rel=1e-12)


@given(arrays(float, st.integers(3, 30), elements=st.floats(-100.0, -1.0), unique=True))
def test_normalize_swaps_extrema_negative_mean(values):
    out, _ = normalize(coll(values), scale_fit="full")
    v = out["s0"].values
    assert values[np.argmax(v)] == pytest.approx(values.min(), rel=1e-12)
    assert values[np.argmin(v)] == pytest.approx(values.max(), rel=1e-12)


def rows(ds):
    return [(s.x.tolist(), s.y.tolist()) for s in ds.samples]


def test_embed_h1():
    ds = embed(coll([1, 2, 3, 4, 5]), q=2, h=1)
    assert rows(ds) == [([1, 2], [3]), ([2, 3], [4]), ([3, 4], [5])]
    assert ds.origin_time.tolist() == [2, 3, 4]


def test_embed_h2():
    ds = embed(coll([1, 2, 3, 4, 5]), q=2, h=2)
    assert rows(ds) == [([1, 2], [3, 4]), ([2, 3], [4, 5])]


def test_embed_too_short_series_contributes_nothing():
    ds = embed(coll([1.0, 2.0]), q=2, h=1)
    assert len(ds) == 0
    assert (ds.q, ds.h) == (2, 1)


def test_embed_skips_short_series_only():
    ds = embed(coll([1.0, 2.0], [1, 2, 3, 4]), q=2, h=1)
    assert set(ds.origin_id) == {"s1"}


series_lists = st.lists(
    arrays(float, st.integers(1, 40), elements=st.floats(0.5, 50.0)), min_size=1, max_size=4
)


@settings(max_examples=50)
@given(series_lists, st.integers(1, 6), st.integers(1, 4))
def test_embedding_count_and_windows(values, q, h):
    c = coll(*values, h=h)
    ds = embed(c, q, h)
    assert len(ds) == sum(max(0, len(v) - q - h + 1) for v in values)
    for s in ds.samples:
        src = c[s.origin_id].values
        window = src[s.origin_time - q:s.origin_time + h]
        assert np.array_equal(np.concatenate([s.x, s.y]), window)
    for sid in set(ds.origin_id):
        t = ds.origin_time[ds.origin_id == sid]
        assert np.array_equal(t, np.arange(t[0], t[0] + t.size))


@settings(max_examples=30)
@given(series_lists, st.integers(1, 5), st.integers(1, 3))
def test_embed_commutes_with_normalize(values, q, h):
    c = coll(*values, h=h)
    norm, state = normalize(c)
    a, b = embed(norm, q, h), embed(c, q, h)
    scale = np.array([state[sid] for sid in b.origin_id])[:, None]
    np.testing.assert_allclose(a.Z, b.Z / scale, rtol=1e-12, atol=0)


def test_subset_remaps_parents():
    ds = embed(coll([1, 2, 3, 4, 5, 6]), q=2, h=1)
    from tser.preprocess import EmbeddedDataset

    synth = EmbeddedDataset([[9, 9]], [[9]], ["s0"], [-1], [True], [[1, 3]])
    both = EmbeddedDataset.concat([ds, synth], shift_parents=False)
    sub = both.subset([1, 3, 4])
    assert sub.parents[-1].tolist() == [0, 1]


def test_train_size_floor_is_robust():
    assert train_size(10, 0.7) == 7
    assert train_size(300, 0.7) == 210
