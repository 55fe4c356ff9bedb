import hypothesis
import hypothesis.strategies as st
import numpy as np
import pytest

from qcharge import util


def test_make_rng_streams():
    a = util.make_rng(1, 'ramsey').normal(size=5)
    b = util.make_rng(1, 'ramsey').normal(size=5)
    c = util.make_rng(1, 'telegraph').normal(size=5)
    d = util.make_rng(2, 'ramsey').normal(size=5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_make_rng_passes_generator():
    rng = np.random.default_rng(0)
    assert util.make_rng(rng, 'anything') is rng


def test_parallel_map_keeps_order():
    items = list(range(50))
    assert util.parallel_map(lambda x: x ** 2, items, max_workers=4) == [x ** 2 for x in items]
    assert util.parallel_map(lambda x: -x, items, max_workers=1) == [-x for x in items]


def test_uniform_spacing():
    assert util.uniform_spacing(np.arange(10) * 0.5) == pytest.approx(0.5)
    assert util.uniform_spacing([0, 1, 3]) is None
    assert util.uniform_spacing([1.0]) is None


def test_smooth_epochs():
    epochs = [[5, 6], [0, 2], [1, 3], [3, 4]]
    expected = [[0, 4], [5, 6]]
    np.testing.assert_array_equal(util.smooth_epochs(epochs), expected)
    assert util.smooth_epochs([]).shape == (0, 2)


def test_contiguous_runs():
    mask = [False, True, True, False, True, False, True]
    np.testing.assert_array_equal(util.contiguous_runs(mask), [[1, 3], [4, 5], [6, 7]])
    assert util.contiguous_runs([False, False]).shape == (0, 2)


@hypothesis.given(st.lists(st.booleans(), max_size=100))
def test_contiguous_runs_cover_mask(mask):
    runs = util.contiguous_runs(mask)
    rebuilt = np.zeros(len(mask), dtype=bool)
    for start, stop in runs:
        assert stop > start
        rebuilt[start:stop] = True
    np.testing.assert_array_equal(rebuilt, np.asarray(mask, dtype=bool))


def test_find_prominent_peaks():
    x = np.zeros(100)
    x[20], x[50], x[80] = 1.0, 3.0, 2.0
    np.testing.assert_array_equal(util.find_prominent_peaks(x, 2), [50, 80])
    np.testing.assert_array_equal(util.find_prominent_peaks(x, 3, prominence=1.5), [50, 80])


def test_link_nearest():
    order = util.link_nearest([1.0, 5.0], [5.2, 0.9])
    np.testing.assert_array_equal(order, [1, 0])


def test_robust_noise():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 2.0, 100_000)
    x[:100] = 1e6
    assert util.robust_noise(x) == pytest.approx(2.0, rel=0.02)


def test_jsonable():
    value = {'a': np.arange(3), 'b': (np.float64(1.5), np.int64(2)), 'c': np.bool_(True)}
    assert util.jsonable(value) == {'a': [0, 1, 2], 'b': [1.5, 2], 'c': True}
