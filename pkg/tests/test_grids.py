import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssidepth.errors import DimensionError, EmptyMaskError
from ssidepth.grids import ScalarGrid, ValidityMask, finite_diff, masked_reduce, subsample


def test_grid_is_read_only_copy():
    src = np.arange(6.0).reshape(2, 3)
    g = ScalarGrid(src)
    src[0, 0] = 99
    assert g.values[0, 0] == 0
    with pytest.raises(ValueError):
        g.values[0, 0] = 1


def test_unknown_unit_rejected():
    with pytest.raises(ValueError):
        ScalarGrid(np.zeros((2, 2)), "furlongs")


def test_finite_diff_constant():
    g = ScalarGrid(np.full((3, 4), 7.0))
    m = ValidityMask.full(3, 4)
    dx, okx = finite_diff(g, m, "x")
    dy, oky = finite_diff(g, m, "y")
    assert np.all(dx.values == 0) and np.all(dy.values == 0)
    assert okx.flags[:, :-1].all() and not okx.flags[:, -1].any()
    assert oky.flags[:-1].all() and not oky.flags[-1].any()


def test_finite_diff_row():
    g = ScalarGrid(np.array([[1.0, 3.0, 6.0]]))
    d, ok = finite_diff(g, ValidityMask.like(g), "x")
    assert d.values.tolist() == [[2.0, 3.0, 0.0]]
    assert ok.flags.tolist() == [[True, True, False]]


def test_finite_diff_invalid_pixel_propagates():
    g = ScalarGrid(np.arange(5.0)[None, :])
    flags = np.ones((1, 5), bool)
    flags[0, 2] = False
    d, ok = finite_diff(g, ValidityMask(flags), "x")
    assert ok.flags.tolist() == [[True, False, False, True, False]]
    assert d.values[0, 1] == 0 and d.values[0, 2] == 0


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(2, 7), st.integers(2, 7))
def test_finite_diff_of_ramp_is_slope(a, b, rows, cols):
    x = np.arange(cols)[None, :].repeat(rows, 0)
    g = ScalarGrid(a * x + b)
    d, ok = finite_diff(g, ValidityMask.like(g), "x")
    assert np.allclose(d.values[ok.flags], a, atol=1e-9)


def test_finite_diff_shape_mismatch():
    with pytest.raises(DimensionError):
        finite_diff(ScalarGrid(np.zeros((2, 2))), ValidityMask.full(2, 3), "x")


def test_subsample_identity():
    g = ScalarGrid(np.arange(12.0).reshape(3, 4))
    m = ValidityMask(np.arange(12).reshape(3, 4) % 3 > 0)
    g2, m2 = subsample(g, m, 1)
    assert np.array_equal(g2.values, g.values) and np.array_equal(m2.flags, m.flags)


def test_subsample_stride2():
    v = np.arange(16.0).reshape(4, 4)
    g2, m2 = subsample(ScalarGrid(v), ValidityMask.full(4, 4), 2)
    assert g2.values.tolist() == [[v[0, 0], v[0, 2]], [v[2, 0], v[2, 2]]]
    assert m2.shape == (2, 2)


def test_subsample_ceiling():
    g2, _ = subsample(ScalarGrid(np.zeros((5, 5))), ValidityMask.full(5, 5), 2)
    assert g2.shape == (3, 3)


def test_subsample_stride_too_large():
    with pytest.raises(DimensionError):
        subsample(ScalarGrid(np.zeros((3, 4))), ValidityMask.full(3, 4), 5)


@pytest.mark.parametrize("values, expected", [([1, 2, 3, 4, 5], 3.0), ([1, 2, 3, 4], 2.5)])
def test_median(values, expected):
    g = ScalarGrid(np.array(values, float))
    assert masked_reduce(g, ValidityMask.like(g), "median") == expected


def test_empty_mask_reductions():
    g = ScalarGrid(np.ones((2, 2)))
    m = ValidityMask.full(2, 2, False)
    assert masked_reduce(g, m, "sum") == 0
    for kind in ("mean", "median", "min", "max"):
        with pytest.raises(EmptyMaskError):
            masked_reduce(g, m, kind)


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e3, 1e3)),
       st.integers(0, 2**31 - 1))
def test_median_matches_sort_oracle(values, seed):
    flags = np.random.default_rng(seed).random(values.size) < 0.7
    flags[0] = True
    g = ScalarGrid(values)
    got = masked_reduce(g, ValidityMask(flags[None, :]), "median")
    s = sorted(values[flags].tolist())
    n = len(s)
    want = s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])
    assert got == pytest.approx(want, abs=1e-12)


def test_reductions_ignore_invalid():
    g = ScalarGrid(np.array([[1.0, 100.0, 3.0]]))
    m = ValidityMask(np.array([[True, False, True]]))
    assert masked_reduce(g, m, "sum") == 4
    assert masked_reduce(g, m, "mean") == 2
    assert masked_reduce(g, m, "max") == 3
    assert masked_reduce(g, m, "mean_abs_dev", about=2.0) == 1
