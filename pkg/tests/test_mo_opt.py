import itertools

import numpy as np
import pytest

from oracles import grid_min_norm
from ssidepth.errors import DimensionError, InsufficientDataError
from ssidepth.mo_opt import SimplexWeights, TaskGradient, combine, min_norm_2, min_norm_fw


def test_min_norm_2_examples():
    assert list(min_norm_2([1, 0], [0, 1])) == [0.5, 0.5]
    g1 = np.array([0.6, 0.8])
    assert list(min_norm_2(g1, 2 * g1)) == [1.0, 0.0]
    assert list(min_norm_2(g1, g1)) == [0.5, 0.5]
    with pytest.raises(DimensionError):
        min_norm_2([1, 0], [1, 0, 0])


def test_fw_examples():
    assert list(min_norm_fw([TaskGradient("a", [3.0, -1.0])])) == [1.0]
    w = min_norm_fw([np.eye(3)[i] for i in range(3)])
    assert np.allclose(w.alpha, 1 / 3, atol=1e-12)
    with pytest.raises(InsufficientDataError):
        min_norm_fw([])
    with pytest.raises(DimensionError):
        min_norm_fw([[1.0, 2.0], [1.0]])


def test_fw_matches_closed_form_for_two(rng):
    for _ in range(100):
        g1, g2 = rng.normal(size=(2, rng.integers(1, 9)))
        assert np.allclose(min_norm_fw([g1, g2]).alpha, min_norm_2(g1, g2).alpha, atol=1e-6)


@pytest.mark.parametrize("seed", range(40))
def test_fw_beats_simplex_grid(seed):
    rng = np.random.default_rng(seed)
    n, dim = rng.integers(2, 4), rng.integers(1, 9)
    mat = rng.normal(size=(n, dim))
    w = min_norm_fw(list(mat))
    p = combine(list(mat), w)
    assert p @ p <= grid_min_norm(mat) + 1e-6


def test_zero_gradient_gives_zero_norm(rng):
    mat = rng.normal(size=(3, 5))
    mat[1] = 0
    p = combine(list(mat), min_norm_fw(list(mat)))
    assert p @ p < 1e-8


def test_permutation_equivariance(rng):
    mat = rng.normal(size=(3, 4))
    w = min_norm_fw(list(mat)).alpha
    for perm in itertools.permutations(range(3)):
        wp = min_norm_fw([mat[i] for i in perm]).alpha
        assert np.allclose(wp, w[list(perm)], atol=1e-8)


def test_weights_on_simplex(rng):
    for _ in range(50):
        w = min_norm_fw(list(rng.normal(size=(rng.integers(1, 6), 4))))
        assert np.all(w.alpha >= 0) and abs(w.alpha.sum() - 1) <= 1e-9


def test_simplex_weights_validation():
    with pytest.raises(ValueError):
        SimplexWeights([0.7, 0.7])
    with pytest.raises(ValueError):
        SimplexWeights([1.5, -0.5])


def test_combine_examples():
    g = [np.array([2.0, 0.0]), np.array([0.0, 2.0])]
    assert combine(g, SimplexWeights([0.5, 0.5])).tolist() == [1.0, 1.0]
    assert combine(g, SimplexWeights([0.0, 1.0])).tolist() == [0.0, 2.0]
    v = np.array([1.0, -3.0])
    assert combine([v, -v], SimplexWeights([0.5, 0.5])).tolist() == [0.0, 0.0]
    with pytest.raises(DimensionError):
        combine(g, SimplexWeights([1.0]))
