import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snrlab.corpus import cyclic_dataset, make_circle_embeddings
from snrlab.errors import InvalidQuadratureError
from snrlab.likelihood import (
    error_field,
    exact_nll,
    geometric_grid,
    nll_ar_contour,
    nll_diagonal,
)


@pytest.fixture(scope="module")
def k5():
    data = cyclic_dataset(5)
    return data, make_circle_embeddings(5)


def test_exact_nll_uniform_support(k5):
    data, _ = k5
    assert np.isclose(exact_nll(data.sequences[0], data), np.log(5))
    assert exact_nll(np.array([0, 0, 0, 0, 0]), data) == np.inf


def test_error_field_at_zero_snr_is_one(k5):
    data, emb = k5
    fs = error_field(data.sequences[0], np.zeros(5), 10, 1, data, emb)
    # z = 0 deterministically, x-hat = 0 by symmetry, |x_i| = 1
    assert np.allclose(fs.E, 1.0)
    assert np.allclose(fs.stderr, 0.0)


def test_error_field_bounds_and_decay(k5):
    data, emb = k5
    low = error_field(data.sequences[0], np.full(5, 0.5), 400, 2, data, emb)
    high = error_field(data.sequences[0], np.full(5, 30.0), 400, 2, data, emb)
    assert np.all(low.E >= 0) and np.all(low.E <= 4)
    assert np.all(high.E <= low.E)
    assert np.all(high.E < 1e-3)


def test_geometric_grid_shape():
    grid = geometric_grid(50.0, 40)
    assert grid[0] == 0.0
    assert np.isclose(grid[-1], 50.0)
    assert np.all(np.diff(grid) > 0)
    assert grid.size == 40


def test_geometric_grid_rejects_bad_args():
    with pytest.raises(InvalidQuadratureError):
        geometric_grid(50.0, 1)
    with pytest.raises(InvalidQuadratureError):
        geometric_grid(-1.0, 10)


def test_diagonal_nll_matches_exact(k5):
    data, emb = k5
    grid = geometric_grid(50.0, 40)
    est = nll_diagonal(data.sequences[0], 50.0, grid, 2000, 3, data, emb)
    assert abs(est.estimate - np.log(5)) <= 0.05
    assert est.stderr > 0
    assert est.contour == "diagonal"


def test_ar_contour_per_token_breakdown(k5):
    data, emb = k5
    grid = geometric_grid(50.0, 40)
    est = nll_ar_contour(data.sequences[0], 50.0, grid, 2000, 3, data, emb)
    assert abs(est.estimate - np.log(5)) <= 0.05
    # the first token carries all the information; the rest are deterministic
    assert abs(est.per_token[0] - np.log(5)) <= 0.05
    assert np.all(est.per_token[1:] <= 0.02)


@given(st.integers(0, 20))
@settings(max_examples=5, deadline=None)
def test_contours_agree_within_mc_noise(seed):
    data = cyclic_dataset(5)
    emb = make_circle_embeddings(5)
    grid = geometric_grid(50.0, 60)
    a = nll_diagonal(data.sequences[1], 50.0, grid, 1500, seed, data, emb)
    b = nll_ar_contour(data.sequences[1], 50.0, grid, 1500, seed, data, emb)
    sigma = np.hypot(a.stderr, b.stderr)
    assert abs(a.estimate - b.estimate) <= max(4 * sigma, 0.1)


def test_nll_deterministic_given_seed(k5):
    data, emb = k5
    grid = geometric_grid(50.0, 30)
    a = nll_diagonal(data.sequences[0], 50.0, grid, 500, 9, data, emb)
    b = nll_diagonal(data.sequences[0], 50.0, grid, 500, 9, data, emb)
    assert a.estimate == b.estimate


def test_truncation_term_shrinks_with_gamma_max(k5):
    data, emb = k5
    small = nll_diagonal(data.sequences[0], 5.0, geometric_grid(5.0, 40), 1500, 5, data, emb)
    large = nll_diagonal(data.sequences[0], 50.0, geometric_grid(50.0, 40), 1500, 5, data, emb)
    assert large.truncation < small.truncation
    assert large.truncation >= 0.0
