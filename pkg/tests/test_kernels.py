import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shepard_dp.kernels import GAUSSIAN_CUTOFF, ShapeFunction, eval_shape, sigma_from_fill, support_radius


def test_wendland_known_values():
    k = ShapeFunction("wendland42", 2.0)
    assert eval_shape(k, 0.0) == 1.0
    # sigma r = 1/2: (1/2)^4 * 3
    assert eval_shape(k, 0.25) == pytest.approx(0.1875, abs=1e-15)
    assert eval_shape(k, 0.5) == 0.0
    assert eval_shape(k, 3.0) == 0.0


def test_gaussian_and_cutoff():
    k = ShapeFunction("gaussian", 3.0)
    assert eval_shape(k, 0.5) == pytest.approx(math.exp(-2.25))
    assert eval_shape(k, k.cutoff_radius) == pytest.approx(GAUSSIAN_CUTOFF, rel=1e-9)
    assert support_radius(k) == math.inf


def test_support_radius():
    assert support_radius(ShapeFunction("wendland42", 4.0)) == 0.25


def test_array_input_keeps_shape():
    k = ShapeFunction(sigma=1.0)
    out = eval_shape(k, np.array([[0.0, 0.5], [1.0, 2.0]]))
    assert out.shape == (2, 2)
    assert out[1, 0] == 0.0


@pytest.mark.parametrize("r", [-1e-12, float("nan")])
def test_invalid_distance_rejected(r):
    with pytest.raises(ValueError):
        eval_shape(ShapeFunction(), r)


@pytest.mark.parametrize("kind,sigma", [("wendland", 1.0), ("gaussian", 0.0), ("wendland42", -2.0), ("wendland42", math.inf)])
def test_invalid_shape_function(kind, sigma):
    with pytest.raises(ValueError):
        ShapeFunction(kind, sigma)


def test_sigma_from_fill():
    assert sigma_from_fill(0.1, 0.05) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sigma_from_fill(0.1, 0.0)


@given(st.floats(0.1, 50.0), st.lists(st.floats(0.0, 2.0), min_size=2, max_size=20))
def test_wendland_nonnegative_nonincreasing(sigma, rs):
    k = ShapeFunction("wendland42", sigma)
    r = np.sort(np.array(rs))
    w = eval_shape(k, r)
    assert np.all(w >= 0) and np.all(w <= 1 + 2e-16)
    assert np.all(np.diff(w) <= 1e-15)
    assert np.all(w[r >= 1.0 / sigma] == 0.0)
