import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlstm.errors import DimensionError, NonFiniteError
from mlstm.numerics import (SeededRng, finite_difference_gradient, seeded_uniform_init,
                            sigmoid, stable_softmax)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_array_equal(stable_softmax([0.0, 0.0]), [0.5, 0.5])

    def test_large_logits_do_not_overflow(self):
        np.testing.assert_array_equal(stable_softmax([1000.0, 1000.0]), [0.5, 0.5])

    def test_direct_evaluation(self):
        expected = math.e / (math.e + 1.0)
        np.testing.assert_allclose(stable_softmax([1.0, 0.0]), [expected, 1 - expected], atol=1e-12)
        np.testing.assert_allclose(stable_softmax([1.0, 0.0]), [0.73106, 0.26894], atol=1e-5)

    def test_empty_is_dimension_error(self):
        with pytest.raises(DimensionError):
            stable_softmax([])

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteError):
            stable_softmax([0.0, np.inf])

    @given(vectors)
    def test_on_simplex(self, v):
        p = stable_softmax(v)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) <= 1e-12

    @given(vectors, st.floats(-1e3, 1e3))
    def test_shift_invariance(self, v, c):
        np.testing.assert_allclose(stable_softmax(v + c), stable_softmax(v), atol=1e-12, rtol=0)


@given(st.floats(-30, 30))
def test_activation_ranges(x):
    s = sigmoid(x)
    assert 0.0 < s < 1.0
    assert -1.0 < np.tanh(x / 10) < 1.0


def test_sigmoid_extremes_are_finite():
    out = sigmoid(np.array([-1e4, 0.0, 1e4]))
    assert np.all(np.isfinite(out))
    assert out[1] == 0.5


class TestFiniteDifference:
    def test_square(self):
        g = finite_difference_gradient(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
        assert g[0] == pytest.approx(6.0, abs=1e-6)

    def test_constant(self):
        g = finite_difference_gradient(lambda x: 4.2, np.ones(5))
        np.testing.assert_array_equal(g, np.zeros(5))

    def test_sigmoid_sum_at_zero(self):
        g = finite_difference_gradient(lambda x: float(np.sum(sigmoid(x))), np.zeros(4), 1e-5)
        np.testing.assert_allclose(g, 0.25, atol=1e-6)

    def test_quadratic_matches_analytic(self, rng):
        A = rng.normal(size=(4, 4))
        A = A + A.T
        x = rng.normal(size=4)
        g = finite_difference_gradient(lambda v: float(v @ A @ v / 2), x, 1e-4)
        np.testing.assert_allclose(g, A @ x, atol=1e-8)

    def test_does_not_modify_input(self):
        x = np.array([1.0, 2.0])
        finite_difference_gradient(lambda v: float(v.sum()), x)
        np.testing.assert_array_equal(x, [1.0, 2.0])

    def test_keeps_extended_precision(self):
        x = np.array([0.5], dtype=np.longdouble)
        g = finite_difference_gradient(lambda v: v[0] ** 3, x, 1e-6)
        assert g.dtype == np.longdouble
        assert abs(float(g[0]) - 0.75) < 1e-10

    def test_non_finite_objective(self):
        with pytest.raises(NonFiniteError):
            finite_difference_gradient(lambda v: float("nan"), np.zeros(2))

    def test_bad_step(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda v: 0.0, np.zeros(2), 0.0)


class TestInit:
    def test_same_seed_identical(self):
        a = seeded_uniform_init(5, 7, 0.08, SeededRng(3))
        b = seeded_uniform_init(5, 7, 0.08, SeededRng(3))
        np.testing.assert_array_equal(a, b)

    def test_bound(self):
        m = seeded_uniform_init(50, 50, 0.08, SeededRng(1))
        assert m.shape == (50, 50)
        assert np.all(np.abs(m) <= 0.08)

    def test_distinct_seeds_differ(self):
        a = seeded_uniform_init(3, 3, 0.08, SeededRng(1))
        b = seeded_uniform_init(3, 3, 0.08, SeededRng(2))
        assert np.any(a != b)

    @pytest.mark.parametrize("rows,cols", [(0, 3), (3, 0), (-1, 2)])
    def test_bad_dims(self, rows, cols):
        with pytest.raises(DimensionError):
            seeded_uniform_init(rows, cols, 0.1, SeededRng(0))

    def test_rng_stream_is_pinned(self):
        # Philox output is specified by the algorithm; pin a few draws so an
        # accidental change of bit generator shows up.
        first = SeededRng(42).random(3)
        again = SeededRng(42).random(3)
        np.testing.assert_array_equal(first, again)
        ref = np.random.Generator(np.random.Philox(key=42)).random(3)
        np.testing.assert_array_equal(first, ref)
