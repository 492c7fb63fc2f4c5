from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_knots
from nnpspline.bspline import (
    KnotVector,
    SplineModel,
    design_matrix,
    eval_all_basis,
    eval_basis,
    eval_spline,
    greville,
    make_uniform_knots,
    piecewise_coeffs,
    uniform_piecewise_coeffs,
)
from nnpspline.exceptions import DegenerateIntervalError, DomainError


class TestMakeUniformKnots:
    def test_no_interior(self):
        kv = make_uniform_knots(0, 1, 0)
        np.testing.assert_array_equal(kv.knots, [0, 0, 0, 0, 1, 1, 1, 1])
        assert kv.n_basis == 4

    def test_two_interior(self):
        kv = make_uniform_knots(0, 3, 2)
        np.testing.assert_array_equal(kv.interior_knots, [1, 2])
        assert kv.spacing() == 1.0
        assert kv.n_basis == 6

    @pytest.mark.parametrize("n_interior", range(4, 20))
    def test_selection_grid_sizes(self, n_interior):
        kv = make_uniform_knots(0, 10, n_interior)
        assert kv.n_basis == n_interior + 4
        assert kv.has_full_multiplicity()
        assert kv.has_distinct_interior()

    @pytest.mark.parametrize("lo,hi", [(1, 1), (2, 1), (0, np.inf)])
    def test_bad_domain(self, lo, hi):
        with pytest.raises(DomainError):
            make_uniform_knots(lo, hi, 3)

    def test_negative_count(self):
        with pytest.raises(ValueError):
            make_uniform_knots(0, 1, -1)


class TestKnotVector:
    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            KnotVector([0, 0, 0, 0, 1, 0.5, 1, 1, 1])

    def test_rejects_too_short(self):
        with pytest.raises(ValueError):
            KnotVector([0, 0, 1, 1])

    def test_immutable(self):
        kv = make_uniform_knots(0, 1, 2)
        with pytest.raises(ValueError):
            kv.knots[0] = 5.0

    def test_uneven_spacing_rejected(self):
        kv = KnotVector([0, 0, 0, 0, 0.3, 1, 1, 1, 1])
        with pytest.raises(ValueError):
            kv.spacing()


class TestEvalBasis:
    def test_indicator(self):
        # zero-based: function 0 of order 1 on knots [0, 1, 2] is chi([0, 1))
        assert eval_basis([0, 1, 2], 1, 0, 0.5) == 1
        assert eval_basis([0, 1, 2], 1, 0, 1.5) == 0

    def test_hat(self):
        assert eval_basis([0, 1, 2, 3], 2, 0, 1.0) == 1

    def test_cubic_exact_rationals(self):
        t = [Fraction(j) for j in range(5)]
        assert eval_basis(t, 4, 0, Fraction(2)) == Fraction(2, 3)
        assert eval_basis(t, 4, 0, Fraction(1)) == Fraction(1, 6)
        assert eval_basis(t, 4, 0, Fraction(3)) == Fraction(1, 6)

    def test_repeated_knots_zero_over_zero(self):
        assert eval_basis([0, 0, 0, 0, 1], 4, 0, 0.0) == 1.0

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            eval_basis([0, 1, 2], 1, 2, 0.5)

    def test_local_support_exact(self, rng):
        kv = random_knots(rng, 5)
        t = kv.knots
        for i in range(kv.n_basis):
            for x in rng.uniform(0, 1, 200):
                if not t[i] < x < t[i + 4]:
                    assert eval_basis(kv, 4, i, x) == 0.0

    def test_nonnegative(self, rng):
        kv = random_knots(rng, 6)
        for x in rng.uniform(0, 1, 1000):
            assert eval_all_basis(kv, x).min() >= 0.0


class TestEvalAllBasis:
    def test_partition_of_unity(self, rng):
        for _ in range(10):
            kv = random_knots(rng, int(rng.integers(0, 10)))
            for x in rng.uniform(0, 1, 100):
                assert abs(eval_all_basis(kv, x).sum() - 1.0) <= 1e-12

    def test_left_endpoint(self):
        kv = make_uniform_knots(0, 1, 3)
        np.testing.assert_array_equal(eval_all_basis(kv, 0.0), np.eye(kv.n_basis)[0])

    def test_right_endpoint_closed(self):
        kv = make_uniform_knots(0, 1, 3)
        np.testing.assert_array_equal(eval_all_basis(kv, 1.0), np.eye(kv.n_basis)[-1])

    def test_matches_recursion(self, rng):
        kv = make_uniform_knots(-2, 3, 5)
        for x in rng.uniform(-2, 3, 50):
            ref = [eval_basis(kv, 4, i, x) for i in range(kv.n_basis)]
            np.testing.assert_allclose(eval_all_basis(kv, x), ref, atol=1e-13, rtol=0)

    def test_at_most_four_nonzeros(self, rng):
        kv = random_knots(rng, 8)
        for x in rng.uniform(0, 1, 100):
            assert np.count_nonzero(eval_all_basis(kv, x)) <= 4

    @pytest.mark.parametrize("x", [-0.1, 1.1, np.nan])
    def test_out_of_range(self, x):
        with pytest.raises(DomainError):
            eval_all_basis(make_uniform_knots(0, 1, 2), x)


class TestDesignMatrix:
    def test_small(self):
        kv = make_uniform_knots(0, 1, 0)
        X = design_matrix(kv, greville(kv)[1:])
        assert X.shape == (3, 4)
        np.testing.assert_allclose(X.sum(axis=1), 1.0, atol=1e-14)

    def test_single_left_point(self):
        kv = make_uniform_knots(0, 1, 2)
        np.testing.assert_array_equal(design_matrix(kv, [0.0]), np.eye(kv.n_basis)[:1])

    def test_rows_match_eval_all(self, rng):
        kv = random_knots(rng, 6)
        xs = rng.uniform(0, 1, 30)
        np.testing.assert_allclose(design_matrix(kv, xs), [eval_all_basis(kv, x) for x in xs], atol=1e-15)

    def test_error_names_index(self):
        with pytest.raises(DomainError, match=r"xs\[2\]"):
            design_matrix(make_uniform_knots(0, 1, 2), [0.1, 0.5, 2.0])


class TestPiecewiseCoeffs:
    # interval [0, 1] of the simple knots -3..4
    SIMPLE = KnotVector(np.arange(-3.0, 5.0))

    def test_uniform_first_column(self):
        pc = piecewise_coeffs(self.SIMPLE, 3)
        np.testing.assert_allclose(pc.a[:, 0], [1 / 6, -1 / 2, 1 / 2, -1 / 6], atol=1e-15)

    def test_uniform_last_column(self):
        pc = piecewise_coeffs(self.SIMPLE, 3)
        np.testing.assert_allclose(pc.a[:, 3], [0, 0, 0, 1 / 6], atol=1e-15)

    def test_closed_form_table(self):
        a = uniform_piecewise_coeffs(0, 1).a
        np.testing.assert_allclose(a[:, 0], [1 / 6, -1 / 2, 1 / 2, -1 / 6], atol=1e-15)
        np.testing.assert_allclose(a[:, 3], [0, 0, 0, 1 / 6], atol=1e-15)

    @pytest.mark.parametrize("t0,delta", [(0.0, 1.0), (2.5, 0.5), (-7.0, 3.0), (40.0, 2.0)])
    def test_closed_form_matches_general(self, t0, delta):
        kv = KnotVector(t0 + delta * np.arange(-3.0, 5.0))
        gen = piecewise_coeffs(kv, 3).a
        closed = uniform_piecewise_coeffs(t0, delta).a
        np.testing.assert_allclose(closed, gen, rtol=1e-12, atol=1e-12 * np.abs(gen).max())

    def test_delta_scaling(self):
        # at t_i = 0 the coefficient of x^u scales like delta^-u
        a1 = uniform_piecewise_coeffs(0, 1.0).a
        a2 = uniform_piecewise_coeffs(0, 2.0).a
        np.testing.assert_allclose(a2, a1 * (0.5 ** np.arange(4))[:, None], atol=1e-15)

    def test_bad_spacing(self):
        with pytest.raises(ValueError):
            uniform_piecewise_coeffs(0, 0)

    def test_empty_interval(self):
        kv = KnotVector([0, 0, 0, 0, 0.5, 0.5, 1, 1, 1, 1])
        with pytest.raises(DegenerateIntervalError):
            piecewise_coeffs(kv, 4)

    def test_reproduces_de_boor(self, rng):
        for _ in range(20):
            kv = random_knots(rng, int(rng.integers(0, 8)), lo=-5, hi=5)
            alpha = rng.standard_normal(kv.n_basis)
            model = SplineModel(kv, alpha)
            for i in kv.intervals():
                pc = piecewise_coeffs(kv, i)
                xs = rng.uniform(kv.knots[i], kv.knots[i + 1], 20)
                ref = eval_spline(model, xs)
                got = pc(alpha[i - 3 : i + 1], xs)
                np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-10 * np.abs(alpha).max())


class TestEvalSpline:
    def test_constant(self, rng):
        kv = random_knots(rng, 4)
        model = SplineModel(kv, np.full(kv.n_basis, 2.5))
        np.testing.assert_allclose(model(rng.uniform(0, 1, 20)), 2.5, rtol=1e-14)

    def test_endpoint_interpolation(self):
        kv = make_uniform_knots(0, 1, 3)
        alpha = np.eye(kv.n_basis)[0]
        assert eval_spline(SplineModel(kv, alpha), 0.0) == 1.0

    def test_scalar_and_shape(self):
        kv = make_uniform_knots(0, 1, 1)
        model = SplineModel(kv, np.arange(5.0))
        assert isinstance(model(0.5), float)
        assert model(np.zeros((2, 3))).shape == (2, 3)

    def test_wrong_alpha_length(self):
        with pytest.raises(ValueError):
            SplineModel(make_uniform_knots(0, 1, 1), np.ones(3))


@given(
    n_interior=st.integers(0, 12),
    x=st.floats(0.0, 1.0, allow_nan=False),
)
def test_partition_of_unity_property(n_interior, x):
    kv = make_uniform_knots(0.0, 1.0, n_interior)
    assert abs(eval_all_basis(kv, x).sum() - 1.0) <= 1e-12
