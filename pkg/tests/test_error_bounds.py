import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netuq import pce
from netuq.error_bounds import (
    BoundReport,
    CoefficientProjector,
    a_posteriori_bound,
    a_posteriori_report,
    a_priori_bound,
    a_priori_report,
    embed,
    estimate_lipschitz,
    gaussian_pairs,
    in_plane_aposteriori,
    in_plane_apriori,
    in_plane_error,
    orthogonal_complement_samples,
    out_of_plane_error,
    project,
    weighted_norm,
)
from netuq.synthetic import contraction_with_norm
from netuq.verification import affine_bound_ratios, linear_pce_study

HIGH = pce.total_degree_set(2, 3)
LOW = pce.total_degree_set(2, 1)
ROW1 = np.array([1.0, 0.2, 0, 0.02, 0, 0, 0.002, 0, 0, 0])


def quadrature_norm(coeffs, basis):
    """Second moment from sampling the expansion on an exact tensor rule."""
    rule = pce.gauss_hermite_rule(basis.order + 1, basis.dim)
    vals = np.asarray(coeffs).reshape(-1, len(basis)) @ basis.vandermonde(rule.nodes).T
    return math.sqrt(float(np.sum(rule.weights * vals**2)))


class TestWeightedNorm:
    def test_single_term(self):
        c = np.zeros(10)
        c[HIGH.position((2, 1))] = 3.0
        assert weighted_norm(c, HIGH) == pytest.approx(3 * math.sqrt(2), abs=1e-14)

    def test_input_row(self):
        assert weighted_norm(ROW1, HIGH) == pytest.approx(math.sqrt(1.040824), abs=1e-14)

    def test_euclidean(self):
        assert weighted_norm([3.0, 4.0], None) == 5.0

    def test_flat_equals_stacked(self):
        c = np.random.default_rng(0).standard_normal((3, 10))
        assert weighted_norm(c, HIGH) == weighted_norm(c.ravel(), HIGH)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), rows=st.integers(1, 3))
    def test_matches_sampled_second_moment(self, seed, rows):
        c = np.random.default_rng(seed).standard_normal((rows, 10))
        assert weighted_norm(c, HIGH) == pytest.approx(quadrature_norm(c, HIGH), rel=1e-10)


class TestProjector:
    def test_slots(self):
        np.testing.assert_array_equal(CoefficientProjector(HIGH, LOW).slots, [0, 1, 2])

    def test_identity(self):
        proj = CoefficientProjector(HIGH, HIGH)
        c = np.arange(20.0)
        np.testing.assert_array_equal(project(proj, c), c)
        np.testing.assert_array_equal(embed(proj, c), c)

    def test_order_zero(self):
        proj = CoefficientProjector(HIGH, pce.total_degree_set(2, 0))
        np.testing.assert_array_equal(project(proj, np.vstack([ROW1, 2 * ROW1])), [[1.0], [2.0]])

    def test_layout_preserved(self):
        proj = CoefficientProjector(HIGH, LOW)
        assert project(proj, np.zeros((2, 10))).shape == (2, 3)
        assert project(proj, np.zeros(20)).shape == (6,)
        assert embed(proj, np.zeros(6)).shape == (20,)

    def test_incompatible(self):
        with pytest.raises(ValueError):
            CoefficientProjector(LOW, HIGH)
        with pytest.raises(ValueError):
            CoefficientProjector(HIGH, pce.total_degree_set(3, 1))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_is_weighted_least_squares_minimiser(self, seed):
        proj = CoefficientProjector(HIGH, LOW)
        c = np.random.default_rng(seed).standard_normal(10)
        # weighted least squares over the low-order subspace, solved densely
        W = np.sqrt(HIGH.norms_sq)
        E = np.zeros((10, 3))
        E[[0, 1, 2], [0, 1, 2]] = 1.0
        best, *_ = np.linalg.lstsq(W[:, None] * E, W * c, rcond=None)
        np.testing.assert_allclose(project(proj, c), best, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), rows=st.integers(1, 4))
    def test_pythagoras(self, seed, rows):
        proj = CoefficientProjector(HIGH, LOW)
        c = np.random.default_rng(seed).standard_normal(rows * 10)
        inside = weighted_norm(project(proj, c), LOW)
        outside = out_of_plane_error(c, proj)
        assert inside**2 + outside**2 == pytest.approx(weighted_norm(c, HIGH) ** 2, rel=1e-12)
        np.testing.assert_array_equal(project(proj, embed(proj, project(proj, c))), project(proj, c))

    def test_complement_samples(self):
        proj = CoefficientProjector(HIGH, LOW)
        samples = list(orthogonal_complement_samples(proj, 3, 5, 1))
        assert len(samples) == 5
        for v in samples:
            np.testing.assert_array_equal(project(proj, v), np.zeros(9))


class TestLipschitz:
    def test_identity(self):
        est = estimate_lipschitz(lambda v: v, gaussian_pairs(4), 50)
        assert est.value == pytest.approx(1.0, abs=1e-14)
        assert est.n_pairs == 50
        assert not est.is_contraction

    def test_half(self):
        est = estimate_lipschitz(lambda v: 0.5 * v + 3.0, gaussian_pairs(3), 20)
        assert est.value == pytest.approx(0.5, abs=1e-14)
        assert est.is_contraction

    def test_affine_close_to_spectral_norm(self):
        M = contraction_with_norm(4, 0.8, np.random.default_rng(1))
        est = estimate_lipschitz(lambda v: M @ v, gaussian_pairs(4), 2000, rng_seed=2)
        assert 0.9 * 0.8 <= est.value <= 0.8 + 1e-12

    def test_coincident_pairs_skipped(self):
        est = estimate_lipschitz(lambda v: v, lambda rng: (np.ones(2), np.ones(2)), 5)
        assert (est.value, est.n_pairs) == (0.0, 0)

    def test_weighted(self):
        est = estimate_lipschitz(lambda v: 0.25 * v, gaussian_pairs(10), 10, basis=HIGH)
        assert est.value == pytest.approx(0.25, abs=1e-14)

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            estimate_lipschitz(lambda v: v, gaussian_pairs(1), 0)

    def test_reproducible(self):
        M = np.array([[0.3, 0.2], [0.0, 0.6]])
        a = estimate_lipschitz(lambda v: M @ v, gaussian_pairs(2), 30, rng_seed=4)
        b = estimate_lipschitz(lambda v: M @ v, gaussian_pairs(2), 30, rng_seed=4)
        assert a == b


class TestBounds:
    def test_a_priori_example(self):
        # defect |1 - 0.9| = 0.1, factor 1 / (1 - 0.5) = 2
        assert a_priori_bound(np.array([1.0]), lambda v: 0.9 * v, 0.5) == pytest.approx(0.2, abs=1e-15)

    def test_a_posteriori_example(self):
        assert a_posteriori_bound(np.array([1.0]), lambda v: v - 0.1, 0.5) == pytest.approx(0.2, abs=1e-15)

    @pytest.mark.parametrize("L", [1.0, 1.5, -0.1])
    def test_rejects_non_contraction(self, L):
        with pytest.raises(ValueError):
            a_priori_bound(np.zeros(1), lambda v: v, L)
        with pytest.raises(ValueError):
            a_posteriori_bound(np.zeros(1), lambda v: v, L)

    def test_zero_defect(self):
        assert a_priori_bound(np.array([2.0]), lambda v: 0.5 * v + 1, 0.5) == 0.0

    def test_scalar_ratios(self):
        r = affine_bound_ratios(1)
        # true error |2 - 30/14|; both bounds are within the factor 1..10 band
        assert r["true"] == pytest.approx(abs(2.0 - 3.0 / 1.4), abs=1e-14)
        for k in ("a_priori", "a_posteriori"):
            assert 1.0 <= r[k] <= 10.0

    def test_vector_ratios(self):
        r = affine_bound_ratios(4)
        for k in ("a_priori", "a_posteriori"):
            assert 1.0 <= r[k] <= 10.0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), dim=st.integers(1, 6), L=st.floats(0.05, 0.95))
    def test_bounds_dominate_true_error(self, seed, dim, L):
        rng = np.random.default_rng(seed)
        M = contraction_with_norm(dim, L, rng)
        Mbar = M + contraction_with_norm(dim, 0.02, rng)
        b, bbar = rng.standard_normal(dim), rng.standard_normal(dim)
        x = np.linalg.solve(np.eye(dim) - M, b)
        xbar = np.linalg.solve(np.eye(dim) - Mbar, bbar)
        true = np.linalg.norm(x - xbar)
        assert a_priori_bound(xbar, lambda v: M @ v + b, L) >= true * (1 - 1e-9)
        Lbar = np.linalg.norm(Mbar, 2)
        if Lbar < 1:
            assert a_posteriori_bound(x, lambda v: Mbar @ v + bbar, Lbar) >= true * (1 - 1e-9)

    def test_report_json(self):
        rep = a_priori_report(np.array([1.0]), lambda v: 0.9 * v, 0.5)
        doc = json.loads(rep.to_json())
        assert doc["bound_type"] == "a_priori"
        assert doc["bound"] == pytest.approx(0.2)
        assert "true_error" not in doc
        rep = BoundReport("a_posteriori", 0.5, 0.1, 0.2, true_error=0.15)
        assert json.loads(rep.to_json())["true_error"] == 0.15
        assert a_posteriori_report(np.array([1.0]), lambda v: v, 0.2).defect_norm == 0.0


class TestInPlane:
    def setup_method(self):
        self.proj = CoefficientProjector(HIGH, LOW)

    def test_in_plane_error_ignores_high_modes(self):
        xbar = ROW1.copy()
        x = project(self.proj, xbar)
        assert in_plane_error(x, xbar, self.proj) == 0.0
        assert out_of_plane_error(xbar, self.proj) == pytest.approx(math.sqrt(0.0004 * 2 + 0.000004 * 6))

    def test_in_plane_error_value(self):
        x = np.array([1.0, 0.0, 0.0])
        assert in_plane_error(x, ROW1, self.proj) == pytest.approx(0.2, abs=1e-15)

    def test_in_plane_apriori_zero_for_fixed_point(self):
        # step keeps low-order coefficients fixed at ROW1's
        target = project(self.proj, ROW1)
        assert in_plane_apriori(ROW1, lambda v: 0.5 * v + 0.5 * target, self.proj, 0.5) == 0.0

    def test_in_plane_aposteriori_value(self):
        # truth step shifts the mean by 0.1; factor 1 / (1 - 0.5)
        def step(v):
            out = v.copy()
            out[0] += 0.1
            return out

        x = np.array([1.0, 0.0, 0.0])
        assert in_plane_aposteriori(x, step, self.proj, 0.5) == pytest.approx(0.2, abs=1e-15)

    def test_linear_network_in_plane_error(self):
        r = linear_pce_study()
        assert r["status"] == ("converged", "converged")
        assert r["in_plane_error"] <= 1e-10
        assert r["x_perp_spread"] <= 1e-12
