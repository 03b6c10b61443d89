import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netuq import pce
from oracles import (
    four_point_nodes,
    golub_welsch,
    hermegauss_probability,
    hermite_power_form,
    normal_moment,
    total_degree_enumeration,
)

ROW1 = np.array([1.0, 0.2, 0, 0.02, 0, 0, 0.002, 0, 0, 0])
ROW2 = np.array([1.0, 0, 0.2, 0, 0, 0, 0.02, 0, 0, 0.002])


class TestMultiIndexSet:
    def test_d2_p3_matches_listed_basis(self):
        s = pce.total_degree_set(2, 3)
        assert s.indices == (
            (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3),
        )

    def test_order_zero(self):
        s = pce.total_degree_set(5, 0)
        assert s.indices == ((0, 0, 0, 0, 0),)

    @pytest.mark.parametrize("d,p", [(3, 2), (1, 4), (4, 3), (2, 0)])
    def test_against_enumeration(self, d, p):
        s = pce.total_degree_set(d, p)
        assert set(s.indices) == total_degree_enumeration(d, p)
        assert len(s) == len(set(s.indices)) == math.comb(d + p, p)
        assert s.indices[0] == (0,) * d

    def test_graded(self):
        degrees = [sum(mi) for mi in pce.total_degree_set(3, 3)]
        assert degrees == sorted(degrees)

    @pytest.mark.parametrize("d,p", [(0, 1), (2, -1)])
    def test_invalid(self, d, p):
        with pytest.raises(ValueError):
            pce.total_degree_set(d, p)

    def test_position_and_labels(self):
        s = pce.total_degree_set(2, 3)
        assert s.position((1, 1)) == 4
        assert s.labels[4] == "(1,1)"
        assert pce.parse_label("(2,1)") == (2, 1)


class TestHermite:
    @pytest.mark.parametrize(
        "k,x,expected", [(2, 2.0, 3.0), (0, 7.3, 1.0), (3, 1.5, -1.125), (1, -0.4, -0.4)]
    )
    def test_examples(self, k, x, expected):
        assert pce.hermite_eval(k, x) == pytest.approx(expected, abs=1e-14)

    @given(k=st.integers(0, 8), x=st.floats(-4, 4))
    def test_matches_power_form(self, k, x):
        assert pce.hermite_eval(k, x) == pytest.approx(hermite_power_form(k, x), rel=1e-10, abs=1e-10)

    def test_negative_degree(self):
        with pytest.raises(ValueError):
            pce.hermite_eval(-1, 0.0)

    def test_vectorised(self):
        x = np.linspace(-2, 2, 7)
        np.testing.assert_allclose(pce.hermite_eval(3, x), x**3 - 3 * x, atol=1e-13)
        table = pce.hermite_table(3, x)
        np.testing.assert_allclose(table[2], x**2 - 1, atol=1e-13)


class TestBasis:
    @pytest.mark.parametrize(
        "mi,xi,expected", [((1, 1), (2, 3), 6.0), ((0, 0), (0.3, -9), 1.0), ((2, 1), (1, -1), 0.0)]
    )
    def test_basis_eval(self, mi, xi, expected):
        assert pce.basis_eval(mi, xi) == pytest.approx(expected)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pce.basis_eval((1, 0), (1.0,))

    @pytest.mark.parametrize("mi,expected", [((0, 0), 1.0), ((2, 0), 2.0), ((3, 1), 6.0)])
    def test_norm_sq(self, mi, expected):
        assert pce.basis_norm_sq(mi) == expected

    def test_norm_sq_against_quadrature(self):
        s = pce.total_degree_set(2, 3)
        rule = pce.gauss_hermite_rule(4, 2)
        for mi in s:
            vals = np.array([pce.basis_eval(mi, xi) for xi in rule.nodes])
            assert rule.weights @ vals**2 == pytest.approx(pce.basis_norm_sq(mi), abs=1e-10)


class TestQuadrature:
    def test_single_point(self):
        r = pce.gauss_hermite_rule(1, 2)
        np.testing.assert_array_equal(r.nodes, [[0.0, 0.0]])
        np.testing.assert_array_equal(r.weights, [1.0])

    def test_sixteen_points(self):
        r = pce.gauss_hermite_rule(4, 2)
        assert r.nodes.shape == (16, 2)
        assert r.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_four_point_closed_form(self):
        x, _ = pce.gauss_hermite_1d(4)
        np.testing.assert_allclose(x, four_point_nodes(), atol=1e-13)

    @pytest.mark.parametrize("n", range(1, 12))
    def test_against_independent_rules(self, n):
        x, w = pce.gauss_hermite_1d(n)
        xo, wo = golub_welsch(n)
        xn, wn = hermegauss_probability(n)
        np.testing.assert_allclose(x, xo, atol=1e-12)
        np.testing.assert_allclose(w, wo, atol=1e-12)
        np.testing.assert_allclose(x, xn, atol=1e-12)
        np.testing.assert_allclose(w, wn, atol=1e-12)

    @pytest.mark.parametrize("n", range(1, 7))
    def test_moment_exactness(self, n):
        x, w = pce.gauss_hermite_1d(n)
        for k in range(2 * n):
            assert w @ x**k == pytest.approx(normal_moment(k), abs=1e-10)

    def test_tensor_ordering(self):
        r = pce.gauss_hermite_rule(2, 2)
        np.testing.assert_allclose(r.nodes[:, 0], [-1, -1, 1, 1])
        np.testing.assert_allclose(r.nodes[:, 1], [-1, 1, -1, 1])

    def test_invalid(self):
        with pytest.raises(ValueError):
            pce.gauss_hermite_1d(0)


class TestProjection:
    def setup_method(self):
        self.basis = pce.total_degree_set(2, 3)
        self.rule = pce.gauss_hermite_rule(4, 2)

    def test_orthogonality(self):
        psi = self.basis.vandermonde(self.rule.nodes)
        gram = psi.T @ (self.rule.weights[:, None] * psi)
        np.testing.assert_allclose(gram, np.diag(self.basis.norms_sq), atol=1e-10)

    def test_project_basis_function(self):
        f = self.rule.nodes[:, 0] * self.rule.nodes[:, 1]
        e = pce.nisp_project(f, self.basis, self.rule)
        expected = np.zeros(10)
        expected[self.basis.position((1, 1))] = 1.0
        np.testing.assert_allclose(e.coeffs[0], expected, atol=1e-12)

    def test_project_constant(self):
        e = pce.nisp_project(np.full(16, 5.0), self.basis, self.rule)
        np.testing.assert_allclose(e.coeffs[0], [5.0] + [0.0] * 9, atol=1e-12)

    def test_recovers_input_row(self):
        xi1 = self.rule.nodes[:, 0]
        u1 = 1 + 0.2 * xi1 + 0.02 * (xi1**2 - 1) + 0.002 * (xi1**3 - 3 * xi1)
        e = pce.nisp_project(u1, self.basis, self.rule)
        np.testing.assert_allclose(e.coeffs[0], ROW1, atol=1e-10)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            pce.nisp_project(np.zeros(15), self.basis, self.rule)
        with pytest.raises(ValueError):
            pce.nisp_project(np.zeros(4), self.basis, pce.gauss_hermite_rule(4, 1))

    @settings(max_examples=30, deadline=None)
    @given(
        d=st.integers(1, 3),
        p=st.integers(0, 3),
        seed=st.integers(0, 2**31),
        extra=st.integers(0, 2),
    )
    def test_roundtrip(self, d, p, seed, extra):
        b = pce.total_degree_set(d, p)
        r = pce.gauss_hermite_rule(p + 1 + extra, d)
        e = pce.PceExpansion(b, np.random.default_rng(seed).standard_normal((2, len(b))))
        evals = np.array([pce.eval_expansion(e, xi) for xi in r.nodes])
        np.testing.assert_allclose(pce.nisp_project(evals, b, r).coeffs, e.coeffs, atol=1e-10)


class TestExpansion:
    def setup_method(self):
        self.basis = pce.total_degree_set(2, 3)

    def test_eval_zero(self):
        e = pce.PceExpansion(self.basis, np.zeros((3, 10)))
        np.testing.assert_array_equal(pce.eval_expansion(e, (0.4, 1.2)), np.zeros(3))

    def test_eval_row2_at_origin(self):
        e = pce.PceExpansion(self.basis, ROW2)
        np.testing.assert_allclose(pce.eval_expansion(e, (0.0, 0.0)), [1.0], atol=1e-15)

    def test_eval_single_term(self):
        c = np.zeros(10)
        c[self.basis.position((2, 0))] = 2.0
        e = pce.PceExpansion(self.basis, c)
        np.testing.assert_allclose(pce.eval_expansion(e, (1.0, 0.0)), [0.0], atol=1e-15)

    def test_eval_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pce.eval_expansion(pce.PceExpansion(self.basis, ROW1), (1.0,))

    def test_column_mismatch(self):
        with pytest.raises(ValueError):
            pce.PceExpansion(self.basis, np.zeros((1, 9)))

    def test_moments(self):
        mean, var = pce.moments(pce.PceExpansion(self.basis, ROW1))
        assert mean[0] == 1.0
        assert var[0] == pytest.approx(0.040824, abs=1e-15)
        mean, var = pce.moments(pce.PceExpansion(self.basis, np.zeros(10)))
        assert (mean[0], var[0]) == (0.0, 0.0)
        c = np.zeros(10)
        c[1] = 3.0
        mean, var = pce.moments(pce.PceExpansion(self.basis, c))
        assert (mean[0], var[0]) == (0.0, 9.0)

    def test_csv_roundtrip(self):
        e = pce.PceExpansion(self.basis, np.vstack([ROW1, ROW2]))
        text = e.to_csv()
        header = next(csv.reader(io.StringIO(text)))
        assert header == ["component"] + [f"({a},{b})" for a, b in self.basis]
        assert text.startswith('component,"(0,0)","(1,0)"')
        back = pce.PceExpansion.from_csv(text)
        np.testing.assert_array_equal(back.coeffs, e.coeffs)
        assert back.basis == e.basis

    def test_csv_rejects_bad_header(self):
        with pytest.raises(ValueError):
            pce.PceExpansion.from_csv("node,(0,0)\n0,1.0\n")
