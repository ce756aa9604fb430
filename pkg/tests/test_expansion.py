"""Second-order expansion tools: shift/twist series, Hermite systems,
orthogonality pairings, and the balancing solver."""

import math

import numpy as np
import pytest

from youngstab import (
    AttachedParams,
    BalanceConfig,
    ExponentTriple,
    GaussianPolynomial,
    QuadratureScheme,
    balance,
    hermite_mode,
    hermite_system,
    integrate,
    lp_norm_gausspoly,
    orthogonality_index_set,
    orthogonality_residuals,
    product,
    sharp_flat_split,
    standard_gaussians,
    tdoubleprime,
    tdoubleprime_gaussian_expansion,
    tprime,
    tprime_gaussian_expansion,
)
from youngstab.gausspoly import UnsupportedError
from conftest import random_pure

GAMMA = 3.0 * math.pi


class TestShiftExpansion:
    def test_t_factor_exact_symmetric(self, p_sym):
        rec = tprime_gaussian_expansion(p_sym, np.eye(2))
        assert rec["t_factor"] == pytest.approx(-1.0 / 3.0, abs=1e-14)

    def test_frozen_constants_symmetric(self, p_sym):
        rec = tprime_gaussian_expansion(p_sym, np.eye(2))
        assert rec["c2"] == pytest.approx(-math.pi**3 / (54.0 * math.sqrt(3.0) * GAMMA**4), rel=1e-12)
        assert rec["c2"] == pytest.approx(-4.2015614649e-05, rel=1e-9)
        assert rec["x_factor"] == pytest.approx(math.pi**2 / (18.0 * GAMMA**4), rel=1e-12)
        assert rec["x_factor"] == pytest.approx(6.9493267244e-05, rel=1e-9)

    def test_t_factor_negative_on_random_triples(self, rng):
        for _ in range(10):
            p1, p2 = rng.uniform(1.1, 1.9, size=2)
            s = 2.0 - 1.0 / p1 - 1.0 / p2
            if not 1e-3 < s < 1.0 - 1e-3:
                continue
            p = ExponentTriple(p1, p2, 1.0 / s)
            assert tprime_gaussian_expansion(p, np.eye(2))["t_factor"] < 0

    def test_constants_do_not_depend_on_a(self, rng, p_sym):
        base = tprime_gaussian_expansion(p_sym, np.eye(2))
        for _ in range(5):
            A = rng.standard_normal((2, 2))
            rec = tprime_gaussian_expansion(p_sym, A)
            assert rec["c2"] == pytest.approx(base["c2"], rel=1e-8)

    def test_tprime_closed_vs_quadrature(self, p_sym, g3):
        A = 0.2 * np.eye(2)
        closed = tprime(*g3, A, engine="closed-form")
        quad = tprime(*g3, A, engine="quadrature", scheme=QuadratureScheme.gh(40))
        assert quad.real == pytest.approx(closed.real, rel=1e-9)
        assert closed.real == pytest.approx(
            tprime_gaussian_expansion(p_sym, A)["c2"] * 0.2**4, rel=2e-2
        )

    def test_tprime_vanishes_at_euclidean(self, g3):
        assert tprime(*g3, np.zeros((2, 2))) == 0.0

    def test_closed_engine_rejects_coupled_third_slot(self, rng, g3):
        f3 = random_pure(rng, 3, coupled=True)
        with pytest.raises(UnsupportedError):
            tprime(g3[0], g3[1], f3, np.eye(2), engine="closed-form")

    def test_unknown_engine(self, g3):
        with pytest.raises(ValueError):
            tprime(*g3, np.eye(2), engine="magic")


class TestTwistExpansion:
    def test_frozen_twist_constant(self, p_sym):
        rec = tdoubleprime_gaussian_expansion(p_sym, np.eye(2))
        assert rec["c2b"] == pytest.approx(-6.6869927584e-06, rel=1e-9)

    def test_b_squared_scaling_closed(self, g3):
        A = 0.05 * np.eye(2)
        ratios = [tdoubleprime(*g3, A, b, engine="closed-form").real / b**2 for b in (0.5, 1.0, 2.0)]
        assert all(r < 0 for r in ratios)
        assert max(ratios) - min(ratios) <= 0.02 * abs(np.mean(ratios))

    def test_closed_vs_quadrature(self, g3):
        A = 0.05 * np.eye(2)
        closed = tdoubleprime(*g3, A, 1.0, engine="closed-form")
        quad = tdoubleprime(*g3, A, 1.0, engine="quadrature", scheme=QuadratureScheme.gh(32))
        assert quad.real == pytest.approx(closed.real, rel=1e-6)

    def test_vanishes_without_twist_or_shift(self, g3):
        assert tdoubleprime(*g3, np.eye(2), 0.0) == 0.0
        assert tdoubleprime(*g3, np.zeros((2, 2)), 1.0) == 0.0


class TestHermiteSystem:
    @pytest.mark.parametrize("t", [1.0, 2.25])
    def test_gram_is_identity(self, t):
        hs = hermite_system(t, 8)
        assert np.max(np.abs(hs.gram - np.eye(9))) < 1e-10

    def test_p0_value(self):
        for t in (1.0, 2.25, 0.37):
            assert hermite_system(t, 3).coeffs[0, 0] == pytest.approx((2 * t) ** 0.25, abs=1e-13)

    def test_triangular_coefficients(self):
        hs = hermite_system(1.7, 6)
        for k in range(7):
            assert np.all(hs.coeffs[k, k + 1 :] == 0.0)
            assert hs.coeffs[k, k] > 0

    def test_odd_even_structure(self):
        # the weight is even, so P_k has the parity of k
        hs = hermite_system(2.25, 5)
        for k in range(6):
            sub = hs.coeffs[k, (k % 2 == 0)::2] if k % 2 else hs.coeffs[k, 1::2]
            assert np.allclose(hs.coeffs[k, (1 - k % 2)::2][: (k // 2) + 1] * 0,
                               hs.coeffs[k, (1 - k % 2)::2][: (k // 2) + 1], atol=1e-12) or np.all(
                np.abs(hs.coeffs[k, (1 - k % 2)::2]) < 1e-12
            )

    def test_lipschitz_in_t(self):
        # finite-difference slope of the coefficients stays bounded
        for h in (1e-6, 1e-5):
            a = hermite_system(2.25, 4).coeffs
            b = hermite_system(2.25 + h, 4).coeffs
            assert np.max(np.abs(a - b)) / h < 1e3

    def test_input_validation(self):
        with pytest.raises(ValueError):
            hermite_system(0.0, 4)
        with pytest.raises(ValueError):
            hermite_system(1.0, 9)


class TestModesAndResiduals:
    def test_index_set_size_and_order(self):
        idx = orthogonality_index_set(1)
        assert len(idx) == 21
        assert idx[0] == ("re", 1, (0, 0, 0))
        assert idx[-1][0] == "im" and idx[-1][1] == 3
        assert len(set(idx)) == 21

    def test_modes_are_orthonormal(self, p_sym):
        # P_alpha g against P_beta g under the inverse-Gaussian pairing: the
        # weight rate gamma (p - 1) makes the product weight integrate cleanly
        tau, gam, pj = p_sym.taus[0], p_sym.gammas[0], p_sym.ps[0]
        alphas = [(0, 0, 0), (1, 0, 0), (0, 1, 1), (2, 0, 0)]
        for a in alphas:
            for b in alphas:
                ma = hermite_mode(a, tau, gam)
                wb = hermite_mode(b, tau, gam * (pj - 1.0))
                got = integrate(product(ma, wb)).real
                assert got == pytest.approx(1.0 if a == b else 0.0, abs=1e-11)

    def test_single_mode_hits_single_coordinate(self, p_sym, g3):
        eps = 0.01
        alpha = (1, 0, 0)
        pert = hermite_mode(alpha, p_sym.taus[1], p_sym.gammas[1]).scale(eps)
        zero = GaussianPolynomial.zero(3)
        res = orthogonality_residuals((zero, pert, zero), p_sym)
        hits = {k: v for k, v in zip(res.index, res.values) if abs(v) > 1e-12}
        assert hits == {("re", 2, alpha): pytest.approx(eps, rel=1e-12)}

    def test_degree_three_mode_is_orthogonal(self, p_sym):
        pert = hermite_mode((1, 1, 1), p_sym.taus[0], p_sym.gammas[0]).scale(0.02)
        zero = GaussianPolynomial.zero(3)
        res = orthogonality_residuals((pert, zero, zero), p_sym)
        assert res.max_abs < 1e-14


class TestBalance:
    def test_datum_is_already_balanced(self, p_sym, g3):
        result = balance(g3, p_sym, AttachedParams(np.eye(2), 0.0))
        assert result.converged
        assert result.iterations == 0
        assert result.residual.max_abs < 1e-12

    def test_scaled_datum_balances_fast(self, p_sym, g3):
        triple = (g3[0].scale(1.02), g3[1], g3[2].scale(0.99 - 0.01j))
        result = balance(triple, p_sym, AttachedParams(np.eye(2), 0.0))
        assert result.converged
        assert result.iterations <= 5
        assert result.residual.max_abs <= 1e-6

    def test_polynomial_perturbation_balances(self, p_sym, g3):
        x1 = GaussianPolynomial(
            (type(g3[0].terms[0])(0.01 * g3[0].terms[0].coeff, (1, 0, 0),
                                   g3[0].terms[0].Q, g3[0].terms[0].l),)
        )
        triple = (g3[0] + x1, g3[1], g3[2])
        result = balance(triple, p_sym, AttachedParams(np.eye(2), 0.0))
        assert result.converged
        assert result.iterations <= 30
        assert result.residual.max_abs <= 1e-6
        assert result.jacobian_rank >= 21

    def test_orthogonal_mode_needs_no_motion(self, p_sym, g3):
        pert = hermite_mode((3, 0, 0), p_sym.taus[0], p_sym.gammas[0]).scale(0.01)
        result = balance((g3[0] + pert, g3[1], g3[2]), p_sym, AttachedParams(np.eye(2), 0.0))
        assert result.converged
        assert result.iterations == 0

    def test_no_blow_up(self, rng, p_sym, g3):
        # output stays within twice the input's distance from the datum
        for _ in range(3):
            perts = []
            for j in range(3):
                m = hermite_mode(tuple(rng.integers(0, 2, size=3)), p_sym.taus[j], p_sym.gammas[j])
                nrm = lp_norm_gausspoly(m, p_sym.ps[j], nodes=24)
                perts.append(m.scale(0.01 * complex(rng.standard_normal(), rng.standard_normal()) / nrm))
            triple = tuple(g + q for g, q in zip(g3, perts))
            result = balance(triple, p_sym, AttachedParams(np.eye(2), 0.0))
            assert result.converged
            before = max(
                lp_norm_gausspoly(t - g, pj, nodes=24)
                for t, g, pj in zip(triple, g3, p_sym.ps)
            )
            after = max(
                lp_norm_gausspoly(t - g, pj, nodes=24)
                for t, g, pj in zip(result.triple, g3, p_sym.ps)
            )
            assert after <= 2.0 * before + 1e-12


class TestSharpFlatSplit:
    def test_partition_and_bounds(self, rng, p_sym, g3):
        f = g3[0] + random_pure(rng, 3, scale=0.5, coupled=False).scale(0.3)
        split = sharp_flat_split(f, g3[0], eta=0.1)
        pts = rng.standard_normal((1000, 3)) * 0.6
        fv = f.evaluate(pts)
        sv = split.f_sharp.evaluate(pts)
        lv = split.f_flat.evaluate(pts)
        assert np.allclose(sv + lv, fv, atol=1e-14)
        ref = 0.1 * g3[0].evaluate(pts).real
        assert np.all(np.abs(sv) <= ref * (1.0 + 1e-9))
        # pieces have disjoint supports
        assert np.max(np.abs(sv) * np.abs(lv)) == 0.0

    def test_rejects_bad_threshold(self, g3):
        with pytest.raises(ValueError):
            sharp_flat_split(g3[0], g3[0], eta=-1.0)


class TestTrivialBound:
    def test_calibrated_constant_is_stable(self, rng, p_sym, g3):
        # |tprime(h1, h2, g3)| <= C ||h1|| ||h2||: the empirical C must not
        # drift when the calibration corpus doubles
        A = 0.1 * np.eye(2)
        scheme = QuadratureScheme.gh(24)

        def ratio():
            h1 = random_pure(rng, 3, scale=0.3, coupled=False)
            h2 = random_pure(rng, 3, scale=0.3, coupled=False)
            v = abs(tprime(h1, h2, g3[2], A, engine="quadrature", scheme=scheme))
            nrm = lp_norm_gausspoly(h1, p_sym.ps[0]) * lp_norm_gausspoly(h2, p_sym.ps[1])
            return v / nrm

        first = [ratio() for _ in range(20)]
        second = first + [ratio() for _ in range(20)]
        c1, c2 = max(first), max(second)
        assert c2 <= 2.0 * c1
        assert c1 > 0
