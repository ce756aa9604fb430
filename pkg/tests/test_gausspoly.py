"""Closed-form Gaussian-polynomial calculus against quadrature oracles."""

import math

import numpy as np
import pytest
from scipy import integrate as sciint

from youngstab import (
    GaussTerm,
    GaussianPolynomial,
    integrate,
    lp_norm_closed,
    product,
    standard_gaussians,
    trilinear_closed,
)
from conftest import random_pure


def _nquad_oracle(f: GaussianPolynomial, half_width: float = 12.0):
    """Direct adaptive quadrature of a 1d or 2d Gaussian polynomial."""
    n = f.n

    def re(*args):
        return float(f.evaluate(np.array([args])).real[0])

    def im(*args):
        return float(f.evaluate(np.array([args])).imag[0])

    ranges = [(-half_width, half_width)] * n
    vr, er = sciint.nquad(re, ranges)
    vi, ei = sciint.nquad(im, ranges)
    return complex(vr, vi), er + ei


class TestAlgebra:
    def test_zero_and_addition(self):
        z = GaussianPolynomial.zero(2)
        assert z.is_zero
        f = GaussianPolynomial.pure_gaussian(np.eye(2, dtype=complex))
        assert (z + f).terms == f.terms
        assert (f - f).evaluate(np.zeros((1, 2)))[0] == 0.0

    def test_scale_and_conjugate(self, rng):
        f = random_pure(rng, 2)
        pts = rng.standard_normal((20, 2))
        assert np.allclose(f.scale(2.5j).evaluate(pts), 2.5j * f.evaluate(pts))
        assert np.allclose(f.conjugate().evaluate(pts), np.conj(f.evaluate(pts)))

    def test_product_pointwise(self, rng):
        f = random_pure(rng, 3)
        g = random_pure(rng, 3)
        pts = rng.standard_normal((50, 3))
        assert np.allclose(
            product(f, g).evaluate(pts), f.evaluate(pts) * g.evaluate(pts), rtol=1e-12
        )

    def test_polynomial_prefactor_evaluation(self):
        # x^2 y e^{-(x^2+y^2)}
        term = GaussTerm(1.0 + 0.0j, (2, 1), np.eye(2, dtype=complex), np.zeros(2, dtype=complex))
        f = GaussianPolynomial((term,))
        val = f.evaluate(np.array([[1.5, -0.5]]))[0]
        assert val == pytest.approx(1.5**2 * (-0.5) * math.exp(-(1.5**2 + 0.25)), rel=1e-14)

    def test_integration_requires_decay(self):
        # construction is a ring operation and never validates; integration does
        from youngstab.gausspoly import DomainError

        f = GaussianPolynomial.pure_gaussian(-np.eye(2, dtype=complex))
        with pytest.raises(DomainError):
            integrate(f)
        with pytest.raises(DomainError):
            lp_norm_closed(f, 1.5)


class TestIntegrate:
    def test_isotropic_value(self):
        f = GaussianPolynomial.pure_gaussian(2.0 * np.eye(3, dtype=complex))
        assert integrate(f) == pytest.approx((math.pi / 2.0) ** 1.5, rel=1e-14)

    def test_against_nquad_1d(self, rng):
        for _ in range(5):
            f = random_pure(rng, 1)
            oracle, err = _nquad_oracle(f)
            assert integrate(f) == pytest.approx(oracle, abs=max(1e-10, 10 * err))

    def test_against_nquad_2d_with_powers(self, rng):
        # two terms with monomial prefactors, complex rates and shifts
        t1 = random_pure(rng, 2).terms[0]
        f = GaussianPolynomial(
            (
                GaussTerm(t1.coeff, (2, 0), t1.Q, t1.l),
                GaussTerm(0.3 - 0.1j, (1, 1), np.eye(2) * (1.0 + 0.2j), np.zeros(2)),
            )
        )
        oracle, err = _nquad_oracle(f)
        assert integrate(f) == pytest.approx(oracle, abs=max(1e-9, 20 * err))

    def test_odd_moment_vanishes(self):
        term = GaussTerm(1.0 + 0j, (3, 0), np.eye(2, dtype=complex), np.zeros(2, dtype=complex))
        assert abs(integrate(GaussianPolynomial((term,)))) < 1e-15


class TestLpNorm:
    def test_pure_matches_direct_formula(self, rng):
        f = random_pure(rng, 3)
        p = 1.7
        # |f|^p is a pure Gaussian with rate p Re Q and shift p Re l
        g = GaussianPolynomial.pure_gaussian(
            (p * f.terms[0].Q.real).astype(complex),
            (p * f.terms[0].l.real).astype(complex),
            abs(f.terms[0].coeff) ** p,
        )
        assert lp_norm_closed(f, p) == pytest.approx(integrate(g).real ** (1 / p), rel=1e-13)

    def test_against_nquad(self, rng):
        f = random_pure(rng, 1)
        p = 1.5

        def absint(x):
            return float(np.abs(f.evaluate(np.array([[x]])))[0] ** p)

        oracle, err = sciint.quad(absint, -12, 12)
        assert lp_norm_closed(f, p) == pytest.approx(oracle ** (1 / p), abs=max(1e-10, 10 * err))

    def test_rejects_nonpositive_p(self, rng):
        with pytest.raises(ValueError):
            lp_norm_closed(random_pure(rng, 1), 0.0)


class TestTrilinearClosed:
    def test_euclidean_standard_value(self, g3):
        # iint g1(z1) g2(z2) g3(-z1-z2) over R^3 x R^3 equals 27^{-3/2}
        v = trilinear_closed(*g3, np.zeros((2, 2)))
        assert v.imag == pytest.approx(0.0, abs=1e-18)
        assert v.real == pytest.approx(27.0**-1.5, rel=1e-13)

    def test_dimension_one_against_dblquad(self, p_sym):
        gs = standard_gaussians(p_sym, 1)

        def f(t2, t1):
            z = np.array([[t1]]), np.array([[t2]]), np.array([[-t1 - t2]])
            return float((gs[0].evaluate(z[0]) * gs[1].evaluate(z[1]) * gs[2].evaluate(z[2])).real[0])

        oracle, err = sciint.dblquad(f, -3, 3, -3, 3)
        A0 = np.zeros((0, 0))
        v = trilinear_closed(gs[0], gs[1], gs[2], A0)
        assert v.real == pytest.approx(oracle, abs=max(1e-12, 10 * err))

    def test_alpha_moment_against_dblquad(self, p_sym):
        # weight alpha^2 = (t1 + t2)^2 in the scalar model
        gs = standard_gaussians(p_sym, 1)

        def f(t2, t1):
            z = np.array([[t1]]), np.array([[t2]]), np.array([[-t1 - t2]])
            w = (t1 + t2) ** 2
            return w * float(
                (gs[0].evaluate(z[0]) * gs[1].evaluate(z[1]) * gs[2].evaluate(z[2])).real[0]
            )

        oracle, err = sciint.dblquad(f, -3, 3, -3, 3)
        v = trilinear_closed(gs[0], gs[1], gs[2], np.zeros((0, 0)), sigma_powers=(2, 0))
        assert v.real == pytest.approx(oracle, abs=max(1e-12, 10 * err))

    def test_shifted_moment_vanishes_at_random_data(self, rng, g3):
        # odd sigma-weight integrates to zero whatever the first slot holds
        for _ in range(5):
            f1 = random_pure(rng, 3)
            A = rng.standard_normal((2, 2))
            base = abs(trilinear_closed(f1, g3[1], g3[2], A))
            v = abs(trilinear_closed(f1, g3[1], g3[2], A, sigma_powers=(0, 1)))
            assert v <= 1e-12 * base

    def test_sigma_squared_moment_against_mc(self, rng, g3):
        # independent check of the (0, 2) moment by plain importance sampling
        A = np.array([[1.0, 0.3], [-0.2, 0.8]])
        closed = trilinear_closed(*g3, A, sigma_powers=(0, 2)).real
        gam = 3.0 * math.pi
        N = 400_000
        Z = rng.standard_normal((N, 6)) / math.sqrt(2.0 * gam)
        q = (gam / math.pi) ** 3 * np.exp(-gam * np.sum(Z**2, axis=1))
        z1, z2 = Z[:, :3], Z[:, 3:]
        beta = np.einsum("ni,ij,nj->n", z1[:, :2] @ A.T, np.array([[0.0, 1.0], [-1.0, 0.0]]), z2[:, :2] @ A.T)
        z3 = -z1 - z2
        vals = (
            g3[0].evaluate(z1) * g3[1].evaluate(z2) * g3[2].evaluate(z3)
        ).real * beta**2 / q
        est = float(np.mean(vals))
        sig = float(np.std(vals) / math.sqrt(N))
        assert abs(est - closed) <= 4.0 * sig


def test_trilinear_rejects_shape_mismatch(g3):
    with pytest.raises(ValueError):
        trilinear_closed(*g3, np.zeros((4, 4)))
