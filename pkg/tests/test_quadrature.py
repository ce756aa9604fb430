"""Quadrature engines against the closed forms and each other."""

import math

import numpy as np
import pytest

from youngstab import (
    EvaluableFunction,
    GaussianPolynomial,
    QuadratureScheme,
    lp_norm,
    lp_norm_closed,
    lp_norm_gausspoly,
    optimal_constant,
    phi_gausspoly,
    trilinear_closed,
    trilinear_quadrature,
)
from youngstab.gausspoly import UnsupportedError
from conftest import random_pure

A_REF = np.array([[0.9, 0.3], [-0.2, 1.1]])


def _wrap(f):
    return EvaluableFunction.from_gausspoly(f)


def _two_pures(rng, coupled):
    """A genuinely two-term sum (identical terms would be coalesced)."""
    a = random_pure(rng, 3, scale=0.3, coupled=coupled)
    b = random_pure(rng, 3, scale=0.3, coupled=coupled).scale(0.4)
    return a, b, a + b


class TestScheme:
    def test_gh_node_bounds(self):
        with pytest.raises(ValueError):
            QuadratureScheme.gh(4)
        with pytest.raises(ValueError):
            QuadratureScheme.gh(500)

    def test_mc_sample_floor(self):
        with pytest.raises(ValueError):
            QuadratureScheme.mc(100)

    def test_defaults(self):
        assert QuadratureScheme.gh().nodes_per_axis == 40
        assert QuadratureScheme.mc().samples == 1_000_000


class TestNorms:
    def test_gh_norm_matches_closed(self, rng):
        f = random_pure(rng, 3)
        got = lp_norm(_wrap(f), 1.5, QuadratureScheme.gh(32))
        assert got == pytest.approx(lp_norm_closed(f, 1.5), rel=1e-8)

    def test_mc_norm_within_four_sigma(self, rng, g3):
        # two-term input so the importance ratio is genuinely random (a single
        # pure term is sampled exactly and its error collapses to roundoff)
        from youngstab.quadrature import _lp_norm_with_error

        f = g3[0] + random_pure(rng, 3, scale=0.3, coupled=False).scale(0.2)
        reference = lp_norm(_wrap(f), 1.5, QuadratureScheme.gh(40))
        val, err = _lp_norm_with_error(_wrap(f), 1.5, QuadratureScheme.mc(200_000, 7))
        assert err > 1e-12
        assert abs(val - reference) <= 4.0 * err

    def test_dedicated_grid_matches_closed_for_pure(self, rng):
        f = random_pure(rng, 3, coupled=False)
        assert lp_norm_gausspoly(f, 1.5, nodes=24) == pytest.approx(
            lp_norm_closed(f, 1.5), rel=1e-9
        )

    def test_dedicated_grid_two_scale_robustness(self, g3):
        # a vanishingly flat term must not hide the narrow one between nodes
        flat = GaussianPolynomial.pure_gaussian(
            1e-6 * np.eye(3, dtype=complex), coeff=1e-4
        )
        f = g3[0].scale(-1.0) + flat
        lower = lp_norm_closed(g3[0], 1.5) - lp_norm_closed(flat, 1.5)
        got = lp_norm_gausspoly(f, 1.5, nodes=20, anchor_rates=np.full(3, 3 * math.pi))
        assert got >= 0.9 * lower

    def test_norm_of_zero(self):
        assert lp_norm_gausspoly(GaussianPolynomial.zero(3), 1.5) == 0.0


class TestTrilinear:
    def test_pure_path_euclidean_limit(self, g3):
        res = trilinear_quadrature(
            _wrap(g3[0]), _wrap(g3[1]), _wrap(g3[2]), np.zeros((2, 2)), 0.0,
            QuadratureScheme.gh(40),
        )
        assert res.value.real == pytest.approx(27.0**-1.5, rel=1e-12)

    def test_pure_path_frozen_heisenberg_value(self, g3):
        res = trilinear_quadrature(
            _wrap(g3[0]), _wrap(g3[1]), _wrap(g3[2]), np.eye(2), 0.0,
            QuadratureScheme.gh(40),
        )
        assert res.value.real == pytest.approx(7.086487445673304e-03, rel=1e-10)

    def test_general_engine_is_linear_in_pure_parts(self, rng):
        # T(a + b, f2, f3) through the general path vs two pure-path calls
        a, c, f1 = _two_pures(rng, coupled=True)
        f2 = random_pure(rng, 3, scale=0.3)
        f3 = random_pure(rng, 3, scale=0.3)
        sch = QuadratureScheme.gh(16)
        b = 0.7
        general = trilinear_quadrature(_wrap(f1), _wrap(f2), _wrap(f3), A_REF, b, sch)
        parts = sum(
            trilinear_quadrature(_wrap(g), _wrap(f2), _wrap(f3), A_REF, b, sch).value
            for g in (a, c)
        )
        assert general.value == pytest.approx(parts, rel=2e-5)

    def test_separable_engine_is_linear_in_pure_parts(self, rng):
        # no x-t coupling, so the multi-term slot routes through the spline path
        a, c, f1 = _two_pures(rng, coupled=False)
        f2 = random_pure(rng, 3, scale=0.3, coupled=False)
        f3 = random_pure(rng, 3, scale=0.3, coupled=False)
        sch = QuadratureScheme.gh(24)
        sep = trilinear_quadrature(_wrap(f1), _wrap(f2), _wrap(f3), A_REF, 0.9, sch)
        parts = sum(
            trilinear_quadrature(_wrap(g), _wrap(f2), _wrap(f3), A_REF, 0.9, sch).value
            for g in (a, c)
        )
        assert sep.value == pytest.approx(parts, rel=1e-6)

    def test_mc_within_four_sigma(self, g3):
        sch = QuadratureScheme.mc(400_000, 3)
        res = trilinear_quadrature(
            _wrap(g3[0]), _wrap(g3[1]), _wrap(g3[2]), np.eye(2), 0.0, sch
        )
        assert abs(res.value.real - 7.086487445673304e-03) <= 4.0 * res.error

    def test_shift_and_twist_decomposition(self, g3):
        # plain(A, b) = closed(0) + shift-diff(A) + twist-diff(A, b)
        sch = QuadratureScheme.gh(32)
        wrapped = tuple(_wrap(g) for g in g3)
        b = 1.3
        plain = trilinear_quadrature(*wrapped, A_REF, b, sch).value
        shift = trilinear_quadrature(*wrapped, A_REF, 0.0, sch, kind="shift-diff").value
        twist = trilinear_quadrature(*wrapped, A_REF, b, sch, kind="twist-diff").value
        base = trilinear_closed(*g3, np.zeros((2, 2)))
        assert plain == pytest.approx(base + shift + twist, rel=1e-11)

    def test_dimension_validation(self, rng):
        f = _wrap(random_pure(rng, 2))
        with pytest.raises(ValueError):
            trilinear_quadrature(f, f, f, np.eye(2), 0.0, QuadratureScheme.gh(16))

    def test_general_path_budget_guard(self, rng):
        _, _, f1 = _two_pures(rng, coupled=True)
        fs = [_wrap(f1)] + [_wrap(random_pure(rng, 3)) for _ in range(2)]
        with pytest.raises(UnsupportedError):
            trilinear_quadrature(*fs, A_REF, 0.5, QuadratureScheme.gh(120))


class TestPhi:
    def test_euclidean_phi_is_sharp(self, p_sym, g3):
        phi, err = phi_gausspoly(g3, p_sym, np.zeros((2, 2)), 0.0, QuadratureScheme.gh(40))
        assert phi == pytest.approx(optimal_constant(p_sym, 3), rel=1e-12)
        assert err < 1e-10

    def test_frozen_deficit_at_identity(self, p_sym, g3):
        phi, _ = phi_gausspoly(g3, p_sym, np.eye(2), 0.0, QuadratureScheme.gh(40))
        deficit = 1.0 - phi / optimal_constant(p_sym, 3)
        assert deficit == pytest.approx(5.7933394484820e-03, rel=1e-9)

    def test_phi_scale_invariant(self, rng, p_sym, g3):
        sch = QuadratureScheme.gh(24)
        a, _ = phi_gausspoly(g3, p_sym, A_REF, 0.8, sch)
        scaled = tuple(g.scale(c) for g, c in zip(g3, (2.0, -0.5j, 3.0 + 1.0j)))
        b, _ = phi_gausspoly(scaled, p_sym, A_REF, 0.8, sch)
        assert b == pytest.approx(a, rel=1e-12)
