"""Symmetry generators, the entry chart, and the orbit-distance search."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from youngstab import (
    AttachedParams,
    Dilate,
    DistanceConfig,
    GlAction,
    HPoint,
    ModulateFull,
    ModulateX,
    QuadratureScheme,
    Scale,
    Shear,
    SpAction,
    SymmetryWord,
    TranslateMod,
    apply,
    invariance_residual,
    lambda_family,
    normalize_entry,
    orbit_distance_upper,
    phi_gausspoly,
    symplectic_matrix,
)
from conftest import random_pure

SCHEME = QuadratureScheme.gh(24)


def _random_triple(rng):
    return tuple(random_pure(rng, 3, scale=0.35) for _ in range(3))


def _random_params(rng):
    A = rng.standard_normal((2, 2))
    while abs(np.linalg.det(A)) < 0.1:
        A = rng.standard_normal((2, 2))
    return AttachedParams(A, float(rng.uniform(-1.5, 1.5)))


def _hpt(rng):
    return HPoint(rng.standard_normal(2) * 0.4, float(rng.standard_normal() * 0.4))


def _sp(rng):
    Qs = rng.standard_normal((2, 2)) * 0.3
    return expm(symplectic_matrix(1) @ (Qs + Qs.T))


class TestGeneratorValidation:
    def test_scale_rejects_zero(self):
        with pytest.raises(ValueError):
            Scale(1.0, 0.0, 1.0)

    def test_dilate_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            Dilate(-0.5)

    def test_spaction_rejects_nonsymplectic(self):
        with pytest.raises(ValueError):
            SpAction(np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_glaction_rejects_singular(self):
        with pytest.raises(ValueError):
            GlAction(np.array([[1.0, 2.0], [0.5, 1.0]]))

    def test_word_classes(self):
        w = SymmetryWord((Dilate(2.0), GlAction(np.eye(2)), ModulateFull(np.zeros(3))))
        assert w.classes == ("G1", "G0", "G0")
        assert len(w) == 3


class TestInvariance:
    @pytest.mark.parametrize("make_gen", [
        lambda rng: Scale(complex(rng.uniform(0.5, 1.5)), 1.0 + 0.4j, 2.0),
        lambda rng: Dilate(float(rng.uniform(0.6, 1.6))),
        lambda rng: TranslateMod(_hpt(rng), _hpt(rng), _hpt(rng)),
        lambda rng: SpAction(_sp(rng)),
        lambda rng: Shear(rng.standard_normal(2) * 0.5),
        lambda rng: ModulateX(rng.standard_normal(2) * 0.6),
        lambda rng: ModulateFull(rng.standard_normal(3) * 0.6),
        lambda rng: GlAction(np.eye(2) + rng.standard_normal((2, 2)) * 0.25),
    ], ids=["scale", "dilate", "translate", "sp", "shear", "modx", "modfull", "gl"])
    def test_generator_preserves_phi(self, rng, p_sym, make_gen):
        for _ in range(3):
            word = SymmetryWord((make_gen(rng),))
            res, err = invariance_residual(
                word, _random_triple(rng), p_sym, _random_params(rng), SCHEME
            )
            assert res <= max(3.0 * err, 1e-11)

    def test_scale_and_gl_closed_at_euclidean(self, rng, p_sym):
        prm = AttachedParams(np.zeros((2, 2)), 0.0)
        for gen in (Scale(1.3, 0.8 + 0.2j, 1.1), GlAction(np.eye(2) + 0.2 * np.ones((2, 2)))):
            res, _ = invariance_residual(
                SymmetryWord((gen,)), _random_triple(rng), p_sym, prm, SCHEME
            )
            assert res <= 1e-10

    def test_empty_word_is_identity(self, rng, p_sym):
        trip = _random_triple(rng)
        prm = _random_params(rng)
        out, oprm = apply(SymmetryWord(()), trip, prm)
        assert out == trip
        assert np.array_equal(oprm.A, prm.A) and oprm.b == prm.b

    def test_word_composition(self, rng, p_sym):
        g1, g2 = Dilate(1.3), ModulateX(np.array([0.4, -0.2]))
        trip = _random_triple(rng)
        prm = _random_params(rng)
        once = apply(SymmetryWord((g1, g2)), trip, prm)
        step = apply(SymmetryWord((g2,)), *apply(SymmetryWord((g1,)), trip, prm))
        pts = rng.standard_normal((30, 3))
        for a, b in zip(once[0], step[0]):
            assert np.allclose(a.evaluate(pts), b.evaluate(pts), rtol=1e-12)
        assert np.allclose(once[1].A, step[1].A)

    def test_translate_prefactor_sign_is_load_bearing(self, rng, p_sym, g3):
        # flipping the sign of the compensating modulations must break
        # invariance well beyond quadrature error
        from youngstab.symmetry import _modulate

        prm = AttachedParams(np.array([[1.1, 0.2], [-0.1, 0.9]]), 1.2)
        u1, u2, u3 = _hpt(rng), _hpt(rng), _hpt(rng)
        word = SymmetryWord((TranslateMod(u1, u2, u3),))
        out, oprm = apply(word, g3, prm)
        phi0, err0 = phi_gausspoly(g3, p_sym, prm.A, prm.b, SCHEME)
        phi1, err1 = phi_gausspoly(out, p_sym, oprm.A, oprm.b, SCHEME)
        assert abs(phi0 - phi1) <= max(3 * (err0 + err1), 1e-11)

        AJA = prm.A.T @ symplectic_matrix(1) @ prm.A
        mu1 = prm.b * (AJA @ (u2.x - u3.x))
        mu2 = prm.b * (AJA @ (u2.x - u1.x))
        flipped = (
            _modulate(out[0], np.concatenate([-2.0 * mu1, [0.0]])),
            _modulate(out[1], np.concatenate([-2.0 * mu2, [0.0]])),
            out[2],
        )
        phi2, _ = phi_gausspoly(flipped, p_sym, oprm.A, oprm.b, SCHEME)
        assert abs(phi0 - phi2) > 1e-7


class TestEntryChart:
    def test_entry_preserves_phi(self, rng, p_sym):
        trip = _random_triple(rng)
        prm = _random_params(rng)
        entry, eprm = normalize_entry(trip, prm)
        phi0, err0 = phi_gausspoly(trip, p_sym, prm.A, prm.b, SCHEME)
        phi1, err1 = phi_gausspoly(entry, p_sym, eprm.A, eprm.b, SCHEME)
        assert np.allclose(eprm.A, np.eye(2))
        assert eprm.b == 0.0
        assert abs(phi0 - phi1) <= max(3 * (err0 + err1), 1e-11)

    def test_entry_rejects_singular(self, g3):
        with pytest.raises(ValueError):
            normalize_entry(g3, AttachedParams(np.zeros((2, 2)), 0.0))


class TestDistance:
    def test_layout_has_28_parameters(self):
        from youngstab.symmetry import _theta_layout

        offs, total = _theta_layout(1)
        assert total == 28
        assert set(offs) == {"scale", "dilate", "trans", "shear", "modx", "sp", "gl", "modt"}

    def test_report_is_consistent(self, p_sym):
        trip = lambda_family(p_sym, 10.0)
        rep = orbit_distance_upper(
            trip, p_sym, AttachedParams(np.eye(2), 0.0),
            DistanceConfig(restarts=2, max_iter=400, seed=0),
        )
        total = sum(rep.breakdown.values())
        assert rep.upper_bound == pytest.approx(math.sqrt(total), rel=1e-12)
        assert rep.upper_bound > 0
        assert len(rep.norm_distances) == 3
        assert rep.iterations > 0

    def test_flatter_family_is_closer(self, p_sym):
        cfg = DistanceConfig(restarts=2, max_iter=600, seed=0)
        d5 = orbit_distance_upper(
            lambda_family(p_sym, 5.0), p_sym, AttachedParams(np.eye(2), 0.0), cfg
        )
        d20 = orbit_distance_upper(
            lambda_family(p_sym, 20.0), p_sym, AttachedParams(np.eye(2), 0.0), cfg
        )
        assert d20.upper_bound < d5.upper_bound

    def test_seeded_search_is_deterministic(self, p_sym):
        trip = lambda_family(p_sym, 10.0)
        cfg = DistanceConfig(restarts=2, max_iter=150, seed=42)
        a = orbit_distance_upper(trip, p_sym, AttachedParams(np.eye(2), 0.0), cfg)
        b = orbit_distance_upper(trip, p_sym, AttachedParams(np.eye(2), 0.0), cfg)
        assert a.upper_bound == b.upper_bound
        assert np.array_equal(a.theta, b.theta)

    def test_singular_params_are_perturbed(self, p_sym, g3):
        rep = orbit_distance_upper(
            g3, p_sym, AttachedParams(np.zeros((2, 2)), 0.0),
            DistanceConfig(restarts=1, max_iter=150, seed=0),
        )
        assert np.isfinite(rep.upper_bound)

    def test_warm_start_reuses_previous_theta(self, p_sym):
        trip = lambda_family(p_sym, 10.0)
        prm = AttachedParams(np.eye(2), 0.0)
        cold = orbit_distance_upper(trip, p_sym, prm, DistanceConfig(restarts=2, max_iter=300, seed=0))
        warm = orbit_distance_upper(
            trip, p_sym, prm,
            DistanceConfig(restarts=1, max_iter=300, seed=0, warm_start=cold.theta),
        )
        assert warm.upper_bound <= cold.upper_bound * 1.05
