import numpy as np
import pytest

from youngstab import ExponentTriple, QuadratureScheme, standard_gaussians


@pytest.fixture(scope="session")
def p_sym():
    return ExponentTriple.symmetric()


@pytest.fixture(scope="session")
def g3(p_sym):
    return standard_gaussians(p_sym, 3)


@pytest.fixture(scope="session")
def gh40():
    return QuadratureScheme.gh(40)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pure(rng, n, scale=0.4, coupled=True):
    """A random integrable pure Gaussian term (complex rate and shift)."""
    M = rng.standard_normal((n, n)) * scale
    R = 0.5 * np.eye(n) + M @ M.T
    if not coupled:
        R[: n - 1, n - 1] = R[n - 1, : n - 1] = 0.0
    S = rng.standard_normal((n, n)) * 0.3
    Q = R + 0.5j * (S + S.T)
    l = rng.standard_normal(n) * 0.3 + 1j * rng.standard_normal(n) * 0.3
    coeff = complex(rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5))
    from youngstab import GaussianPolynomial

    return GaussianPolynomial.pure_gaussian(Q, l, coeff)
