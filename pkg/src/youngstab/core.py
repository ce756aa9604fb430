"""Group structure, exponent bookkeeping, and the sharp constant.

The ambient space is R^(2d+1) = {z = (x, t)} with x in R^(2d), t in R.  A
2d x 2d matrix A induces the product

    (x, t) ._A (x', t') = (x + x', t + t' + sigma(Ax, Ax')),

where sigma(x, y) = x^T J y and J = [[0, I_d], [-I_d, 0]].  A = 0 gives the
abelian (Euclidean) product, A = Id the Heisenberg one.  Everything downstream
(closed forms, quadrature, symmetries, expansions) is phrased over this family.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

ADMISSIBILITY_TOL = 1e-12


@lru_cache(maxsize=None)
def _symplectic_matrix_cached(d: int) -> np.ndarray:
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    J.flags.writeable = False
    return J


def symplectic_matrix(d: int) -> np.ndarray:
    """The matrix J with sigma(x, y) = x^T J y, J^2 = -Id."""
    if d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    return _symplectic_matrix_cached(int(d))


def symplectic(x, y) -> float:
    """Standard symplectic form sigma(x, y) = sum_j x_j y_{j+d} - x_{j+d} y_j."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size % 2 != 0 or x.size == 0:
        raise ValueError(f"symplectic form needs even positive dimension, got {x.size}")
    d = x.size // 2
    return float(x[:d] @ y[d:] - x[d:] @ y[:d])


@dataclass(frozen=True)
class ExponentTriple:
    """Exponents (p1, p2, p3), each in (1, inf).

    The triple is admissible when 1/p1 + 1/p2 + 1/p3 = 2; all sharp-constant
    and maximizer formulas require admissibility.  Derived rates:
    conjugates p_j' = p_j/(p_j - 1), Gaussian rates gamma_j = pi * p_j',
    and Hermite weights tau_j = p_j p_j' / 2.
    """

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        for p in (self.p1, self.p2, self.p3):
            if not (1.0 < p < math.inf):
                raise ValueError(f"exponents must lie in (1, inf), got {p}")

    @classmethod
    def symmetric(cls) -> "ExponentTriple":
        return cls(1.5, 1.5, 1.5)

    @property
    def ps(self) -> tuple[float, float, float]:
        return (self.p1, self.p2, self.p3)

    @property
    def conjugates(self) -> tuple[float, float, float]:
        return tuple(p / (p - 1.0) for p in self.ps)

    @property
    def gammas(self) -> tuple[float, float, float]:
        return tuple(math.pi * q for q in self.conjugates)

    @property
    def taus(self) -> tuple[float, float, float]:
        return tuple(p * q / 2.0 for p, q in zip(self.ps, self.conjugates))

    @property
    def admissible(self) -> bool:
        return abs(sum(1.0 / p for p in self.ps) - 2.0) <= ADMISSIBILITY_TOL

    @property
    def strict_interior(self) -> bool:
        """True when every p_j lies in the open interval (1, 2)."""
        return all(1.0 < p < 2.0 for p in self.ps)


@dataclass(frozen=True)
class HPoint:
    """A point z = (x, t) of R^(2d+1) with x in R^(2d)."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        if x.size % 2 != 0 or x.size == 0:
            raise ValueError(f"x must have even positive length, got {x.size}")
        x = x.copy()
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return self.x.size // 2

    def inverse(self) -> "HPoint":
        # (x, t)^{-1} = (-x, -t) in every product of the family.
        return HPoint(-self.x, -self.t)

    @classmethod
    def zero(cls, d: int) -> "HPoint":
        return cls(np.zeros(2 * d), 0.0)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, [self.t]])


@dataclass(frozen=True)
class AttachedParams:
    """The pair (A, b) attached to the trilinear functional.

    A is the 2d x 2d matrix twisting the group product, b the frequency of
    the oscillatory factor exp(i b sigma(Ax1, Ax2)).
    """

    A: np.ndarray
    b: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2 != 0:
            raise ValueError(f"A must be square of even size, got shape {A.shape}")
        A = A.copy()
        A.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", float(self.b))

    @property
    def d(self) -> int:
        return self.A.shape[0] // 2

    @classmethod
    def euclidean(cls, d: int) -> "AttachedParams":
        return cls(np.zeros((2 * d, 2 * d)), 0.0)

    @classmethod
    def heisenberg(cls, d: int) -> "AttachedParams":
        return cls(np.eye(2 * d), 0.0)


def group_mul(z1: HPoint, z2: HPoint, A) -> HPoint:
    """Product z1 ._A z2 = (x1 + x2, t1 + t2 + sigma(Ax1, Ax2))."""
    A = np.asarray(A, dtype=float)
    if A.shape != (z1.x.size, z2.x.size):
        raise ValueError(f"A shape {A.shape} incompatible with points of dim {z1.x.size}")
    return HPoint(z1.x + z2.x, z1.t + z2.t + symplectic(A @ z1.x, A @ z2.x))


def optimal_constant(p: ExponentTriple, n: int) -> float:
    """Sharp constant prod_j (p_j^(1/p_j) / p_j'^(1/p_j'))^(n/2) of the trilinear form.

    Equals the supremum of |T(f, 0, 0)| / prod ||f_j||_{p_j} over R^n, attained
    exactly at centered isotropic Gaussians with rates gamma_j = pi p_j'.
    """
    if n < 1:
        raise ValueError(f"dimension must be positive, got {n}")
    if not p.admissible:
        raise ValueError(f"exponent triple {p.ps} is not admissible")
    factor = 1.0
    for pj, qj in zip(p.ps, p.conjugates):
        factor *= pj ** (1.0 / (2.0 * pj)) / qj ** (1.0 / (2.0 * qj))
    return factor ** n


def standard_gaussians(p: ExponentTriple, n: int):
    """The maximizing triple g_j(z) = exp(-gamma_j |z|^2) on R^n, gamma_j = pi p_j'."""
    from .gausspoly import GaussianPolynomial  # deferred: gausspoly imports core

    if n < 1:
        raise ValueError(f"dimension must be positive, got {n}")
    out = []
    for gam in p.gammas:
        out.append(GaussianPolynomial.pure_gaussian(gam * np.eye(n)))
    return tuple(out)


def symplectic_defect_norm(A) -> float:
    """Spectral norm ||A^T J A||, the distance-to-abelian scale of the product ._A.

    Vanishes iff sigma(Ax, Ay) = 0 for all x, y; invariant under A -> SA for
    symplectic S, and equal to inf_{S in Sp} ||S^{-1} A||^2 when the infimum
    is attained (equal-measurement reduction).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2 != 0:
        raise ValueError(f"A must be square of even size, got shape {A.shape}")
    J = symplectic_matrix(A.shape[0] // 2)
    return float(np.linalg.norm(A.T @ J @ A, ord=2))
