"""Exact algebra and integration for monomial-times-Gaussian sums.

The working function class on R^n is

    f(z) = sum_k  c_k * z^{alpha_k} * exp(-z^T Q_k z + l_k . z),

with complex symmetric Q_k whose real part is positive definite, complex l_k,
and multi-indices alpha_k.  The class is closed under products, affine
substitution z -> Mz + v, and complex conjugation, and every integral over R^n
has a closed form: the base Gaussian integral is

    int exp(-z^T Q z + l.z) dz = pi^(n/2) det(Q)^(-1/2) exp(l^T Q^{-1} l / 4),

and monomial factors are generated by differentiating the right-hand side in l.
The branch of det(Q)^(-1/2) is fixed by continuous deformation from Re(Q):
along Re(Q) + i s Im(Q), s in [0, 1], every eigenvalue keeps a positive real
part, so the per-eigenvalue principal logarithm realizes the continuously
tracked branch.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import symplectic_matrix

CONDITION_LIMIT = 1e12
_DET_TINY = 1e-12


class DomainError(ValueError):
    """Raised when Re(Q) fails to be positive definite."""


class UnsupportedError(ValueError):
    """Raised when an operation is requested outside its closed-form domain."""


class ConditioningWarning(UserWarning):
    """Attached when a quadratic form is too ill-conditioned to trust fully."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GaussTerm:
    """One summand c * z^powers * exp(-z^T Q z + l.z)."""

    coeff: complex
    powers: tuple[int, ...]
    Q: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=complex)
        l = np.asarray(self.l, dtype=complex).ravel()
        n = len(self.powers)
        if Q.shape != (n, n):
            raise ValueError(f"Q shape {Q.shape} does not match {n} variables")
        if l.shape != (n,):
            raise ValueError(f"l shape {l.shape} does not match {n} variables")
        if any((k < 0 or k != int(k)) for k in self.powers):
            raise ValueError(f"powers must be nonnegative integers, got {self.powers}")
        Q = 0.5 * (Q + Q.T)  # store the symmetric part; z^T Q z only sees it
        object.__setattr__(self, "coeff", complex(self.coeff))
        object.__setattr__(self, "powers", tuple(int(k) for k in self.powers))
        object.__setattr__(self, "Q", _freeze(Q))
        object.__setattr__(self, "l", _freeze(l))

    @property
    def n(self) -> int:
        return len(self.powers)

    @property
    def degree(self) -> int:
        return sum(self.powers)


class GaussianPolynomial:
    """A finite sum of GaussTerms sharing the ambient dimension n."""

    __slots__ = ("terms", "n")

    def __init__(self, terms, n: int | None = None):
        terms = tuple(terms)
        if not terms and n is None:
            raise ValueError("dimension required for the empty (zero) polynomial")
        if terms:
            n = terms[0].n
            for t in terms:
                if t.n != n:
                    raise ValueError("terms live in different dimensions")
        self.terms = _merge_terms(terms)
        self.n = int(n)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, n: int) -> "GaussianPolynomial":
        return cls((), n=n)

    @classmethod
    def pure_gaussian(cls, Q, l=None, coeff=1.0) -> "GaussianPolynomial":
        Q = np.asarray(Q, dtype=complex)
        n = Q.shape[0]
        if l is None:
            l = np.zeros(n)
        return cls((GaussTerm(coeff, (0,) * n, Q, l),))

    @classmethod
    def from_terms(cls, terms) -> "GaussianPolynomial":
        return cls(tuple(terms))

    # -- ring operations ---------------------------------------------------

    def __add__(self, other: "GaussianPolynomial") -> "GaussianPolynomial":
        if self.n != other.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")
        return GaussianPolynomial(self.terms + other.terms, n=self.n)

    def __neg__(self) -> "GaussianPolynomial":
        return self.scale(-1.0)

    def __sub__(self, other: "GaussianPolynomial") -> "GaussianPolynomial":
        return self + (-other)

    def scale(self, c) -> "GaussianPolynomial":
        return GaussianPolynomial(
            tuple(GaussTerm(t.coeff * c, t.powers, t.Q, t.l) for t in self.terms),
            n=self.n,
        )

    def conjugate(self) -> "GaussianPolynomial":
        return GaussianPolynomial(
            tuple(
                GaussTerm(np.conj(t.coeff), t.powers, np.conj(t.Q), np.conj(t.l))
                for t in self.terms
            ),
            n=self.n,
        )

    def real_part(self) -> "GaussianPolynomial":
        return (self + self.conjugate()).scale(0.5)

    def imag_part(self) -> "GaussianPolynomial":
        return (self - self.conjugate()).scale(-0.5j)

    # -- queries -----------------------------------------------------------

    @property
    def degree(self) -> int:
        return max((t.degree for t in self.terms), default=0)

    @property
    def is_zero(self) -> bool:
        return len(self.terms) == 0

    @property
    def is_single_pure(self) -> bool:
        return len(self.terms) == 1 and self.terms[0].degree == 0

    def evaluate(self, points) -> np.ndarray:
        """Pointwise values at an (m, n) array of points; returns (m,) complex."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[1] != self.n:
            raise ValueError(f"points have dim {pts.shape[1]}, expected {self.n}")
        out = np.zeros(pts.shape[0], dtype=complex)
        for t in self.terms:
            expo = -np.einsum("mi,ij,mj->m", pts, t.Q, pts) + pts @ t.l
            val = t.coeff * np.exp(expo)
            for k, a in enumerate(t.powers):
                if a:
                    val = val * pts[:, k] ** a
            out += val
        return out

    def __repr__(self):
        return f"GaussianPolynomial(n={self.n}, terms={len(self.terms)}, degree={self.degree})"


def _merge_terms(terms) -> tuple:
    """Combine terms with bit-identical (powers, Q, l); drop exact zeros."""
    merged: dict = {}
    order: list = []
    for t in terms:
        key = (t.powers, t.Q.tobytes(), t.l.tobytes())
        if key in merged:
            old = merged[key]
            merged[key] = GaussTerm(old.coeff + t.coeff, t.powers, t.Q, t.l)
        else:
            merged[key] = t
            order.append(key)
    return tuple(merged[k] for k in order if merged[k].coeff != 0)


# ---------------------------------------------------------------------------
# products and affine substitution
# ---------------------------------------------------------------------------


def product(f: GaussianPolynomial, g: GaussianPolynomial) -> GaussianPolynomial:
    """Pointwise product; exponents and powers add termwise."""
    if f.n != g.n:
        raise ValueError(f"dimension mismatch: {f.n} vs {g.n}")
    terms = []
    for a in f.terms:
        for b in g.terms:
            terms.append(
                GaussTerm(
                    a.coeff * b.coeff,
                    tuple(i + j for i, j in zip(a.powers, b.powers)),
                    a.Q + b.Q,
                    a.l + b.l,
                )
            )
    return GaussianPolynomial(tuple(terms), n=f.n)


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for ia, ca in p.items():
        for ib, cb in q.items():
            key = tuple(x + y for x, y in zip(ia, ib))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def _poly_pow(p: dict, k: int, nvars: int) -> dict:
    out = {(0,) * nvars: 1.0 + 0.0j}
    for _ in range(k):
        out = _poly_mul(out, p)
    return out


def poly_multiply(f: GaussianPolynomial, poly: dict) -> GaussianPolynomial:
    """Multiply by an ordinary polynomial given as {multi-index: coeff}."""
    terms = []
    for t in f.terms:
        for idx, c in poly.items():
            if c == 0:
                continue
            terms.append(
                GaussTerm(
                    t.coeff * c,
                    tuple(i + j for i, j in zip(t.powers, idx)),
                    t.Q,
                    t.l,
                )
            )
    return GaussianPolynomial(tuple(terms), n=f.n)


def _affine_pullback(f: GaussianPolynomial, M: np.ndarray, v=None) -> GaussianPolynomial:
    """The composition z -> f(Mz + v) for a general (n_old x n_new) matrix M."""
    M = np.asarray(M, dtype=complex)
    n_old, n_new = M.shape
    if n_old != f.n:
        raise ValueError(f"M has {n_old} rows, function lives in dim {f.n}")
    if v is None:
        v = np.zeros(n_old)
    v = np.asarray(v, dtype=complex).ravel()
    if v.shape != (n_old,):
        raise ValueError(f"shift v has shape {v.shape}, expected ({n_old},)")

    terms = []
    for t in f.terms:
        Qn = M.T @ t.Q @ M
        ln = M.T @ (t.l - 2.0 * (t.Q @ v))
        const = t.coeff * np.exp(-(v @ (t.Q @ v)) + t.l @ v)
        # re-expand the monomial part: prod_k ((Mz + v)_k)^{a_k}
        poly = {(0,) * n_new: 1.0 + 0.0j}
        for k, a in enumerate(t.powers):
            if a == 0:
                continue
            lin: dict = {}
            if v[k] != 0:
                lin[(0,) * n_new] = v[k]
            for m in range(n_new):
                if M[k, m] != 0:
                    key = tuple(1 if j == m else 0 for j in range(n_new))
                    lin[key] = lin.get(key, 0.0) + M[k, m]
            poly = _poly_mul(poly, _poly_pow(lin, a, n_new))
        for idx, c in poly.items():
            if c == 0:
                continue
            terms.append(GaussTerm(const * c, idx, Qn, ln))
    return GaussianPolynomial(tuple(terms), n=n_new)


def substitute_affine(f: GaussianPolynomial, M, v=None) -> GaussianPolynomial:
    """Exact substitution f(Mz + v) for square M (warns when M is near-singular)."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"M must be square, got shape {M.shape}")
    if abs(np.linalg.det(M)) < _DET_TINY:
        warnings.warn(
            "substitution matrix is numerically singular; the result may not "
            "admit a positive-definite real part",
            ConditioningWarning,
            stacklevel=2,
        )
    return _affine_pullback(f, M, v)


# ---------------------------------------------------------------------------
# exact integration
# ---------------------------------------------------------------------------

_QCACHE: dict = {}
_MOMENT_CACHE: dict = {}


def _q_data(Q: np.ndarray):
    """Inverse, branch-tracked log det, and condition number of Q (cached)."""
    key = Q.tobytes()
    hit = _QCACHE.get(key)
    if hit is not None:
        return hit
    ReQ = Q.real
    try:
        np.linalg.cholesky(ReQ)
    except np.linalg.LinAlgError:
        raise DomainError("Re(Q) is not positive definite") from None
    w = np.linalg.eigvals(Q)
    # Re(Q) > 0 confines the spectrum to the open right half-plane, so the
    # principal log per eigenvalue coincides with the branch tracked
    # continuously along Re(Q) + i s Im(Q).
    logdet = complex(np.sum(np.log(w)))
    cond = float(np.max(np.abs(w)) / np.min(np.abs(w)))
    S = np.linalg.inv(Q)
    S = 0.5 * (S + S.T)
    data = (S, logdet, cond)
    _QCACHE[key] = data
    return data


def _moment_poly(Q_key: bytes, S: np.ndarray, alpha: tuple[int, ...]) -> dict:
    """Polynomial P with d^alpha/dl^alpha exp(l^T S l / 4) = P(l) exp(l^T S l / 4)."""
    key = (Q_key, alpha)
    hit = _MOMENT_CACHE.get(key)
    if hit is not None:
        return hit
    nv = len(alpha)
    poly = {(0,) * nv: 1.0 + 0.0j}
    for k in range(nv):
        for _ in range(alpha[k]):
            new: dict = {}
            for idx, c in poly.items():
                if idx[k] > 0:
                    jdx = idx[:k] + (idx[k] - 1,) + idx[k + 1 :]
                    new[jdx] = new.get(jdx, 0.0) + c * idx[k]
                row = S[k]
                for m in range(nv):
                    s = row[m]
                    if s != 0:
                        jdx = idx[:m] + (idx[m] + 1,) + idx[m + 1 :]
                        new[jdx] = new.get(jdx, 0.0) + 0.5 * c * s
            poly = new
    _MOMENT_CACHE[key] = poly
    return poly


def _integrate_term(t: GaussTerm) -> complex:
    S, logdet, cond = _q_data(t.Q)
    if cond > CONDITION_LIMIT:
        warnings.warn(
            f"quadratic form condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; "
            "the closed-form value may lose digits",
            ConditioningWarning,
            stacklevel=3,
        )
    base = (
        math.pi ** (t.n / 2.0)
        * np.exp(-0.5 * logdet)
        * np.exp(0.25 * (t.l @ (S @ t.l)))
    )
    if t.degree == 0:
        return t.coeff * base
    poly = _moment_poly(t.Q.tobytes(), S, t.powers)
    l = t.l
    if not np.any(l):
        val = poly.get((0,) * t.n, 0.0)
    else:
        val = 0.0 + 0.0j
        for idx, c in poly.items():
            term = c
            for m, a in enumerate(idx):
                if a:
                    term = term * l[m] ** a
            val += term
    return t.coeff * val * base


def integrate(f: GaussianPolynomial) -> complex:
    """Exact integral of f over R^n."""
    return complex(sum(_integrate_term(t) for t in f.terms))


def lp_norm_closed(f: GaussianPolynomial, p: float) -> float:
    """||f||_p for a single pure-Gaussian term (complex Q, l allowed).

    |f(z)| = |c| exp(-z^T Re(Q) z + Re(l).z), so the p-th power integrates in
    closed form.  Sums or monomial factors need the quadrature module.
    """
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    if not f.is_single_pure:
        raise UnsupportedError(
            "lp_norm_closed requires a single pure-Gaussian term; "
            "use quadrature.lp_norm for sums or monomial factors"
        )
    t = f.terms[0]
    R = t.Q.real
    rho = t.l.real
    mod = GaussianPolynomial.pure_gaussian(p * R, p * rho, abs(t.coeff) ** p)
    val = integrate(mod)
    return float(val.real) ** (1.0 / p)


# ---------------------------------------------------------------------------
# the closed-form trilinear functional with moment weights
# ---------------------------------------------------------------------------


def trilinear_closed(
    f1: GaussianPolynomial,
    f2: GaussianPolynomial,
    f3: GaussianPolynomial,
    A,
    b: float = 0.0,
    sigma_powers: tuple[int, int] = (0, 0),
) -> complex:
    """Exact value of the convolution-type trilinear form with moment weights:

        iint f1(z1) f2(z2) f3(-z1 - z2) alpha^m beta^k dz1 dz2,

    alpha = t1 + t2 and beta = sigma(A x1, A x2).  The (m, k) = (0, 0) case is
    the abelian trilinear form; positive powers supply the expansion
    coefficients of the twisted/shifted functional in powers of the shift and
    of i*b.  The b argument is accepted for interface symmetry with the
    quadrature engines but does not enter this integrand (callers weight the
    beta powers with (i b)^k themselves).
    """
    del b
    if not (f1.n == f2.n == f3.n):
        raise ValueError("the three functions must share one dimension")
    n = f1.n
    if n % 2 != 1:
        raise ValueError(f"dimension must be odd (2d + 1), got {n}")
    d = (n - 1) // 2
    A = np.asarray(A, dtype=float)
    if A.shape != (2 * d, 2 * d):
        raise ValueError(f"A must have shape ({2*d}, {2*d}), got {A.shape}")
    m, k = sigma_powers
    if m < 0 or k < 0:
        raise ValueError(f"sigma powers must be nonnegative, got {sigma_powers}")
    if f1.is_zero or f2.is_zero or f3.is_zero:
        return 0.0 + 0.0j
    if d == 0 and k > 0:
        return 0.0 + 0.0j  # beta vanishes identically without x variables

    N = 2 * n
    P1 = np.hstack([np.eye(n), np.zeros((n, n))])
    P2 = np.hstack([np.zeros((n, n)), np.eye(n)])
    P3 = np.hstack([-np.eye(n), -np.eye(n)])
    F = product(
        product(_affine_pullback(f1, P1), _affine_pullback(f2, P2)),
        _affine_pullback(f3, P3),
    )

    if m:
        lin = {
            _unit_index(N, n - 1): 1.0 + 0.0j,
            _unit_index(N, 2 * n - 1): 1.0 + 0.0j,
        }
        F = poly_multiply(F, _poly_pow(lin, m, N))
    if k:
        J = symplectic_matrix(d)
        B = A.T @ J @ A
        beta: dict = {}
        for a in range(2 * d):
            for c in range(2 * d):
                if B[a, c] != 0:
                    idx = [0] * N
                    idx[a] += 1
                    idx[n + c] += 1
                    key = tuple(idx)
                    beta[key] = beta.get(key, 0.0) + B[a, c]
        if not beta:
            return 0.0 + 0.0j
        F = poly_multiply(F, _poly_pow(beta, k, N))

    return integrate(F)


def _unit_index(n: int, k: int) -> tuple[int, ...]:
    idx = [0] * n
    idx[k] = 1
    return tuple(idx)
