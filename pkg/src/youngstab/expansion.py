"""Second-order structure of the twisted functional near the Gaussian datum.

Four pieces live here: the pointwise sharp/flat splitting of a profile
against its Gaussian envelope; the shift-difference T' and twist-difference
T'' verifiers with their closed coefficient expansions; the orthonormal
polynomial system and the orthogonality residual vector that detects
first-order directions along the symmetry orbit; and the damped Gauss-Newton
balancing solver that drives those residuals to zero with a symmetry word.

Closed expansions reduce everything to moment integrals of the form
integral of f1 f2 f3(-z1-z2) (t1+t2)^m sigma(Ax1, Ax2)^k, which gausspoly
evaluates exactly.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Optional

import numpy as np

from .core import AttachedParams, ExponentTriple, HPoint, standard_gaussians, symplectic_defect_norm
from .gausspoly import (
    GaussianPolynomial,
    GaussTerm,
    UnsupportedError,
    integrate,
    product,
    trilinear_closed,
)
from .quadrature import EvaluableFunction, QuadratureScheme, trilinear_quadrature
from .symmetry import (
    Dilate,
    GlAction,
    ModulateFull,
    ModulateX,
    Scale,
    Shear,
    SymmetryWord,
    TranslateMod,
    apply,
    normalize_entry,
)

_ENGINES = ("closed-form", "quadrature")
_COUPLING_TOL = 1e-13


# ---------------------------------------------------------------------------
# sharp / flat split
# ---------------------------------------------------------------------------


@dataclass
class SharpFlatSplit:
    """Pointwise truncation of f at the threshold eta * g: f_sharp keeps the
    small part, f_flat the excess; f_sharp + f_flat = f everywhere."""

    f_sharp: EvaluableFunction
    f_flat: EvaluableFunction
    eta: float


def sharp_flat_split(f, g_ref: GaussianPolynomial, eta: float) -> SharpFlatSplit:
    """Split f into |f| <= eta*g_ref and the remainder.

    The indicator leaves the closed-form class, so both parts come back as
    evaluable wrappers; f_sharp carries the exact envelope eta * g_ref.
    """
    if eta <= 0:
        raise ValueError(f"threshold must be positive, got {eta}")
    if not g_ref.is_single_pure:
        raise ValueError("reference must be a single pure Gaussian")
    ref_term = g_ref.terms[0]
    if abs(ref_term.coeff.imag) > 0 or ref_term.coeff.real <= 0:
        raise ValueError("reference must have a positive coefficient")
    if np.max(np.abs(ref_term.Q.imag)) > 0 or np.max(np.abs(ref_term.l)) > 0:
        raise ValueError("reference must be a centered real Gaussian")

    fe = f if isinstance(f, EvaluableFunction) else EvaluableFunction.from_gausspoly(f)
    n = fe.dimension
    if g_ref.n != n:
        raise ValueError("dimension mismatch between f and reference")

    def ref_vals(pts):
        return g_ref.evaluate(pts).real

    def sharp_fun(pts):
        v = fe.evaluate(pts)
        keep = np.abs(v) <= eta * ref_vals(pts)
        return np.where(keep, v, 0.0)

    def flat_fun(pts):
        v = fe.evaluate(pts)
        keep = np.abs(v) <= eta * ref_vals(pts)
        return np.where(keep, 0.0, v)

    f_sharp = EvaluableFunction(
        sharp_fun,
        n,
        ref_term.Q.real,
        eta * ref_term.coeff.real * (1.0 + 1e-12),
        grid_rate=fe.grid_rate,
        check=False,
    )
    f_flat = EvaluableFunction(
        flat_fun,
        n,
        fe.envelope_rate,
        fe.envelope_amplitude,
        grid_rate=fe.grid_rate,
        check=False,
    )
    return SharpFlatSplit(f_sharp, f_flat, float(eta))


# ---------------------------------------------------------------------------
# T' and T'' with closed expansions
# ---------------------------------------------------------------------------


def _as_evaluable(h):
    return h if isinstance(h, EvaluableFunction) else EvaluableFunction.from_gausspoly(h)


def _shift_series_term(h1, h2, term: GaussTerm, A, b, kmax, twistless):
    """Sum of the beta expansion of one f3 term, with optional twist powers.

    Shifting t3 by -beta multiplies the term by
    exp(-2 q3 (t1+t2) beta - q3 beta^2 - l3t beta); expanding it alone
    (twistless, the T' series, constant term dropped by the difference) or
    jointly with (e^{ib beta} - 1) (the T'' series, twist power >= 1) yields
    moment integrals alpha^m beta^k evaluated in closed form.
    """
    n = term.Q.shape[0]
    nx = n - 1
    if nx and np.max(np.abs(term.Q[:nx, nx])) > _COUPLING_TOL * max(
        1.0, float(np.max(np.abs(term.Q)))
    ):
        raise UnsupportedError(
            "closed-form expansion needs an f3 term with no x-t coupling"
        )
    if term.powers[nx] != 0:
        raise UnsupportedError("closed-form expansion needs t-power-free f3 terms")
    f3 = GaussianPolynomial((term,), n=n)
    q3 = complex(term.Q[nx, nx])
    lt = complex(term.l[nx])

    tc = {}

    def TC(m, k):
        if (m, k) not in tc:
            tc[(m, k)] = trilinear_closed(h1, h2, f3, A, sigma_powers=(m, k))
        return tc[(m, k)]

    scale = abs(TC(0, 0)) or 1.0
    total = 0.0 + 0.0j
    tail = []
    for ktot in range(1, kmax + 1):
        level = 0.0 + 0.0j
        qs = (0,) if twistless else range(1, ktot + 1)
        for q in qs:
            rem = ktot - q
            twist = (1j * b) ** q / math.factorial(q) if q else 1.0
            for a in range(rem + 1):
                for c in range((rem - a) // 2 + 1):
                    e = rem - a - 2 * c
                    if e and lt == 0:
                        continue
                    coeff = (
                        twist
                        * (-2.0 * q3) ** a
                        / math.factorial(a)
                        * (-lt) ** e
                        / math.factorial(e)
                        * (-q3) ** c
                        / math.factorial(c)
                    )
                    level += coeff * TC(a, ktot)
        total += level
        tail.append(abs(level))
        if len(tail) >= 2 and max(tail[-2:]) <= 1e-17 * scale:
            break
    return total


def tprime(h1, h2, h3, A, engine: str = "quadrature", scheme: Optional[QuadratureScheme] = None, kmax: int = 14) -> complex:
    """Shift difference: integral of h1 h2 [h3(shifted) - h3(unshifted)].

    The quadrature engine evaluates the difference as a single integral on a
    shared grid; the closed-form engine sums the beta Taylor series through
    moment integrals (valid when h3's terms have no x-t coupling and no
    t-powers).  Identically zero at A = 0.
    """
    A = np.asarray(A, dtype=float)
    if engine not in _ENGINES:
        raise ValueError(f"engine must be one of {_ENGINES}, got {engine!r}")
    if not np.any(A):
        return 0.0 + 0.0j
    if engine == "quadrature":
        sch = scheme or QuadratureScheme.gh(40)
        res = trilinear_quadrature(
            _as_evaluable(h1), _as_evaluable(h2), _as_evaluable(h3), A, 0.0, sch, kind="shift-diff"
        )
        return res.value
    total = 0.0 + 0.0j
    for term in h3.terms:
        total += _shift_series_term(h1, h2, term, A, 0.0, kmax, twistless=True)
    return total


def tdoubleprime(h1, h2, h3, A, b: float, engine: str = "quadrature", scheme: Optional[QuadratureScheme] = None, kmax: int = 14) -> complex:
    """Twist difference: integral of h1 h2 h3(shifted) (e^{ib beta} - 1).

    Zero exactly at b = 0; the leading small-A behaviour is quadratic in b
    with a negative coefficient (see tdoubleprime_gaussian_expansion).
    """
    A = np.asarray(A, dtype=float)
    if engine not in _ENGINES:
        raise ValueError(f"engine must be one of {_ENGINES}, got {engine!r}")
    if b == 0 or not np.any(A):
        return 0.0 + 0.0j
    if engine == "quadrature":
        sch = scheme or QuadratureScheme.gh(40)
        res = trilinear_quadrature(
            _as_evaluable(h1), _as_evaluable(h2), _as_evaluable(h3), A, b, sch, kind="twist-diff"
        )
        return res.value
    total = 0.0 + 0.0j
    for term in h3.terms:
        total += _shift_series_term(h1, h2, term, A, b, kmax, twistless=False)
    return total


def _t_marginal_moments(p: ExponentTriple):
    """(m=0, m=2) moments of the one-dimensional t marginal triple."""
    g1t, g2t, g3t = standard_gaussians(p, 1)
    A0 = np.zeros((0, 0))
    m0 = trilinear_closed(g1t, g2t, g3t, A0, sigma_powers=(0, 0)).real
    m2 = trilinear_closed(g1t, g2t, g3t, A0, sigma_powers=(2, 0)).real
    return m0, m2


def tprime_gaussian_expansion(p: ExponentTriple, A, d: int = 1) -> dict:
    """Exact second-order record of T' at the standard Gaussians.

    Returns {c2, t_factor, x_factor} with
    tprime ~ c2 * ||A^T J A||^2,  c2 = gamma3 * x_factor * M * t_factor,
    t_factor = 2 gamma3 <(t1+t2)^2> - 1 = (g1 g3 + g2 g3)/(g1 g2 + g1 g3 + g2 g3) - 1,
    and x_factor the beta^2 moment of the x block per unit ||A^T J A||^2.
    t_factor < 0 for all admissible p, hence c2 < 0.
    """
    if not p.admissible:
        raise ValueError("exponent triple must be admissible")
    A = np.asarray(A, dtype=float)
    n = 2 * d + 1
    g = standard_gaussians(p, n)
    g1, g2, g3 = p.gammas
    m0, m2 = _t_marginal_moments(p)
    t_factor = 2.0 * g3 * (m2 / m0) - 1.0

    ref = A if np.any(A) else np.eye(2 * d)
    defect = symplectic_defect_norm(ref)
    beta2 = trilinear_closed(*g, ref, sigma_powers=(0, 2)).real
    x_factor = (beta2 / m0) / defect**2

    c2 = g3 * x_factor * m0 * t_factor
    return {"c2": c2, "t_factor": t_factor, "x_factor": x_factor}


def tdoubleprime_gaussian_expansion(p: ExponentTriple, A, b: float = 1.0, d: int = 1) -> dict:
    """Leading record of T'': tdoubleprime ~ c2b * b^2 * ||A^T J A||^2.

    c2b = -(1/2) * x_factor * M < 0; the first-order-in-b term carries the
    beta^1 moment, which vanishes identically.
    """
    if not p.admissible:
        raise ValueError("exponent triple must be admissible")
    A = np.asarray(A, dtype=float)
    d2 = 2 * d
    g = standard_gaussians(p, 2 * d + 1)
    m0, _ = _t_marginal_moments(p)
    ref = A if np.any(A) else np.eye(d2)
    defect = symplectic_defect_norm(ref)
    beta2 = trilinear_closed(*g, ref, sigma_powers=(0, 2)).real
    x_factor = (beta2 / m0) / defect**2
    return {"c2b": -0.5 * x_factor * m0, "x_factor": x_factor}


# ---------------------------------------------------------------------------
# orthonormal polynomial system
# ---------------------------------------------------------------------------


@dataclass
class HermiteSystem:
    """Orthonormal polynomials under the weight e^{-2 t pi x^2}.

    coeffs[k] holds P_k's monomial coefficients (length nmax+1, high entries
    zero); gram is the recomputed moment Gram matrix, identity up to roundoff.
    """

    t: float
    nmax: int
    coeffs: np.ndarray
    gram: np.ndarray

    def polynomial(self, k: int) -> np.ndarray:
        return self.coeffs[k].copy()

    def evaluate(self, k: int, x) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x, float), self.coeffs[k])


def _weight_moments(t: float, top: int) -> np.ndarray:
    # integral of x^k e^{-2 t pi x^2}: variance 1/(4 pi t), mass (2t)^{-1/2}
    m0 = (2.0 * t) ** -0.5
    sig2 = 1.0 / (4.0 * math.pi * t)
    mom = np.zeros(top + 1)
    mom[0] = m0
    dfact = 1.0
    for k in range(1, top // 2 + 1):
        dfact *= 2 * k - 1
        mom[2 * k] = m0 * dfact * sig2**k
    return mom


def hermite_system(t: float, nmax: int) -> HermiteSystem:
    """Gram-Schmidt on monomials under the e^{-2 t pi x^2} pairing.

    Runs in the variance-normalized variable for conditioning, with one
    reorthogonalization pass, then maps coefficients back.  Leading
    coefficients are positive.
    """
    if t <= 0:
        raise ValueError(f"weight rate must be positive, got {t}")
    if not 0 <= nmax <= 8:
        raise ValueError(f"nmax must be in 0..8, got {nmax}")
    sig = 1.0 / math.sqrt(4.0 * math.pi * t)
    # moments of y = x / sig under the weight: standard-normal moments * mass
    m0 = (2.0 * t) ** -0.5
    ym = np.zeros(2 * nmax + 1)
    ym[0] = m0
    dfact = 1.0
    for k in range(1, nmax + 1):
        dfact *= 2 * k - 1
        ym[2 * k] = m0 * dfact

    def pair(u, v):
        w = np.convolve(u, v)
        return float(np.sum(w * ym[: w.size]))

    basis = []
    for k in range(nmax + 1):
        v = np.zeros(k + 1)
        v[k] = 1.0
        for _ in range(2):
            for b_ in basis:
                proj = pair(v, b_[: v.size]) if b_.size <= v.size else pair(
                    np.pad(v, (0, b_.size - v.size)), b_
                )
                width = max(v.size, b_.size)
                v = np.pad(v, (0, width - v.size)) - proj * np.pad(
                    b_, (0, width - b_.size)
                )
        v = v / math.sqrt(pair(v, v))
        if v[-1] < 0:
            v = -v
        basis.append(v)

    coeffs = np.zeros((nmax + 1, nmax + 1))
    for k, v in enumerate(basis):
        # map y^j -> (x/sig)^j
        coeffs[k, : v.size] = v / sig ** np.arange(v.size)

    xm = _weight_moments(t, 2 * nmax)
    gram = np.zeros((nmax + 1, nmax + 1))
    for i in range(nmax + 1):
        for j in range(nmax + 1):
            w = np.convolve(coeffs[i], coeffs[j])
            gram[i, j] = float(np.sum(w * xm[: min(w.size, xm.size)]))
    return HermiteSystem(float(t), int(nmax), coeffs, gram)


@lru_cache(maxsize=256)
def _system_cached(t: float, nmax: int) -> HermiteSystem:
    return hermite_system(t, nmax)


def hermite_mode(alpha, tau: float, gamma: float, n: Optional[int] = None) -> GaussianPolynomial:
    """The product mode P_alpha^{(tau)}(z) e^{-gamma |z|^2} as a closed-form object.

    alpha is a multi-index over all coordinates of z; coordinate factors come
    from the orthonormal system at rate tau.
    """
    alpha = tuple(int(a) for a in alpha)
    if n is None:
        n = len(alpha)
    if len(alpha) != n:
        raise ValueError("multi-index length must match dimension")
    if any(a < 0 for a in alpha):
        raise ValueError("multi-index entries must be nonnegative")
    sys_ = _system_cached(float(tau), max(alpha) if alpha else 0)
    Q = gamma * np.eye(n, dtype=complex)
    l = np.zeros(n, dtype=complex)

    polys = [sys_.coeffs[a][: a + 1] for a in alpha]
    terms = []

    def rec(i, powers, coeff):
        if i == n:
            if coeff != 0:
                terms.append(GaussTerm(complex(coeff), tuple(powers), Q, l))
            return
        for k, c in enumerate(polys[i]):
            if c != 0:
                rec(i + 1, powers + [k], coeff * c)

    rec(0, [], 1.0)
    return GaussianPolynomial(tuple(terms), n=n)


# ---------------------------------------------------------------------------
# orthogonality residuals
# ---------------------------------------------------------------------------


@dataclass
class OrthogonalityResidual:
    """Pairings of the perturbation against the first-order orbit directions.

    values follows the deterministic order of orthogonality_index_set; all
    entries are real."""

    values: np.ndarray
    index: tuple
    dimension: int

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def orthogonality_index_set(d: int):
    """Index set: Re at alpha=0 for all j, |alpha|=1 for j in {1,2},
    |alpha|=2 for j=3; Im at alpha=0 for all j and |alpha|=1 for j=3."""
    n = 2 * d + 1
    zero = (0,) * n

    def weight_one():
        for i in range(n):
            a = [0] * n
            a[i] = 1
            yield tuple(a)

    def weight_two():
        for i, j in combinations_with_replacement(range(n), 2):
            a = [0] * n
            a[i] += 1
            a[j] += 1
            yield tuple(a)

    out = []
    for j in (1, 2, 3):
        out.append(("re", j, zero))
    for j in (1, 2):
        for a in weight_one():
            out.append(("re", j, a))
    for a in weight_two():
        out.append(("re", 3, a))
    for j in (1, 2, 3):
        out.append(("im", j, zero))
    for a in weight_one():
        out.append(("im", 3, a))
    return tuple(out)


@lru_cache(maxsize=32)
def _residual_weights(p_key, d: int):
    """Weight functions P_alpha^{(tau_j)} g_j^{p_j - 1}, cached per (p, d)."""
    p = ExponentTriple(*p_key)
    n = 2 * d + 1
    idx = orthogonality_index_set(d)
    weights = []
    for part, j, alpha in idx:
        tau = p.taus[j - 1]
        gam = p.gammas[j - 1] * (p.ps[j - 1] - 1.0)
        weights.append(hermite_mode(alpha, tau, gam, n=n))
    return idx, tuple(weights)


def orthogonality_residuals(f_triple, p: ExponentTriple, d: int = 1) -> OrthogonalityResidual:
    """Exact residual vector for a closed-form perturbation triple."""
    n = 2 * d + 1
    for f in f_triple:
        if f.n != n:
            raise ValueError(f"perturbations must live in dimension {n}")
    idx, weights = _residual_weights(tuple(p.ps), d)
    vals = np.empty(len(idx))
    parts = {}
    for k, ((part, j, _alpha), w) in enumerate(zip(idx, weights)):
        key = (part, j)
        if key not in parts:
            f = f_triple[j - 1]
            parts[key] = f.real_part() if part == "re" else f.imag_part()
        comp = parts[key]
        vals[k] = integrate(product(comp, w)).real if not comp.is_zero else 0.0
    return OrthogonalityResidual(vals, idx, len(idx))


# ---------------------------------------------------------------------------
# balancing solver
# ---------------------------------------------------------------------------


@dataclass
class BalanceConfig:
    max_iter: int = 100
    tol: float = 1e-6
    fd_step: float = 1e-5
    min_step: float = 1.0 / 1024.0
    regularization: float = 1e-12


@dataclass
class BalanceResult:
    triple: tuple
    params: AttachedParams
    theta: np.ndarray
    residual: OrthogonalityResidual
    iterations: int
    converged: bool
    jacobian_rank: int
    singular_values: np.ndarray


def _balance_layout(d: int):
    nx = 2 * d
    n = nx + 1
    sizes = {
        "scale": 6,          # complex b_j
        "zeta": nx,          # x modulation
        "alpha": 1,          # t modulation
        "trans": 3 * n,      # U_j and U_j'
        "ksym": nx * (nx + 1) // 2,
        "s": 1,              # dilation 1+s
        "phi": nx,           # shear
    }
    offs = {}
    k = 0
    for name, size in sizes.items():
        offs[name] = (k, k + size)
        k += size
    return offs, k


def _balance_word(theta: np.ndarray, d: int) -> SymmetryWord:
    offs, total = _balance_layout(d)
    nx = 2 * d
    n = nx + 1

    def seg(name):
        a, b_ = offs[name]
        return theta[a:b_]

    sc = seg("scale")
    a_j = tuple(1.0 + sc[2 * j] + 1j * sc[2 * j + 1] for j in range(3))
    tr = seg("trans")
    us = tuple(HPoint(tr[j * n : j * n + nx], float(tr[j * n + nx])) for j in range(3))
    K = np.zeros((nx, nx))
    kv = seg("ksym")
    m = 0
    for i in range(nx):
        for j in range(i, nx):
            K[i, j] = K[j, i] = kv[m]
            m += 1
    s = float(seg("s")[0])
    if s <= -1:
        raise ValueError("dilation left the admissible range")
    gens = (
        TranslateMod(*us),
        Shear(seg("phi").copy()),
        Dilate(1.0 + s),
        ModulateX(seg("zeta").copy()),
        Scale(*a_j),
        GlAction(np.eye(nx) + K),
        ModulateFull(np.concatenate([np.zeros(nx), [float(seg("alpha")[0])]])),
    )
    return SymmetryWord(gens)


def balance(
    triple,
    p: ExponentTriple,
    params: AttachedParams,
    config: Optional[BalanceConfig] = None,
) -> BalanceResult:
    """Damped Gauss-Newton on (word parameters) -> orthogonality residuals.

    The input is normalized into the (Id, 0) chart first; the word uses the
    parameter list (b_j, zeta, alpha, U_j, U_j', K, s, phi) and the step is a
    least-squares solution with backtracking damping.  Non-convergence (input
    outside the small-perturbation regime) is reported, not raised.
    """
    cfg = config or BalanceConfig()
    nx = params.A.shape[0]
    d = nx // 2
    n = nx + 1
    entry, eprm = normalize_entry(triple, params)
    g = standard_gaussians(p, n)
    offs, total = _balance_layout(d)

    def residual(theta):
        word = _balance_word(theta, d)
        h, hprm = apply(word, entry, eprm)
        diff = tuple(hj - gj for hj, gj in zip(h, g))
        return orthogonality_residuals(diff, p, d), h, hprm

    theta = np.zeros(total)
    res, h, hprm = residual(theta)
    r = res.values
    iters = 0
    converged = res.max_abs <= cfg.tol
    J = None
    while not converged and iters < cfg.max_iter:
        iters += 1
        J = np.empty((r.size, total))
        for k in range(total):
            step = theta.copy()
            step[k] += cfg.fd_step
            try:
                rk = residual(step)[0].values
            except (ValueError, np.linalg.LinAlgError):
                rk = r
            J[:, k] = (rk - r) / cfg.fd_step
        delta, *_ = np.linalg.lstsq(J, -r, rcond=cfg.regularization)
        t = 1.0
        improved = False
        while t >= cfg.min_step:
            cand = theta + t * delta
            try:
                res_c, h_c, hprm_c = residual(cand)
            except (ValueError, np.linalg.LinAlgError):
                t *= 0.5
                continue
            if np.linalg.norm(res_c.values) < np.linalg.norm(r):
                theta, res, h, hprm = cand, res_c, h_c, hprm_c
                r = res.values
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        converged = res.max_abs <= cfg.tol

    if J is None:
        sv = np.zeros(0)
        rank = 0
    else:
        sv = np.linalg.svd(J, compute_uv=False)
        rank = int(np.sum(sv > max(J.shape) * np.finfo(float).eps * sv[0])) if sv.size else 0
    return BalanceResult(
        triple=h,
        params=hprm,
        theta=theta,
        residual=res,
        iterations=iters,
        converged=converged,
        jacobian_rank=rank,
        singular_values=sv,
    )
