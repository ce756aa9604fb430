"""Batch experiments over the twisted-functional laboratory, plus the CLI.

Three experiment drivers live here: the flattened Gaussian family sweep, the
perturbation exponent fit, and a verification suite aggregating the library's
named property checks.  Tables share a fixed CSV schema (grid_value, phi,
deficit, deficit_err, dist_upper, converged); JSON mirrors the tables with
diagnostics, all floats printed to 17 significant digits so reruns are
bit-comparable.
"""

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    AttachedParams,
    ExponentTriple,
    optimal_constant,
    standard_gaussians,
    symplectic_defect_norm,
)
from .expansion import (
    BalanceConfig,
    balance,
    hermite_mode,
    hermite_system,
    tdoubleprime,
    tprime,
    tprime_gaussian_expansion,
)
from .gausspoly import GaussianPolynomial, trilinear_closed
from .quadrature import QuadratureScheme, lp_norm_gausspoly, phi_gausspoly
from .symmetry import (
    Dilate,
    DistanceConfig,
    GlAction,
    ModulateFull,
    ModulateX,
    Scale,
    Shear,
    SpAction,
    SymmetryWord,
    TranslateMod,
    apply,
    invariance_residual,
    orbit_distance_upper,
)
from .core import HPoint, symplectic_matrix

_CSV_FIELDS = ("grid_value", "phi", "deficit", "deficit_err", "dist_upper", "converged")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    p: ExponentTriple = field(default_factory=ExponentTriple.symmetric)
    d: int = 1
    engine: str = "gh"
    gh_nodes: int = 40
    mc_samples: int = 1_000_000
    seed: int = 0
    grid: tuple = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
    eps_grid: tuple = tuple(np.geomspace(0.005, 0.05, 6))
    mode_alpha: tuple = (3, 0, 0)
    tol: float = 1e-6
    out: Optional[str] = None
    fmt: str = "csv"

    def __post_init__(self):
        for name in ("grid", "eps_grid"):
            g = tuple(float(x) for x in getattr(self, name))
            if any(x <= 0 for x in g):
                raise ValueError(f"{name} entries must be strictly positive")
            if list(g) != sorted(g):
                raise ValueError(f"{name} must be sorted ascending")
            setattr(self, name, g)
        if self.engine not in ("gh", "mc"):
            raise ValueError(f"engine must be gh or mc, got {self.engine!r}")
        if self.fmt not in ("csv", "json"):
            raise ValueError(f"format must be csv or json, got {self.fmt!r}")

    def scheme(self) -> QuadratureScheme:
        if self.engine == "gh":
            return QuadratureScheme.gh(self.gh_nodes)
        return QuadratureScheme.mc(self.mc_samples, self.seed)


@dataclass
class ExperimentRow:
    grid_value: float
    phi: float
    deficit: float
    deficit_err: float
    dist_upper: Optional[float]
    converged: bool


@dataclass
class ExponentFit:
    pairs: tuple  # (log dist_upper, log deficit)
    slope: float
    intercept: float
    r2: float
    rows: tuple


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def lambda_family(p: ExponentTriple, lam: float, d: int = 1):
    """The flattened family e^{-gamma_j (lam |x|^2 + t^2/lam + i t/lam)}."""
    if lam <= 0:
        raise ValueError(f"family parameter must be positive, got {lam}")
    nx = 2 * d
    out = []
    for gam in p.gammas:
        Q = np.diag([gam * lam] * nx + [gam / lam]).astype(complex)
        l = np.zeros(nx + 1, dtype=complex)
        l[nx] = -1j * gam / lam
        out.append(GaussianPolynomial.pure_gaussian(Q, l))
    return tuple(out)


def lambda_family_experiment(config: ExperimentConfig):
    """Per family parameter: phi at (Id, 0), deficit, and the distance bound."""
    if config.d != 1:
        raise ValueError("the family sweep is defined at d = 1")
    if any(not 1.0 <= lam <= 100.0 for lam in config.grid):
        raise ValueError("family grid must lie in [1, 100]")
    p = config.p
    bound = optimal_constant(p, 2 * config.d + 1)
    prm = AttachedParams(np.eye(2 * config.d), 0.0)
    scheme = config.scheme()
    rows = []
    warm = None
    for lam in config.grid:
        triple = lambda_family(p, lam, config.d)
        phi, err = phi_gausspoly(triple, p, prm.A, prm.b, scheme)
        rep = orbit_distance_upper(
            triple,
            p,
            prm,
            DistanceConfig(
                restarts=3 if warm is not None else 5,
                seed=config.seed,
                warm_start=warm,
            ),
        )
        warm = rep.theta
        rows.append(
            ExperimentRow(
                grid_value=lam,
                phi=phi,
                deficit=1.0 - phi / bound,
                deficit_err=err / bound,
                dist_upper=rep.upper_bound,
                converged=rep.converged,
            )
        )
    return rows


def perturbed_triple(p: ExponentTriple, alpha, eps: float, d: int = 1):
    """g with slot 1 shifted by eps times the indexed orthonormal mode."""
    n = 2 * d + 1
    g = standard_gaussians(p, n)
    mode = hermite_mode(alpha, p.taus[0], p.gammas[0], n=n)
    return (g[0] + mode.scale(eps), g[1], g[2])


def exponent_fit_experiment(config: ExperimentConfig) -> ExponentFit:
    """Fit log deficit against log distance over the perturbation grid.

    The perturbation is a degree-3 orthonormal mode (orthogonal to every
    first-order symmetry direction), the deficit is evaluated at (0, 0) where
    the trilinear term is closed-form, and distances are warm-started along
    the grid.
    """
    alpha = tuple(int(a) for a in config.mode_alpha)
    if sum(alpha) != 3:
        raise ValueError(f"perturbation mode must have |alpha| = 3, got {alpha}")
    if len(config.eps_grid) < 5:
        raise ValueError("the fit needs at least 5 grid points")
    if any(not 0.005 <= e <= 0.05 for e in config.eps_grid):
        raise ValueError("eps grid must lie in [0.005, 0.05]")
    p = config.p
    d = config.d
    bound = optimal_constant(p, 2 * d + 1)
    A0 = np.zeros((2 * d, 2 * d))
    scheme = config.scheme()
    rows = []
    warm = None
    for eps in config.eps_grid:
        triple = perturbed_triple(p, alpha, eps, d)
        phi, err = phi_gausspoly(triple, p, A0, 0.0, scheme)
        rep = orbit_distance_upper(
            triple,
            p,
            AttachedParams(A0, 0.0),
            DistanceConfig(
                restarts=2 if warm is not None else 4,
                seed=config.seed,
                warm_start=warm,
            ),
        )
        warm = rep.theta
        rows.append(
            ExperimentRow(
                grid_value=eps,
                phi=phi,
                deficit=1.0 - phi / bound,
                deficit_err=err / bound,
                dist_upper=rep.upper_bound,
                converged=rep.converged,
            )
        )
    pairs = tuple(
        (math.log(r.dist_upper), math.log(r.deficit)) for r in rows if r.deficit > 0
    )
    if len(pairs) < 5:
        raise ValueError("degenerate fit: fewer than 5 usable (positive) deficits")
    x = np.array([a for a, _ in pairs])
    y = np.array([b for _, b in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return ExponentFit(pairs, float(slope), float(intercept), r2, tuple(rows))


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str


def _random_pure_gaussian(rng, n: int, coupled: bool = True) -> GaussianPolynomial:
    M = rng.standard_normal((n, n)) * 0.4
    R = 0.5 * np.eye(n) + M @ M.T
    if not coupled:
        R[: n - 1, n - 1] = R[n - 1, : n - 1] = 0.0
    S = rng.standard_normal((n, n)) * 0.3
    Q = R + 0.5j * (S + S.T)
    l = rng.standard_normal(n) * 0.3 + 1j * rng.standard_normal(n) * 0.3
    coeff = complex(rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5))
    return GaussianPolynomial.pure_gaussian(Q, l, coeff)


def _random_admissible(rng) -> ExponentTriple:
    while True:
        p1, p2 = rng.uniform(1.1, 1.9, size=2)
        s = 2.0 - 1.0 / p1 - 1.0 / p2
        if 1e-3 < s < 1.0 - 1e-3:
            return ExponentTriple(p1, p2, 1.0 / s)


def check_first_moment(config) -> CheckResult:
    rng = np.random.default_rng(config.seed)
    g = standard_gaussians(config.p, 3)
    worst = 0.0
    for _ in range(20):
        f1 = _random_pure_gaussian(rng, 3)
        A = rng.standard_normal((2, 2))
        base = abs(trilinear_closed(f1, g[1], g[2], A, sigma_powers=(0, 0)))
        v = abs(trilinear_closed(f1, g[1], g[2], A, sigma_powers=(0, 1)))
        worst = max(worst, v / base)
    return CheckResult("first-moment", worst <= 1e-10, worst, 1e-10,
                       "max |(0,1) moment| / |(0,0) moment| over 20 random (f1, A)")


def check_second_moment(config) -> CheckResult:
    rng = np.random.default_rng(config.seed + 1)
    g = standard_gaussians(config.p, 3)
    ratios = []
    for _ in range(20):
        A = rng.standard_normal((2, 2))
        while abs(np.linalg.det(A)) < 0.05:
            A = rng.standard_normal((2, 2))
        v = trilinear_closed(*g, A, sigma_powers=(0, 2)).real
        ratios.append(v / symplectic_defect_norm(A) ** 2)
    ratios = np.array(ratios)
    spread = float((ratios.max() - ratios.min()) / ratios.mean())
    ok = spread <= 1e-8 and np.all(ratios > 0)
    return CheckResult("second-moment", bool(ok), spread, 1e-8,
                       f"(0,2) moment / defect^2 constant, C = {ratios.mean():.6e} > 0")


def check_shift_expansion(config) -> CheckResult:
    rng = np.random.default_rng(config.seed + 2)
    rec = tprime_gaussian_expansion(config.p, np.eye(2))
    err_exact = abs(rec["t_factor"] + 1.0 / 3.0)
    signs_ok = all(
        tprime_gaussian_expansion(_random_admissible(rng), np.eye(2))["t_factor"] < 0
        for _ in range(50)
    )
    eps = 0.05
    A = eps * np.eye(2)
    g = standard_gaussians(config.p, 3)
    v = tprime(*g, A, engine="quadrature", scheme=QuadratureScheme.gh(config.gh_nodes))
    rel = abs(v.real / (rec["c2"] * eps**4) - 1.0)
    ok = err_exact <= 1e-12 and signs_ok and rel <= 0.03
    return CheckResult("shift-expansion", bool(ok), max(err_exact, rel), 0.03,
                       f"t_factor = {rec['t_factor']:.15f}; 50 random signs negative: "
                       f"{signs_ok}; quadrature/closed c2 mismatch {rel:.2e}")


def check_twist_expansion(config) -> CheckResult:
    g = standard_gaussians(config.p, 3)
    A = 0.05 * np.eye(2)
    vals = {}
    for b in (0.5, 1.0, 2.0):
        vals[b] = tdoubleprime(
            *g, A, b, engine="quadrature", scheme=QuadratureScheme.gh(config.gh_nodes)
        ).real
    ratios = np.array([vals[b] / b**2 for b in (0.5, 1.0, 2.0)])
    dev = float(np.max(np.abs(ratios / ratios.mean() - 1.0)))
    ok = dev <= 0.02 and np.all(ratios < 0)
    return CheckResult("twist-expansion", bool(ok), dev, 0.02,
                       f"value/b^2 across b in (0.5, 1, 2): {ratios.tolist()}")


def check_young_bound(config, trials: int = 200) -> CheckResult:
    rng = np.random.default_rng(config.seed + 3)
    scheme = QuadratureScheme.gh(16)
    worst = -np.inf
    for k in range(trials):
        p = _random_admissible(rng)
        triple = tuple(_random_pure_gaussian(rng, 3) for _ in range(3))
        A = rng.standard_normal((2, 2)) * rng.uniform(0.0, 1.5)
        b = rng.uniform(-2.0, 2.0)
        phi, err = phi_gausspoly(triple, p, A, b, scheme)
        bound = optimal_constant(p, 3)
        worst = max(worst, phi - bound - 3.0 * err)
    return CheckResult("young-bound", worst <= 0.0, float(worst), 0.0,
                       f"max over {trials} random evaluations of phi - bound - 3 err")


def check_symmetry_invariance(config) -> CheckResult:
    rng = np.random.default_rng(config.seed + 4)
    p = config.p
    scheme = QuadratureScheme.gh(24)
    J = symplectic_matrix(1)
    floor = 1e-11
    worst = 0.0

    def rand_triple():
        return tuple(_random_pure_gaussian(rng, 3) for _ in range(3))

    def rand_params():
        A = rng.standard_normal((2, 2))
        while abs(np.linalg.det(A)) < 0.1:
            A = rng.standard_normal((2, 2))
        return AttachedParams(A, float(rng.uniform(-1.5, 1.5)))

    def rand_hpoint():
        return HPoint(rng.standard_normal(2) * 0.4, float(rng.standard_normal() * 0.4))

    from scipy.linalg import expm

    Qs = rng.standard_normal((2, 2)) * 0.3
    gens = [
        Scale(complex(*rng.uniform(0.5, 1.5, 2)), complex(*rng.uniform(0.5, 1.5, 2)), 2.0),
        Dilate(float(rng.uniform(0.7, 1.4))),
        TranslateMod(rand_hpoint(), rand_hpoint(), rand_hpoint()),
        SpAction(expm(J @ (Qs + Qs.T))),
        Shear(rng.standard_normal(2) * 0.4),
        ModulateX(rng.standard_normal(2) * 0.6),
        ModulateFull(rng.standard_normal(3) * 0.6),
        GlAction(np.eye(2) + rng.standard_normal((2, 2)) * 0.25),
    ]
    for gen in gens:
        res, scale = invariance_residual(
            SymmetryWord((gen,)), rand_triple(), p, rand_params(), scheme
        )
        worst = max(worst, res / max(3.0 * scale, floor))

    # closed-form-only cases at A = 0
    A0 = AttachedParams(np.zeros((2, 2)), 0.0)
    for gen in (Scale(1.3, 0.8 + 0.2j, 1.1), GlAction(np.eye(2) + 0.2 * np.ones((2, 2)))):
        res, _ = invariance_residual(SymmetryWord((gen,)), rand_triple(), p, A0, scheme)
        worst = max(worst, res / 1e-10)
    return CheckResult("symmetry-invariance", worst <= 1.0, float(worst), 1.0,
                       "max residual / max(3 x eval error, floor) over all generators")


def check_hermite_gram(config) -> CheckResult:
    worst = 0.0
    for t in {1.0, *config.p.taus}:
        hs = hermite_system(t, 4)
        worst = max(worst, float(np.max(np.abs(hs.gram - np.eye(5)))))
        worst = max(worst, abs(hs.coeffs[0, 0] - (2.0 * t) ** 0.25) / 1e-4)
    return CheckResult("hermite-gram", worst <= 1e-8, worst, 1e-8,
                       "max Gram deviation from identity at t in {1, tau_j}, degree 4")


def _random_perturbation(rng, p: ExponentTriple, d: int, size: float):
    """g_j plus a random degree <= 3 mode combination of the given norm."""
    n = 2 * d + 1
    g = standard_gaussians(p, n)
    out = []
    for j in range(3):
        terms = GaussianPolynomial.zero(n)
        for _ in range(3):
            alpha = tuple(int(a) for a in rng.integers(0, 2, size=n))
            coeff = complex(rng.standard_normal(), rng.standard_normal())
            terms = terms + hermite_mode(alpha, p.taus[j], p.gammas[j], n=n).scale(coeff)
        nrm = lp_norm_gausspoly(terms, p.ps[j], nodes=24)
        if nrm > 0:
            terms = terms.scale(size / nrm)
        out.append(g[j] + terms)
    return tuple(out), g


def check_balance(config, trials: int = 20) -> CheckResult:
    rng = np.random.default_rng(config.seed + 5)
    p = config.p
    prm = AttachedParams(np.eye(2), 0.0)
    worst_res = 0.0
    worst_iters = 0
    ok = True
    for _ in range(trials):
        triple, g = _random_perturbation(rng, p, 1, 0.01)
        result = balance(triple, p, prm, BalanceConfig(tol=config.tol))
        worst_res = max(worst_res, result.residual.max_abs)
        worst_iters = max(worst_iters, result.iterations)
        before = max(
            lp_norm_gausspoly(t - gj, p.ps[j], nodes=24)
            for j, (t, gj) in enumerate(zip(triple, g))
        )
        after = max(
            lp_norm_gausspoly(t - gj, p.ps[j], nodes=24)
            for j, (t, gj) in enumerate(zip(result.triple, g))
        )
        if not result.converged or result.iterations > 30 or after > 2.0 * before + 1e-12:
            ok = False
    return CheckResult("balance-convergence", ok and worst_res <= config.tol,
                       worst_res, config.tol,
                       f"max residual over {trials} trials; max iterations {worst_iters}")


def verify_suite(config: ExperimentConfig) -> dict:
    """Run the named property checks; failures are entries, never raises."""
    checks = []
    t0 = time.time()
    for fn in (
        check_first_moment,
        check_second_moment,
        check_shift_expansion,
        check_twist_expansion,
        check_young_bound,
        check_symmetry_invariance,
        check_hermite_gram,
        check_balance,
    ):
        t1 = time.time()
        res = fn(config)
        checks.append(
            {
                "name": res.name,
                "passed": bool(res.passed),
                "value": float(res.value),
                "tolerance": float(res.tolerance),
                "detail": res.detail,
                "seconds": time.time() - t1,
            }
        )
    return {
        "checks": checks,
        "failures": sum(not c["passed"] for c in checks),
        "seconds": time.time() - t0,
        "seed": config.seed,
    }


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt_float(x) -> str:
    return format(float(x), ".17g")


def write_csv(rows, path_or_handle):
    """Fixed-schema table, LF endings, floats at 17 significant digits."""

    def emit(handle):
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(_CSV_FIELDS)
        for r in rows:
            w.writerow(
                [
                    _fmt_float(r.grid_value),
                    _fmt_float(r.phi),
                    _fmt_float(r.deficit),
                    _fmt_float(r.deficit_err),
                    "" if r.dist_upper is None else _fmt_float(r.dist_upper),
                    str(bool(r.converged)).lower(),
                ]
            )

    if isinstance(path_or_handle, str):
        with open(path_or_handle, "w", encoding="utf-8", newline="") as fh:
            emit(fh)
    else:
        emit(path_or_handle)


def json_dumps(obj, indent: int = 2) -> str:
    """JSON with every float rendered via %.17g (NaN/inf become null)."""

    def render(o, depth):
        pad = " " * (indent * depth)
        pad2 = " " * (indent * (depth + 1))
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            x = float(o)
            return _fmt_float(x) if math.isfinite(x) else "null"
        if o is None:
            return "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad2}{json.dumps(str(k))}: {render(v, depth + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            items = [f"{pad2}{render(v, depth + 1)}" for v in seq]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        raise TypeError(f"cannot serialize {type(o)!r}")

    return render(obj, 0) + "\n"


def _rows_as_dicts(rows):
    return [
        {
            "grid_value": r.grid_value,
            "phi": r.phi,
            "deficit": r.deficit,
            "deficit_err": r.deficit_err,
            "dist_upper": r.dist_upper,
            "converged": bool(r.converged),
        }
        for r in rows
    ]


def _write_output(config: ExperimentConfig, rows, extra=None):
    payload = {"rows": _rows_as_dicts(rows)}
    if extra:
        payload.update(extra)
    if config.out is None:
        if config.fmt == "json":
            sys.stdout.write(json_dumps(payload))
        else:
            write_csv(rows, sys.stdout)
        return
    if config.fmt == "json":
        with open(config.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json_dumps(payload))
    else:
        write_csv(rows, config.out)


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _parse_floats(text: str):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_ints(text: str):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _read_config_file(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (want key=value): {line!r}")
            key, _, val = line.partition("=")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


_FLAG_KEYS = {
    "p": _parse_floats,
    "d": int,
    "engine": str,
    "gh_nodes": int,
    "mc_samples": int,
    "seed": int,
    "grid": _parse_floats,
    "eps_grid": _parse_floats,
    "mode_alpha": _parse_ints,
    "tol": float,
    "out": str,
    "format": str,
}


def _build_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        raw = _read_config_file(args.config)
        for key, parse in _FLAG_KEYS.items():
            if key in raw:
                values[key] = parse(raw[key])
    for key, parse in _FLAG_KEYS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag if not isinstance(flag, str) else parse(flag)
    p = values.pop("p", None)
    fmt = values.pop("format", None)
    cfg = ExperimentConfig(
        p=ExponentTriple(*p) if p else ExponentTriple.symmetric(),
        fmt=fmt if fmt else "csv",
        **values,
    )
    return cfg


def _add_common(sp):
    sp.add_argument("--p", type=_parse_floats, help="exponent triple a,b,c")
    sp.add_argument("--d", type=int, help="half the x dimension")
    sp.add_argument("--engine", choices=("gh", "mc"), help="quadrature engine")
    sp.add_argument("--gh-nodes", dest="gh_nodes", type=int, help="nodes per axis")
    sp.add_argument("--mc-samples", dest="mc_samples", type=int, help="MC sample count")
    sp.add_argument("--seed", type=int, help="RNG seed")
    sp.add_argument("--out", help="output path (default stdout)")
    sp.add_argument("--format", choices=("csv", "json"), help="output format")
    sp.add_argument("--tol", type=float, help="tolerance for solver-style checks")
    sp.add_argument("--config", help="key=value config file; flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="youngstab",
        description="Numerical laboratory for the twisted trilinear inequality",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("verify", help="run the named property checks")
    _add_common(sp)

    sp = sub.add_parser("lambda", help="flattened-family sweep")
    _add_common(sp)
    sp.add_argument("--grid", type=_parse_floats, help="family parameters, ascending")

    sp = sub.add_parser("exponent-fit", help="deficit-vs-distance slope fit")
    _add_common(sp)
    sp.add_argument("--eps-grid", dest="eps_grid", type=_parse_floats, help="amplitudes, ascending")
    sp.add_argument("--mode-alpha", dest="mode_alpha", type=_parse_ints, help="multi-index i,j,k")

    sp = sub.add_parser("deficit", help="deficit of the Gaussian datum at (a Id, b)")
    _add_common(sp)
    sp.add_argument("--a-scale", dest="a_scale", type=float, default=1.0)
    sp.add_argument("--b", type=float, default=0.0)

    sp = sub.add_parser("distance", help="orbit distance bound")
    _add_common(sp)
    sp.add_argument("--lam", type=float, help="use the flattened family at this parameter")
    sp.add_argument("--a-scale", dest="a_scale", type=float, default=1.0)
    sp.add_argument("--b", type=float, default=0.0)

    return ap


def _single_point_row(config, triple, A, b, with_distance: bool, grid_value: float):
    phi, err = phi_gausspoly(triple, config.p, A, b, config.scheme())
    bound = optimal_constant(config.p, 2 * config.d + 1)
    dist = None
    conv = True
    extra = None
    if with_distance:
        rep = orbit_distance_upper(
            triple, config.p, AttachedParams(A, b), DistanceConfig(seed=config.seed)
        )
        dist = rep.upper_bound
        conv = rep.converged
        extra = {"breakdown": rep.breakdown, "iterations": rep.iterations}
    row = ExperimentRow(grid_value, phi, 1.0 - phi / bound, err / bound, dist, conv)
    return row, extra


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _build_config(args)

    if args.command == "verify":
        report = verify_suite(config)
        for c in report["checks"]:
            status = "PASS" if c["passed"] else "FAIL"
            print(
                f"{status}  {c['name']:<22s} value {c['value']:.3e}  "
                f"tol {c['tolerance']:.3e}  ({c['seconds']:.1f}s)"
            )
        if config.out:
            with open(config.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json_dumps(report))
        return int(report["failures"])

    if args.command == "lambda":
        rows = lambda_family_experiment(config)
        _write_output(config, rows)
        return 0

    if args.command == "exponent-fit":
        fit = exponent_fit_experiment(config)
        _write_output(
            config,
            fit.rows,
            extra={"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2},
        )
        if config.fmt == "csv":
            print(f"# slope {_fmt_float(fit.slope)}  r2 {_fmt_float(fit.r2)}", file=sys.stderr)
        return 0

    if args.command == "deficit":
        A = args.a_scale * np.eye(2 * config.d)
        triple = standard_gaussians(config.p, 2 * config.d + 1)
        row, _ = _single_point_row(config, triple, A, args.b, False, args.a_scale)
        _write_output(config, [row])
        return 0

    if args.command == "distance":
        if args.lam is not None:
            triple = lambda_family(config.p, args.lam, config.d)
            A = np.eye(2 * config.d)
            b = 0.0
            gv = args.lam
        else:
            triple = standard_gaussians(config.p, 2 * config.d + 1)
            A = args.a_scale * np.eye(2 * config.d)
            b = args.b
            gv = args.a_scale
        row, extra = _single_point_row(config, triple, A, b, True, gv)
        _write_output(config, [row], extra=extra)
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
