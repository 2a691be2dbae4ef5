"""Singular sub-solution certificates and the pull-in decision rule.

The candidate profile is the two-power family

    omega_m(r) = 1 - a1 r^(4/(p+1)) + a2 r^m,

clamped at r = 1 by construction and touching u = 1 only at the origin.
Whether omega_m certifies anything reduces to two scalar margins, both in
units of K0:

  * sub-solution margin: lambda' - sup_{x in [0,1]} H(x), where
    H(x) = (a1 - a2 x)^p (a1 + a2 (K1/K0) x) and x stands for
    r^(m - 4/(p+1)); nonnegative margin means
    Lap^2 omega_m <= lambda' K0 / (1 - omega_m)^p on the whole ball;
  * stability margin: the weighted-Hardy comparison that forces
    p beta K0 / (1 - omega_m)^(p+1) below the two-term radial potential,
    checked on a fine grid of radii together with its closed-form r -> 0
    limit H_n - p beta K0 / a1^(p+1).

The decision rule: both margins nonnegative with beta >= lambda' bounds
the pull-in threshold by lambda' K0; beta strictly above lambda' (or the
exact equality branch beta = lambda' = H_n / (p K0)) additionally forces
the limiting state at pull-in to be singular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .constants import BoundaryPair, ProblemParams, hn, k0, k1, subsolution_coeffs
from .radial import Mesh, RadialField, biharmonic_apply

__all__ = [
    "SubsolutionSpec",
    "CertificateReport",
    "GridMismatch",
    "omega_eval",
    "h_function",
    "sup_h",
    "check_54",
    "check_stability_certificate",
    "certify",
    "run_table1",
    "empirical_p0",
    "TABLE1_ROWS",
    "TABLE1_M",
    "P0_SWEEP",
]

DEFAULT_GRID = 10_000
GRID_EDGE = 1e-4          # pointwise checks stop at r = 1 - GRID_EDGE
EQUALITY_TOL = 1e-12
DISCRETE_MESH_CELLS = 4096
DISCRETE_RTOL = 1e-4
DISCRETE_R_MIN = 0.05
DISCRETE_NOISE = 64.0     # rounding floor of a two-sweep bilaplacian, in eps/h^4

# published (lambda', beta) pairs in units of K0, one per dimension,
# all with the same profile exponent m = 3.5
TABLE1_M = 3.5
TABLE1_ROWS: dict[int, tuple[float, float]] = {31: (3.15, 4.0), 18: (3.19, 3.22),
                                               17: (3.15, 3.18), 16: (3.13, 3.14),
                                               15: (2.76, 3.12), 14: (2.34, 2.96),
                                               13: (2.03, 2.15)}
for _n in range(19, 31):
    TABLE1_ROWS[_n] = (4.0, 10.0)

P0_SWEEP = (2.0, 5.0, 10.0, 25.0, 50.0, 100.0, 250.0)


class GridMismatch(RuntimeError):
    """Closed-form supremum disagrees with the grid scan."""


@dataclass(frozen=True)
class SubsolutionSpec:
    """Frozen candidate profile with its derived constants."""

    m: float
    params: ProblemParams
    a1: float
    a2: float
    k0_val: float
    k1_val: float
    hn_val: float

    @classmethod
    def build(cls, m: float, params: ProblemParams) -> "SubsolutionSpec":
        a1, a2 = subsolution_coeffs(m, params.p)
        return cls(
            m=float(m),
            params=params,
            a1=a1,
            a2=a2,
            k0_val=k0(params),
            k1_val=k1(m, params.n),
            hn_val=hn(params.n),
        )

    @property
    def tail_exponent(self) -> float:
        """Exponent of x = r^(m - 4/(p+1))."""
        return self.m - self.params.singular_power


def omega_eval(spec: SubsolutionSpec, r):
    """Profile value 1 - a1 r^(4/(p+1)) + a2 r^m (vectorized in r)."""
    r = np.asarray(r, dtype=float)
    q = spec.params.singular_power
    out = 1.0 - spec.a1 * r**q + spec.a2 * r**spec.m
    return float(out) if out.ndim == 0 else out


def _pow_base(spec: SubsolutionSpec, x, exponent: float):
    """(a1 - a2 x)^exponent via log1p, stable for p in the hundreds."""
    return np.exp(exponent * np.log1p((spec.a1 - 1.0) - spec.a2 * np.asarray(x, dtype=float)))


def h_function(spec: SubsolutionSpec, x):
    """H(x) = (a1 - a2 x)^p (a1 + a2 (K1/K0) x) on x in [0, 1].

    The base a1 - a2 x never drops below a1 - a2 = 1 on [0, 1].
    """
    x = np.asarray(x, dtype=float)
    if np.any((spec.a1 - spec.a2 * x) <= 0.0):
        raise ValueError("nonpositive base: x outside [0, 1]?")
    ratio = spec.k1_val / spec.k0_val
    out = _pow_base(spec, x, spec.params.p) * (spec.a1 + spec.a2 * ratio * x)
    return float(out) if out.ndim == 0 else out


def sup_h(spec: SubsolutionSpec, grid_size: int = DEFAULT_GRID) -> tuple[float, float]:
    """Supremum of H over [0, 1]: closed form cross-checked by a scan.

    The interior critical point is x* = a1 (K1 - p K0) / (a2 K1 (p + 1))
    (clamped to the interval; absent when K1 = 0, where H is monotone).
    A grid scan plus local polish must agree with the closed form to
    1e-9 relative or the operation fails.
    """
    p = spec.params.p
    candidates = [0.0, 1.0]
    if spec.k1_val != 0.0:
        x_star = (
            spec.a1 * (spec.k1_val - p * spec.k0_val)
            / (spec.a2 * spec.k1_val * (p + 1.0))
        )
        if 0.0 < x_star < 1.0:
            candidates.append(x_star)
    values = [h_function(spec, x) for x in candidates]
    best = int(np.argmax(values))
    x_best, sup_val = candidates[best], values[best]

    # independent scan: locate the best grid node, then polish locally
    xs = np.linspace(0.0, 1.0, grid_size + 1)
    hs = h_function(spec, xs)
    k = int(np.argmax(hs))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, grid_size)]
    res = minimize_scalar(
        lambda t: -h_function(spec, float(t)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-14},
    )
    scan_val = max(float(hs[k]), -float(res.fun))
    if abs(scan_val - sup_val) > 1e-9 * max(abs(sup_val), 1.0):
        raise GridMismatch(
            f"closed-form sup {sup_val!r} vs scanned {scan_val!r} "
            f"(diff {abs(scan_val - sup_val):.3e})"
        )
    return float(x_best), float(sup_val)


def check_54(spec: SubsolutionSpec, lambda_prime: float, grid_size: int = DEFAULT_GRID) -> float:
    """Sub-solution margin lambda' - sup H (K0 units).

    Nonnegative margin certifies Lap^2 omega_m <= lambda' K0 (1-omega)^-p
    throughout the punctured ball.  lambda' = 0 is allowed and can never
    certify (sup H >= H(0) > 0).
    """
    if lambda_prime < 0.0:
        raise ValueError("lambda' must be nonnegative")
    _, sup_val = sup_h(spec, grid_size)
    return lambda_prime - sup_val


def _stability_grid(spec: SubsolutionSpec, beta: float, grid_size: int):
    """Pointwise gap r^4 [two-term potential] - p beta K0 / (1-omega)^(p+1).

    Written with the r^4 already divided through, so no singular factors
    appear; returns (radii, gap values, origin limit).
    """
    n = spec.params.n
    p = spec.params.p
    a_coef = (n - 2.0) ** 2 * (n - 4.0) ** 2 / 16.0
    b_coef = (n - 1.0) * (n - 4.0) ** 2 / 4.0
    r = np.linspace(0.0, 1.0 - GRID_EDGE, grid_size + 1)[1:]
    x = r ** spec.tail_exponent
    lhs = a_coef / ((1.0 - 0.9 * r ** (n / 2.0 - 1.0)) * (1.0 - r ** (n / 2.0 - 2.0)))
    lhs = lhs + b_coef / (1.0 - r ** (n / 2.0 - 2.0))
    rhs = p * beta * spec.k0_val / _pow_base(spec, x, p + 1.0)
    origin_limit = spec.hn_val - p * beta * spec.k0_val / _pow_base(spec, 0.0, p + 1.0)
    return r, lhs - rhs, float(origin_limit)


def check_stability_certificate(
    spec: SubsolutionSpec, beta: float, grid_size: int = DEFAULT_GRID
) -> float:
    """Stability margin of omega_m at strength beta (K0 units).

    For m = 2 the tail base satisfies a1 - a2 x >= 1 on [0, 1], so the
    plain fourth-order Hardy constant suffices and the margin collapses to
    H_n - p beta K0.  Otherwise the two-term weighted potential is
    compared pointwise on a uniform grid in (0, 1 - 1e-4] together with
    the closed-form origin limit; the minimum over all of these is the
    margin.  Nonnegative margin certifies the stability inequality.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if spec.params.n < 5:
        raise ValueError("stability certificates need n >= 5")
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    p = spec.params.p
    if spec.m == 2.0:
        return spec.hn_val - p * beta * spec.k0_val
    _, gap, origin_limit = _stability_grid(spec, beta, grid_size)
    return float(min(np.min(gap), origin_limit))


@dataclass(frozen=True)
class CertificateReport:
    n: int
    m: float
    p: float
    lambda_prime: float       # K0 units
    beta: float               # K0 units
    k0_val: float
    lambda_prime_abs: float
    beta_abs: float
    sup_h: float
    x_star: float
    margin_54: float
    stability_margin: float
    stability_origin_limit: float
    verdict: str              # singular_certified | lambda_star_bounded | inconclusive
    grid_size: int
    equality_case: bool
    lambda_star_upper_k0: float | None
    discrete_margin: float | None
    discrete_ok: bool | None


def _equality_case(spec: SubsolutionSpec, lambda_prime: float, beta: float) -> bool:
    target = spec.hn_val / (spec.params.p * spec.k0_val)
    scale = max(1.0, abs(target))
    return (
        abs(beta - lambda_prime) <= EQUALITY_TOL * scale
        and abs(lambda_prime - target) <= EQUALITY_TOL * scale
    )


def _discrete_crosscheck(
    spec: SubsolutionSpec, lambda_prime: float, mesh_cells: int = DISCRETE_MESH_CELLS
) -> tuple[float, bool]:
    """Sampled sub-solution inequality via the finite-difference operator.

    Compares Lap^2 omega_m (two discrete Laplacian sweeps) against
    lambda' K0 (1 - omega)^-p on nodes r in [0.05, 1 - 2h].  The last
    interior node is excluded because the outer ghost closure is
    first-order right there, and the nodewise pass tolerance combines the
    relative target with the rounding floor eps/h^4 that any repeated
    second-difference carries: near the origin, where both sides are
    huge and the certificate actually binds, the comparison stays sharp
    at the relative level; at outer radii, where the exact sides decay to
    order one, only the floor is meaningful.
    """
    mesh = Mesh(mesh_cells, spec.params.n)
    w = RadialField(mesh, omega_eval(spec, mesh.nodes))
    bc = BoundaryPair(0.0, 0.0)
    lhs = biharmonic_apply(w, bc).values
    keep = (mesh.nodes >= DISCRETE_R_MIN) & (mesh.nodes <= 1.0 - 2.0 * mesh.h)
    rhs = lambda_prime * spec.k0_val * (1.0 - w.values[keep]) ** (-spec.params.p)
    scale = np.maximum(1.0, np.maximum(np.abs(lhs[keep]), np.abs(rhs)))
    noise = DISCRETE_NOISE * np.finfo(float).eps / mesh.h**4
    gap = rhs - lhs[keep]
    margin = float(np.min(gap / scale))
    ok = bool(np.all(gap >= -(DISCRETE_RTOL * scale + noise)))
    return margin, ok


def certify(
    spec: SubsolutionSpec,
    lambda_prime: float,
    beta: float,
    grid_size: int = DEFAULT_GRID,
    discrete_check: bool = True,
) -> CertificateReport:
    """Run the full decision rule for one (lambda', beta) pair (K0 units).

    Verdicts: ``singular_certified`` when both margins are nonnegative and
    beta > lambda' (or the exact equality branch
    beta = lambda' = H_n/(p K0)); ``lambda_star_bounded`` when both
    margins are nonnegative and beta >= lambda' (the threshold is then at
    most lambda' K0); ``inconclusive`` otherwise.  Negative margins never
    raise: a failed certificate is a result, not an error.
    """
    x_star, sup_val = sup_h(spec, grid_size)
    margin_54 = lambda_prime - sup_val
    stability_margin = check_stability_certificate(spec, beta, grid_size)
    if spec.m == 2.0:
        origin_limit = spec.hn_val - spec.params.p * beta * spec.k0_val
    else:
        origin_limit = _stability_grid(spec, beta, grid_size)[2]

    equality = _equality_case(spec, lambda_prime, beta)
    margins_ok = margin_54 >= 0.0 and stability_margin >= 0.0
    if margins_ok and (beta > lambda_prime or equality):
        verdict = "singular_certified"
    elif margins_ok and beta >= lambda_prime:
        verdict = "lambda_star_bounded"
    else:
        verdict = "inconclusive"
    upper = lambda_prime if (margins_ok and beta >= lambda_prime) else None

    discrete_margin = discrete_ok = None
    if discrete_check and margin_54 >= 0.0:
        discrete_margin, discrete_ok = _discrete_crosscheck(spec, lambda_prime)

    return CertificateReport(
        n=spec.params.n,
        m=spec.m,
        p=spec.params.p,
        lambda_prime=lambda_prime,
        beta=beta,
        k0_val=spec.k0_val,
        lambda_prime_abs=lambda_prime * spec.k0_val,
        beta_abs=beta * spec.k0_val,
        sup_h=sup_val,
        x_star=x_star,
        margin_54=margin_54,
        stability_margin=stability_margin,
        stability_origin_limit=origin_limit,
        verdict=verdict,
        grid_size=grid_size,
        equality_case=equality,
        lambda_star_upper_k0=upper,
        discrete_margin=discrete_margin,
        discrete_ok=discrete_ok,
    )


def run_table1(
    p: float, grid_size: int = DEFAULT_GRID, discrete_check: bool = True
) -> list[CertificateReport]:
    """Evaluate every published (lambda', beta) row at exponent p.

    Rows with negative margins are reported as such, never suppressed.
    """
    reports = []
    for n in sorted(TABLE1_ROWS):
        lam_p, beta = TABLE1_ROWS[n]
        spec = SubsolutionSpec.build(TABLE1_M, ProblemParams(n, p))
        reports.append(certify(spec, lam_p, beta, grid_size, discrete_check=discrete_check))
    return reports


def empirical_p0(
    sweep=P0_SWEEP, grid_size: int = DEFAULT_GRID
) -> tuple[float | None, dict[float, int]]:
    """Smallest swept p at which every published row certifies, if any.

    Returns (p0 or None, {p: number of rows certified}).  This measures
    the published pairs as printed; it is not an estimate for any other
    choice of (lambda', beta).
    """
    counts: dict[float, int] = {}
    p0 = None
    for p in sweep:
        reports = run_table1(p, grid_size, discrete_check=False)
        good = sum(1 for r in reports if r.verdict == "singular_certified")
        counts[p] = good
        if p0 is None and good == len(reports):
            p0 = p
    return p0, counts
