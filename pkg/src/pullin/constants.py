"""Closed-form constants for the radial clamped MEMS problem.

The model equation is

    Lap^2 u = lambda / (1 - u)^p   on the unit ball in R^n,
    u = du/dn = 0                  on the boundary,

with p > 1.  Everything in this module is exact double-precision algebra:
the natural coefficient unit ``K0`` (the source strength for which
``1 - r^(4/(p+1))`` solves the equation), the best fourth-order Hardy
constant ``H_n``, the power-law coefficient ``K1 = Lap^2(r^m) / r^(m-4)``,
the critical exponents attached to the supercritical quartic identity, and
the quadratic fields that carry non-homogeneous clamped boundary data.

Formulas are arranged to stay accurate for p up to ~1e6 (ratios such as
2(p-1)/(p+1) are computed as 2 - 4/(p+1) so no large/large cancellation
occurs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ProblemParams",
    "BoundaryPair",
    "BiharmonicExtension",
    "CriticalExponents",
    "k0",
    "hn",
    "k1",
    "critical_exponents",
    "critical_exponent_residual",
    "subsolution_coeffs",
    "c0",
    "biharmonic_extension",
]


@dataclass(frozen=True)
class ProblemParams:
    """Dimension and nonlinearity exponent of one problem instance.

    The load parameter lambda is deliberately not stored here: one (n, p)
    pair serves a whole continuation sweep, so lambda travels per call.
    """

    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension n must be an integer >= 1, got {self.n!r}")
        if not self.p > 1.0:
            raise ValueError(f"exponent p must be > 1, got {self.p!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))

    @property
    def singular_power(self) -> float:
        """Exponent 4/(p+1) of the model singular profile 1 - r^(4/(p+1))."""
        return 4.0 / (self.p + 1.0)


@dataclass(frozen=True)
class BoundaryPair:
    """Clamped-type boundary data (u, du/dn) = (alpha, gamma) at r = 1."""

    alpha: float
    gamma: float

    @property
    def admissible(self) -> bool:
        """Data under which the shifted problem behaves like the homogeneous one."""
        return self.gamma <= 0.0 and self.alpha - self.gamma / 2.0 < 1.0


@dataclass(frozen=True)
class BiharmonicExtension:
    """Radial quadratic Phi(r) = c1 + c2 r^2 with Lap^2 Phi = 0.

    This is the unique radial biharmonic field matching a BoundaryPair:
    a radial function with harmonic Laplacian is a + b r^2.
    """

    c1: float
    c2: float

    def __call__(self, r):
        return self.c1 + self.c2 * r * r

    def derivative(self, r):
        return 2.0 * self.c2 * r


def k0(params: ProblemParams) -> float:
    """Source strength K0 with Lap^2 (1 - r^(4/(p+1))) = K0 r^(-4p/(p+1)).

    K0 = 8(p-1)/(p+1)^2 * [n - 2(p-1)/(p+1)] * [n - 4p/(p+1)].

    Positive iff n > 4p/(p+1) (for n >= 4 and p > 1 always).  Returned
    signed; callers that need positivity check it themselves.
    """
    n, p = params.n, params.p
    q = 4.0 / (p + 1.0)  # the singular-profile exponent
    # 8(p-1)/(p+1)^2 == q(2-q), 2(p-1)/(p+1) == 2-q, 4p/(p+1) == 4-q:
    # no large/large ratios, stays exact for p up to ~1e6
    return q * (2.0 - q) * (n - (2.0 - q)) * (n - (4.0 - q))


def hn(n: int) -> float:
    """Best constant (n(n-4)/4)^2 of the fourth-order Hardy inequality."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = n * (n - 4) / 4.0
    return t * t


def k1(m: float, n: int) -> float:
    """Coefficient of Lap^2 (r^m) = K1 r^(m-4): m(m-2)(m+n-2)(m+n-4)."""
    if m <= 0:
        raise ValueError("m must be positive")
    return m * (m - 2.0) * (m + n - 2.0) * (m + n - 4.0)


def radial_power_bilap_coeff(alpha: float, n: int) -> float:
    """Same quartic product as ``k1`` for an arbitrary real power alpha."""
    return alpha * (alpha - 2.0) * (alpha + n - 2.0) * (alpha + n - 4.0)


@dataclass(frozen=True)
class CriticalExponents:
    """Roots of the supercritical quartic identity; p_c_plus may be undefined."""

    p_c: float
    p_c_plus: float | None

    @property
    def has_plus(self) -> bool:
        return self.p_c_plus is not None


def critical_exponents(n: int) -> CriticalExponents:
    """Critical exponents p_c and p_c_plus for dimension n >= 3.

    Both are defined through s = sqrt(4 + n^2 - 4 sqrt(n^2 + H_n)):

        p_c      = (n + 2 - s) / (n - 6 - s)
        p_c_plus = (n + 2 + s) / (n - 6 + s)

    and satisfy the quartic identity checked by
    ``critical_exponent_residual``.  p_c_plus degenerates at n = 4
    (zero denominator) and is reported as ``None`` there, rather than NaN,
    so the hole cannot propagate silently.
    """
    if n < 3:
        raise ValueError("critical exponents are defined for n >= 3")
    disc = 4.0 + n * n - 4.0 * math.sqrt(n * n + hn(n))
    if disc < 0.0:
        # cannot occur for integer n >= 3; kept as a guard for float abuse
        return CriticalExponents(p_c=math.nan, p_c_plus=None)
    s = math.sqrt(disc)
    p_c = (n + 2.0 - s) / (n - 6.0 - s)
    if n == 4:
        return CriticalExponents(p_c=p_c, p_c_plus=None)
    p_c_plus = (n + 2.0 + s) / (n - 6.0 + s)
    return CriticalExponents(p_c=p_c, p_c_plus=p_c_plus)


def critical_exponent_residual(minus_p: float, n: int) -> float:
    """Residual of the defining quartic at -p = minus_p.

    Evaluates (t+4)(t+2)(n-2-t)(n-4-t) - H_n with t = 4/(minus_p - 1).
    Zero (to rounding) exactly when minus_p is p_c or p_c_plus.
    """
    t = 4.0 / (minus_p - 1.0)
    return (t + 4.0) * (t + 2.0) * (n - 2.0 - t) * (n - 4.0 - t) - hn(n)


def subsolution_coeffs(m: float, p: float) -> tuple[float, float]:
    """Coefficients (a1, a2) of the profile 1 - a1 r^(4/(p+1)) + a2 r^m.

    Fitting zero value and zero slope at r = 1 gives

        a1 = m / (m - 4/(p+1)),    a2 = (4/(p+1)) / (m - 4/(p+1)),

    so a1 - a2 = 1 exactly.  Requires m > 4/(p+1); at or below that the
    coefficients blow up or flip sign and the profile is unusable.
    """
    q = 4.0 / (p + 1.0)
    if not m > q:
        raise ValueError(f"need m > 4/(p+1) = {q:.6g}, got m = {m}")
    denom = m - q
    return m / denom, q / denom


def c0(lambda_star: float, params: ProblemParams) -> float:
    """Envelope coefficient C0 = (lambda_star / K0)^(1/(p+1)).

    Scales the touchdown envelope C0 r^(4/(p+1)) that bounds 1 - u near
    the origin at the pull-in threshold.
    """
    if lambda_star <= 0.0:
        raise ValueError("lambda_star must be positive")
    k = k0(params)
    if k <= 0.0:
        raise ValueError(f"K0 = {k:.6g} is not positive for (n, p) = ({params.n}, {params.p})")
    return (lambda_star / k) ** (1.0 / (params.p + 1.0))


def biharmonic_extension(bc: BoundaryPair) -> BiharmonicExtension:
    """Radial biharmonic field with value alpha and slope gamma at r = 1.

    Phi(r) = (alpha - gamma/2) + (gamma/2) r^2 reproduces both data exactly.
    """
    half = bc.gamma / 2.0
    return BiharmonicExtension(c1=bc.alpha - half, c2=half)
