"""Second-variation spectrum and discrete Hardy-Rellich gap checks.

All computations live on the clamped radial subspace: nodal test fields
with phi(1) = 0 and phi'(1) = 0, the outer slope imposed through a ghost
node so the Laplacian at r = 1 collapses to 2 phi[N-1] / h^2.  The
fourth-order quadratic form is assembled as B = L^T M L (discrete
Laplacian composed against midpoint-lumped mass weights), which makes it
symmetric positive semidefinite by construction, and every eigenvalue
reported here is a generalized eigenvalue of a pencil (B - potential, M).

The smallest eigenpair is computed by shifted inverse power iteration on
a banded LU factorization.  The shift is validated against the spectral
lower edge obtained from LAPACK's banded bisection on the congruent
standard problem M^-1/2 A M^-1/2; a user shift above the edge would make
inverse iteration converge to an interior eigenvalue, so it is re-anchored
just below the edge instead (the strongly indefinite gap pencils need
this).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .constants import ProblemParams, hn
from .radial import BandedMatrix, Mesh, RadialField

__all__ = [
    "EigenResult",
    "EigenSolveError",
    "mu1",
    "hardy_rellich_gap",
    "weighted_gap_50",
    "clamped_bilaplacian_form",
    "mass_weights",
    "singular_potential_weights",
]

DEFAULT_SHIFT = -1.0
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


class EigenSolveError(RuntimeError):
    """Inverse iteration failed to reach the requested residual."""


@dataclass
class EigenResult:
    mu1: float
    eigenfunction: RadialField
    iterations: int
    residual: float


def mass_weights(mesh: Mesh) -> np.ndarray:
    """Diagonal L^2 weights on nodes 0..N-1 (node N is clamped out).

    Dual-cell lumping of the midpoint rule: integrating the per-cell mean
    of phi^2 against r^(n-1) at midpoints is exactly phi^T diag(w) phi with
    these weights, so eigenfunctions normalized in this norm integrate to
    one under the package quadrature as well.
    """
    return _dual_cell_weights(mesh, mesh.midpoints ** (mesh.dim - 1.0))[:-1]


def _dual_cell_weights(mesh: Mesh, midpoint_density: np.ndarray) -> np.ndarray:
    nn = mesh.n_cells
    w = np.zeros(nn + 1)
    w[:-1] += 0.5 * mesh.h * midpoint_density
    w[1:] += 0.5 * mesh.h * midpoint_density
    return w


def singular_potential_weights(mesh: Mesh, weight_fn) -> np.ndarray:
    """Diagonal weights for a (possibly singular) potential, nodes 0..N-1.

    The density weight_fn(r) * r^(n-1) is sampled at cell midpoints only,
    then lumped onto the adjacent nodes; the r = 0 node carries no
    potential weight at all (the weight is integrable there for n >= 5, so
    nothing of substance is dropped).
    """
    mids = mesh.midpoints
    density = np.asarray(weight_fn(mids), dtype=float) * mids ** (mesh.dim - 1.0)
    if not np.all(np.isfinite(density)):
        raise ValueError("potential weight is not finite at some cell midpoint")
    w = _dual_cell_weights(mesh, density)
    w[0] = 0.0
    return w[:-1]


def origin_core_cells(n: int) -> int:
    """Number of origin cells zeroed out of the singular-gap subspace.

    Grid samplings of the singular tail r^(4-n), truncated at a node m,
    satisfy energy/(Hardy potential) ~ 64/n^2 < 1: the sub-cell bending
    cost that protects the continuous inequality is invisible to the mesh,
    so on the full nodal space the gap pencils are unbounded below at any
    constant.  Forcing fields to vanish on the first few cells restores
    domination: the transition row at node m contributes ~ m^3 (n-4)/H_n
    relative to the tail's potential, so a core of ~ (H_n/(n-4))^(1/3)
    cells defeats every sampled tail.  For n >= 5 a shrinking origin core
    has vanishing H^2 capacity, hence the restriction is consistent.  The
    core also caps the near-origin mass ratios that would otherwise sink
    the double-precision conditioning of the pencil for large n.
    """
    if n < 5:
        return 0
    return int(np.ceil((hn(n) / (n - 4.0)) ** (1.0 / 3.0))) + 2


def _laplacian_rows(mesh: Mesh):
    """Clamped-subspace Laplacian as banded row data.

    Maps dofs phi_0..phi_{N-1} (phi_N = 0) to Laplacian values on all
    N + 1 nodes; the outer node uses the phi'(1) = 0 ghost closure.
    Returns (lo, di, up) where row i reads
    lo[i] phi[i-1] + di[i] phi[i] + up[i] phi[i+1], out-of-range dofs zero.
    """
    nn = mesh.n_cells
    h, n = mesh.h, mesh.dim
    r = mesh.nodes[1:-1]
    lo = np.zeros(nn + 1)
    di = np.zeros(nn + 1)
    up = np.zeros(nn + 1)
    lo[1:-1] = 1.0 / h**2 - (n - 1.0) / (2.0 * h * r)
    di[1:-1] = -2.0 / h**2
    up[1:-1] = 1.0 / h**2 + (n - 1.0) / (2.0 * h * r)
    di[0] = -2.0 * n / h**2
    up[0] = 2.0 * n / h**2
    up[nn - 1] = 0.0  # phi_N = 0 removes that tap
    lo[nn] = 2.0 / h**2  # Lap phi(1) under the clamped ghost closure
    return lo, di, up


def clamped_bilaplacian_form(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Pentadiagonal quadratic form B = L^T M L and the mass diagonal.

    Returns (bands, mass) where bands is symmetric-banded upper storage
    with two superdiagonals: bands[2] is the main diagonal, bands[1] the
    first superdiagonal (padded left), bands[0] the second.
    """
    nn = mesh.n_cells
    lo, di, up = _laplacian_rows(mesh)
    mfull = _dual_cell_weights(mesh, mesh.midpoints ** (mesh.dim - 1.0))
    bands = np.zeros((3, nn))
    # row i of L touches dofs i-1, i, i+1; accumulate M-weighted products
    for i in range(nn + 1):
        taps = []
        if 0 <= i - 1:
            taps.append((i - 1, lo[i]))
        if i <= nn - 1:
            taps.append((i, di[i]))
        if i + 1 <= nn - 1:
            taps.append((i + 1, up[i]))
        for j, lj in taps:
            if lj == 0.0:
                continue
            for k, lk in taps:
                if lk == 0.0 or k < j:
                    continue
                bands[2 - (k - j), k] += mfull[i] * lj * lk
    return bands, mass_weights(mesh)


def _sym_bands_to_general(bands: np.ndarray, diag_add: np.ndarray) -> BandedMatrix:
    """Expand symmetric upper-banded storage into general banded (kl=ku=2)."""
    nn = bands.shape[1]
    a = BandedMatrix(nn, 2, 2)
    j = np.arange(nn)
    a.add_banded_diagonal(j, j, bands[2] + diag_add)
    j = np.arange(1, nn)
    a.add_banded_diagonal(j - 1, j, bands[1][1:])
    a.add_banded_diagonal(j, j - 1, bands[1][1:])
    j = np.arange(2, nn)
    a.add_banded_diagonal(j - 2, j, bands[0][2:])
    a.add_banded_diagonal(j, j - 2, bands[0][2:])
    return a


def _pencil_matvec(bands: np.ndarray, diag_add: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = (bands[2] + diag_add) * x
    y[:-1] += bands[1][1:] * x[1:]
    y[1:] += bands[1][1:] * x[:-1]
    y[:-2] += bands[0][2:] * x[2:]
    y[2:] += bands[0][2:] * x[:-2]
    return y


def _spectral_lower_edge(
    bands: np.ndarray, diag_add: np.ndarray, mass: np.ndarray
) -> tuple[float, float]:
    """Smallest pencil eigenvalue via banded bisection on M^-1/2 A M^-1/2.

    Also returns the infinity norm of the scaled matrix: eigenvalues of the
    quartic-conditioned form are only determined to O(eps * norm), which
    callers use as the attainable-accuracy floor.
    """
    s = 1.0 / np.sqrt(mass)
    d = np.zeros_like(bands)
    d[2] = (bands[2] + diag_add) * s * s
    d[1, 1:] = bands[1][1:] * s[:-1] * s[1:]
    d[0, 2:] = bands[0][2:] * s[:-2] * s[2:]
    vals = sla.eig_banded(d, lower=False, eigvals_only=True, select="i", select_range=(0, 0))
    norm = float(
        np.max(
            np.abs(d[2])
            + np.abs(np.append(d[1][1:], 0.0))
            + np.abs(d[1])
            + np.abs(np.append(d[0][2:], (0.0, 0.0)))
            + np.abs(d[0])
        )
    )
    return float(vals[0]), norm


def smallest_eigenpair(
    bands: np.ndarray,
    diag_add: np.ndarray,
    mass: np.ndarray,
    shift: float = DEFAULT_SHIFT,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[float, np.ndarray, int, float]:
    """Smallest eigenpair of (B + diag_add) x = mu M x by inverse iteration.

    ``shift`` must sit below the whole spectrum for inverse iteration to
    land on the smallest eigenvalue; if the bisection edge shows it does
    not, the shift is re-anchored slightly below that edge.
    """
    edge, norm_d = _spectral_lower_edge(bands, diag_add, mass)
    delta = max(1e-8, 1e-8 * abs(edge))
    sigma = shift if shift < edge - delta else edge - delta
    # accuracy attainable in doubles for this operator scale
    floor = 8.0 * np.finfo(float).eps * norm_d

    nn = mass.size
    sqrt_m = np.sqrt(mass)
    x = np.ones(nn)
    x /= np.sqrt(x @ (mass * x))
    mu = float(x @ _pencil_matvec(bands, diag_add, x))
    resid = np.inf
    iterations = 0
    for _ in range(4):
        try:
            lu = _sym_bands_to_general(bands, diag_add - sigma * mass).factor()
        except np.linalg.LinAlgError:
            sigma -= max(1e-6, 1e-6 * abs(sigma))
            continue
        stall = 0
        last = np.inf
        while iterations < max_iter:
            iterations += 1
            y = lu.solve(mass * x)
            y /= np.sqrt(y @ (mass * y))
            ay = _pencil_matvec(bands, diag_add, y)
            mu = float(y @ ay)
            # two accuracy certificates: the M^-1/2-weighted residual of
            # the M-normalized pair bounds the eigenvalue error, and the
            # Rayleigh quotient never undershoots the true minimum, so
            # closeness to the bisection edge certifies convergence too
            scale = max(1.0, abs(mu), abs(edge))
            resid_vec = float(np.linalg.norm((ay - mu * mass * y) / sqrt_m)) / scale
            resid = min(resid_vec, abs(mu - edge) / scale)
            x = y
            if resid_vec <= tol or abs(mu - edge) <= max(tol * scale, floor):
                i_max = int(np.argmax(np.abs(x)))
                if x[i_max] < 0:
                    x = -x
                return mu, x, iterations, resid
            stall = stall + 1 if resid_vec > 0.5 * last else 0
            last = resid_vec
            if stall >= 10:
                break  # re-anchor at the edge and retry
        sigma = edge - delta
    raise EigenSolveError(
        f"inverse iteration residual {resid:.3e} after {iterations} iterations (tol {tol:g})"
    )


def _as_eigen_result(
    mesh: Mesh, mu: float, x: np.ndarray, iterations: int, resid: float, core: int = 0
) -> EigenResult:
    phi = np.zeros(mesh.n_cells + 1)
    phi[core : core + x.size] = x
    return EigenResult(mu1=mu, eigenfunction=RadialField(mesh, phi), iterations=iterations, residual=resid)


def mu1(
    u: RadialField,
    params: ProblemParams,
    lam: float,
    shift: float = DEFAULT_SHIFT,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> EigenResult:
    """Smallest second-variation eigenvalue at a deflection state u.

    mu1 = inf over L^2-normalized clamped phi of
        integral (Lap phi)^2 - p lambda integral phi^2 / (1-u)^(p+1)
    (radial subspace, surface factor omitted on both terms).

    For n >= 5 the minimization excludes a few origin cells (see
    ``origin_core_cells``): that restriction has vanishing capacity there
    but keeps mesh-parasitic origin modes out of the pencil.
    """
    if u.values.max() >= 1.0:
        raise ValueError("mu1 requires a regular state: max u < 1")
    mesh = u.mesh
    if mesh.dim != params.n:
        raise ValueError("mesh dimension does not match problem parameters")
    bands, mass = clamped_bilaplacian_form(mesh)
    pot = (1.0 - u.values[:-1]) ** (-(params.p + 1.0)) * mass
    core = origin_core_cells(params.n)
    b, d, m = _core_restricted(bands, -params.p * lam * pot, mass, core)
    mu, x, iterations, resid = smallest_eigenpair(
        b, d, m, shift=shift, tol=tol, max_iter=max_iter
    )
    return _as_eigen_result(mesh, mu, x, iterations, resid, core)


def _core_restricted(bands, diag_add, mass, core: int):
    """Principal submatrices of the pencil on dofs core..N-1."""
    if core <= 0:
        return bands, diag_add, mass
    b = bands[:, core:].copy()
    b[1, :1] = 0.0
    b[0, :2] = 0.0
    return b, diag_add[core:], mass[core:]


def _singular_gap(mesh: Mesh, weight_fn, coefficient: float) -> float:
    bands, mass = clamped_bilaplacian_form(mesh)
    pot = singular_potential_weights(mesh, weight_fn)
    core = origin_core_cells(mesh.dim)
    b, d, m = _core_restricted(bands, -coefficient * pot, mass, core)
    mu, _, _, _ = smallest_eigenpair(b, d, m)
    return mu


def hardy_rellich_gap(n: int, coefficient: float, mesh: Mesh | None = None) -> float:
    """Smallest eigenvalue of the form (Lap phi)^2 - c phi^2 / r^4, radial.

    Evaluated on the core-restricted clamped subspace (fields vanish on a
    few origin cells, see ``origin_core_cells``).  Nonnegative to
    discretization tolerance at c = hn(n) for n >= 5; for c above the
    sharp constant the gap keeps falling under refinement.
    """
    if n < 5:
        raise ValueError("the fourth-order Hardy weight needs n >= 5")
    mesh = mesh or Mesh(256, n)
    if mesh.dim != n:
        raise ValueError("mesh dimension does not match n")
    return _singular_gap(mesh, lambda r: r**-4.0, coefficient)


def _two_term_weight(n: int):
    def weight(r):
        a = (n - 2.0) ** 2 * (n - 4.0) ** 2 / 16.0
        b = (n - 1.0) * (n - 4.0) ** 2 / 4.0
        first = a / ((r**2 - 0.9 * r ** (n / 2.0 + 1.0)) * (r**2 - r ** (n / 2.0)))
        second = b / (r**2 * (r**2 - r ** (n / 2.0)))
        return first + second

    return weight


def weighted_gap_50(n: int, mesh: Mesh | None = None) -> float:
    """Gap of the two-term weighted Hardy form on the radial subspace.

    The potential combines (n-2)^2(n-4)^2/16 against
    (r^2 - 0.9 r^(n/2+1))(r^2 - r^(n/2)) and (n-1)(n-4)^2/4 against
    r^2 (r^2 - r^(n/2)); both denominators are positive on (0, 1) for
    n >= 5 and blow up toward r = 1, where the clamped decay of phi wins.
    """
    if n < 5:
        raise ValueError("the weighted Hardy potential needs n >= 5")
    mesh = mesh or Mesh(256, n)
    if mesh.dim != n:
        raise ValueError("mesh dimension does not match n")
    return _singular_gap(mesh, _two_term_weight(n), 1.0)
