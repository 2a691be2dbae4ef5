"""Minimal solutions, amplitude continuation, and pull-in estimation.

Solutions of Lap^2 u = lambda (1-u)^-p with homogeneous clamped data are
computed two ways: a monotone fixed-point sweep from u = 0 (iterates ride
up the minimal solution from below, guarded against touching u = 1), and
Newton refinement on the coupled (u, v) system.  The branch itself is
traced in the center amplitude a = u(0) with lambda unknown: lambda(a) is
single-valued through the fold where u(lambda) is not, which is what makes
the diagram traceable.  Each Newton step solves a bordered system (banded
core plus the scalar lambda column and the u(0) = a constraint row) by
block elimination, so continuation stays O(N) per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import BoundaryPair, ProblemParams, c0, k0
from .radial import (
    ClampedBiharmonicSystem,
    Mesh,
    RadialField,
    laplacian_apply,
    quadrature,
)
from .stability import EigenSolveError, mu1

__all__ = [
    "SolverConfig",
    "NoConvergence",
    "NewtonDiverged",
    "BranchPoint",
    "BranchDiagram",
    "LambdaStarEstimate",
    "BoundsReport",
    "monotone_iterate",
    "newton_refine",
    "continue_branch",
    "estimate_lambda_star",
    "check_pointwise_bounds",
    "energy_diagnostics",
]

CLAMPED = BoundaryPair(0.0, 0.0)
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton: int = 30
    picard_tol: float = 1e-9
    max_picard: int = 5000
    guard: float = 1e-6          # iteration aborts once max u > 1 - guard
    mesh_cells: int = 256
    compute_mu1: bool = True
    # continuation is stopped once lambda falls below this fraction of the
    # running maximum: descending post-fold states sharpen toward the
    # unresolvable touchdown profile and are not trusted
    post_fold_drop: float = 0.3

    def __post_init__(self):
        if min(self.newton_tol, self.picard_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.guard < 0.1:
            raise ValueError("guard must lie in (0, 0.1)")


class NoConvergence(Exception):
    """Fixed-point sweep did not settle.

    ``reason`` is "guard_tripped" (the iterates reached the obstacle:
    evidence that lambda exceeds the pull-in threshold) or "stalled"
    (iteration budget exhausted before the tolerance was met).
    """

    def __init__(self, reason: str, iterations: int):
        self.reason = reason
        self.iterations = iterations
        super().__init__(f"no convergence after {iterations} iterations ({reason})")


class NewtonDiverged(Exception):
    pass


def _source(u: np.ndarray, params: ProblemParams, lam: float) -> np.ndarray:
    return lam * (1.0 - u) ** (-params.p)


def monotone_iterate(
    params: ProblemParams,
    lam: float,
    config: SolverConfig = SolverConfig(),
    system: ClampedBiharmonicSystem | None = None,
) -> RadialField:
    """Fixed-point sweep u_{k+1} = solve(lambda (1-u_k)^-p) from u_0 = 0.

    Iterates are nondecreasing (checked every step, slack 1e-9, as a hard
    runtime assertion); they converge to the minimal solution whenever one
    exists at this lambda and trip the obstacle guard otherwise.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    system = system or ClampedBiharmonicSystem(Mesh(config.mesh_cells, params.n))
    u = np.zeros(system.mesh.n_cells + 1)
    for k in range(1, config.max_picard + 1):
        u_next = system.solve(_source(u, params, lam), CLAMPED).values
        if np.min(u_next - u) < -MONOTONE_SLACK:
            raise RuntimeError(
                f"fixed-point iterate decreased by {-np.min(u_next - u):.3e} at step {k}"
            )
        if np.max(u_next) > 1.0 - config.guard:
            raise NoConvergence("guard_tripped", k)
        step = np.max(np.abs(u_next - u))
        u = u_next
        if step < config.picard_tol:
            return RadialField(system.mesh, u)
    raise NoConvergence("stalled", config.max_picard)


def _newton_matrices(system, u, params, lam):
    """Jacobian of the coupled residual and its lambda derivative."""
    jac = system.matrix.copy()
    nn = system.mesh.n_cells
    i = np.arange(nn)
    dpot = -params.p * lam * (1.0 - u[:nn]) ** (-(params.p + 1.0))
    jac.add_banded_diagonal(2 * i + 1, 2 * i, dpot)
    dlam = np.zeros(2 * (nn + 1))
    dlam[1 : 2 * nn : 2] = -((1.0 - u[:nn]) ** (-params.p))
    return jac, dlam


def _coupled_residual(system, x, params, lam):
    u = x[0::2]
    rhs = system.rhs(_source(u, params, lam), CLAMPED)
    return system.matrix.matvec(x) - rhs


def newton_refine(
    u0: RadialField,
    params: ProblemParams,
    lam: float,
    config: SolverConfig = SolverConfig(),
    system: ClampedBiharmonicSystem | None = None,
) -> RadialField:
    """Newton polish of a fixed-point (or warm-started) state at fixed lambda."""
    system = system or ClampedBiharmonicSystem(u0.mesh)
    if np.max(u0.values) >= 1.0 - config.guard:
        raise NewtonDiverged("initial state already touches the obstacle guard")
    x = np.empty(2 * (u0.mesh.n_cells + 1))
    x[0::2] = u0.values
    x[1::2] = _consistent_laplacian(system, u0.values)
    res_prev = math.inf
    growth = 0
    for _ in range(config.max_newton):
        res_vec = _coupled_residual(system, x, params, lam)
        res = float(np.max(np.abs(res_vec)))
        # residual scale follows the source term; 1e-10 stays absolute for
        # order-one sources but large lambda raises the rounding floor
        scale = max(1.0, float(np.max(_source(x[0::2], params, lam))))
        if res < config.newton_tol * scale:
            return RadialField(system.mesh, x[0::2])
        if not math.isfinite(res):
            raise NewtonDiverged("residual is not finite")
        growth = growth + 1 if res > res_prev else 0
        if growth >= 3:
            raise NewtonDiverged(f"residual grew three steps in a row ({res:.3e})")
        res_prev = res
        jac, _ = _newton_matrices(system, x[0::2], params, lam)
        x = x - jac.factor().solve(res_vec)
        if np.max(x[0::2]) > 1.0 - config.guard:
            raise NewtonDiverged("iterate reached the obstacle guard")
    raise NewtonDiverged(f"no convergence in {config.max_newton} steps (residual {res_prev:.3e})")


def _consistent_laplacian(system, u_values):
    """Laplacian samples that zero the linear u-rows of the coupled system."""
    from .radial import laplacian_apply_clamped

    return laplacian_apply_clamped(RadialField(system.mesh, u_values), CLAMPED).values


@dataclass
class BranchPoint:
    a: float
    lam: float
    u: RadialField
    mu1: float | None = None
    energy_bilap: float = math.nan
    energy_pot: float = math.nan
    fold_flag: bool = False

    @property
    def u_max(self) -> float:
        return float(np.max(self.u.values))


@dataclass
class BranchDiagram:
    params: ProblemParams
    points: list[BranchPoint] = field(default_factory=list)
    skipped: list[float] = field(default_factory=list)
    requested: int = 0
    attempted: int = 0
    stopped_early: str | None = None

    @property
    def lambda_star_lower(self) -> float:
        return max(p.lam for p in self.points)

    @property
    def fold_location(self) -> float | None:
        flagged = [p.a for p in self.points if p.fold_flag]
        return flagged[0] if flagged else None


class ContinuationError(RuntimeError):
    pass


def _augmented_newton(system, params, a, x, lam, config):
    """Solve {coupled residual = 0, u(0) = a} for (x, lambda) by Newton.

    The bordered linear step uses block elimination through the banded
    Jacobian: two banded solves per iteration.
    """
    for _ in range(config.max_newton):
        res = _coupled_residual(system, x, params, lam)
        res_norm = float(np.max(np.abs(res)))
        scale = max(1.0, float(np.max(_source(x[0::2], params, lam))))
        drift = abs(x[0] - a)
        if res_norm < config.newton_tol * scale and drift < config.newton_tol:
            return x, lam
        if not math.isfinite(res_norm):
            raise NewtonDiverged("residual is not finite")
        jac, dlam = _newton_matrices(system, x[0::2], params, lam)
        lu = jac.factor()
        w1 = lu.solve(-res)
        w2 = lu.solve(-dlam)
        if w2[0] == 0.0:
            raise NewtonDiverged("amplitude is insensitive to lambda (singular border)")
        dl = (a - x[0] - w1[0]) / w2[0]
        x = x + w1 + dl * w2
        lam = lam + dl
        if np.max(x[0::2]) > 1.0 - config.guard or lam < 0:
            raise NewtonDiverged("iterate left the trusted region")
    raise NewtonDiverged(f"augmented Newton stalled (residual {res_norm:.3e})")


def _is_radially_nonincreasing(u: np.ndarray) -> bool:
    return bool(np.min(u[:-1] - u[1:]) >= -MONOTONE_SLACK)


def continue_branch(
    params: ProblemParams,
    a_grid,
    config: SolverConfig = SolverConfig(),
) -> BranchDiagram:
    """Trace the solution branch over increasing center amplitudes.

    Each amplitude is solved by the bordered Newton iteration, warm-started
    by secant extrapolation from the two previous states.  Amplitudes where
    Newton fails are skipped (and recorded); if more than 20% of the
    attempted grid fails, the whole sweep is considered broken.  Sweeping
    stops early once lambda has dropped below ``config.post_fold_drop``
    times its running maximum: by then the fold has been passed and the
    descending states approach the touchdown profile the mesh cannot carry.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.size == 0:
        raise ValueError("empty amplitude grid")
    if np.any(np.diff(a_grid) <= 0):
        raise ValueError("amplitude grid must be strictly increasing")
    if a_grid[0] <= 0 or a_grid[-1] >= 1.0 - config.guard:
        raise ValueError("amplitudes must lie inside (0, 1 - guard)")

    mesh = Mesh(config.mesh_cells, params.n)
    system = ClampedBiharmonicSystem(mesh)
    # small-deflection seed: Lap^2 w = 1 clamped, so u ~ a w / w(0),
    # lambda ~ a / w(0)
    w, w_lap = system.solve_with_laplacian(RadialField.constant(mesh, 1.0), CLAMPED)
    w0 = w.values[0]

    diagram = BranchDiagram(params=params, requested=a_grid.size)
    history: list[tuple[float, np.ndarray, float]] = []  # (a, x, lambda)
    lam_max = 0.0
    consecutive_failures = 0
    for a in a_grid:
        diagram.attempted += 1
        if len(history) >= 2:
            (a1, x1, l1), (a2, x2, l2) = history[-2], history[-1]
            t = (a - a2) / (a2 - a1) if a2 != a1 else 0.0
            x_guess = x2 + t * (x2 - x1)
            lam_guess = l2 + t * (l2 - l1)
        elif history:
            a2, x2, l2 = history[-1]
            x_guess = x2 * (a / a2)
            lam_guess = l2 * (a / a2)
        else:
            x_guess = np.empty(2 * (mesh.n_cells + 1))
            x_guess[0::2] = a * w.values / w0
            x_guess[1::2] = a * w_lap.values / w0
            lam_guess = a / w0
        np.clip(x_guess[0::2], None, 1.0 - 2.0 * config.guard, out=x_guess[0::2])
        try:
            x, lam = _augmented_newton(system, params, a, x_guess, lam_guess, config)
        except (NewtonDiverged, np.linalg.LinAlgError, ArithmeticError):
            diagram.skipped.append(float(a))
            consecutive_failures += 1
            # past the fold the branch sharpens toward the touchdown
            # profile; once warm starts stop landing there is nothing
            # left to trace
            if history and consecutive_failures >= 5:
                diagram.attempted -= consecutive_failures
                diagram.skipped = diagram.skipped[:-consecutive_failures]
                diagram.stopped_early = f"newton failures past a={a:.6g}"
                break
            continue
        consecutive_failures = 0
        if lam < config.post_fold_drop * lam_max:
            diagram.attempted -= 1
            diagram.stopped_early = (
                f"lambda collapsed below {config.post_fold_drop:g} of its maximum at a={a:.6g}"
            )
            break
        u = x[0::2]
        if not _is_radially_nonincreasing(u):
            diagram.skipped.append(float(a))
            continue
        history.append((float(a), x, float(lam)))
        point = BranchPoint(a=float(a), lam=float(lam), u=RadialField(mesh, u.copy()))
        point.energy_bilap, point.energy_pot = energy_diagnostics(point, params)
        if config.compute_mu1:
            try:
                point.mu1 = mu1(point.u, params, point.lam).mu1
            except (EigenSolveError, ValueError):
                point.mu1 = None
        diagram.points.append(point)
        lam_max = max(lam_max, point.lam)

    if len(diagram.points) < 0.8 * diagram.attempted:
        raise ContinuationError(
            f"only {len(diagram.points)} of {diagram.attempted} attempted amplitudes converged"
        )
    _flag_fold(diagram)
    return diagram


def _flag_fold(diagram: BranchDiagram) -> None:
    """Mark the turning point where the centered slope of lambda(a) flips."""
    pts = diagram.points
    if len(pts) < 3:
        return
    lam = np.array([p.lam for p in pts])
    a = np.array([p.a for p in pts])
    slope = (lam[2:] - lam[:-2]) / (a[2:] - a[:-2])
    flips = np.nonzero((slope[:-1] > 0) & (slope[1:] <= 0))[0]
    if flips.size:
        k = int(np.argmax(lam))
        pts[k].fold_flag = True


@dataclass(frozen=True)
class LambdaStarEstimate:
    lambda_star_lower: float
    fold_location: float | None
    k0_value: float
    exceeds_k0: bool

    def __iter__(self):  # unpacks as (lower bound, fold)
        return iter((self.lambda_star_lower, self.fold_location))


def estimate_lambda_star(diagram: BranchDiagram) -> LambdaStarEstimate:
    """Certified-from-below pull-in estimate plus the fold, if one was seen.

    Every computed branch point is a solution, so max lambda is a lower
    bound for the threshold; it is checked against the closed-form floor
    K0 that the exact threshold must strictly exceed.
    """
    if not diagram.points:
        raise ValueError("empty branch diagram")
    k = k0(diagram.params)
    lower = diagram.lambda_star_lower
    return LambdaStarEstimate(
        lambda_star_lower=lower,
        fold_location=diagram.fold_location,
        k0_value=k,
        exceeds_k0=bool(lower > k),
    )


@dataclass(frozen=True)
class BoundsReport:
    envelope_margin: float | None   # min over r > 0 of C0 r^q - (1 - u)
    profile_margin: float | None    # min over r > 0 of (1 - r^q) - u
    envelope_ok: bool | None
    profile_ok: bool | None
    tolerance: float = 1e-6


def check_pointwise_bounds(
    point: BranchPoint,
    lambda_star_est: float,
    params: ProblemParams,
    tolerance: float = 1e-6,
) -> BoundsReport:
    """Nodewise envelope checks against the touchdown profile.

    Margins are evaluated outside a small origin core (the same cells the
    spectral checks exclude, see ``origin_core_cells``): both comparison
    profiles head to zero gap at the origin while every regular state
    keeps a flat touchdown core of sub-cell width there, so the first
    node or two sit inside structure the mesh cannot carry and compare
    pure discretization noise.  The envelope check (1 - u <= C0 r^q)
    needs n >= 5; the pointwise profile check (u <= 1 - r^q) needs
    n >= 13; each margin is None outside its range.
    """
    from .stability import origin_core_cells

    q = params.singular_power
    skip = max(1, origin_core_cells(params.n))
    r = point.u.mesh.nodes[skip:]
    u = point.u.values[skip:]
    envelope_margin = envelope_ok = None
    if params.n >= 5:
        c_env = c0(lambda_star_est, params)
        envelope_margin = float(np.min(c_env * r**q - (1.0 - u)))
        envelope_ok = envelope_margin >= -tolerance
    profile_margin = profile_ok = None
    if params.n >= 13:
        profile_margin = float(np.min((1.0 - r**q) - u))
        profile_ok = profile_margin >= -tolerance
    return BoundsReport(
        envelope_margin=envelope_margin,
        profile_margin=profile_margin,
        envelope_ok=envelope_ok,
        profile_ok=profile_ok,
        tolerance=tolerance,
    )


def energy_diagnostics(point: BranchPoint, params: ProblemParams) -> tuple[float, float]:
    """Quadratic bending energy and potential-well mass of a state.

    The bending term integrates (Lap u)^2 r^(n-1); the well term
    integrates (1-u)^-(p+1) r^(n-1) with u interpolated to cell midpoints
    before the power is taken, so profiles touching u = 1 exactly at the
    origin node still integrate finitely.
    """
    u = point.u
    mesh = u.mesh
    lap = laplacian_apply(u)
    e_bilap = quadrature(RadialField(mesh, lap.values**2), 0.0)
    u_mid = 0.5 * (u.values[:-1] + u.values[1:])
    well = (1.0 - u_mid) ** (-(params.p + 1.0))
    e_pot = float(mesh.h * np.sum(well * mesh.midpoints ** (mesh.dim - 1.0)))
    return e_bilap, e_pot
