"""Radial clamped biharmonic MEMS model.

Solves Lap^2 u = lambda (1-u)^-p on the unit ball with clamped boundary,
traces the minimal branch to bound the pull-in threshold, computes the
second-variation spectrum, runs discrete Hardy-type gap checks, and
evaluates singular sub-solution certificates.
"""

__version__ = "0.1.0"

from .branch import (
    BranchDiagram,
    BranchPoint,
    ContinuationError,
    LambdaStarEstimate,
    NewtonDiverged,
    NoConvergence,
    SolverConfig,
    check_pointwise_bounds,
    continue_branch,
    energy_diagnostics,
    estimate_lambda_star,
    monotone_iterate,
    newton_refine,
)
from .certificates import (
    CertificateReport,
    GridMismatch,
    SubsolutionSpec,
    certify,
    check_54,
    check_stability_certificate,
    empirical_p0,
    h_function,
    omega_eval,
    run_table1,
    sup_h,
)
from .constants import (
    BiharmonicExtension,
    BoundaryPair,
    CriticalExponents,
    ProblemParams,
    biharmonic_extension,
    c0,
    critical_exponents,
    critical_exponent_residual,
    hn,
    k0,
    k1,
    subsolution_coeffs,
)
from .radial import (
    ClampedBiharmonicSystem,
    Mesh,
    RadialField,
    biharmonic_apply,
    laplacian_apply,
    laplacian_apply_clamped,
    quadrature,
    solve_clamped,
)
from .stability import (
    EigenResult,
    EigenSolveError,
    hardy_rellich_gap,
    mu1,
    weighted_gap_50,
)
