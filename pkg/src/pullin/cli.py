"""Command-line interface: constants, branch, mu1, hardy, certify, table1.

Every run prints a JSON (or CSV) payload to stdout; with --out-dir the
same payload is written to files together with a run manifest.  All
numbers are emitted with 17 significant digits and fixed key order, so a
repeated run with identical flags reproduces its outputs byte for byte
(the manifest's wall-clock duration is the one deliberate exception).

Exit codes: 0 success (a failed certificate is still a result), 2 bad
arguments, 3 continuation or solve failure, 4 eigensolver failure.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .branch import (
    ContinuationError,
    NoConvergence,
    NewtonDiverged,
    SolverConfig,
    check_pointwise_bounds,
    continue_branch,
    estimate_lambda_star,
    monotone_iterate,
    newton_refine,
)
from .certificates import (
    DEFAULT_GRID,
    TABLE1_M,
    SubsolutionSpec,
    certify,
    empirical_p0,
    run_table1,
)
from .constants import BoundaryPair, ProblemParams, critical_exponents, hn, k0
from .radial import Mesh, RadialField
from .stability import EigenSolveError, hardy_rellich_gap, mu1, weighted_gap_50

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONTINUATION = 3
EXIT_EIGEN = 4


# ---------------------------------------------------------------- formatting

def _fmt(x) -> str:
    """JSON token for one scalar; floats carry 17 significant digits."""
    if x is None:
        return "null"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    raise TypeError(f"not a scalar: {type(x)}")


def _json(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(
            f'{pad}  "{key}": {_json(val, indent + 1)}' for key, val in obj.items()
        )
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        inner = ",\n".join(f"{pad}  {_json(v, indent + 1)}" for v in obj)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, str):
        escaped = obj.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    return _fmt(obj)


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _csv(rows: list[dict]) -> str:
    if not rows:
        return "\n"
    header = list(rows[0].keys())
    lines = [",".join(header)]
    lines += [",".join(_csv_cell(row[k]) for k in header) for row in rows]
    return "\n".join(lines) + "\n"


class _Emitter:
    """Collects run outputs, writes files under --out-dir, prints stdout."""

    def __init__(self, args, command: str):
        self.command = command
        self.fmt = args.format
        self.out_dir = Path(args.out_dir) if args.out_dir else None
        self.t0 = time.monotonic()
        self.params = {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out_dir")
        }
        self.outputs: list[str] = []

    def write(self, name: str, text: str) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8")
        self.outputs.append(str(path))

    def finish(self, payload: dict, csv_rows: list[dict] | None = None) -> int:
        if csv_rows is not None:
            self.write(f"{self.command}.csv", _csv(csv_rows))
        self.write(f"{self.command}.json", _json(payload) + "\n")
        manifest = {
            "command": self.command,
            "tool": "pullin",
            "version": __version__,
            "parameters": self.params,
            "duration_seconds": time.monotonic() - self.t0,
            "outputs": list(self.outputs),
        }
        self.write(f"{self.command}_manifest.json", _json(manifest) + "\n")
        if self.fmt == "csv" and csv_rows is not None:
            sys.stdout.write(_csv(csv_rows))
        else:
            sys.stdout.write(_json(payload) + "\n")
        return EXIT_OK


# ------------------------------------------------------------- flag parsing

_SYMBOLIC = re.compile(r"^(e2|Hn/p)([+-].+)?$")


def parse_level(text: str, params: ProblemParams | None = None) -> float:
    """Numeric flag value, allowing the symbolic forms e2 and Hn/p.

    Both symbols live in units of K0: e2 is exp(2), Hn/p resolves to
    H_n / (p K0) so that the absolute level is exactly H_n / p.  A trailing
    +x or -x offset is applied after resolution, e.g. "e2+0.01".
    """
    text = text.strip()
    match = _SYMBOLIC.match(text)
    if not match:
        return float(text)
    base, offset = match.groups()
    if base == "e2":
        value = math.exp(2.0)
    else:
        if params is None:
            raise ValueError("Hn/p needs problem parameters")
        value = hn(params.n) / (params.p * k0(params))
    return value + (float(offset) if offset else 0.0)


# ----------------------------------------------------------------- commands

def cmd_constants(args) -> int:
    emitter = _Emitter(args, "constants")
    params = ProblemParams(args.n, args.p)
    crit = critical_exponents(args.n) if args.n >= 3 else None
    gamma_bar = -params.singular_power
    payload = {
        "n": params.n,
        "p": params.p,
        "K0": k0(params),
        "H_n": hn(params.n),
        "p_c": None if crit is None else crit.p_c,
        "p_c_plus": None if crit is None or crit.p_c_plus is None else crit.p_c_plus,
        "C0": {"formula": "(lambda_star / K0)^(1/(p+1))", "exponent": 1.0 / (params.p + 1.0)},
        "singular_profile": {
            "exponent": params.singular_power,
            "boundary_alpha": 0.0,
            "boundary_gamma": gamma_bar,
            "admissible": BoundaryPair(0.0, gamma_bar).admissible,
        },
        "admissibility_rule": "gamma <= 0 and alpha - gamma/2 < 1",
    }
    return emitter.finish(payload)


def _branch_csv_rows(diagram, K0):
    rows = []
    for pt in diagram.points:
        rows.append(
            {
                "a": pt.a,
                "lambda": pt.lam,
                "lambda_over_K0": pt.lam / K0,
                "u_max": pt.u_max,
                "mu1": pt.mu1,
                "e_bilap": pt.energy_bilap,
                "e_pot": pt.energy_pot,
                "fold_flag": pt.fold_flag,
            }
        )
    return rows


def cmd_branch(args) -> int:
    emitter = _Emitter(args, "branch")
    params = ProblemParams(args.n, args.p)
    if args.steps < 1 or not 0.0 < args.a_min < args.a_max < 1.0:
        print("invalid amplitude range or step count", file=sys.stderr)
        return EXIT_USAGE
    config = SolverConfig(mesh_cells=args.mesh)
    grid = np.linspace(args.a_min, args.a_max, args.steps)
    grid = grid[grid < 1.0 - config.guard]
    try:
        diagram = continue_branch(params, grid, config)
    except ContinuationError as exc:
        print(f"continuation failed: {exc}", file=sys.stderr)
        return EXIT_CONTINUATION
    est = estimate_lambda_star(diagram)
    last = diagram.points[-1]
    bounds = check_pointwise_bounds(last, est.lambda_star_lower, params)
    payload = {
        "n": params.n,
        "p": params.p,
        "mesh_cells": args.mesh,
        "K0": est.k0_value,
        "lambda_star_lower": est.lambda_star_lower,
        "lambda_star_lower_over_K0": est.lambda_star_lower / est.k0_value,
        "corollary_4_1": "pass" if est.exceeds_k0 else "fail",
        "fold": est.fold_location,
        "points": len(diagram.points),
        "requested": diagram.requested,
        "attempted": diagram.attempted,
        "skipped": len(diagram.skipped),
        "stopped_early": diagram.stopped_early,
        "largest_amplitude": last.a,
        "bounds_at_largest_amplitude": {
            "envelope_margin": bounds.envelope_margin,
            "profile_margin": bounds.profile_margin,
            "envelope_ok": bounds.envelope_ok,
            "profile_ok": bounds.profile_ok,
        },
    }
    return emitter.finish(payload, _branch_csv_rows(diagram, est.k0_value))


def cmd_mu1(args) -> int:
    emitter = _Emitter(args, "mu1")
    params = ProblemParams(args.n, args.p)
    config = SolverConfig(mesh_cells=args.mesh)
    mesh = Mesh(args.mesh, params.n)
    if args.lam == 0.0:
        u = RadialField.zeros(mesh)
    else:
        try:
            u = monotone_iterate(params, args.lam, config)
            u = newton_refine(u, params, args.lam, config)
        except (NoConvergence, NewtonDiverged) as exc:
            print(f"no minimal solution at lambda={args.lam}: {exc}", file=sys.stderr)
            return EXIT_CONTINUATION
    try:
        result = mu1(u, params, args.lam)
    except EigenSolveError as exc:
        print(f"eigensolver failed: {exc}", file=sys.stderr)
        return EXIT_EIGEN
    payload = {
        "n": params.n,
        "p": params.p,
        "lambda": args.lam,
        "mu1": result.mu1,
        "iterations": result.iterations,
        "residual": result.residual,
        "mesh_cells": args.mesh,
    }
    if args.dump_eigenfunction and emitter.out_dir is not None:
        emitter.out_dir.mkdir(parents=True, exist_ok=True)
        path = emitter.out_dir / "mu1_eigenfunction.csv"
        result.eigenfunction.to_csv(path)
        emitter.outputs.append(str(path))
    return emitter.finish(payload)


def cmd_hardy(args) -> int:
    emitter = _Emitter(args, "hardy")
    if args.n < 5:
        print("hardy checks need n >= 5", file=sys.stderr)
        return EXIT_USAGE
    coefficient = args.coefficient if args.coefficient is not None else args.scale * hn(args.n)
    meshes = [int(tok) for tok in args.meshes.split(",")]
    try:
        gaps = [
            {"mesh_cells": m, "gap": hardy_rellich_gap(args.n, coefficient, Mesh(m, args.n))}
            for m in meshes
        ]
        weighted = (
            [
                {"mesh_cells": m, "gap": weighted_gap_50(args.n, Mesh(m, args.n))}
                for m in meshes
            ]
            if args.weighted
            else None
        )
    except EigenSolveError as exc:
        print(f"eigensolver failed: {exc}", file=sys.stderr)
        return EXIT_EIGEN
    payload = {
        "n": args.n,
        "coefficient": coefficient,
        "coefficient_over_H_n": coefficient / hn(args.n),
        "gaps": gaps,
        "weighted_gaps": weighted,
    }
    return emitter.finish(payload)


def _report_dict(report) -> dict:
    return {
        "n": report.n,
        "m": report.m,
        "p": report.p,
        "lambda_prime_K0": report.lambda_prime,
        "beta_K0": report.beta,
        "K0": report.k0_val,
        "lambda_prime_abs": report.lambda_prime_abs,
        "beta_abs": report.beta_abs,
        "sup_h": report.sup_h,
        "x_star": report.x_star,
        "margin_54": report.margin_54,
        "stability_margin": report.stability_margin,
        "stability_origin_limit": report.stability_origin_limit,
        "verdict": report.verdict,
        "grid_size": report.grid_size,
        "equality_case": report.equality_case,
        "lambda_star_upper_K0": report.lambda_star_upper_k0,
        "discrete_margin": report.discrete_margin,
        "discrete_ok": report.discrete_ok,
    }


def _report_csv_row(report) -> dict:
    return {
        "n": report.n,
        "m": report.m,
        "p": report.p,
        "lambda_prime_K0": report.lambda_prime,
        "beta_K0": report.beta,
        "sup_h": report.sup_h,
        "x_star": report.x_star,
        "margin_54": report.margin_54,
        "stability_margin": report.stability_margin,
        "verdict": report.verdict,
    }


def cmd_certify(args) -> int:
    emitter = _Emitter(args, "certify")
    params = ProblemParams(args.n, args.p)
    spec = SubsolutionSpec.build(args.m, params)
    lam_p = parse_level(args.lambda_prime, params)
    beta = parse_level(args.beta, params)
    report = certify(spec, lam_p, beta, args.grid_size)
    return emitter.finish(_report_dict(report), [_report_csv_row(report)])


def cmd_table1(args) -> int:
    emitter = _Emitter(args, "table1")
    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        from .certificates import TABLE1_ROWS

        dims = sorted(TABLE1_ROWS)
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                n: pool.submit(
                    certify,
                    SubsolutionSpec.build(TABLE1_M, ProblemParams(n, args.p)),
                    TABLE1_ROWS[n][0],
                    TABLE1_ROWS[n][1],
                    args.grid_size,
                )
                for n in dims
            }
            reports = [futures[n].result() for n in dims]
    else:
        reports = run_table1(args.p, args.grid_size)
    certified = sum(1 for r in reports if r.verdict == "singular_certified")
    p0 = counts = None
    if args.p0_sweep:
        p0, counts = empirical_p0(grid_size=args.grid_size)
    payload = {
        "p": args.p,
        "m": TABLE1_M,
        "grid_size": args.grid_size,
        "rows": [_report_dict(r) for r in reports],
        "certified_rows": certified,
        "total_rows": len(reports),
        "empirical_p0": p0,
        "p0_sweep_certified_counts": (
            None if counts is None else {format(k, "g"): v for k, v in counts.items()}
        ),
    }
    return emitter.finish(payload, [_report_csv_row(r) for r in reports])


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pullin",
        description="Radial clamped biharmonic MEMS model: branches, spectra, certificates.",
    )
    parser.add_argument("--version", action="version", version=f"pullin {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mesh", type=int, default=256, help="radial cells (default 256)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads where applicable")
    common.add_argument("--out-dir", default=None, help="directory for CSV/JSON outputs")
    common.add_argument("--format", choices=("csv", "json"), default="json",
                        help="stdout payload format (default json)")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("constants", parents=[common], help="closed-form constants for (n, p)")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("branch", parents=[common], help="trace the amplitude-continued branch")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--a-min", type=float, default=0.01)
    sp.add_argument("--a-max", type=float, default=0.99)
    sp.add_argument("--steps", type=int, default=99)
    sp.set_defaults(func=cmd_branch)

    sp = sub.add_parser("mu1", parents=[common], help="second-variation eigenvalue at lambda")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--dump-eigenfunction", action="store_true")
    sp.set_defaults(func=cmd_mu1)

    sp = sub.add_parser("hardy", parents=[common], help="discrete Hardy-type gap checks")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--scale", type=float, default=1.0, help="coefficient as multiple of H_n")
    sp.add_argument("--coefficient", type=float, default=None, help="absolute coefficient")
    sp.add_argument("--weighted", action="store_true", help="include the two-term weighted gap")
    sp.add_argument("--meshes", default="128,256,512", help="comma-separated refinement sweep")
    sp.set_defaults(func=cmd_hardy)

    sp = sub.add_parser("certify", parents=[common], help="run the decision rule for one profile")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--m", type=float, required=True)
    sp.add_argument("--lambda-prime", required=True, help="K0 units; accepts e2, Hn/p, +offset")
    sp.add_argument("--beta", required=True, help="K0 units; accepts e2, Hn/p, +offset")
    sp.add_argument("--grid-size", type=int, default=DEFAULT_GRID)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("table1", parents=[common], help="evaluate all published certificate rows")
    sp.add_argument("--p", type=float, default=250.0)
    sp.add_argument("--grid-size", type=int, default=DEFAULT_GRID)
    sp.add_argument("--p0-sweep", action="store_true",
                    help="also sweep p to locate the smallest all-rows-certified exponent")
    sp.set_defaults(func=cmd_table1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
