"""Command-line runner: verification suites, the S^6 scan and the grid flow.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on a usage or
configuration error (one line on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import flow as fl
from .errors import GeometryError, NonRetractableError
from .forms import random_endomorphism
from .geometry import builtin, builtin_names, sample_points
from .identities import (
    OBSTRUCTION_MARGIN,
    ResidualReport,
    check_bochner,
    check_curvature_symmetries,
    check_integrability,
    check_integral_criterion,
    check_integral_trace,
    check_kaehler_harmonic,
    check_metric_compatibility,
    check_scal_bound,
    check_trace_theorem,
    check_weitzenboeck,
    s6_obstruction_scan,
)
from .jstructure import make_conjugated, make_standard

REPORT_VERSION = "1"
MAX_H = 1e-2
QUADRATURE_NODES = 64**2
SCAN_J_EPSILON = 0.5

# Sub-seeds: check k of a suite uses ``root + SEED_OFFSETS[suite] + k``.
SEED_OFFSETS = {
    "points": 0,
    "curvature_symmetries": 100,
    "weitzenboeck": 1000,
    "integrability": 2000,
    "bochner": 3000,
    "trace_theorem": 4000,
    "integral_criterion": 5000,
    "integral_trace": 6000,
    "s6_scan": 7000,
    "flow": 8000,
}

SUITES = (
    "metric_compatibility",
    "curvature_symmetries",
    "weitzenboeck",
    "integrability",
    "kaehler_harmonic",
    "bochner",
    "scal_bound",
    "trace_theorem",
    "integral_criterion",
    "integral_trace",
)
NEEDS_J = {"integrability", "kaehler_harmonic", "bochner", "scal_bound", "integral_criterion"}
TORUS_ONLY = {"integral_criterion", "integral_trace"}


class ConfigError(Exception):
    """Bad flags or parameters; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="harmonic-cs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, samples=100):
        sp.add_argument("--samples", type=int, default=samples, help="sample points")
        sp.add_argument("--h", type=float, default=1e-4, help="finite-difference step")
        sp.add_argument(
            "--tol", type=float, default=None,
            help="override every check tolerance (scan-s6: the required minimum gap)",
        )
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="JSON report path")

    v = sub.add_parser("verify", help="run identity suites on one manifold")
    v.add_argument("--manifold", default="flat_torus", help=f"one of {', '.join(builtin_names())}")
    v.add_argument("--n", type=int, default=None)
    v.add_argument("--L", type=float, default=None, help="torus side length")
    v.add_argument("--epsilon", type=float, default=None, help="perturbed_sphere amplitude")
    v.add_argument("--suite", default="all", help="comma-separated check names or 'all'")
    v.add_argument("--j-samples", type=int, default=20, help="random fields per check")
    v.add_argument("--fd-only", action="store_true", help="ignore closed-form connection data")
    common(v)

    s = sub.add_parser("scan-s6", help="obstruction scan of term3 - term2 on the 6-sphere")
    s.add_argument("--epsilon", type=float, default=0.0, help="metric perturbation (0 = round)")
    s.add_argument("--j-samples", type=int, default=50, help="structures sampled per point")
    s.add_argument("--fd-only", action="store_true")
    common(s, samples=200)

    f = sub.add_parser("flow", help="constrained Dirichlet flow on the flat 2-torus grid")
    f.add_argument("--grid", type=int, default=32, help="nodes per side (power of two)")
    f.add_argument("--L", type=float, default=2 * np.pi)
    f.add_argument("--epsilon", type=float, default=0.5, help="conjugation amplitude of the start")
    f.add_argument("--steps", type=int, default=100_000, help="maximum number of steps")
    f.add_argument("--tau", type=float, default=None, help="step size (default 0.2 * spacing^2)")
    f.add_argument("--tol", type=float, default=1e-4, help="gradient tolerance")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", default=None, help="JSON report path")
    f.add_argument("--csv", default=None, help="per-step trace CSV path")

    lm = sub.add_parser("list-manifolds", help="print the built-in manifolds")
    lm.add_argument("--out", default=None)
    return p


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def report_dict(command, manifold, seed, h, tol, reports: Sequence[ResidualReport]) -> dict:
    return {
        "version": REPORT_VERSION,
        "command": command,
        "manifold": manifold,
        "seed": seed,
        "h": h,
        "tol": tol,
        "checks": [
            {
                "name": r.name,
                "samples": r.samples,
                "max_residual": r.max_residual,
                "mean_residual": r.mean_residual,
                "tolerance": r.tolerance,
                "pass": r.passed,
            }
            for r in reports
        ],
    }


def write_report(reports, path, command="verify", manifold=None, seed=None, h=None, tol=None):
    """Write the JSON envelope; floats use the shortest round-tripping repr."""
    doc = report_dict(command, manifold, seed, h, tol, reports)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _check_out(path):
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ConfigError(f"cannot write report to {path}")


def _manifold_entry(M):
    return {"name": M.name, "params": dict(M.params)}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _validate_common(args):
    if args.samples < 1:
        raise ConfigError("--samples must be at least 1")
    if not 0 < args.h <= MAX_H:
        raise ConfigError(f"--h must lie in (0, {MAX_H:g}]")
    if args.tol is not None and not args.tol > 0:
        raise ConfigError("--tol must be positive")
    if getattr(args, "j_samples", 1) < 1:
        raise ConfigError("--j-samples must be at least 1")


def _selected_suites(choice: str, M) -> list:
    if choice == "all":
        return [s for s in SUITES if M.has_quadrature or s not in TORUS_ONLY]
    names = [s.strip() for s in choice.split(",") if s.strip()]
    unknown = [s for s in names if s not in SUITES]
    if unknown or not names:
        raise ConfigError(f"unknown suite {','.join(unknown) or choice!r}; choose from {', '.join(SUITES)}")
    for s in names:
        if s in TORUS_ONLY and not M.has_quadrature:
            raise ConfigError(f"suite {s} needs a flat torus")
    return names


def quadrature_resolution(n: int) -> int:
    """Nodes per axis so that the whole grid has about ``QUADRATURE_NODES`` nodes."""
    return max(4, int(round(QUADRATURE_NODES ** (1.0 / n))))


def _run_suite(name, M, X, args):
    k = args.j_samples
    grid = quadrature_resolution(M.dim)
    base = args.seed + SEED_OFFSETS.get(name, 0)
    kw = dict(h=args.h)
    if args.tol is not None:
        kw["tol"] = args.tol
    if name == "metric_compatibility":
        return check_metric_compatibility(M, X, seed=args.seed, **kw)
    if name == "curvature_symmetries":
        return check_curvature_symmetries(M, X, seed=base, **kw)
    if name == "weitzenboeck":
        reps = [check_weitzenboeck(random_endomorphism(M, base + i), X, seed=base + i, **kw) for i in range(k)]
    elif name == "integrability":
        reps = [check_integrability(make_conjugated(M, base + i), X, seed=base + i, **kw) for i in range(k)]
    elif name == "bochner":
        reps = [check_bochner(make_conjugated(M, base + i), X, seed=base + i, **kw) for i in range(k)]
    elif name == "trace_theorem":
        reps = [check_trace_theorem(random_endomorphism(M, base + i), X, seed=base + i, **kw) for i in range(k)]
    elif name == "kaehler_harmonic":
        return check_kaehler_harmonic(make_standard(M), X, seed=args.seed, **kw)
    elif name == "scal_bound":
        return check_scal_bound(make_standard(M), X, seed=args.seed, **kw)
    elif name == "integral_criterion":
        reps = [check_integral_criterion(make_standard(M), grid, seed=args.seed, **kw)]
        reps += [
            check_integral_criterion(make_conjugated(M, base + i), grid, seed=base + i, **kw)
            for i in range(min(k, 3))
        ]
    elif name == "integral_trace":
        reps = [
            check_integral_trace(
                random_endomorphism(M, base + i), grid, seed=base + i, extended=True, **kw
            )
            for i in range(min(k, 3))
        ]
    else:  # pragma: no cover - guarded by _selected_suites
        raise ConfigError(f"unknown suite {name}")
    return ResidualReport.merge(name, reps)


def _manifold_from_args(args):
    params = {}
    if args.n is not None:
        params["n"] = args.n
    if args.L is not None:
        if args.manifold != "flat_torus":
            raise ConfigError("--L applies to flat_torus only")
        params["L"] = args.L
    if args.epsilon is not None:
        if args.manifold != "perturbed_sphere":
            raise ConfigError("--epsilon applies to perturbed_sphere only")
        params["epsilon"] = args.epsilon
    return builtin(args.manifold, exact=not args.fd_only, **params)


def cmd_verify(args, out):
    _validate_common(args)
    M = _manifold_from_args(args)
    suites = _selected_suites(args.suite, M)
    if M.dim % 2 and NEEDS_J.intersection(suites):
        raise ConfigError(f"{M.name} has odd dimension {M.dim}: no almost complex structure")
    X = sample_points(M, args.samples, args.seed + SEED_OFFSETS["points"])
    reports = []
    for name in suites:
        rep = _run_suite(name, M, X, args)
        print(rep.line(), file=out)
        reports.append(rep)
    return _manifold_entry(M), reports


def cmd_scan(args, out):
    _validate_common(args)
    if args.epsilon == 0:
        M = builtin("round_sphere", exact=not args.fd_only, n=6)
    else:
        M = builtin("perturbed_sphere", exact=not args.fd_only, n=6, epsilon=args.epsilon)
    X = sample_points(M, args.samples, args.seed + SEED_OFFSETS["points"])
    base = args.seed + SEED_OFFSETS["s6_scan"]
    fields = [make_conjugated(M, base + i, SCAN_J_EPSILON) for i in range(args.j_samples)]
    margin = OBSTRUCTION_MARGIN if args.tol is None else args.tol
    rep = s6_obstruction_scan(M, fields, X, args.j_samples, margin, args.h, base)
    print(rep.line(), file=out)
    d = rep.details
    print(
        f"min gap {d['min_gap']:.12g}  min integrand {d['min_integrand']:.12g}  "
        f"orthogonal gap {d['orthogonal_gap_min']:.12g}  oracle {d['oracle_gap']:.12g}",
        file=out,
    )
    return _manifold_entry(M), [rep]


def cmd_flow(args, out):
    N = args.grid
    if N < 4 or N & (N - 1):
        raise ConfigError("--grid must be a power of two, at least 4")
    if args.steps < 0:
        raise ConfigError("--steps must be non-negative")
    if args.tau is not None and not args.tau > 0:
        raise ConfigError("--tau must be positive")
    if not args.tol > 0:
        raise ConfigError("--tol must be positive")
    init = fl.conjugated_grid(N, args.L, args.seed + SEED_OFFSETS["flow"], args.epsilon)
    try:
        trace = fl.run_flow(init, args.tau, args.tol, args.steps)
    except NonRetractableError as exc:
        raise ConfigError(str(exc)) from None
    if args.csv:
        trace.write_csv(args.csv)
    E = trace.energies
    rises = np.maximum(np.diff(E), 0.0) if len(E) > 1 else np.zeros(1)
    constraint = np.array([r[3] for r in trace.rows])
    name = "flat_torus"
    reports = [
        ResidualReport.from_residuals(name="flow_gradient", manifold=name,
                                      residuals=[trace.max_grad], tolerance=args.tol, h=0.0),
        ResidualReport.from_residuals(name="flow_energy_monotone", manifold=name,
                                      residuals=rises, tolerance=0.0, h=0.0),
        ResidualReport.from_residuals(name="flow_constraint", manifold=name,
                                      residuals=constraint, tolerance=fl.CONSTRAINT_TOL, h=0.0),
    ]
    for r in reports:
        print(r.line(), file=out)
    print(f"status {trace.status} after {trace.iterations} steps, energy {E[-1]:.12g}", file=out)
    return {"name": name, "params": {"n": 2, "L": float(args.L), "grid": N}}, reports


def cmd_list(args, out):
    for name in builtin_names():
        M = builtin(name)
        params = ", ".join(f"{k}={v}" for k, v in M.params.items())
        print(f"{name}  ({params})", file=out)
    return None, []


COMMANDS = {"verify": cmd_verify, "scan-s6": cmd_scan, "flow": cmd_flow, "list-manifolds": cmd_list}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        _check_out(args.out)
        manifold, reports = COMMANDS[args.command](args, out)
        if args.out:
            write_report(
                reports,
                args.out,
                command=args.command,
                manifold=manifold,
                seed=getattr(args, "seed", None),
                h=getattr(args, "h", None),
                tol=getattr(args, "tol", None),
            )
    except (ConfigError, GeometryError) as exc:
        print(f"harmonic-cs: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"harmonic-cs: error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return 2
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
