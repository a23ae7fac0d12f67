# main.py
"""
kraus-stabilizer command line.

    python main.py validate bell.kraus.json
    python main.py analyze bell.kraus.json --dim-s 1 --basis bell.basis.json -o report.json
    python main.py synthesize bell.kraus.json --dim-s 1 --basis bell.basis.json -o controls.json
    python main.py simulate bell.kraus.json --controls controls.json --init maximally-mixed --steps 200 -o traj.csv
    python main.py demo bell --out-dir out/

Exit codes: 0 success, 1 domain failure, 2 I/O or parse failure, 3 infeasible.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from quantum.control import closed_loop, coupling_norms, synthesize_controls
from quantum.stability import check_gas, distance_to_target, lyapunov_v
from quantum.states import (
    DensityOperator,
    KrausMap,
    SubspaceSplit,
    basis_state,
    density_operator,
    iterate_map,
    maximally_mixed,
    sample_trajectory,
    validate_kraus,
)
from utils.errors import (
    ConfigError,
    DimensionError,
    FileFormatError,
    InfeasibleError,
    StabilizerError,
    ValidationError,
)
from utils.kraus_files import (
    analysis_report,
    load_matrix_file,
    parse_kraus_file,
    save_kraus_file,
    write_report,
    write_trajectory_csv,
)
from utils.tolerances import PROFILES, Tolerances, load_tolerances

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2
EXIT_INFEASIBLE = 3

logger = logging.getLogger("kraus_stabilizer")


# ------------------------------------------------------------------
# Shared helpers
# ------------------------------------------------------------------
def resolve_tolerances(args: argparse.Namespace) -> Tolerances:
    """Preset from --profile or DQDS_TOLERANCE_PROFILE, then --eps-* overrides."""
    base = load_tolerances(args.profile)
    tol = base.override(
        eps_rank=args.eps_rank,
        eps_zero=args.eps_zero,
        eps_eq=args.eps_eq,
        eps_spectral=args.eps_spectral,
    )
    logger.debug("Tolerances in use: %s", tol.as_dict())
    return tol


def load_map(path: str, tol: Tolerances) -> tuple:
    """(KrausFile, KrausMap) for a Kraus JSON file."""
    kraus_file = parse_kraus_file(path)
    return kraus_file, validate_kraus(kraus_file.ops, tol)


def load_split(dim: int, dim_s: int, basis_path: Optional[str], tol: Tolerances) -> SubspaceSplit:
    if basis_path:
        basis = load_matrix_file(basis_path, "basis")
        if basis.shape != (dim, dim):
            raise DimensionError(f"Basis is {basis.shape[0]}x{basis.shape[1]}, map dimension is {dim}")
        return SubspaceSplit.create(basis, dim_s, tol)
    return SubspaceSplit.create(np.eye(dim, dtype=np.complex128), dim_s, tol)


def parse_state_spec(spec: str, dim: int, tol: Tolerances) -> DensityOperator:
    """"maximally-mixed", "basis:k" or the path of a JSON density matrix."""
    if spec == "maximally-mixed":
        return maximally_mixed(dim)
    if spec.startswith("basis:"):
        try:
            index = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ValidationError(f"Bad basis state spec {spec!r}") from exc
        return basis_state(dim, index)
    if not Path(spec).is_file():
        raise ValidationError(f"Unknown state spec {spec!r}: not a keyword and not a file")
    rho = load_matrix_file(spec, "rho")
    if rho.shape != (dim, dim):
        raise DimensionError(f"State is {rho.shape[0]}x{rho.shape[1]}, map dimension is {dim}")
    return density_operator(rho, tol)


def check_dim_s(parser: argparse.ArgumentParser, dim_s: int, dim: int) -> None:
    if not 1 <= dim_s < dim:
        parser.error(f"--dim-s must satisfy 1 <= M < {dim}, got {dim_s}")


# ------------------------------------------------------------------
# Commands
# ------------------------------------------------------------------
def cmd_validate(args: argparse.Namespace) -> int:
    tol = resolve_tolerances(args)
    kraus_file = parse_kraus_file(args.file)
    try:
        kraus = validate_kraus(kraus_file.ops, tol)
    except ValidationError as e:
        print(f"❌ {args.file}: {e}")
        if e.residual is not None:
            print(f"completeness residual: {e.residual!r}")
        return EXIT_DOMAIN
    print(f"✅ {args.file}: {len(kraus)} operator(s), dim {kraus.dim}")
    print(f"completeness residual: {kraus.completeness_residual!r}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    tol = resolve_tolerances(args)
    kraus_file, kraus = load_map(args.file, tol)
    check_dim_s(parser, args.dim_s, kraus.dim)
    split = load_split(kraus.dim, args.dim_s, args.basis, tol)

    report = check_gas(kraus, split, tol)
    data = analysis_report(
        report.to_dict(),
        kraus_file.digest(),
        tol.as_dict(),
        coupling_norms(kraus, split, tol),
        split.dim_s,
        args.timestamp,
    )
    print(
        f"invariant={report.invariant} gas={report.gas} "
        f"corner_spectral_radius={report.corner_spectral_radius!r} "
        f"kernel_intersection_dim={report.kernel_intersection_dim}"
    )
    if report.near_rank_boundary:
        print("⚠️ A rank decision was close to the eps_rank threshold")
    if args.output:
        path = write_report(args.output, data)
        print(f"✅ Report written to {path}")
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    tol = resolve_tolerances(args)
    _, kraus = load_map(args.file, tol)
    check_dim_s(parser, args.dim_s, kraus.dim)
    split = load_split(kraus.dim, args.dim_s, args.basis, tol)

    try:
        result = synthesize_controls(kraus, split, tol)
    except InfeasibleError as e:
        print(f"❌ {e}")
        return EXIT_INFEASIBLE

    path = save_kraus_file(
        args.output,
        result.controls,
        name="controls",
        extra={
            "feasible": True,
            "iterations": result.iterations,
            "subspace_chain": [list(pair) for pair in result.subspace_chain],
            "kernel_dims": list(result.kernel_dims),
            "mixing_steps": list(result.mixing_steps),
            "near_rank_boundary": result.near_rank_boundary,
            "tolerances": tol.as_dict(),
        },
    )
    print(
        f"✅ Controls written to {path} ({result.iterations} iteration(s), "
        f"closed-loop radius {result.closed_loop_report.corner_spectral_radius:.6f})"
    )
    return EXIT_OK


def _apply_controls(kraus: KrausMap, controls_path: Optional[str], tol: Tolerances) -> KrausMap:
    if not controls_path:
        return kraus
    controls = parse_kraus_file(controls_path)
    if controls.dim != kraus.dim:
        raise DimensionError(f"Controls are {controls.dim}-dimensional, map is {kraus.dim}-dimensional")
    return closed_loop(kraus, controls.ops, tol)


def cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    tol = resolve_tolerances(args)
    _, kraus = load_map(args.file, tol)
    check_dim_s(parser, args.dim_s, kraus.dim)
    if args.steps < 1:
        parser.error("--steps must be >= 1")
    split = load_split(kraus.dim, args.dim_s, args.basis, tol)
    loop = _apply_controls(kraus, args.controls, tol)
    rho0 = parse_state_spec(args.init, kraus.dim, tol)

    outcomes: Optional[List[int]] = None
    if args.mode == "averaged":
        states = iterate_map(loop, rho0, args.steps, tol)
        v_values = [lyapunov_v(rho, split) for rho in states]
        distances = [distance_to_target(rho, split) for rho in states]
    else:
        v_values, distances, outcomes = simulate_ensemble(
            loop, rho0, split, args.steps, args.seed, args.trajectories, tol
        )

    path = write_trajectory_csv(args.output, v_values, distances, outcomes)
    print(f"✅ {args.steps} step(s) written to {path}, final V = {v_values[-1]!r}")
    return EXIT_OK


def simulate_ensemble(
    loop: KrausMap,
    rho0: DensityOperator,
    split: SubspaceSplit,
    steps: int,
    seed: Optional[int],
    trajectories: int,
    tol: Tolerances,
) -> tuple:
    """Mean V and dist_S over independent stochastic trajectories.

    Child streams come from SeedSequence(seed).spawn, one per trajectory, and
    are merged in trajectory order. Outcomes are only returned for a single
    trajectory.
    """
    if trajectories < 1:
        raise ValidationError(f"--trajectories must be >= 1, got {trajectories}")
    children = np.random.SeedSequence(seed).spawn(trajectories)
    v_sum = np.zeros(steps)
    d_sum = np.zeros(steps)
    outcomes: Optional[List[int]] = None
    for child in children:
        rng = np.random.default_rng(child)
        path = sample_trajectory(loop, rho0, steps, rng, tol)
        v_sum += [lyapunov_v(o.rho_post, split) for o in path]
        d_sum += [distance_to_target(o.rho_post, split) for o in path]
        if trajectories == 1:
            outcomes = [o.k for o in path]
    return list(v_sum / trajectories), list(d_sum / trajectories), outcomes


def cmd_demo(args: argparse.Namespace) -> int:
    from bell_demo import run_demo

    tol = resolve_tolerances(args)
    result = run_demo(tolerances=tol, out_dir=args.out_dir, timestamp=args.timestamp)
    if result.get("mismatches"):
        print("\n❌ Bell demo did not reproduce the reference values:")
        for line in result["mismatches"]:
            print(f"   - {line}")
        return EXIT_DOMAIN
    print("\n✅ Bell demo reproduced every reference value")
    return EXIT_OK


# ------------------------------------------------------------------
# Argument parsing
# ------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", choices=sorted(PROFILES), default=None,
                        help="Tolerance preset (default: $DQDS_TOLERANCE_PROFILE or 'default').")
    common.add_argument("--eps-rank", type=float, default=None, help="Override eps_rank.")
    common.add_argument("--eps-zero", type=float, default=None, help="Override eps_zero.")
    common.add_argument("--eps-eq", type=float, default=None, help="Override eps_eq.")
    common.add_argument("--eps-spectral", type=float, default=None, help="Override eps_spectral.")
    common.add_argument("--timestamp", default=None,
                        help="Fixed ISO-8601 timestamp for reports (reproducible bytes).")
    common.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging.")

    parser = argparse.ArgumentParser(
        prog="kraus-stabilizer",
        description="Stabilize quantum subspaces with measurement-conditioned unitary feedback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="Check a Kraus file for completeness.")
    p.add_argument("file")

    p = sub.add_parser("analyze", parents=[common], help="Invariance and GAS report for a target subspace.")
    p.add_argument("file")
    p.add_argument("--dim-s", type=int, required=True, help="Dimension M of the target subspace.")
    p.add_argument("--basis", default=None, help="JSON basis whose first M columns span the target.")
    p.add_argument("-o", "--output", default=None, help="Write the JSON report here.")

    p = sub.add_parser("synthesize", parents=[common], help="Design stabilizing controls.")
    p.add_argument("file")
    p.add_argument("--dim-s", type=int, required=True)
    p.add_argument("--basis", default=None)
    p.add_argument("-o", "--output", required=True, help="Controls JSON file.")

    p = sub.add_parser("simulate", parents=[common], help="Write a trajectory CSV.")
    p.add_argument("file")
    p.add_argument("--controls", default=None, help="Controls JSON applied after each outcome.")
    p.add_argument("--init", required=True, help="'maximally-mixed', 'basis:k' or a density-matrix JSON file.")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["averaged", "stochastic"], default="averaged")
    p.add_argument("--trajectories", type=int, default=1, help="Stochastic ensemble size.")
    p.add_argument("--dim-s", type=int, default=1)
    p.add_argument("--basis", default=None)
    p.add_argument("-o", "--output", required=True, help="CSV output path.")

    p = sub.add_parser("demo", parents=[common], help="Built-in demonstrations.")
    p.add_argument("name", choices=["bell"])
    p.add_argument("--out-dir", default=None, help="Write the report bundle here.")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "analyze":
            return cmd_analyze(args, parser)
        if args.command == "synthesize":
            return cmd_synthesize(args, parser)
        if args.command == "simulate":
            return cmd_simulate(args, parser)
        return cmd_demo(args)
    except (FileFormatError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_IO
    except InfeasibleError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except StabilizerError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_DOMAIN


# ------------------------------------------------------------------
# Run it!
# ------------------------------------------------------------------
if __name__ == "__main__":
    raise SystemExit(main())
