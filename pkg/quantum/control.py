"""
Measurement-conditioned unitary feedback.

A control U_k applied after outcome k turns the Kraus map {M_k} into the
closed loop {U_k M_k}. Two questions are answered here: which target maps a
measurement can be turned into (simulate_measurement), and how to choose
controls that make a target subspace GAS (synthesize_controls).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from quantum.canonical_qr import canonical_qr
from quantum.stability import (
    StabilityReport,
    canonical_factors,
    check_gas,
    coupling_is_live,
    has_marginal_coupling,
)
from quantum.states import DensityOperator, KrausMap, SubspaceSplit, change_basis, validate_kraus
from utils.errors import DimensionError, InfeasibleError, SynthesisDefectError
from utils.linalg import (
    DEFAULT_TOLERANCES,
    ComplexMatrix,
    as_matrix,
    frobenius,
    kernel_intersection,
    orthogonal_complement,
    require_unitary,
)
from utils.tolerances import Tolerances

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationMatch:
    """permutation[k] is the source outcome j(k) that target outcome k reuses."""

    permutation: Tuple[int, ...]
    controls: Tuple[ComplexMatrix, ...]
    distances: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SynthesisResult:
    feasible: bool
    controls: Tuple[ComplexMatrix, ...]
    subspace_chain: Tuple[Tuple[int, int], ...]
    iterations: int
    accumulated_basis: ComplexMatrix
    diagnostics: str
    kernel_dims: Tuple[int, ...] = ()
    mixing_steps: Tuple[int, ...] = ()
    closed_loop_report: Optional[StabilityReport] = None
    near_rank_boundary: bool = False


# ------------------------------------------------------------------
# Closed loop
# ------------------------------------------------------------------
def closed_loop(
    kraus: KrausMap, controls: Sequence[ComplexMatrix], tol: Tolerances = DEFAULT_TOLERANCES
) -> KrausMap:
    """{U_k M_k}, revalidated."""
    if len(controls) != len(kraus.ops):
        raise DimensionError(f"Got {len(controls)} controls for {len(kraus.ops)} Kraus operators")
    ops = []
    for k, (u, m) in enumerate(zip(controls, kraus.ops)):
        u = as_matrix(u, f"U[{k}]")
        if u.shape != m.shape:
            raise DimensionError(f"U[{k}] has shape {u.shape}, expected {m.shape}")
        require_unitary(u, tol, f"U[{k}]")
        ops.append(u @ m)
    return validate_kraus(ops, tol)


def probability_invariance_residual(
    kraus: KrausMap, controls: Sequence[ComplexMatrix], rho: DensityOperator
) -> float:
    """max_k |Tr(M_k†M_k rho) − Tr((U_kM_k)†(U_kM_k) rho)|."""
    worst = 0.0
    for u, m in zip(controls, kraus.ops):
        n = u @ m
        before = np.trace(m.conj().T @ m @ rho.mat).real
        after = np.trace(n.conj().T @ n @ rho.mat).real
        worst = max(worst, abs(float(before - after)))
    return worst


# ------------------------------------------------------------------
# Measurement simulation
# ------------------------------------------------------------------
def simulate_measurement(
    source: KrausMap, target: KrausMap, tol: Tolerances = DEFAULT_TOLERANCES
) -> SimulationMatch:
    """Controls U_k with U_k M_{j(k)} = N_k, if such a reordering exists.

    Target outcome k can reuse source outcome j iff their canonical forms
    agree; a perfect matching on that equality graph is found with
    linear_sum_assignment on 0/1 costs.

    Raises:
        DimensionError: dimension or outcome-count mismatch
        InfeasibleError: no perfect matching (.result holds the distance matrix)
    """
    if source.dim != target.dim:
        raise DimensionError(f"Source dimension {source.dim} != target dimension {target.dim}")
    if len(source) != len(target):
        raise DimensionError(f"Source has {len(source)} outcomes, target has {len(target)}")

    src = [canonical_qr(m, tol) for m in source.ops]
    tgt = [canonical_qr(n, tol) for n in target.ops]
    distances = np.array([[frobenius(t.r - s.r) for s in src] for t in tgt])

    cost = (distances > tol.eps_eq).astype(float)
    rows, cols = linear_sum_assignment(cost)
    if cost[rows, cols].sum() > 0:
        raise InfeasibleError("No reordering matches every canonical form", result=distances)

    permutation = [0] * len(target)
    controls: List[ComplexMatrix] = [None] * len(target)
    for k, j in zip(rows, cols):
        permutation[k] = int(j)
        u = tgt[k].q @ src[j].q.conj().T
        slack = 10 * tol.eps_eq * max(1.0, frobenius(target.ops[k]))
        mismatch = frobenius(u @ source.ops[j] - target.ops[k])
        if mismatch > slack:
            raise SynthesisDefectError(
                f"Control for outcome {k} misses its target by {mismatch:.3e}",
                diagnostics=f"distance F(N_{k}) - F(M_{j}) = {distances[k, j]:.3e}",
            )
        controls[k] = u
    return SimulationMatch(
        permutation=tuple(permutation), controls=tuple(controls), distances=distances
    )


# ------------------------------------------------------------------
# Feasibility
# ------------------------------------------------------------------
def coupling_norms(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> List[float]:
    """‖R_{P,k}‖_F of the canonical R factor of each operator in split coordinates."""
    m = split.dim_s
    return [frobenius(f.r[:m, m:]) for f in canonical_factors(kraus, split, tol)]


def feasibility_check(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> bool:
    """Some canonical R_{P,k} is live (see coupling_is_live)."""
    m = split.dim_s
    return any(coupling_is_live(f.r[:m, m:], tol) for f in canonical_factors(kraus, split, tol))


def r_invariant_under_any_control(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> bool:
    """True when H_R stays invariant whatever controls keep H_S invariant.

    This is the obstruction left when every canonical R_{P,k} vanishes.
    """
    return not feasibility_check(kraus, split, tol)


# ------------------------------------------------------------------
# Synthesis
# ------------------------------------------------------------------
def mixing_unitary(n: int, pairs: Sequence[Tuple[int, int]]) -> ComplexMatrix:
    """Identity except for a Hadamard-type 2×2 rotation on each index pair."""
    y = np.eye(n, dtype=np.complex128)
    h = 1 / np.sqrt(2.0)
    for a, b in pairs:
        y[a, a], y[a, b] = h, h
        y[b, a], y[b, b] = h, -h
    return y


def _embed(n: int, offset: int, block: ComplexMatrix) -> ComplexMatrix:
    full = np.eye(n, dtype=np.complex128)
    full[offset:, offset:] = block
    return full


@dataclass
class _SynthesisState:
    """Mutable bookkeeping of the iteration, all in split coordinates."""

    controls: List[ComplexMatrix]
    couplings: List[ComplexMatrix]
    corners: List[ComplexMatrix]
    dim_s: int
    dim_r: int
    basis: ComplexMatrix
    mixing: ComplexMatrix
    chain: List[Tuple[int, int]] = field(default_factory=list)
    kernel_dims: List[int] = field(default_factory=list)
    mixing_steps: List[int] = field(default_factory=list)
    log: List[str] = field(default_factory=list)
    near_boundary: bool = False


def synthesize_controls(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> SynthesisResult:
    """Controls U_k making H_S globally asymptotically stable for {U_k M_k}.

    The map is given in the original coordinates and converted internally;
    the returned controls act in the original coordinates too. Each
    iteration peels the common kernel of the current R_P blocks off H_R,
    re-canonicalizes the remaining corner in an adapted basis, and mixes
    H_S^(i) with a slice of H_R^(i) whenever the kernel stops shrinking.
    The result is always verified with check_gas before it is returned.

    Raises:
        InfeasibleError: every canonical R_{P,k} vanishes (.result holds the
            infeasible SynthesisResult)
        SynthesisDefectError: the closed loop failed verification
    """
    n, m, r = split.dim_total, split.dim_s, split.dim_r
    ops = [change_basis(mat, split.basis, tol) for mat in kraus.ops]
    factors = [canonical_qr(mat, tol) for mat in ops]

    state = _SynthesisState(
        controls=[f.q.conj().T for f in factors],
        couplings=[f.r[:m, m:] for f in factors],
        corners=[f.r[m:, m:] for f in factors],
        dim_s=m,
        dim_r=r,
        basis=np.eye(n, dtype=np.complex128),
        mixing=np.eye(n, dtype=np.complex128),
        chain=[(m, r)],
        near_boundary=any(f.near_rank_boundary for f in factors),
    )

    if not any(coupling_is_live(p, tol) for p in state.couplings):
        result = SynthesisResult(
            feasible=False,
            controls=(),
            subspace_chain=tuple(state.chain),
            iterations=0,
            accumulated_basis=state.basis,
            diagnostics="every canonical R_P block vanishes; H_R cannot be left",
            near_rank_boundary=state.near_boundary or has_marginal_coupling(state.couplings, tol),
        )
        raise InfeasibleError("Stabilization is infeasible: all R_P blocks are zero", result=result)

    iterations = 0
    while True:
        if iterations >= n:
            raise SynthesisDefectError(
                f"No termination after {n} iterations", diagnostics="\n".join(state.log)
            )
        iterations += 1
        if not _iterate(state, n, iterations - 1, tol):
            break

    local = [state.basis.conj().T @ state.mixing @ state.basis @ u for u in state.controls]
    controls = tuple(split.basis @ u @ split.basis.conj().T for u in local)

    try:
        loop = closed_loop(kraus, controls, tol)
    except Exception as exc:
        raise SynthesisDefectError(
            f"Synthesized controls are invalid: {exc}", diagnostics="\n".join(state.log)
        ) from exc
    report = check_gas(loop, split, tol)
    if not (report.invariant and report.gas):
        raise SynthesisDefectError(
            "Closed loop failed verification",
            diagnostics="\n".join(state.log + [report.details]),
        )

    return SynthesisResult(
        feasible=True,
        controls=controls,
        subspace_chain=tuple(state.chain),
        iterations=iterations,
        accumulated_basis=state.basis,
        diagnostics="\n".join(state.log),
        kernel_dims=tuple(state.kernel_dims),
        mixing_steps=tuple(state.mixing_steps),
        closed_loop_report=report,
        near_rank_boundary=state.near_boundary or report.near_rank_boundary,
    )


def _iterate(state: _SynthesisState, n: int, step: int, tol: Tolerances) -> bool:
    """One pass of the design loop. Returns False once the loop is done."""
    s_i, r_i = state.dim_s, state.dim_r
    offset = n - r_i

    if r_i == 0:
        state.kernel_dims.append(0)
        state.log.append(f"step {step}: H_R is trivial, done")
        return False

    if has_marginal_coupling(state.couplings, tol):
        logger.warning("synthesis step %d: R_P block too small to certify a leak, treated as zero", step)
        state.near_boundary = True
        state.log.append(f"step {step}: marginal R_P block treated as zero")

    live = [p for p in state.couplings if coupling_is_live(p, tol)]
    if not live:
        kernel_dim = r_i
    else:
        kernel = kernel_intersection(live, tol)
        kernel_dim = kernel.shape[1]
    state.kernel_dims.append(kernel_dim)
    logger.debug("synthesis step %d: dim H_S=%d dim H_R=%d kernel=%d", step, s_i, r_i, kernel_dim)

    if kernel_dim == 0:
        state.chain.append((r_i, 0))
        state.log.append(f"step {step}: common kernel of R_P is trivial, done")
        return False

    if kernel_dim < r_i:
        w = np.hstack([orthogonal_complement(kernel, tol), kernel]).conj().T
        s_next = r_i - kernel_dim
        state.log.append(f"step {step}: kernel shrinks {r_i} -> {kernel_dim}")
    elif r_i >= s_i:
        # stagnation: H_S^(i+1) is the first s_i vectors of H_R^(i)
        w = np.eye(r_i, dtype=np.complex128)
        s_next = s_i
        pairs = [(offset - s_i + j, offset + j) for j in range(s_i)]
        state.mixing = state.mixing @ mixing_unitary(n, pairs)
        state.mixing_steps.append(step)
        state.log.append(f"step {step}: kernel stagnates, mixing pairs {pairs}")
    else:
        # stagnation with dim H_R < dim H_S: mix all of H_R with part of H_S
        pairs = [(offset - s_i + j, offset + j) for j in range(r_i)]
        state.mixing = state.mixing @ mixing_unitary(n, pairs)
        state.mixing_steps.append(step)
        state.chain.append((r_i, r_i))
        state.log.append(f"step {step}: kernel stagnates, mixing pairs {pairs}, done")
        return False

    r_next = r_i - s_next
    couplings, corners = [], []
    for k, corner in enumerate(state.corners):
        factor = canonical_qr(w @ corner @ w.conj().T, tol)
        state.near_boundary |= factor.near_rank_boundary
        update = _embed(n, offset, w.conj().T @ factor.q.conj().T @ w)
        state.controls[k] = state.basis.conj().T @ update @ state.basis @ state.controls[k]
        couplings.append(factor.r[:s_next, s_next:])
        corners.append(factor.r[s_next:, s_next:])

    state.basis = _embed(n, offset, w) @ state.basis
    state.couplings, state.corners = couplings, corners
    state.dim_s, state.dim_r = s_next, r_next
    state.chain.append((s_next, r_next))
    return True
