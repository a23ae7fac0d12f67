"""
Invariance and global asymptotic stability of a target subspace.

Operators are split relative to a SubspaceSplit as

    X = [[X_S, X_P],
         [X_Q, X_R]]

in the split basis. The target H_S is invariant iff every M_{k,Q} vanishes;
an invariant H_S is GAS iff the corner map X -> Σ_k M_{k,R} X M_{k,R}† has
spectral radius strictly below one. V(rho) = Tr(Π_R rho) is the Lyapunov
function that drives both tests.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as la

from quantum.canonical_qr import CanonicalQR, canonical_qr
from quantum.states import (
    DensityOperator,
    KrausMap,
    SubspaceSplit,
    apply_raw,
    change_basis,
    iterate_map,
)
from utils.errors import DimensionError, StabilizerError, ValidationError
from utils.linalg import (
    DEFAULT_TOLERANCES,
    ComplexMatrix,
    as_matrix,
    frobenius,
    hermitian_eigh,
    kernel_intersection,
    orthogonal_complement,
    spectral_radius,
)
from utils.tolerances import Tolerances

logger = logging.getLogger(__name__)

CERTIFICATE_RESIDUAL = 1e-6
UNIT_EIGENVALUE_TOL = 1e-6


@dataclass(frozen=True)
class BlockSplit:
    s: ComplexMatrix
    p: ComplexMatrix
    q: ComplexMatrix
    r_block: ComplexMatrix

    def reassemble(self) -> ComplexMatrix:
        return np.block([[self.s, self.p], [self.q, self.r_block]])


@dataclass(frozen=True)
class StabilityReport:
    """Verdict of check_gas.

    sufficient_structural_test is True when the structural condition holds,
    None when it is inconclusive and False when the map is not invariant.
    certificate names the evidence found against GAS for an invariant map:
    "fixed_point" (an invariant state supported on H_R) or "kernel_locus"
    (a nontrivial common kernel of the M_{k,P}).
    """

    invariant: bool
    gas: bool
    corner_spectral_radius: float
    kernel_intersection_dim: int
    sufficient_structural_test: Optional[bool]
    details: str
    invariance_residual: float = 0.0
    certificate: Optional[str] = None
    certificate_residual: Optional[float] = None
    near_rank_boundary: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ------------------------------------------------------------------
# Blocks
# ------------------------------------------------------------------
def block_split(x: ComplexMatrix, split: SubspaceSplit) -> BlockSplit:
    """Cut x (already in split coordinates) into S, P, Q, R blocks."""
    x = as_matrix(x, "x")
    if x.shape != (split.dim_total, split.dim_total):
        raise DimensionError(f"Matrix shape {x.shape} does not match split dimension {split.dim_total}")
    m = split.dim_s
    return BlockSplit(s=x[:m, :m], p=x[:m, m:], q=x[m:, :m], r_block=x[m:, m:])


def split_operators(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> List[BlockSplit]:
    """The Kraus operators in split coordinates, cut into blocks."""
    if kraus.dim != split.dim_total:
        raise DimensionError(f"Map dimension {kraus.dim} does not match split dimension {split.dim_total}")
    return [block_split(change_basis(m, split.basis, tol), split) for m in kraus.ops]


def canonical_factors(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> List[CanonicalQR]:
    """Canonical QR of every Kraus operator in split coordinates."""
    return [canonical_qr(change_basis(m, split.basis, tol), tol) for m in kraus.ops]


def invariance_residual(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """max_k ‖M_{k,Q}‖_F."""
    return max(frobenius(b.q) for b in split_operators(kraus, split, tol))


def check_invariance(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> bool:
    return invariance_residual(kraus, split, tol) <= tol.eps_zero


def _require_invariant(kraus: KrausMap, split: SubspaceSplit, tol: Tolerances) -> List[BlockSplit]:
    blocks = split_operators(kraus, split, tol)
    residual = max(frobenius(b.q) for b in blocks)
    if residual > tol.eps_zero:
        raise ValidationError(
            f"Map does not leave H_S invariant (max ‖M_Q‖_F = {residual:.3e})", residual
        )
    return blocks


# ------------------------------------------------------------------
# Lyapunov function
# ------------------------------------------------------------------
def lyapunov_v(rho: DensityOperator, split: SubspaceSplit) -> float:
    """V(rho) = Tr(Π_R rho)."""
    if rho.dim != split.dim_total:
        raise DimensionError(f"State dimension {rho.dim} does not match split dimension {split.dim_total}")
    b_r = split.basis_r
    return float(np.trace(b_r.conj().T @ rho.mat @ b_r).real)


def delta_v(
    kraus: KrausMap,
    rho: DensityOperator,
    split: SubspaceSplit,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """V(T[rho]) − V(rho).

    Evaluated directly and through the corner formula
    Tr(Σ_k M_{k,R} rho_R M_{k,R}† − rho_R); the two must agree.
    """
    blocks = _require_invariant(kraus, split, tol)
    m = split.dim_s

    b_r = split.basis_r
    image = apply_raw(kraus, rho.mat)
    direct = float(np.trace(b_r.conj().T @ (image - rho.mat) @ b_r).real)

    rho_r = change_basis(rho.mat, split.basis, tol)[m:, m:]
    corner = sum(b.r_block @ rho_r @ b.r_block.conj().T for b in blocks)
    via_corner = float(np.trace(corner - rho_r).real)

    if abs(direct - via_corner) > tol.eps_eq:
        raise StabilizerError(
            f"ΔV mismatch: direct {direct!r} vs corner formula {via_corner!r}"
        )
    return direct


def zero_difference_locus(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> ComplexMatrix:
    """Orthonormal basis (H_R coordinates) of ∩_k ker M_{k,P}.

    States with V = 1 that keep ΔV = 0 must have their support here.
    """
    blocks = _require_invariant(kraus, split, tol)
    return _coupling_kernel([b.p for b in blocks], tol)


def coupling_is_live(p: ComplexMatrix, tol: Tolerances) -> bool:
    """True when a coupling block drains H_R fast enough for the spectral test to see.

    A block moves about ‖P‖_F² of population per step, so it counts as
    nonzero only when ‖P‖_F > eps_zero and ‖P‖_F² > eps_spectral.
    """
    norm = frobenius(p)
    return norm > tol.eps_zero and norm * norm > tol.eps_spectral


def has_marginal_coupling(couplings: Sequence[ComplexMatrix], tol: Tolerances) -> bool:
    """Some block is above eps_zero yet still treated as zero."""
    return any(frobenius(p) > tol.eps_zero and not coupling_is_live(p, tol) for p in couplings)


def _coupling_kernel(couplings: Sequence[ComplexMatrix], tol: Tolerances) -> ComplexMatrix:
    """∩ ker of the live couplings; every other block counts as exactly zero."""
    cols = couplings[0].shape[1]
    live = [p for p in couplings if coupling_is_live(p, tol)]
    if not live:
        return np.eye(cols, dtype=np.complex128)
    return kernel_intersection(live, tol)


# ------------------------------------------------------------------
# GAS
# ------------------------------------------------------------------
def corner_superoperator(kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES) -> ComplexMatrix:
    """Matrix of X -> Σ_k M_{k,R} X M_{k,R}† on row-major vec(X).

    Uses vec(A X B) = (A ⊗ Bᵀ) vec(X); the result is r² × r², i.e. r⁴
    complex128 entries (16 r⁴ bytes).
    """
    blocks = split_operators(kraus, split, tol)
    r = split.dim_r
    sup = np.zeros((r * r, r * r), dtype=np.complex128)
    for b in blocks:
        sup += np.kron(b.r_block, b.r_block.conj())
    return sup


def structural_test(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> Optional[bool]:
    """Sufficient condition for GAS from the block structure.

    With H_R = H_R' (+) H_R'' and H_R'' = ∩_k ker M_{k,P}, the target is GAS
    when every M_{k,R3} (H_R' -> H_R'' block) vanishes and ∩_k ker M_{k,R2}
    is trivial.

    Returns:
        True if the condition holds, None if inconclusive, False for a
        non-invariant map
    """
    blocks = split_operators(kraus, split, tol)
    if max(frobenius(b.q) for b in blocks) > tol.eps_zero:
        return False

    r = split.dim_r
    kernel = _coupling_kernel([b.p for b in blocks], tol)
    d = kernel.shape[1]
    if d == 0:
        return True
    if d == r:
        return None

    w = np.hstack([orthogonal_complement(kernel, tol), kernel])
    lead = r - d
    r2 = []
    for b in blocks:
        rotated = w.conj().T @ b.r_block @ w
        if frobenius(rotated[lead:, :lead]) > tol.eps_zero:
            return None
        r2.append(rotated[:lead, lead:])
    if _coupling_kernel(r2, tol).shape[1] == 0:
        return True
    return None


def fixed_point_certificate(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> Dict[str, Any]:
    """Evidence that an invariant H_S is not GAS.

    Looks for an invariant state supported on H_R among the eigenvectors of
    the corner superoperator with eigenvalue near one: the Hermitian parts of
    such an eigenvector are fixed as well, and so are their positive and
    negative parts. Falls back to a nontrivial ∩_k ker M_{k,P}.

    Returns:
        dict with kind ("fixed_point", "kernel_locus" or None), residual
        ‖T[rho] − rho‖_F for a fixed point, and the state itself
    """
    blocks = _require_invariant(kraus, split, tol)
    r = split.dim_r
    m = split.dim_s
    sup = corner_superoperator(kraus, split, tol)
    values, vectors = la.eig(sup)
    order = np.argsort(np.abs(values - 1.0))

    for idx in order:
        if abs(values[idx] - 1.0) > UNIT_EIGENVALUE_TOL:
            break
        x = vectors[:, idx].reshape(r, r)
        for herm in ((x + x.conj().T) / 2, (x - x.conj().T) / 2j):
            if frobenius(herm) <= tol.eps_zero:
                continue
            w, v = hermitian_eigh(herm)
            positive = (v * np.clip(w, 0.0, None)) @ v.conj().T
            negative = (v * np.clip(-w, 0.0, None)) @ v.conj().T
            part = positive if np.trace(positive).real >= np.trace(negative).real else negative
            part = part / np.trace(part).real

            embedded = np.zeros((split.dim_total, split.dim_total), dtype=np.complex128)
            embedded[m:, m:] = part
            rho_bar = split.basis @ embedded @ split.basis.conj().T
            residual = frobenius(apply_raw(kraus, rho_bar) - rho_bar)
            if residual <= CERTIFICATE_RESIDUAL:
                return {"kind": "fixed_point", "residual": residual, "state": rho_bar}

    locus = _coupling_kernel([b.p for b in blocks], tol)
    if locus.shape[1] > 0:
        return {"kind": "kernel_locus", "residual": None, "state": None}
    return {"kind": None, "residual": None, "state": None}


def check_gas(
    kraus: KrausMap, split: SubspaceSplit, tol: Tolerances = DEFAULT_TOLERANCES
) -> StabilityReport:
    """Invariance plus the spectral attractivity test, with diagnostics."""
    blocks = split_operators(kraus, split, tol)
    q_residual = max(frobenius(b.q) for b in blocks)
    invariant = q_residual <= tol.eps_zero

    radius = spectral_radius(corner_superoperator(kraus, split, tol), tol)
    kernel_dim = _coupling_kernel([b.p for b in blocks], tol).shape[1]
    structural = structural_test(kraus, split, tol)
    gas = invariant and radius < 1.0 - tol.eps_spectral
    near_boundary = any(f.near_rank_boundary for f in canonical_factors(kraus, split, tol))
    if has_marginal_coupling([b.p for b in blocks], tol):
        logger.warning("Coupling block between eps_zero and sqrt(eps_spectral) treated as zero")
        near_boundary = True

    lines = [
        f"max ‖M_Q‖_F = {q_residual:.3e}",
        f"corner spectral radius = {radius:.12f}",
        f"dim ∩ ker M_P = {kernel_dim}",
        f"structural test = {structural}",
    ]

    certificate = None
    certificate_residual = None
    if invariant and not gas:
        found = fixed_point_certificate(kraus, split, tol)
        certificate = found["kind"]
        certificate_residual = found["residual"]
        lines.append(f"certificate = {certificate}")
    if structural is True and not gas:
        # structural pass without spectral pass means the tolerances disagree
        logger.warning("Structural test passed but spectral test did not (radius %.12f)", radius)
        lines.append("warning: structural and spectral tests disagree")

    logger.debug("check_gas: %s", "; ".join(lines))
    return StabilityReport(
        invariant=invariant,
        gas=gas,
        corner_spectral_radius=radius,
        kernel_intersection_dim=kernel_dim,
        sufficient_structural_test=structural,
        details="\n".join(lines),
        invariance_residual=q_residual,
        certificate=certificate,
        certificate_residual=certificate_residual,
        near_rank_boundary=near_boundary,
    )


def attractivity_distance(
    kraus: KrausMap,
    rho0: DensityOperator,
    split: SubspaceSplit,
    steps: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> List[float]:
    """‖rho(t) − Π_S rho(t) Π_S‖_F for t = 1..steps."""
    return [distance_to_target(rho, split) for rho in iterate_map(kraus, rho0, steps, tol)]


def distance_to_target(rho: DensityOperator, split: SubspaceSplit) -> float:
    projector = split.projector_s
    return frobenius(rho.mat - projector @ rho.mat @ projector)
