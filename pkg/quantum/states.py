"""
Density operators, Kraus maps and generalized measurements.

All values here are immutable; maps are applied as
rho -> sum_k M_k rho M_k^dagger and single outcomes are sampled by inverse CDF
from caller-supplied uniform numbers so trajectories are reproducible.
"""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import scipy.linalg as la

from utils.errors import DimensionError, MeasureZeroError, ValidationError
from utils.linalg import (
    DEFAULT_TOLERANCES,
    ComplexMatrix,
    as_matrix,
    frobenius,
    hermiticity_residual,
    orthonormal_completion,
    require_square,
    require_unitary,
)
from utils.tolerances import Tolerances

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 64


# ------------------------------------------------------------------
# Domain types
# ------------------------------------------------------------------
@dataclass(frozen=True)
class DensityOperator:
    """A validated quantum state. Build it with density_operator()."""

    mat: ComplexMatrix

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.mat).real)


@dataclass(frozen=True)
class KrausMap:
    """An ordered, complete set of Kraus operators."""

    ops: Tuple[ComplexMatrix, ...]
    dim: int
    completeness_residual: float = 0.0

    def __len__(self) -> int:
        return len(self.ops)


@dataclass(frozen=True)
class SubspaceSplit:
    """H = H_S (+) H_R given by the columns of a unitary basis.

    The first dim_s columns of basis span the target subspace H_S and the
    remaining dim_r columns span its complement H_R.
    """

    dim_total: int
    dim_s: int
    basis: ComplexMatrix

    @property
    def dim_r(self) -> int:
        return self.dim_total - self.dim_s

    @property
    def basis_s(self) -> ComplexMatrix:
        return self.basis[:, : self.dim_s]

    @property
    def basis_r(self) -> ComplexMatrix:
        return self.basis[:, self.dim_s :]

    @property
    def projector_s(self) -> ComplexMatrix:
        return self.basis_s @ self.basis_s.conj().T

    @property
    def projector_r(self) -> ComplexMatrix:
        return self.basis_r @ self.basis_r.conj().T

    @classmethod
    def create(
        cls, basis: ComplexMatrix, dim_s: int, tol: Tolerances = DEFAULT_TOLERANCES
    ) -> "SubspaceSplit":
        basis = as_matrix(basis, "basis")
        n = require_square(basis, "basis")
        if not 1 <= dim_s < n:
            raise DimensionError(f"Need 1 <= dim_s < {n}, got dim_s = {dim_s}")
        require_unitary(basis, tol, "basis")
        return cls(dim_total=n, dim_s=dim_s, basis=basis)

    @classmethod
    def standard(cls, n: int, dim_s: int) -> "SubspaceSplit":
        """Split along the computational basis: H_S = span(e_1..e_m)."""
        return cls.create(np.eye(n, dtype=np.complex128), dim_s)

    @classmethod
    def from_target(
        cls, vectors: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES
    ) -> "SubspaceSplit":
        """Split whose H_S is the span of the columns of vectors.

        A single column gives the pure-state preparation problem.
        """
        vectors = np.asarray(vectors, dtype=np.complex128)
        if vectors.ndim == 1:
            vectors = vectors.reshape(-1, 1)
        vectors = as_matrix(vectors, "vectors")
        n, k = vectors.shape
        if k == 0 or frobenius(vectors) == 0.0:
            raise DimensionError("Target subspace needs at least one nonzero vector")
        # economic QR gives an orthonormal basis of the span; rank decided by eps_rank
        q, r, _ = la.qr(vectors, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.count_nonzero(diag > tol.eps_rank * frobenius(vectors)))
        basis = orthonormal_completion(q[:, :rank], tol)
        return cls.create(basis, rank, tol)


class Outcome(NamedTuple):
    """One generalized-measurement outcome."""

    k: int
    rho_post: DensityOperator
    p: float


# ------------------------------------------------------------------
# Constructors
# ------------------------------------------------------------------
def density_operator(mat: npt.ArrayLike, tol: Tolerances = DEFAULT_TOLERANCES) -> DensityOperator:
    """Validate a matrix as a state.

    Small drift is repaired: the Hermitian part is taken, eigenvalues in
    [-eps_zero, 0) are clamped to zero and a trace within eps_eq of one is
    renormalized. Anything further off raises ValidationError.
    """
    mat = as_matrix(mat, "rho")
    require_square(mat, "rho")

    residual = hermiticity_residual(mat)
    if residual > tol.eps_eq:
        raise ValidationError(f"State is not Hermitian (‖ρ − ρ†‖_F = {residual:.3e})", residual)
    mat = (mat + mat.conj().T) / 2

    w, v = la.eigh(mat)
    if w.size and w.min() < -tol.eps_zero:
        raise ValidationError(f"State has negative eigenvalue {w.min():.3e}", float(-w.min()))
    if w.size and w.min() < 0:
        mat = (v * np.clip(w, 0.0, None)) @ v.conj().T
        mat = (mat + mat.conj().T) / 2

    trace = float(np.trace(mat).real)
    if abs(trace - 1.0) > tol.eps_eq:
        raise ValidationError(f"State trace is {trace!r}, expected 1", abs(trace - 1.0))
    return DensityOperator(mat / trace)


def maximally_mixed(n: int) -> DensityOperator:
    return DensityOperator(np.eye(n, dtype=np.complex128) / n)


def basis_state(n: int, k: int) -> DensityOperator:
    """|k><k| in dimension n (k is zero-based)."""
    if not 0 <= k < n:
        raise DimensionError(f"Basis index {k} out of range for dimension {n}")
    mat = np.zeros((n, n), dtype=np.complex128)
    mat[k, k] = 1.0
    return DensityOperator(mat)


def pure_state(vector: npt.ArrayLike) -> DensityOperator:
    """|psi><psi| for a (not necessarily normalized) vector."""
    psi = np.asarray(vector, dtype=np.complex128).ravel()
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise ValidationError("Cannot build a state from the zero vector")
    psi = psi / norm
    return DensityOperator(np.outer(psi, psi.conj()))


# ------------------------------------------------------------------
# Kraus maps
# ------------------------------------------------------------------
def completeness_residual(ops: Sequence[ComplexMatrix]) -> float:
    """‖Σ_k M_k†M_k − I‖_F."""
    n = ops[0].shape[0]
    total = sum(m.conj().T @ m for m in ops)
    return frobenius(total - np.eye(n))


def validate_kraus(
    ops: Sequence[npt.ArrayLike], tol: Tolerances = DEFAULT_TOLERANCES
) -> KrausMap:
    """Check shapes and completeness and freeze the set into a KrausMap.

    Raises:
        DimensionError: empty list, non-square or mismatched operators
        ValidationError: completeness residual above eps_eq (carried in .residual)
    """
    if len(ops) == 0:
        raise DimensionError("A Kraus map needs at least one operator")
    mats = [as_matrix(m, f"M[{k}]") for k, m in enumerate(ops)]
    dims = {require_square(m, f"M[{k}]") for k, m in enumerate(mats)}
    if len(dims) != 1:
        raise DimensionError(f"Kraus operators disagree on dimension: {sorted(dims)}")

    residual = completeness_residual(mats)
    if residual > tol.eps_eq:
        raise ValidationError(
            f"Kraus set is not complete (‖Σ M†M − I‖_F = {residual:.3e})", residual
        )
    for m in mats:
        m.setflags(write=False)
    return KrausMap(ops=tuple(mats), dim=dims.pop(), completeness_residual=residual)


def projective_kraus(
    projectors: Sequence[npt.ArrayLike], tol: Tolerances = DEFAULT_TOLERANCES
) -> KrausMap:
    """Kraus map of a projective measurement {P_k}.

    Each P_k must be a Hermitian idempotent and the set must be mutually
    orthogonal; completeness is then Σ P_k = I.
    """
    mats = [as_matrix(p, f"P[{k}]") for k, p in enumerate(projectors)]
    for k, p in enumerate(mats):
        if hermiticity_residual(p) > tol.eps_eq:
            raise ValidationError(f"P[{k}] is not Hermitian")
        residual = frobenius(p @ p - p)
        if residual > tol.eps_eq:
            raise ValidationError(f"P[{k}] is not idempotent (‖P² − P‖_F = {residual:.3e})", residual)
    for j in range(len(mats)):
        for k in range(j + 1, len(mats)):
            overlap = frobenius(mats[j] @ mats[k])
            if overlap > tol.eps_eq:
                raise ValidationError(f"P[{j}] and P[{k}] are not orthogonal", overlap)
    return validate_kraus(mats, tol)


def kraus_from_dilation(
    coupling: npt.ArrayLike, ancilla: npt.ArrayLike, tol: Tolerances = DEFAULT_TOLERANCES
) -> KrausMap:
    """Kraus operators of a unitary system-ancilla interaction.

    With the ancilla prepared in |phi> and read out in its computational basis,
    M_j = <xi_j| U |phi>. The joint space is ordered system (x) ancilla.
    """
    phi = np.asarray(ancilla, dtype=np.complex128).ravel()
    d = phi.size
    norm = np.linalg.norm(phi)
    if d == 0 or norm == 0.0:
        raise ValidationError("Ancilla state must be a nonzero vector")
    phi = phi / norm

    u = as_matrix(coupling, "coupling")
    total = require_square(u, "coupling")
    if total % d:
        raise DimensionError(f"Coupling dimension {total} is not a multiple of ancilla dimension {d}")
    require_unitary(u, tol, "coupling")
    n = total // d

    blocks = u.reshape(n, d, n, d)
    ops = np.einsum("ijkl,l->jik", blocks, phi)
    return validate_kraus(list(ops), tol)


def change_basis(
    x: npt.ArrayLike, basis: npt.ArrayLike, tol: Tolerances = DEFAULT_TOLERANCES
) -> ComplexMatrix:
    """B† x B."""
    x = as_matrix(x, "x")
    b = as_matrix(basis, "basis")
    if x.shape != b.shape:
        raise DimensionError(f"Shape {x.shape} does not match basis {b.shape}")
    require_unitary(b, tol, "basis")
    return b.conj().T @ x @ b


def _check_dims(kraus: KrausMap, rho: DensityOperator) -> None:
    if rho.dim != kraus.dim:
        raise DimensionError(f"State dimension {rho.dim} does not match map dimension {kraus.dim}")


def apply_raw(kraus: KrausMap, mat: ComplexMatrix) -> ComplexMatrix:
    """Σ_k M_k X M_k† without any validation of X."""
    return sum(m @ mat @ m.conj().T for m in kraus.ops)


def apply_map(
    kraus: KrausMap, rho: DensityOperator, tol: Tolerances = DEFAULT_TOLERANCES
) -> DensityOperator:
    _check_dims(kraus, rho)
    return density_operator(apply_raw(kraus, rho.mat), tol)


def iterate_map(
    kraus: KrausMap, rho0: DensityOperator, steps: int, tol: Tolerances = DEFAULT_TOLERANCES
) -> List[DensityOperator]:
    """[rho(1), ..., rho(steps)]."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    trajectory = []
    rho = rho0
    for _ in range(steps):
        rho = apply_map(kraus, rho, tol)
        trajectory.append(rho)
    return trajectory


# ------------------------------------------------------------------
# Generalized measurements
# ------------------------------------------------------------------
def outcome_probabilities(kraus: KrausMap, rho: DensityOperator) -> np.ndarray:
    """p_k = Tr(M_k rho M_k†), in operator order."""
    _check_dims(kraus, rho)
    return np.array(
        [float(np.trace(m @ rho.mat @ m.conj().T).real) for m in kraus.ops]
    )


def sample_outcome(
    kraus: KrausMap,
    rho: DensityOperator,
    u: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> Outcome:
    """Draw one outcome by inverse CDF over the ordered outcomes.

    Raises:
        MeasureZeroError: the selected outcome has p_k <= eps_zero
    """
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u!r}")
    probs = np.clip(outcome_probabilities(kraus, rho), 0.0, None)
    cdf = np.cumsum(probs)
    cdf = cdf / cdf[-1]
    k = min(int(np.searchsorted(cdf, u, side="right")), len(probs) - 1)

    p = float(probs[k])
    if p <= tol.eps_zero:
        raise MeasureZeroError(f"Outcome {k} has probability {p:.3e}", outcome=k, probability=p)
    m = kraus.ops[k]
    post = density_operator(m @ rho.mat @ m.conj().T / p, tol)
    return Outcome(k=k, rho_post=post, p=p)


def sample_trajectory(
    kraus: KrausMap,
    rho0: DensityOperator,
    steps: int,
    rng: np.random.Generator,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> List[Outcome]:
    """Conditional (measurement-resolved) trajectory of length steps.

    A draw landing on a measure-zero outcome is redrawn.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    outcomes = []
    rho = rho0
    for _ in range(steps):
        for _attempt in range(MAX_RESAMPLES):
            try:
                outcome = sample_outcome(kraus, rho, float(rng.random()), tol)
                break
            except MeasureZeroError as exc:
                logger.debug("Redrawing after measure-zero outcome %d", exc.outcome)
        else:
            raise MeasureZeroError(
                f"No outcome with positive probability after {MAX_RESAMPLES} draws",
                outcome=-1,
                probability=0.0,
            )
        outcomes.append(outcome)
        rho = outcome.rho_post
    return outcomes


def measurement_branches(
    kraus: KrausMap, rho: DensityOperator, tol: Tolerances = DEFAULT_TOLERANCES
) -> List[Outcome]:
    """Every outcome with p_k > eps_zero together with its conditional state."""
    branches = []
    for k, p in enumerate(outcome_probabilities(kraus, rho)):
        if p <= tol.eps_zero:
            continue
        m = kraus.ops[k]
        branches.append(Outcome(k=k, rho_post=density_operator(m @ rho.mat @ m.conj().T / p, tol), p=float(p)))
    return branches
