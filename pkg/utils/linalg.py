"""
Dense complex matrix kernel.

Every operator in the library is a 2-D numpy array of complex128. Arrays
handed out by this module are fresh copies; nothing here keeps state.
"""

from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt
import scipy.linalg as la

from utils.errors import DimensionError, ValidationError
from utils.tolerances import Tolerances

ComplexMatrix = npt.NDArray[np.complex128]

DEFAULT_TOLERANCES = Tolerances()

# every span of dimension d has some e_j with ‖P e_j‖ >= sqrt(d / n)
ECHELON_THRESHOLD = 1e-3


def as_matrix(x: npt.ArrayLike, name: str = "matrix") -> ComplexMatrix:
    """Coerce to a finite 2-D complex128 array (always a copy)."""
    arr = np.array(x, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf entries")
    return arr


def require_square(a: ComplexMatrix, name: str = "matrix") -> int:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a.shape[0]


def frobenius(a: npt.ArrayLike) -> float:
    return float(np.linalg.norm(np.asarray(a), "fro")) if np.size(a) else 0.0


def matmul(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Standard complex matrix product."""
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"Cannot multiply {a.shape} by {b.shape}")
    return a @ b


def adjoint(a: ComplexMatrix) -> ComplexMatrix:
    """Conjugate transpose."""
    return as_matrix(a).conj().T.copy()


def unitarity_residual(u: ComplexMatrix) -> float:
    """‖U†U − I‖_F, or inf for non-square input."""
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return float("inf")
    return frobenius(u.conj().T @ u - np.eye(u.shape[0]))


def is_unitary(u: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    return unitarity_residual(u) <= tol.eps_eq


def require_unitary(u: ComplexMatrix, tol: Tolerances, name: str = "matrix") -> None:
    residual = unitarity_residual(u)
    if residual > tol.eps_eq:
        raise ValidationError(f"{name} is not unitary (‖U†U − I‖_F = {residual:.3e})", residual)


def hermiticity_residual(a: ComplexMatrix) -> float:
    return frobenius(a - a.conj().T)


def kernel_basis(a: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES) -> ComplexMatrix:
    """Orthonormal basis of the numerical kernel of a.

    A right singular direction belongs to the kernel when its singular value
    is at most eps_rank · ‖a‖_F (directions beyond min(rows, cols) always do).

    Returns:
        cols × k matrix with orthonormal columns, k = 0 for a trivial kernel
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if cols == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    if rows == 0:
        return np.eye(cols, dtype=np.complex128)
    _, s, vh = la.svd(a, full_matrices=True)
    threshold = tol.eps_rank * frobenius(a)
    rank = int(np.count_nonzero(s > threshold))
    return echelon_basis(vh[rank:].conj().T)


def echelon_basis(basis: ComplexMatrix) -> ComplexMatrix:
    """Deterministic orthonormal basis of span(basis).

    Gram-Schmidt (two passes) over the projections P e_1, P e_2, ... onto the
    span, keeping a candidate when its residual exceeds ECHELON_THRESHOLD. The
    result does not depend on which basis of the span was passed in.
    """
    basis = as_matrix(basis, "basis")
    n, d = basis.shape
    if d == 0:
        return basis
    projector = basis @ basis.conj().T
    columns: list = []
    for j in range(n):
        if len(columns) == d:
            break
        candidate = _project_out(_project_out(projector[:, j], columns), columns)
        norm = np.linalg.norm(candidate)
        if norm > ECHELON_THRESHOLD:
            columns.append(candidate / norm)
    return np.column_stack(columns)


def numerical_rank(a: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES) -> int:
    a = as_matrix(a)
    return a.shape[1] - kernel_basis(a, tol).shape[1]


def kernel_intersection(
    mats: Sequence[ComplexMatrix], tol: Tolerances = DEFAULT_TOLERANCES
) -> ComplexMatrix:
    """Orthonormal basis of the common kernel ∩_k ker(mats[k])."""
    if not mats:
        raise DimensionError("kernel_intersection needs at least one matrix")
    blocks = [as_matrix(m, f"mats[{i}]") for i, m in enumerate(mats)]
    cols = {b.shape[1] for b in blocks}
    if len(cols) != 1:
        raise DimensionError(f"Matrices disagree on column count: {sorted(cols)}")
    return kernel_basis(np.vstack(blocks), tol)


def _project_out(v: np.ndarray, basis: Iterable[np.ndarray]) -> np.ndarray:
    for q in basis:
        v = v - q * np.vdot(q, v)
    return v


def orthonormal_completion(
    partial: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES
) -> ComplexMatrix:
    """Extend orthonormal columns to a square unitary.

    Candidates e_1, e_2, ... are Gram-Schmidt orthogonalised (two passes)
    against the columns collected so far and kept when the residual norm
    exceeds eps_rank, so the completion is deterministic.

    Args:
        partial: n × k matrix with orthonormal columns (k may be 0)

    Returns:
        n × n unitary whose first k columns equal partial
    """
    partial = as_matrix(partial, "partial")
    n, k = partial.shape
    if k > n:
        raise DimensionError(f"Cannot complete {k} columns in dimension {n}")
    gram_residual = frobenius(partial.conj().T @ partial - np.eye(k))
    if gram_residual > tol.eps_eq:
        raise ValidationError(
            f"Columns are not orthonormal (‖P†P − I‖_F = {gram_residual:.3e})", gram_residual
        )

    columns = [partial[:, j] for j in range(k)]
    for j in range(n):
        if len(columns) == n:
            break
        candidate = np.zeros(n, dtype=np.complex128)
        candidate[j] = 1.0
        candidate = _project_out(_project_out(candidate, columns), columns)
        norm = np.linalg.norm(candidate)
        if norm > tol.eps_rank:
            columns.append(candidate / norm)

    return np.column_stack(columns) if columns else np.zeros((n, n), dtype=np.complex128)


def orthogonal_complement(
    basis: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES
) -> ComplexMatrix:
    """Orthonormal basis of span(basis)^⊥ from the deterministic completion."""
    basis = as_matrix(basis, "basis")
    return orthonormal_completion(basis, tol)[:, basis.shape[1]:]


def psd_sqrt(a: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES) -> ComplexMatrix:
    """Principal square root of a Hermitian positive semidefinite matrix.

    Eigenvalues in [-eps_zero, 0) are clamped to zero.
    """
    a = as_matrix(a)
    require_square(a)
    residual = hermiticity_residual(a)
    if residual > tol.eps_eq:
        raise ValidationError(f"Matrix is not Hermitian (‖A − A†‖_F = {residual:.3e})", residual)
    w, v = la.eigh((a + a.conj().T) / 2)
    if w.size and w.min() < -tol.eps_zero:
        raise ValidationError(f"Matrix has negative eigenvalue {w.min():.3e}", float(-w.min()))
    root = np.sqrt(np.clip(w, 0.0, None))
    s = (v * root) @ v.conj().T
    return (s + s.conj().T) / 2


def spectral_radius(a: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Largest eigenvalue modulus."""
    a = as_matrix(a)
    if require_square(a) == 0:
        return 0.0
    return float(np.max(np.abs(la.eigvals(a))))


def hermitian_eigh(a: ComplexMatrix):
    """eigh of the Hermitian part, eigenvalues ascending."""
    a = as_matrix(a)
    return la.eigh((a + a.conj().T) / 2)
