"""
Canonical QR decomposition.

The factorization is built column by column with Gram-Schmidt so that the
R factor carries the rank profile of the input: entries below row rho_j of
column j vanish, and the first nonzero entry of every row is real and
positive. With that convention R is invariant under A -> U A for unitary U.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from utils.linalg import (
    DEFAULT_TOLERANCES,
    ComplexMatrix,
    as_matrix,
    frobenius,
    orthonormal_completion,
    require_square,
)
from utils.tolerances import Tolerances

logger = logging.getLogger(__name__)

BOUNDARY_FACTOR = 10.0


@dataclass(frozen=True)
class CanonicalQR:
    """Factors of a canonical QR decomposition a = q @ r."""

    q: ComplexMatrix
    r: ComplexMatrix
    rank_profile: Tuple[int, ...]
    min_accepted_residual: float = float("inf")
    near_rank_boundary: bool = False

    @property
    def rank(self) -> int:
        return self.rank_profile[-1] if self.rank_profile else 0


def canonical_qr(a: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES) -> CanonicalQR:
    """Canonical QR of a square matrix.

    For column a_i the coefficients r_{l,i} = q_l† a_i are taken against the
    columns of q built so far (with one re-orthogonalization pass). If the
    residual is longer than eps_rank * ||a||_F it becomes the next column of
    q and its norm goes on the diagonal position r_{rho_i, i}; otherwise the
    column is dependent and adds nothing below row rho_{i-1}. The unused
    columns of q come from the deterministic orthonormal completion.

    Args:
        a: n x n complex matrix
        tol: tolerances; only eps_rank (and eps_eq for the completion) matter

    Returns:
        CanonicalQR with q unitary, r upper triangular and the rank profile
    """
    a = as_matrix(a, "a")
    n = require_square(a, "a")
    threshold = tol.eps_rank * frobenius(a)

    r = np.zeros((n, n), dtype=np.complex128)
    basis = []
    profile = []
    min_accepted = float("inf")

    for i in range(n):
        column = a[:, i]
        rank = len(basis)
        if rank:
            q_sofar = np.column_stack(basis)
            coeffs = q_sofar.conj().T @ column
            residual = column - q_sofar @ coeffs
            correction = q_sofar.conj().T @ residual
            residual = residual - q_sofar @ correction
            r[:rank, i] = coeffs + correction
        else:
            residual = column.copy()

        norm = float(np.linalg.norm(residual))
        if norm > threshold:
            basis.append(residual / norm)
            r[rank, i] = norm
            min_accepted = min(min_accepted, norm)
        profile.append(len(basis))

    near_boundary = bool(basis) and min_accepted <= BOUNDARY_FACTOR * threshold
    if near_boundary:
        logger.warning(
            "Rank decision near tolerance boundary: smallest accepted residual %.3e vs threshold %.3e",
            min_accepted,
            threshold,
        )

    partial = np.column_stack(basis) if basis else np.zeros((n, 0), dtype=np.complex128)
    q = orthonormal_completion(partial, tol)
    return CanonicalQR(
        q=q,
        r=r,
        rank_profile=tuple(profile),
        min_accepted_residual=min_accepted,
        near_rank_boundary=near_boundary,
    )


def canonical_form(a: ComplexMatrix, tol: Tolerances = DEFAULT_TOLERANCES) -> ComplexMatrix:
    """The canonical form F(a): the R factor of canonical_qr(a)."""
    return canonical_qr(a, tol).r


def _valid_profile(rank_profile: Sequence[int], n: int) -> bool:
    if len(rank_profile) != n:
        return False
    previous = 0
    for j, rho in enumerate(rank_profile, start=1):
        if rho - previous not in (0, 1) or rho > j:
            return False
        previous = rho
    return True


def is_canonical(
    r: ComplexMatrix, rank_profile: Sequence[int], tol: Tolerances = DEFAULT_TOLERANCES
) -> bool:
    """True iff r has the canonical zero pattern and phase convention.

    Checks upper triangularity, |r_ij| <= eps_zero for every row i > rho_j of
    column j, a real positive leading entry in each nonzero row, and that the
    rank profile itself is well formed.
    """
    r = as_matrix(r, "r")
    n = require_square(r, "r")
    if not _valid_profile(rank_profile, n):
        return False

    magnitudes = np.abs(r)
    if np.any(np.tril(magnitudes, k=-1) > tol.eps_zero):
        return False
    for j, rho in enumerate(rank_profile):
        if np.any(magnitudes[rho:, j] > tol.eps_zero):
            return False

    for row in r:
        nonzero = np.flatnonzero(np.abs(row) > tol.eps_zero)
        if nonzero.size == 0:
            continue
        lead = row[nonzero[0]]
        if abs(lead.imag) > tol.eps_zero or lead.real <= 0:
            return False
    return True
