"""
Two-qubit building blocks, the Bell-state stabilization example and random
instances for property checks.

Computational basis order is |00>, |01>, |10>, |11>. The Bell basis columns
are, in order, (|00>+|11>)/√2, (|00>−|11>)/√2, (|01>+|10>)/√2, (|01>−|10>)/√2.
"""

from typing import List, Optional

import numpy as np

from quantum.states import (
    DensityOperator,
    KrausMap,
    SubspaceSplit,
    density_operator,
    pure_state,
    validate_kraus,
)
from utils.linalg import DEFAULT_TOLERANCES, ComplexMatrix, psd_sqrt
from utils.tolerances import Tolerances

SQRT2 = np.sqrt(2.0)

# |0><1| in the {|0>, |1>} basis
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
IDENTITY_2 = np.eye(2, dtype=np.complex128)


def bell_basis() -> ComplexMatrix:
    return (
        np.array(
            [
                [1, 1, 0, 0],
                [0, 0, 1, 1],
                [0, 0, 1, -1],
                [1, -1, 0, 0],
            ],
            dtype=np.complex128,
        )
        / SQRT2
    )


def bell_split() -> SubspaceSplit:
    """H_S = span of the first Bell vector."""
    return SubspaceSplit.create(bell_basis(), dim_s=1)


def bell_target_state():
    """rho_d = |b1><b1|."""
    return pure_state(bell_basis()[:, 0])


def bell_kraus_ops(tol: Tolerances = DEFAULT_TOLERANCES) -> List[ComplexMatrix]:
    """Local decay on either qubit plus the no-jump operator.

    M1 = ½ σ+ ⊗ I, M2 = ½ I ⊗ σ+ and M3 = sqrt(I − M1†M1 − M2†M2).
    """
    m1 = np.kron(SIGMA_PLUS, IDENTITY_2) / 2
    m2 = np.kron(IDENTITY_2, SIGMA_PLUS) / 2
    remainder = np.eye(4) - m1.conj().T @ m1 - m2.conj().T @ m2
    m3 = psd_sqrt(remainder, tol)
    return [m1, m2, m3]


def bell_kraus_map(tol: Tolerances = DEFAULT_TOLERANCES) -> KrausMap:
    return validate_kraus(bell_kraus_ops(tol), tol)


# Reference canonical R factors of the three operators in Bell coordinates,
# at four decimals.
REFERENCE_R_FACTORS = (
    SQRT2
    / 4
    * np.array(
        [[1, -1, 0, 0], [0, 0, 1, -1], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=np.complex128
    ),
    SQRT2
    / 4
    * np.array(
        [[1, -1, 0, 0], [0, 0, 1, 1], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=np.complex128
    ),
    np.array(
        [
            [0.8660, 0.2887, 0, 0],
            [0, 0.8165, 0, 0],
            [0, 0, 0.8660, 0],
            [0, 0, 0, 0.8660],
        ],
        dtype=np.complex128,
    ),
)

# Reference stabilizing controls as tabulated (computational basis, four
# decimals). The tabulated matrices are B Q_k B†, i.e. the adjoints of the
# applied controls U_k = B Q_k† B†.
_H = SQRT2 / 2
_TABULATED_CONTROLS = (
    np.array(
        [
            [_H, 0, 0, -_H],
            [_H, 0, 0, _H],
            [0, 0, 1, 0],
            [0, -1, 0, 0],
        ]
    ),
    np.array(
        [
            [_H, 0, 0, -_H],
            [0, 1, 0, 0],
            [_H, 0, 0, _H],
            [0, 0, -1, 0],
        ]
    ),
    np.array(
        [
            [0.9856, 0, 0, 0.1691],
            [0, 1, 0, 0],
            [0, 0, 1, 0],
            [-0.1691, 0, 0, 0.9856],
        ]
    ),
)


def reference_controls() -> List[ComplexMatrix]:
    """Tabulated stabilizing controls, as applied, in the computational basis."""
    return [np.asarray(t, dtype=np.complex128).conj().T.copy() for t in _TABULATED_CONTROLS]


# ------------------------------------------------------------------
# Random instances
# ------------------------------------------------------------------
def random_matrix(n: int, rng: np.random.Generator, cols: Optional[int] = None) -> ComplexMatrix:
    cols = n if cols is None else cols
    return rng.standard_normal((n, cols)) + 1j * rng.standard_normal((n, cols))


def random_unitary(n: int, rng: np.random.Generator) -> ComplexMatrix:
    """Haar-distributed unitary (QR of a Ginibre matrix with phase fix)."""
    q, r = np.linalg.qr(random_matrix(n, rng))
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_kraus_ops(n: int, count: int, rng: np.random.Generator) -> List[ComplexMatrix]:
    """count operators cut from a random isometry C^n -> C^(count·n)."""
    stacked, _ = np.linalg.qr(random_matrix(n * count, rng, cols=n))
    return [stacked[k * n : (k + 1) * n, :] for k in range(count)]


def random_density(n: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityOperator:
    """Random state of full (or the given) rank."""
    g = random_matrix(n, rng, cols=n if rank is None else rank)
    rho = g @ g.conj().T
    return density_operator(rho / np.trace(rho).real)
