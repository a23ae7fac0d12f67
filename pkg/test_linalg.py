"""
Tests for the dense complex matrix kernel and tolerance configuration.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from quantum.systems import bell_kraus_ops, random_matrix, random_unitary
from utils.errors import ConfigError, DimensionError, ValidationError
from utils.linalg import (
    adjoint,
    as_matrix,
    echelon_basis,
    frobenius,
    is_unitary,
    kernel_basis,
    kernel_intersection,
    matmul,
    numerical_rank,
    orthogonal_complement,
    orthonormal_completion,
    psd_sqrt,
    spectral_radius,
)
from utils.tolerances import PROFILES, Tolerances, get_profile, load_tolerances


def test_matmul_and_adjoint():
    a = np.array([[1, 1j], [0, 2]])
    b = np.array([[0, 1], [1, 0]])
    assert_allclose(matmul(a, b), [[1j, 1], [2, 0]])
    assert_allclose(adjoint(a), [[1, 0], [-1j, 2]])


def _matmul_by_loops(a, b):
    out = np.zeros((a.shape[0], b.shape[1]), dtype=complex)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b = random_matrix(3, rng), random_matrix(3, rng)
        assert_allclose(matmul(a, b), _matmul_by_loops(a, b), atol=1e-12)


def test_adjoint_reverses_products():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a, b = random_matrix(4, rng), random_matrix(4, rng)
        assert_allclose(adjoint(matmul(a, b)), matmul(adjoint(b), adjoint(a)), atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.eye(2), np.eye(3))


def test_as_matrix_rejects_nan_and_vectors():
    with pytest.raises(ValidationError):
        as_matrix([[np.nan, 0], [0, 1]])
    with pytest.raises(DimensionError):
        as_matrix([1, 2, 3])


def test_kernel_basis_rank_one():
    k = kernel_basis(np.array([[1, 1], [1, 1]]))
    assert k.shape == (2, 1)
    assert_allclose(np.abs(k[:, 0]), [1 / np.sqrt(2)] * 2, atol=1e-12)


def test_kernel_basis_full_rank_and_zero():
    assert kernel_basis(np.eye(3)).shape == (3, 0)
    assert_allclose(kernel_basis(np.zeros((2, 3))), np.eye(3), atol=1e-12)


def test_kernel_basis_is_echelon_for_coordinate_spans():
    # kernel of diag(1, 0, 0) is span(e2, e3) and comes back as exactly that
    k = kernel_basis(np.diag([1.0, 0.0, 0.0]))
    assert_allclose(k, np.eye(3)[:, 1:], atol=1e-12)


def test_echelon_basis_independent_of_input_basis():
    rng = np.random.default_rng(7)
    span = np.linalg.qr(random_matrix(5, rng, cols=2))[0]
    rotated = span @ random_unitary(2, rng)
    assert_allclose(echelon_basis(span), echelon_basis(rotated), atol=1e-10)


def test_kernel_intersection_of_rank_one_rows():
    p1 = np.array([[1.0, 0.0, 0.0]])
    p2 = np.array([[0.0, 1.0, 0.0]])
    k = kernel_intersection([p1, p2])
    assert k.shape == (3, 1)
    assert_allclose(np.abs(k[:, 0]), [0, 0, 1], atol=1e-12)


def test_kernel_intersection_column_mismatch():
    with pytest.raises(DimensionError):
        kernel_intersection([np.zeros((1, 2)), np.zeros((1, 3))])


def test_kernel_basis_residual_on_rank_deficient_matrices():
    rng = np.random.default_rng(5)
    eps_rank = Tolerances().eps_rank
    for _ in range(20):
        n = int(rng.integers(3, 7))
        rank = int(rng.integers(1, n))
        a = random_matrix(n, rng, cols=rank) @ random_matrix(rank, rng, cols=n)
        v = kernel_basis(a)
        assert v.shape == (n, n - rank)
        assert frobenius(a @ v) <= 10 * eps_rank * frobenius(a)
        assert_allclose(v.conj().T @ v, np.eye(n - rank), atol=1e-12)


def test_numerical_rank_of_low_rank_product():
    rng = np.random.default_rng(1)
    a = random_matrix(6, rng, cols=2) @ random_matrix(2, rng, cols=6)
    assert numerical_rank(a) == 2


def test_orthonormal_completion_is_deterministic():
    partial = np.array([[1], [1]]) / np.sqrt(2)
    u = orthonormal_completion(partial)
    assert_allclose(u, np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-12)


def test_orthonormal_completion_of_empty_is_identity():
    assert_allclose(orthonormal_completion(np.zeros((3, 0))), np.eye(3), atol=1e-12)


def test_orthonormal_completion_rejects_non_orthonormal():
    with pytest.raises(ValidationError):
        orthonormal_completion(np.array([[1.0], [1.0]]))


def test_orthogonal_complement_random():
    rng = np.random.default_rng(3)
    basis = np.linalg.qr(random_matrix(5, rng, cols=2))[0]
    comp = orthogonal_complement(basis)
    assert comp.shape == (5, 3)
    assert frobenius(basis.conj().T @ comp) < 1e-12
    assert is_unitary(np.hstack([basis, comp]))


def test_psd_sqrt():
    a = np.diag([4.0, 1.0, 0.0])
    assert_allclose(psd_sqrt(a), np.diag([2.0, 1.0, 0.0]), atol=1e-12)
    with pytest.raises(ValidationError):
        psd_sqrt(np.diag([1.0, -1.0]))
    with pytest.raises(ValidationError):
        psd_sqrt(np.array([[0, 1], [0, 0]]))


def test_psd_sqrt_of_bell_remainder():
    m1, m2, _ = bell_kraus_ops()
    remainder = np.eye(4) - m1.conj().T @ m1 - m2.conj().T @ m2
    s = psd_sqrt(remainder)
    assert frobenius(s @ s - remainder) <= 1e-10
    assert_allclose(s, s.conj().T, atol=1e-14)


def test_psd_sqrt_clamps_tiny_negative_eigenvalues():
    s = psd_sqrt(np.diag([1.0, -1e-12]))
    assert_allclose(s, np.diag([1.0, 0.0]), atol=1e-12)


def test_spectral_radius():
    assert spectral_radius(np.array([[0, 2], [0, 0.5]])) == pytest.approx(0.5)
    assert spectral_radius(np.zeros((0, 0))) == 0.0
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)


def test_spectral_radius_matches_power_iteration():
    rng = np.random.default_rng(6)
    s = random_matrix(4, rng)
    a = s @ np.diag([0.9, 0.5, -0.3, 0.1]) @ np.linalg.inv(s)
    x = random_matrix(4, rng, cols=1)
    for _ in range(300):
        x = a @ x
        x = x / np.linalg.norm(x)
    estimate = np.linalg.norm(a @ x)
    assert spectral_radius(a) == pytest.approx(0.9, rel=1e-9)
    assert estimate == pytest.approx(spectral_radius(a), rel=1e-6)


# ------------------------------------------------------------------
# Tolerances
# ------------------------------------------------------------------
def test_tolerance_defaults_and_validation():
    tol = Tolerances()
    assert tol.as_dict() == {"eps_rank": 1e-10, "eps_zero": 1e-9, "eps_eq": 1e-8, "eps_spectral": 1e-9}
    with pytest.raises(ConfigError):
        Tolerances(eps_rank=0.0)
    with pytest.raises(ConfigError):
        Tolerances(eps_eq=0.5)


def test_tolerance_override():
    tol = Tolerances().override(eps_zero=1e-6, eps_eq=None)
    assert tol.eps_zero == 1e-6
    assert tol.eps_eq == 1e-8
    with pytest.raises(ConfigError):
        Tolerances().override(eps_bogus=1e-3)


def test_profiles_from_environment(monkeypatch):
    monkeypatch.setenv("DQDS_TOLERANCE_PROFILE", "strict")
    assert load_tolerances() == PROFILES["strict"]
    assert load_tolerances("loose") == PROFILES["loose"]
    monkeypatch.setenv("DQDS_TOLERANCE_PROFILE", "sloppy")
    with pytest.raises(ConfigError):
        load_tolerances()


def test_get_profile_is_case_insensitive():
    assert get_profile(" Default ") == Tolerances()
