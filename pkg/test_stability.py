"""
Tests for invariance, the Lyapunov function and the GAS verdict.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from quantum.canonical_qr import canonical_qr
from quantum.control import closed_loop, synthesize_controls
from quantum.stability import (
    attractivity_distance,
    block_split,
    canonical_factors,
    check_gas,
    check_invariance,
    corner_superoperator,
    coupling_is_live,
    delta_v,
    fixed_point_certificate,
    has_marginal_coupling,
    invariance_residual,
    lyapunov_v,
    structural_test,
    zero_difference_locus,
)
from quantum.states import (
    SubspaceSplit,
    apply_map,
    basis_state,
    change_basis,
    density_operator,
    maximally_mixed,
    validate_kraus,
)
from quantum.systems import (
    bell_basis,
    bell_kraus_map,
    bell_kraus_ops,
    bell_split,
    bell_target_state,
    random_density,
    random_kraus_ops,
    random_unitary,
)
from utils.errors import DimensionError, ValidationError
from utils.tolerances import Tolerances

ALPHA = 0.5
BETA = np.sqrt(0.75)


def amplitude_damping(gamma):
    m1 = np.array([[0, np.sqrt(gamma)], [0, 0]])
    m2 = np.diag([1, np.sqrt(1 - gamma)])
    return validate_kraus([m1, m2])


def stalled_three_level():
    """|1> decays into the target, |2> never moves."""
    m1 = np.zeros((3, 3))
    m1[0, 1] = ALPHA
    m2 = np.diag([1, BETA, 1])
    return validate_kraus([m1, m2])


def canonical_loop():
    """Bell map with U_k = B Q_k† B†, i.e. B R_k B† as closed-loop operators."""
    kraus, split = bell_kraus_map(), bell_split()
    b = split.basis
    controls = [b @ f.q.conj().T @ b.conj().T for f in canonical_factors(kraus, split)]
    return closed_loop(kraus, controls), split


@pytest.fixture(scope="module")
def bell_closed_loop():
    kraus, split = bell_kraus_map(), bell_split()
    result = synthesize_controls(kraus, split)
    return closed_loop(kraus, result.controls), split


# ------------------------------------------------------------------
# Blocks and invariance
# ------------------------------------------------------------------
def test_block_split_of_first_decay_operator():
    m1 = change_basis(bell_kraus_ops()[0], bell_basis())
    blocks = block_split(m1, bell_split())
    assert blocks.q.shape == (3, 1)
    assert_allclose(blocks.q[:, 0], [0, 0.25, 0.25], atol=1e-12)
    assert_allclose(blocks.reassemble(), m1, atol=0)


def test_block_split_shape_mismatch():
    with pytest.raises(DimensionError):
        block_split(np.eye(3), bell_split())


def test_uncontrolled_bell_map_is_not_invariant():
    kraus, split = bell_kraus_map(), bell_split()
    assert not check_invariance(kraus, split)
    assert invariance_residual(kraus, split) == pytest.approx(np.sqrt(2) / 4, abs=1e-12)


def test_closed_loop_is_invariant(bell_closed_loop):
    loop, split = bell_closed_loop
    assert check_invariance(loop, split)
    assert invariance_residual(loop, split) <= 1e-12


# ------------------------------------------------------------------
# Lyapunov function
# ------------------------------------------------------------------
def test_lyapunov_examples():
    split = bell_split()
    assert lyapunov_v(bell_target_state(), split) == pytest.approx(0.0, abs=1e-15)
    assert lyapunov_v(maximally_mixed(4), split) == pytest.approx(0.75)
    assert lyapunov_v(basis_state(4, 1), split) == pytest.approx(1.0)


def test_lyapunov_dimension_mismatch():
    with pytest.raises(DimensionError):
        lyapunov_v(maximally_mixed(3), bell_split())


def random_invariant_map(n, m, rng):
    """Canonical R factors of a random Kraus set, expressed in a random split basis."""
    basis = random_unitary(n, rng)
    factors = [canonical_qr(op) for op in random_kraus_ops(n, int(rng.integers(2, 4)), rng)]
    kraus = validate_kraus([basis @ f.r @ basis.conj().T for f in factors])
    return kraus, SubspaceSplit.create(basis, m), [f.r[m:, m:] for f in factors]


def test_delta_v_agrees_and_never_increases(bell_closed_loop):
    loop, split = bell_closed_loop
    rng = np.random.default_rng(31)
    for _ in range(20):
        rho = random_density(4, rng, rank=int(rng.integers(1, 5)))
        assert delta_v(loop, rho, split) <= 1e-12

    for _ in range(100):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, n))
        kraus, split, corners = random_invariant_map(n, m, rng)
        rho = random_density(n, rng, rank=int(rng.integers(1, n + 1)))
        direct = lyapunov_v(apply_map(kraus, rho), split) - lyapunov_v(rho, split)
        rho_r = split.basis_r.conj().T @ rho.mat @ split.basis_r
        via_corner = np.trace(sum(r @ rho_r @ r.conj().T for r in corners) - rho_r).real
        assert abs(direct - via_corner) <= 1e-9
        assert abs(delta_v(kraus, rho, split) - direct) <= 1e-9
        assert direct <= 1e-12


def test_delta_v_vanishes_for_block_diagonal_unitary():
    rng = np.random.default_rng(32)
    u = np.zeros((4, 4), dtype=complex)
    u[:2, :2] = random_unitary(2, rng)
    u[2:, 2:] = random_unitary(2, rng)
    kraus = validate_kraus([u])
    rho = random_density(4, rng)
    assert delta_v(kraus, rho, SubspaceSplit.standard(4, 2)) == pytest.approx(0.0, abs=1e-12)


def test_delta_v_vanishes_on_target():
    rng = np.random.default_rng(33)
    kraus, split, _ = random_invariant_map(4, 2, rng)
    inner = random_density(2, rng).mat
    rho = density_operator(split.basis_s @ inner @ split.basis_s.conj().T)
    assert lyapunov_v(rho, split) == pytest.approx(0.0, abs=1e-12)
    assert delta_v(kraus, rho, split) == pytest.approx(0.0, abs=1e-12)


def test_delta_v_needs_invariance():
    with pytest.raises(ValidationError):
        delta_v(bell_kraus_map(), maximally_mixed(4), bell_split())


def test_zero_difference_locus_of_canonical_loop():
    loop, split = canonical_loop()
    locus = zero_difference_locus(loop, split)
    assert locus.shape == (3, 2)


# ------------------------------------------------------------------
# GAS
# ------------------------------------------------------------------
def test_check_gas_amplitude_damping():
    kraus = amplitude_damping(0.3)
    report = check_gas(kraus, SubspaceSplit.standard(2, 1))
    assert report.invariant
    assert report.gas
    assert report.corner_spectral_radius == pytest.approx(0.7)
    assert report.kernel_intersection_dim == 0
    assert report.sufficient_structural_test is True
    assert report.certificate is None


def test_check_gas_tiny_amplitude_damping_is_not_certified():
    # a leak of 1e-14 per step is below what the spectral test resolves
    kraus = amplitude_damping(1e-14)
    split = SubspaceSplit.standard(2, 1)
    report = check_gas(kraus, split)
    assert report.invariant
    assert not report.gas
    assert report.kernel_intersection_dim == 1
    assert report.sufficient_structural_test is None
    assert report.certificate == "fixed_point"
    assert report.near_rank_boundary
    assert structural_test(kraus, split) is None
    assert zero_difference_locus(kraus, split).shape == (1, 1)


def test_coupling_is_live_thresholds():
    tol = Tolerances()
    assert coupling_is_live(np.array([[1e-4]]), tol)
    assert not coupling_is_live(np.array([[1e-5]]), tol)
    assert not coupling_is_live(np.array([[1e-10]]), tol)
    assert has_marginal_coupling([np.array([[1e-5]]), np.zeros((1, 1))], tol)
    assert not has_marginal_coupling([np.array([[1e-10]]), np.array([[0.5]])], tol)


def test_check_gas_uncontrolled_bell():
    report = check_gas(bell_kraus_map(), bell_split())
    assert not report.invariant
    assert not report.gas
    assert report.sufficient_structural_test is False


def test_check_gas_synthesized_bell(bell_closed_loop):
    loop, split = bell_closed_loop
    report = check_gas(loop, split)
    assert report.invariant and report.gas
    assert report.corner_spectral_radius == pytest.approx(0.75, abs=1e-9)
    assert not report.near_rank_boundary


def test_unitary_on_complement_has_fixed_point():
    rng = np.random.default_rng(2)
    u = np.eye(3, dtype=complex)
    u[1:, 1:] = random_unitary(2, rng)
    kraus = validate_kraus([u])
    split = SubspaceSplit.standard(3, 1)
    report = check_gas(kraus, split)
    assert report.invariant
    assert not report.gas
    assert report.corner_spectral_radius == pytest.approx(1.0)
    assert report.certificate == "fixed_point"
    assert report.certificate_residual <= 1e-6


def test_fixed_point_certificate_state_is_supported_on_complement():
    kraus = stalled_three_level()
    split = SubspaceSplit.standard(3, 1)
    found = fixed_point_certificate(kraus, split)
    assert found["kind"] == "fixed_point"
    rho = found["state"]
    assert abs(np.trace(rho) - 1) <= 1e-9
    assert abs(rho[0, 0]) <= 1e-9
    assert np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -1e-9


def test_structural_test_is_inconclusive_for_stalled_level():
    kraus = stalled_three_level()
    split = SubspaceSplit.standard(3, 1)
    assert structural_test(kraus, split) is None
    report = check_gas(kraus, split)
    assert report.invariant and not report.gas
    assert report.kernel_intersection_dim == 1


def test_structural_test_passes_for_canonical_loop():
    loop, split = canonical_loop()
    assert structural_test(loop, split) is True
    assert check_gas(loop, split).gas


def test_corner_superoperator_shape():
    loop, split = canonical_loop()
    sup = corner_superoperator(loop, split)
    assert sup.shape == (9, 9)


def test_attractivity_distance_decays_geometrically():
    gamma = 0.2
    kraus = amplitude_damping(gamma)
    distances = attractivity_distance(kraus, basis_state(2, 1), SubspaceSplit.standard(2, 1), 10)
    expected = [(1 - gamma) ** t for t in range(1, 11)]
    assert_allclose(distances, expected, rtol=1e-10)


def test_report_to_dict():
    report = check_gas(amplitude_damping(0.5), SubspaceSplit.standard(2, 1))
    data = report.to_dict()
    assert data["gas"] is True
    assert set(data) >= {"invariant", "corner_spectral_radius", "kernel_intersection_dim", "details"}
