import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermalab.errors import InputError
from thermalab.metrics import (BasisFamily, band_metric, cloned_band_metric, cloned_band_metric_bruteforce,
                               eigenspace_metric, eigenspace_violation_count, eigenstate_deviations,
                               nonthermal_fraction, participation_fraction)
from thermalab.models import degenerate_hamiltonian, haar_unitary, random_hamiltonian, random_projector
from thermalab.spectral import BandSpec, DensityOperator, EnergyShell, diagonalize, eigenspace_partition

from conftest import diag_system


def test_eigenstate_deviations_hand():
    sys = diag_system([0.0, 1.0])
    dev = eigenstate_deviations(sys, np.diag([1.0, 0.0]), EnergyShell.full(2))
    assert np.allclose(dev, [0.5, 0.5])


def test_degenerate_offdiagonal_counts_twice():
    sys = diag_system([0.0, 0.0, 1.0])
    x = 0.3 - 0.2j
    a = np.zeros((3, 3), dtype=complex)
    a[0, 1], a[1, 0] = x, np.conj(x)
    es = eigenspace_partition(sys)[0]
    assert es.indices == (0, 1)
    assert eigenspace_metric(sys, a, es, 0.0).value == pytest.approx(2 * abs(x) ** 2, abs=1e-15)


def test_band_metric_hand_example():
    # eight admitted pairs: four diagonal, four near-diagonal with zero elements
    sys = diag_system([0.0, 0.1, 1.0, 1.1])
    val = band_metric(sys, np.diag([1.0, 0, 1, 0]), EnergyShell.full(4), BandSpec(0.5), 0.5).value
    assert val == pytest.approx(0.25, abs=1e-15)


def test_band_metric_rotated_frame_invariant():
    sys = diag_system([0.0, 0.1, 1.0, 1.1], seed=3)
    a = sys.eigenbasis @ np.diag([1.0, 0, 1, 0]) @ sys.eigenbasis.conj().T
    val = band_metric(sys, a, EnergyShell.full(4), BandSpec(0.5), 0.5).value
    assert val == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_cloned_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 9))
    sys = diagonalize(random_hamiltonian("gue", d + 2, seed))
    a = random_projector(d + 2, 1 + seed % 3, seed).matrix
    shell = EnergyShell(tuple(range(1, d + 1)))
    band = BandSpec(float(rng.uniform(0.05, 1.0)))
    fast = cloned_band_metric(sys, a, shell, band, 0.3).value
    slow = cloned_band_metric_bruteforce(sys, a, shell, band, 0.3)
    assert fast == pytest.approx(slow, abs=1e-10)


def test_cloned_circle_matches_bruteforce():
    sys = diagonalize(haar_unitary(7, np.random.default_rng(1)), "floquet")
    a = random_projector(7, 3, 2).matrix
    shell = EnergyShell.full(7)
    for de in (0.2, 1.0, np.pi):
        band = BandSpec(de)
        assert cloned_band_metric(sys, a, shell, band, 0.4).value == pytest.approx(
            cloned_band_metric_bruteforce(sys, a, shell, band, 0.4), abs=1e-10)


def test_cloned_cap():
    sys = diagonalize(random_hamiltonian("gue", 8, 0))
    with pytest.raises(InputError):
        cloned_band_metric(sys, np.eye(8), EnergyShell.full(8), BandSpec(0.1), 0.5, cap=4)


def test_planted_nonthermal_eigenspace():
    # three 2-fold eigenspaces; A equals 0.5 * identity on two of them and is fully occupied on the third
    h = degenerate_hamiltonian((2, 2, 2), (1.0, 1.0), seed=8)
    sys = diagonalize(h)
    v = sys.eigenbasis
    diag = np.array([0.5, 0.5, 0.5, 0.5, 1.0, 1.0])
    a = (v * diag) @ v.conj().T
    count, bound = eigenspace_violation_count(sys, a, EnergyShell.full(6), 0.5, 0.5, BandSpec(0.1))
    assert count == 1
    assert count <= bound


@pytest.mark.parametrize("seed", range(10))
def test_violation_count_below_bound(seed):
    sys = diagonalize(random_hamiltonian("gue", 16, seed))
    a = random_projector(16, 4, seed + 100).matrix
    count, bound = eigenspace_violation_count(sys, a, EnergyShell.full(16), 0.25, 0.2, BandSpec(0.05))
    assert count <= bound


def test_fraction_in_unit_interval():
    sys = diagonalize(random_hamiltonian("gue", 16, 2))
    from thermalab.weights import fejer_weight

    f = nonthermal_fraction(sys, random_projector(16, 4, 0).matrix, BasisFamily.computational(16),
                            fejer_weight(16, 0.5), 0.25, 0.05)
    assert 0.0 <= f <= 1.0
    with pytest.raises(InputError):
        nonthermal_fraction(sys, np.eye(16), BasisFamily.computational(16), fejer_weight(2), 0.5, 0.0)


@pytest.mark.parametrize("k", [1, 3, 8])
def test_participation_fraction_of_mixture(k):
    rho = np.diag([1.0 / k] * k + [0.0] * (8 - k))
    assert participation_fraction(rho, 8) == pytest.approx(k / 8)


def test_haar_basis_is_orthonormal_and_in_shell():
    sys = diagonalize(random_hamiltonian("gue", 12, 1))
    shell = EnergyShell((2, 3, 4, 5))
    vecs = sys.eigenbasis[:, shell.index_array]
    b = BasisFamily.haar(12, 5, shell_vectors=vecs)
    assert np.allclose(b.vectors.conj().T @ b.vectors, np.eye(4), atol=1e-12)
    assert np.allclose(vecs @ vecs.conj().T @ b.vectors, b.vectors, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 2.0))
def test_band_metric_monotone_in_band(seed, de):
    sys = diagonalize(random_hamiltonian("gue", 8, seed))
    a = random_projector(8, 3, seed).matrix
    shell = EnergyShell.full(8)
    small = band_metric(sys, a, shell, BandSpec(de), 0.375).value
    large = band_metric(sys, a, shell, BandSpec(2 * de), 0.375).value
    assert 0 <= small <= large + 1e-14
