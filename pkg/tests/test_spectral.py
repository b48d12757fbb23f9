import numpy as np
import pytest

from thermalab.errors import InputError
from thermalab.models import degenerate_hamiltonian, haar_unitary, random_hamiltonian
from thermalab.spectral import (BandSpec, DensityOperator, EnergyShell, band_restrict, diagonalize,
                                eigenspace_partition, evolve, microcanonical_value, propagator,
                                to_eigenbasis, wrap_phase)

from oracle_values import ENERGIES_GUE8


def taylor_expm(m, terms=80):
    """Scaling-and-squaring Taylor series, independent of scipy."""
    norm = np.linalg.norm(m, 1)
    k = max(0, int(np.ceil(np.log2(max(norm, 1e-300)))) + 1)
    x = m / 2**k
    out = np.eye(len(m), dtype=complex)
    term = np.eye(len(m), dtype=complex)
    for j in range(1, terms):
        term = term @ x / j
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def test_reconstruction_gue64():
    h = random_hamiltonian("gue", 64, 5)
    sys = diagonalize(h)
    assert np.max(np.abs(sys.operator() - h)) < 1e-9
    assert np.all(np.diff(sys.energies) >= 0)


def test_energies_match_high_precision_oracle(gue8):
    assert np.allclose(gue8.energies, ENERGIES_GUE8, atol=1e-12, rtol=0)


def test_floquet_reconstruction_and_range():
    u = haar_unitary(32, np.random.default_rng(2))
    sys = diagonalize(u, "floquet")
    assert np.max(np.abs(sys.operator() - u)) < 1e-9
    assert np.all(sys.energies > -np.pi) and np.all(sys.energies <= np.pi)


def test_rejects_non_hermitian_and_non_unitary():
    with pytest.raises(InputError):
        diagonalize(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(InputError):
        diagonalize(2 * np.eye(3), "floquet")
    with pytest.raises(InputError):
        diagonalize(np.ones((2, 3)))


def test_transform_preserves_traces():
    sys = diagonalize(random_hamiltonian("gue", 16, 1))
    rng = np.random.default_rng(0)
    a = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    b = to_eigenbasis(sys, a)
    assert abs(np.trace(b) - np.trace(a)) < 1e-9
    assert abs(np.trace(b @ b) - np.trace(a @ a)) < 1e-9


def test_band_selector_zeroes_offdiagonal():
    sys = diagonalize(np.diag([0.0, 1.0]).astype(complex))
    a = np.array([[1, 2 + 1j], [2 - 1j, 3]], dtype=complex)
    r = band_restrict(sys, a, EnergyShell.full(2), BandSpec(0.5))
    assert np.allclose(r, np.diag([1, 3]))


def test_microcanonical_value_hand():
    sys = diagonalize(np.diag([0.0, 1.0, 2.0, 3.0]).astype(complex))
    a = np.diag([1.0, 0, 1, 0])
    assert microcanonical_value(a, EnergyShell((0, 1)), sys) == pytest.approx(0.5, abs=1e-15)


def test_degenerate_partition_sizes():
    h = degenerate_hamiltonian((3, 2, 1), (1.0, 1.5), seed=4)
    sys = diagonalize(h)
    sizes = [es.d for es in eigenspace_partition(sys)]
    assert sizes == [3, 2, 1]


def test_degenerate_basis_is_canonical():
    h = degenerate_hamiltonian((3, 2, 1), (1.0, 1.5), seed=4)
    v1 = diagonalize(h).eigenbasis
    v2 = diagonalize(h.copy()).eigenbasis
    assert np.array_equal(v1, v2)


@pytest.mark.parametrize("dim", [2, 5, 16])
def test_propagator_matches_taylor(dim):
    h = random_hamiltonian("gue", dim, dim)
    sys = diagonalize(h)
    for t in (0.3, -1.7, 4.0):
        u = propagator(sys, t)
        assert np.linalg.norm(u - taylor_expm(-1j * t * h)) < 1e-8
        # eigenbasis route
        v = sys.eigenbasis
        assert np.linalg.norm((v * np.exp(-1j * sys.energies * t)) @ v.conj().T - u) < 1e-8


def test_floquet_needs_integer_time():
    sys = diagonalize(haar_unitary(4, np.random.default_rng(0)), "floquet")
    with pytest.raises(InputError):
        propagator(sys, 0.5)
    assert np.allclose(propagator(sys, -2), np.linalg.matrix_power(sys.source.conj().T, 2))


def test_evolve_keeps_state_valid():
    sys = diagonalize(random_hamiltonian("gue", 8, 3))
    psi = np.ones(8) / np.sqrt(8)
    r = evolve(sys, DensityOperator.pure(psi), 2.5)
    assert r.purity == pytest.approx(1.0, abs=1e-12)


def test_shell_validation():
    with pytest.raises(InputError):
        EnergyShell(())
    with pytest.raises(InputError):
        EnergyShell((2, 1))
    with pytest.raises(InputError):
        BandSpec(0.0)


def test_wrap_phase_range():
    x = wrap_phase([np.pi, -np.pi, 3 * np.pi, 0.1])
    assert np.allclose(x, [np.pi, np.pi, np.pi, 0.1])
