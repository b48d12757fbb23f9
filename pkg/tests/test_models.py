import numpy as np
import pytest

from thermalab.errors import InputError
from thermalab.models import (CNOT, SWAP, BrickworkCircuit, ModelSpec, block_projectors, build_model,
                              charged_model, cyclic_shift, dual_unitary_gate, is_dual_unitary,
                              perturbed_charged_model, random_dual_unitary_circuit, random_hamiltonian,
                              random_projector, shift_circuit, site_projector, spin_chain)
from thermalab.spectral import diagonalize, eigenspace_partition


def test_gue_semicircle_edge():
    e = np.linalg.eigvalsh(random_hamiltonian("gue", 512, 0))
    assert abs(max(-e[0], e[-1]) - 2) < 0.3


def test_ensembles_are_seeded_and_hermitian():
    for ens in ("gue", "goe"):
        a = random_hamiltonian(ens, 12, 7)
        assert np.array_equal(a, random_hamiltonian(ens, 12, 7))
        assert np.array_equal(a, a.conj().T)
    assert np.all(random_hamiltonian("goe", 6, 1).imag == 0)
    with pytest.raises(InputError):
        random_hamiltonian("cue", 4, 0)


def test_degenerate_model_roundtrip():
    m = build_model(ModelSpec("degenerate", {"multiplicities": [3, 2, 1], "gaps": [0.5, 0.7]}, 2))
    parts = eigenspace_partition(diagonalize(m["matrix"]))
    assert [p.d for p in parts] == [3, 2, 1]


def test_two_site_chain_spectrum():
    e = np.linalg.eigvalsh(spin_chain(2, jz=1.0))
    assert np.allclose(e, [-1, -1, 1, 1])


def test_periodic_chain_commutes_with_shift():
    h = spin_chain(6, jz=0.8, hx=0.5, hz=0.3, periodic=True)
    s = cyclic_shift(6)
    assert np.max(np.abs(h @ s - s @ h)) < 1e-10
    assert np.max(np.abs(spin_chain(6, hx=0.5) @ s - s @ spin_chain(6, hx=0.5))) > 1e-3


def test_charged_model_blocks_commute():
    h, q = charged_model(3, (4, 5, 7), 1)
    assert np.max(np.abs(h @ q - q @ h)) < 1e-10
    ps = block_projectors(3, (4, 5, 7), 1)
    assert [round(np.trace(p).real) for p in ps] == [4, 5, 7]
    assert np.allclose(sum(k * p for k, p in zip((1, 2, 3), ps)), q, atol=1e-10)
    hp, qp = perturbed_charged_model(3, (4, 5, 7), 1, 0.1)
    assert np.array_equal(qp, q) and np.max(np.abs(hp @ q - q @ hp)) > 1e-3


def test_swap_gate_at_quarter_pi():
    g = dual_unitary_gate(np.pi / 4).matrix
    phase = g[0, 0]
    assert abs(abs(phase) - 1) < 1e-12
    assert np.allclose(g / phase, SWAP, atol=1e-12)


def test_dual_unitarity_classification():
    assert is_dual_unitary(SWAP)
    assert not is_dual_unitary(CNOT)
    assert not is_dual_unitary(np.eye(4))
    for seed in range(100):
        g = dual_unitary_gate(np.random.default_rng(seed).uniform(0, np.pi / 2), seed=seed)
        assert g.dual_flag and is_dual_unitary(g.matrix)
    with pytest.raises(InputError):
        is_dual_unitary(2 * np.eye(4))


def test_local_phase_parametrizations():
    assert dual_unitary_gate(0.3, local_phases=np.arange(8) * 0.1).dual_flag
    assert dual_unitary_gate(0.3, local_phases=np.arange(12) * 0.1).dual_flag
    with pytest.raises(InputError):
        dual_unitary_gate(0.3, local_phases=[0.1, 0.2])


def test_shift_circuit_permutes_sites():
    n = 6
    u = shift_circuit(n).floquet()
    assert np.allclose(np.abs(u), np.round(np.abs(u)))  # permutation matrix
    # even-site content moves two sites right, odd-site content two sites left
    for state in (0b100000, 0b010000, 0b110100):
        out = int(np.argmax(np.abs(u[:, state])))
        bits = [(state >> (n - 1 - i)) & 1 for i in range(n)]
        moved = [0] * n
        for i, b in enumerate(bits):
            moved[(i + 2) % n if i % 2 == 0 else (i - 2) % n] = b
        assert out == int("".join(map(str, moved)), 2)
    assert np.allclose(np.linalg.matrix_power(u, n // 2), np.eye(2**n))


def test_random_circuit_unitary():
    circ = random_dual_unitary_circuit(8, 3)
    u = circ.floquet()
    assert np.max(np.abs(u.conj().T @ u - np.eye(256))) < 1e-9
    assert circ.all_dual
    assert not circ.replace_gate("odd", 1, CNOT).all_dual


def test_circuit_validation():
    with pytest.raises(InputError):
        BrickworkCircuit(5, (SWAP,) * 2, (SWAP,) * 2)
    with pytest.raises(InputError):
        BrickworkCircuit(4, (SWAP,), (SWAP,) * 2)


def test_projectors():
    p = site_projector(3, 1, 1).matrix
    assert np.allclose(np.diag(p).real, [0, 0, 1, 1, 0, 0, 1, 1])
    r = np.asarray(random_projector(10, 4, 2).matrix)
    assert np.allclose(r @ r, r, atol=1e-12) and np.trace(r).real == pytest.approx(4)
    with pytest.raises(InputError):
        random_projector(4, 5, 0)


def test_build_model_errors():
    with pytest.raises(InputError):
        ModelSpec("ising", {})
    with pytest.raises(InputError):
        build_model(ModelSpec("gue", {"dim": 4, "extra": 1}))
    with pytest.raises(InputError):
        build_model(ModelSpec("gue", {}))
    out = build_model(ModelSpec("dual_unitary_circuit", {"n_qubits": 4, "cnot_at": ["even", 0]}, 1))
    assert out["kind"] == "floquet" and not out["circuit"].all_dual
