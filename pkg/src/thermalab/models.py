"""Model constructors: random matrices, planted spectra, spin chains, charges, brickwork circuits."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.linalg import expm

from .errors import InputError
from .spectral import Observable

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)

SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

FAMILIES = ("gue", "goe", "degenerate", "spin_chain", "dual_unitary_circuit", "shift_circuit", "charged")


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hamiltonian(ensemble: str, dim: int, seed) -> np.ndarray:
    """GUE: (M + M^dag)/2/sqrt(D) with standard complex Gaussian entries; GOE: real analogue."""
    if dim < 2:
        raise InputError("dimension must be >= 2")
    rng = np.random.default_rng(seed)
    if ensemble == "gue":
        m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    elif ensemble == "goe":
        m = rng.normal(size=(dim, dim)).astype(complex)
    else:
        raise InputError(f"unknown ensemble {ensemble!r}")
    h = (m + m.conj().T) / 2 / np.sqrt(dim)
    return (h + h.conj().T) / 2


def degenerate_hamiltonian(multiplicities, gaps, seed, base: float = 0.0) -> np.ndarray:
    mult = [int(m) for m in multiplicities]
    if any(m < 1 for m in mult):
        raise InputError("multiplicities must be positive")
    if len(gaps) != len(mult) - 1:
        raise InputError("need one gap fewer than multiplicities")
    if any(g <= 0 for g in gaps):
        raise InputError("gaps must be positive")
    levels = base + np.concatenate(([0.0], np.cumsum(gaps)))
    diag = np.repeat(levels, mult)
    u = haar_unitary(len(diag), np.random.default_rng(seed))
    h = (u * diag) @ u.conj().T
    return (h + h.conj().T) / 2


def _site_op(op: np.ndarray, site: int, n: int) -> np.ndarray:
    mats = [I2] * n
    mats[site] = op
    return reduce(np.kron, mats)


def spin_chain(n_qubits: int, jz: float = 1.0, hx: float = 0.0, hz: float = 0.0,
               periodic: bool = False) -> np.ndarray:
    """sum jz Z_i Z_{i+1} + hx X_i + hz Z_i, qubit 0 most significant."""
    n = int(n_qubits)
    if not 2 <= n <= 12:
        raise InputError("spin chain needs 2 <= n_qubits <= 12")
    dim = 2**n
    h = np.zeros((dim, dim), dtype=complex)
    bonds = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 2:
        bonds.append((n - 1, 0))
    for i, j in bonds:
        h += jz * (_site_op(Z, i, n) @ _site_op(Z, j, n))
    for i in range(n):
        h += hx * _site_op(X, i, n) + hz * _site_op(Z, i, n)
    return h


def cyclic_shift(n_qubits: int) -> np.ndarray:
    """Permutation moving qubit i to i+1 (mod n)."""
    n = int(n_qubits)
    dim = 2**n
    idx = np.arange(dim)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    rolled = np.roll(bits, 1, axis=1)
    target = rolled @ (1 << (n - 1 - np.arange(n)))
    p = np.zeros((dim, dim), dtype=complex)
    p[target, idx] = 1.0
    return p


def charged_model(n_blocks: int, block_dims, seed, charges=None) -> tuple[np.ndarray, np.ndarray]:
    """Block GUE Hamiltonian and Q = sum_b q_b P_b, both rotated by one seeded Haar frame."""
    dims = [int(b) for b in block_dims]
    if len(dims) != n_blocks or any(b < 1 for b in dims):
        raise InputError("block_dims must list n_blocks positive sizes")
    qs = list(range(1, n_blocks + 1)) if charges is None else [int(q) for q in charges]
    if len(set(qs)) != len(qs) or len(qs) != n_blocks:
        raise InputError("charges must be distinct integers, one per block")
    rng = np.random.default_rng(seed)
    dim = sum(dims)
    h = np.zeros((dim, dim), dtype=complex)
    qd = np.zeros(dim)
    pos = 0
    for b, q in zip(dims, qs):
        if b >= 2:
            h[pos:pos + b, pos:pos + b] = random_hamiltonian("gue", b, rng.integers(2**63))
        else:
            h[pos, pos] = rng.normal()
        qd[pos:pos + b] = q
        pos += b
    u = haar_unitary(dim, rng)
    hh = u @ h @ u.conj().T
    qq = (u * qd) @ u.conj().T
    return (hh + hh.conj().T) / 2, (qq + qq.conj().T) / 2


def perturbed_charged_model(n_blocks: int, block_dims, seed, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """charged_model with H -> H + eps * GUE; Q is left untouched."""
    h, q = charged_model(n_blocks, block_dims, seed)
    pert = random_hamiltonian("gue", h.shape[0], np.random.SeedSequence([int(seed), 7]).generate_state(1)[0])
    return h + eps * pert, q


def block_projectors(n_blocks: int, block_dims, seed) -> list[np.ndarray]:
    """Charge-sector projectors in the same frame as charged_model(seed)."""
    _, q = charged_model(n_blocks, block_dims, seed)
    vals, vecs = np.linalg.eigh(q)
    out = []
    for qv in range(1, n_blocks + 1):
        sel = np.abs(vals - qv) < 0.5
        v = vecs[:, sel]
        out.append(v @ v.conj().T)
    return out


# ---------------------------------------------------------------- two-qubit gates

def reshuffle(u: np.ndarray) -> np.ndarray:
    """Space-time dual: U~[(c a),(d b)] = U[(c d),(a b)]."""
    t = np.asarray(u).reshape(2, 2, 2, 2)  # c d a b
    return t.transpose(0, 2, 1, 3).reshape(4, 4)


def is_dual_unitary(u: np.ndarray, tol: float = 1e-9) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4):
        raise InputError("gate must be 4x4")
    if np.max(np.abs(u.conj().T @ u - np.eye(4))) > 1e-10:
        raise InputError("gate is not unitary")
    r = reshuffle(u)
    return bool(np.max(np.abs(r.conj().T @ r - np.eye(4))) <= tol)


@dataclass(frozen=True)
class TwoQubitGate:
    matrix: np.ndarray
    dual_flag: bool = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise InputError("gate must be 4x4")
        if np.max(np.abs(m.conj().T @ m - np.eye(4))) > 1e-10:
            raise InputError("gate is not unitary")
        m = np.array(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dual_flag", is_dual_unitary(m))


def _single_qubit(angles) -> np.ndarray:
    """exp(-i a Z) exp(-i b Y) exp(-i c Z) up to global phase (angles of length 3 or 4)."""
    a, b, c = angles[:3]
    g = angles[3] if len(angles) > 3 else 0.0
    return np.exp(-1j * g) * expm(-1j * a * Z) @ expm(-1j * b * Y) @ expm(-1j * c * Z)


def dual_unitary_gate(jz: float, local_phases=None, seed=None) -> TwoQubitGate:
    """(u1 x u2) exp[-i(pi/4 XX + pi/4 YY + jz ZZ)] (v1 x v2).

    The four single-qubit unitaries come from `local_phases` (Euler angles, 3 per qubit
    for 12 numbers, or 2 per qubit for 8) or are Haar-random from `seed`.
    """
    core = expm(-1j * (np.pi / 4 * np.kron(X, X) + np.pi / 4 * np.kron(Y, Y) + jz * np.kron(Z, Z)))
    if local_phases is None and seed is None:
        locs = [I2] * 4
    elif local_phases is None:
        rng = np.random.default_rng(seed)
        locs = [haar_unitary(2, rng) for _ in range(4)]
    else:
        ph = np.asarray(local_phases, dtype=float).ravel()
        if ph.size == 8:
            locs = [_single_qubit((ph[2 * k], ph[2 * k + 1], 0.0)) for k in range(4)]
        elif ph.size == 12:
            locs = [_single_qubit(ph[3 * k:3 * k + 3]) for k in range(4)]
        else:
            raise InputError("local_phases must hold 8 or 12 angles")
    u = np.kron(locs[0], locs[1]) @ core @ np.kron(locs[2], locs[3])
    gate = TwoQubitGate(u)
    if not gate.dual_flag:
        raise RuntimeError("constructed gate failed the dual-unitarity check")
    return gate


# ---------------------------------------------------------------- brickwork circuits

def apply_two_site(mat: np.ndarray, gate: np.ndarray, i: int, j: int, n: int) -> np.ndarray:
    """(gate on qubits i, j) @ mat, for a 2^n x K matrix."""
    k = mat.shape[1]
    t = mat.reshape([2] * n + [k])
    t = np.tensordot(gate.reshape(2, 2, 2, 2), t, axes=([2, 3], [i, j]))
    t = np.moveaxis(t, [0, 1], [i, j])
    return t.reshape(2**n, k)


def apply_site(mat: np.ndarray, op: np.ndarray, site: int, n: int) -> np.ndarray:
    """(op on one qubit) @ mat."""
    k = mat.shape[1]
    t = mat.reshape(2**site, 2, 2 ** (n - site - 1) * k)
    return np.einsum("ab,ibj->iaj", op, t).reshape(2**n, k)


def even_bonds(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(0, n, 2)]


def odd_bonds(n: int) -> list[tuple[int, int]]:
    return [(i, (i + 1) % n) for i in range(1, n, 2)]


def _as_gate_matrix(g) -> np.ndarray:
    return g.matrix if isinstance(g, TwoQubitGate) else np.asarray(g, dtype=complex)


@dataclass(frozen=True)
class BrickworkCircuit:
    """Periodic brickwork on n qubits; even layer acts on (0,1),(2,3),..., odd layer on
    (1,2),...,(n-1,0). One Floquet period is U_F = U_odd U_even."""

    n_qubits: int
    even_gates: tuple
    odd_gates: tuple

    def __post_init__(self):
        n = self.n_qubits
        if n % 2 or not 4 <= n <= 12:
            raise InputError("brickwork needs an even number of qubits in [4, 12]")
        if len(self.even_gates) != n // 2 or len(self.odd_gates) != n // 2:
            raise InputError(f"need {n // 2} gates per layer")
        object.__setattr__(self, "even_gates", tuple(_as_gate_matrix(g) for g in self.even_gates))
        object.__setattr__(self, "odd_gates", tuple(_as_gate_matrix(g) for g in self.odd_gates))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def all_dual(self) -> bool:
        return all(is_dual_unitary(g) for g in self.even_gates + self.odd_gates)

    def layer(self, parity: str) -> np.ndarray:
        n = self.n_qubits
        gates, bonds = (self.even_gates, even_bonds(n)) if parity == "even" else (self.odd_gates, odd_bonds(n))
        u = np.eye(self.dim, dtype=complex)
        for g, (i, j) in zip(gates, bonds):
            u = apply_two_site(u, g, i, j, n)
        return u

    def floquet(self) -> np.ndarray:
        return self.layer("odd") @ self.layer("even")

    def replace_gate(self, parity: str, index: int, gate) -> "BrickworkCircuit":
        ev, od = list(self.even_gates), list(self.odd_gates)
        (ev if parity == "even" else od)[index] = _as_gate_matrix(gate)
        return BrickworkCircuit(self.n_qubits, tuple(ev), tuple(od))


def random_dual_unitary_circuit(n_qubits: int, seed) -> BrickworkCircuit:
    """Inhomogeneous circuit: every gate has its own jz and Haar local unitaries."""
    rng = np.random.default_rng(seed)
    half = n_qubits // 2
    gates = [dual_unitary_gate(rng.uniform(0, np.pi / 2), seed=rng.integers(2**63)) for _ in range(2 * half)]
    return BrickworkCircuit(n_qubits, tuple(gates[:half]), tuple(gates[half:]))


def shift_circuit(n_qubits: int) -> BrickworkCircuit:
    half = n_qubits // 2
    return BrickworkCircuit(n_qubits, (SWAP,) * half, (SWAP,) * half)


def brickwork_floquet(n_qubits: int, even_gates, odd_gates) -> np.ndarray:
    return BrickworkCircuit(n_qubits, tuple(even_gates), tuple(odd_gates)).floquet()


def site_projector(n_qubits: int, site: int, bit: int) -> Observable:
    """|bit><bit| on `site` (qubit 0 most significant), identity elsewhere."""
    if not 0 <= site < n_qubits:
        raise InputError("site out of range")
    if bit not in (0, 1):
        raise InputError("bit must be 0 or 1")
    dim = 2**n_qubits
    idx = np.arange(dim)
    diag = (((idx >> (n_qubits - 1 - site)) & 1) == bit).astype(float)
    return Observable(np.diag(diag).astype(complex), True, f"site{site}={bit}")


def random_projector(dim: int, rank: int, seed) -> Observable:
    """Projector onto a Haar-random rank-dimensional subspace."""
    if not 1 <= rank <= dim:
        raise InputError("rank out of range")
    u = haar_unitary(dim, np.random.default_rng(seed))[:, :rank]
    p = u @ u.conj().T
    p = (p + p.conj().T) / 2
    return Observable(p, True, f"haar-rank{rank}")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: dict
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown model family {self.family!r}")
        if not isinstance(self.params, dict):
            raise InputError("params must be a mapping")

    def to_json(self) -> dict:
        return {"family": self.family, "params": self.params, "seed": self.seed}


_ALLOWED = {
    "gue": {"dim"},
    "goe": {"dim"},
    "degenerate": {"multiplicities", "gaps", "base"},
    "spin_chain": {"n_qubits", "jz", "hx", "hz", "periodic"},
    "dual_unitary_circuit": {"n_qubits", "cnot_at"},
    "shift_circuit": {"n_qubits"},
    "charged": {"n_blocks", "block_dims", "eps"},
}


def build_model(spec: ModelSpec) -> dict:
    """Construct the operator(s) described by `spec`.

    Returns a dict with "kind" ("hamiltonian" or "floquet"), "matrix" and, for
    charged models, "charge"; circuits also carry "circuit".
    """
    extra = set(spec.params) - _ALLOWED[spec.family]
    if extra:
        raise InputError(f"unknown params for {spec.family}: {sorted(extra)}")
    p = spec.params
    try:
        if spec.family in ("gue", "goe"):
            return {"kind": "hamiltonian", "matrix": random_hamiltonian(spec.family, int(p["dim"]), spec.seed)}
        if spec.family == "degenerate":
            return {"kind": "hamiltonian",
                    "matrix": degenerate_hamiltonian(p["multiplicities"], p["gaps"], spec.seed, p.get("base", 0.0))}
        if spec.family == "spin_chain":
            return {"kind": "hamiltonian",
                    "matrix": spin_chain(int(p["n_qubits"]), p.get("jz", 1.0), p.get("hx", 0.0),
                                         p.get("hz", 0.0), bool(p.get("periodic", False)))}
        if spec.family in ("dual_unitary_circuit", "shift_circuit"):
            n = int(p["n_qubits"])
            circ = random_dual_unitary_circuit(n, spec.seed) if spec.family == "dual_unitary_circuit" else shift_circuit(n)
            if p.get("cnot_at") is not None:
                parity, k = p["cnot_at"]
                circ = circ.replace_gate(parity, int(k), CNOT)
            return {"kind": "floquet", "matrix": circ.floquet(), "circuit": circ}
        if spec.family == "charged":
            nb = int(p["n_blocks"])
            h, q = perturbed_charged_model(nb, p["block_dims"], spec.seed, float(p.get("eps", 0.0)))
            return {"kind": "hamiltonian", "matrix": h, "charge": q}
    except KeyError as exc:
        raise InputError(f"missing parameter {exc.args[0]!r} for {spec.family}") from exc
    raise InputError(f"unhandled family {spec.family!r}")
