"""Dense diagonalization, eigenbasis transforms, shells, bands and exact evolution."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg as sla

from .errors import InputError

HERM_TOL = 1e-10
PROJ_TOL = 1e-10
OBS_HERM_TOL = 1e-12

ArrayLike = Union[np.ndarray, "Observable", "DensityOperator"]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def as_matrix(x) -> np.ndarray:
    """Return the dense complex matrix behind an operator-like argument."""
    if isinstance(x, (Observable, DensityOperator)):
        return x.matrix
    a = np.asarray(x, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Observable:
    matrix: np.ndarray
    is_projector: bool = False
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"observable must be square, got {m.shape}")
        herm = np.max(np.abs(m - m.conj().T), initial=0.0)
        if herm > OBS_HERM_TOL:
            raise InputError(f"observable not Hermitian (residual {herm:.3e})")
        if self.is_projector:
            idem = np.max(np.abs(m @ m - m), initial=0.0)
            if idem > PROJ_TOL:
                raise InputError(f"observable flagged as projector but M^2 != M (residual {idem:.3e})")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


@dataclass(frozen=True)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"density operator must be square, got {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERM_TOL:
            raise InputError("density operator not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-12:
            raise InputError(f"density operator trace {tr!r} != 1")
        if np.linalg.eigvalsh(m)[0] < -1e-10:
            raise InputError("density operator not positive semidefinite")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)

    @classmethod
    def from_projector(cls, proj) -> "DensityOperator":
        p = as_matrix(proj)
        return cls(p / np.trace(p).real)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def pure(cls, psi) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class SpectralSystem:
    """Eigen-decomposition of a Hamiltonian or Floquet unitary.

    `energies` are ascending; for floquet kind they are quasi-energies in (-pi, pi]
    with U = V diag(exp(-i E)) V^dagger. `source` keeps the input operator so that
    time-domain evaluations can avoid the eigenbasis entirely.
    """

    energies: np.ndarray
    eigenbasis: np.ndarray
    kind: str = "hamiltonian"
    source: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("hamiltonian", "floquet"):
            raise InputError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "energies", _frozen(np.asarray(self.energies, dtype=float)))
        object.__setattr__(self, "eigenbasis", _frozen(np.asarray(self.eigenbasis, dtype=complex)))
        if self.source is not None:
            object.__setattr__(self, "source", _frozen(np.asarray(self.source, dtype=complex)))

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def is_floquet(self) -> bool:
        return self.kind == "floquet"

    @property
    def spread(self) -> float:
        return float(self.energies[-1] - self.energies[0])

    def operator(self) -> np.ndarray:
        """Reconstruct H (or U_F) from the decomposition."""
        v = self.eigenbasis
        if self.is_floquet:
            return (v * np.exp(-1j * self.energies)) @ v.conj().T
        return (v * self.energies) @ v.conj().T


@dataclass(frozen=True)
class EnergyShell:
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise InputError("energy shell must be non-empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InputError("shell indices must be strictly increasing")
        if idx[0] < 0:
            raise InputError("shell indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    @property
    def d(self) -> int:
        return len(self.indices)

    @property
    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)

    def check(self, dim: int) -> None:
        if self.indices[-1] >= dim:
            raise InputError(f"shell index {self.indices[-1]} out of range for D={dim}")

    @classmethod
    def full(cls, dim: int) -> "EnergyShell":
        return cls(tuple(range(dim)))

    @classmethod
    def window(cls, sys: SpectralSystem, lo: float, hi: float) -> "EnergyShell":
        """Levels with lo <= E_n <= hi (closed energy set)."""
        idx = np.nonzero((sys.energies >= lo) & (sys.energies <= hi))[0]
        return cls(tuple(idx))

    def projector(self, sys: SpectralSystem) -> np.ndarray:
        v = sys.eigenbasis[:, self.index_array]
        return v @ v.conj().T


@dataclass(frozen=True)
class BandSpec:
    delta_e: float
    circle_metric: bool | None = None

    def __post_init__(self):
        if not self.delta_e > 0:
            raise InputError(f"band width must be positive, got {self.delta_e}")

    def uses_circle(self, sys: SpectralSystem) -> bool:
        if self.circle_metric is None:
            return sys.is_floquet
        return bool(self.circle_metric) and sys.is_floquet


def _check_unitary(u: np.ndarray, tol: float) -> None:
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0)
    if dev > tol:
        raise InputError(f"matrix not unitary (residual {dev:.3e})")


def _fix_cluster(vecs: np.ndarray) -> np.ndarray:
    """Canonical orthonormal basis for the span of `vecs` (columns)."""
    k = vecs.shape[1]
    if k > 1:
        # pivoted QR of V^dagger picks coordinate directions; rotating by Q gives a
        # basis whose leading coefficients form an upper-triangular pattern
        q, _, _ = sla.qr(vecs.conj().T, pivoting=True)
        vecs = vecs @ q
        vecs, _ = np.linalg.qr(vecs)
    out = np.empty_like(vecs)
    keys = []
    for j in range(k):
        col = vecs[:, j]
        nz = np.nonzero(np.abs(col) > 1e-10)[0]
        first = nz[0] if len(nz) else 0
        c = col[first]
        col = col * (np.conj(c) / abs(c)) if abs(c) > 0 else col
        out[:, j] = col
        keys.append((-round(abs(c), 10), tuple(-np.round(np.abs(col[nz[1:4]]), 10))))
    order = sorted(range(k), key=lambda j: keys[j])
    return out[:, order]


def _clusters(e: np.ndarray, threshold: float, periodic: bool) -> list[list[int]]:
    groups: list[list[int]] = [[0]]
    for i in range(1, len(e)):
        if e[i] - e[i - 1] <= threshold:
            groups[-1].append(i)
        else:
            groups.append([i])
    if periodic and len(groups) > 1 and (e[0] + 2 * np.pi - e[-1]) <= threshold:
        groups[0] = groups[-1] + groups[0]
        groups.pop()
    return groups


def _cluster_threshold(e: np.ndarray, rel_tol: float) -> float:
    spread = float(e[-1] - e[0]) if len(e) else 0.0
    return rel_tol * max(1.0, spread)


def diagonalize(matrix, kind: str = "hamiltonian", tol: float = HERM_TOL,
                rel_tol: float = 1e-10) -> SpectralSystem:
    """Diagonalize a Hermitian matrix or a unitary (kind='floquet').

    Near-degenerate clusters (gap <= rel_tol * max(1, spread)) get a canonical basis so
    the result does not depend on eigensolver internals.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"expected a square matrix, got shape {m.shape}")
    if kind == "hamiltonian":
        herm = np.max(np.abs(m - m.conj().T), initial=0.0)
        if herm > tol:
            raise InputError(f"matrix not Hermitian (residual {herm:.3e})")
        try:
            e, v = np.linalg.eigh((m + m.conj().T) / 2)
        except np.linalg.LinAlgError as exc:
            raise InputError(f"eigensolver failed: {exc}") from exc
    elif kind == "floquet":
        _check_unitary(m, tol)
        try:
            t, z = sla.schur(m, output="complex")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise InputError(f"Schur decomposition failed: {exc}") from exc
        e = -np.angle(np.diag(t))
        e = np.where(e <= -np.pi, e + 2 * np.pi, e)
        order = np.argsort(e, kind="stable")
        e, v = e[order], z[:, order]
    else:
        raise InputError(f"unknown kind {kind!r}")

    v = np.array(v)
    for grp in _clusters(e, _cluster_threshold(e, rel_tol), kind == "floquet"):
        v[:, grp] = _fix_cluster(v[:, grp])
    return SpectralSystem(e, v, kind, source=m)


def eigenspace_partition(sys: SpectralSystem, rel_tol: float = 1e-10) -> list[EnergyShell]:
    e = sys.energies
    groups = _clusters(e, _cluster_threshold(e, rel_tol), sys.is_floquet)
    return [EnergyShell(tuple(sorted(g))) for g in groups]


def to_eigenbasis(sys: SpectralSystem, a) -> np.ndarray:
    m = as_matrix(a)
    if m.shape[0] != sys.dim:
        raise InputError(f"dimension mismatch: operator {m.shape[0]} vs system {sys.dim}")
    v = sys.eigenbasis
    out = v.conj().T @ m @ v
    return (out + out.conj().T) / 2 if _is_hermitian(m) else out


def _is_hermitian(m: np.ndarray) -> bool:
    return np.max(np.abs(m - m.conj().T), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(m), initial=0.0))


def energy_differences(sys: SpectralSystem, circle: bool = False) -> np.ndarray:
    """Matrix of E_n - E_m, wrapped into (-pi, pi] when `circle` is set."""
    e = sys.energies
    x = e[:, None] - e[None, :]
    if circle:
        x = wrap_phase(x)
    return x


def wrap_phase(x):
    """Map onto (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


def band_mask(sys: SpectralSystem, shell: EnergyShell, band: BandSpec) -> np.ndarray:
    shell.check(sys.dim)
    x = energy_differences(sys, band.uses_circle(sys))
    inside = np.zeros(sys.dim, dtype=bool)
    inside[shell.index_array] = True
    return (np.abs(x) < band.delta_e) & inside[:, None] & inside[None, :]


def band_restrict(sys: SpectralSystem, a, shell: EnergyShell, band: BandSpec) -> np.ndarray:
    """[A]_{shell, band} in the eigenbasis: entries kept iff both levels are in the
    shell and |E_n - E_m| < delta_e."""
    return np.where(band_mask(sys, shell, band), to_eigenbasis(sys, a), 0.0)


def microcanonical_value(a, shell: EnergyShell, sys: SpectralSystem) -> float:
    shell.check(sys.dim)
    m = as_matrix(a)
    v = sys.eigenbasis[:, shell.index_array]
    val = np.trace(v.conj().T @ m @ v) / shell.d
    return float(val.real)


def _check_time(sys: SpectralSystem, t: float) -> None:
    if sys.is_floquet and float(t) != int(round(float(t))):
        raise InputError(f"floquet systems need integer times, got {t}")


def phases(sys: SpectralSystem, t: float) -> np.ndarray:
    _check_time(sys, t)
    return np.exp(-1j * sys.energies * t)


def evolve(sys: SpectralSystem, rho, t: float) -> DensityOperator:
    """rho(t) = U(t) rho U(t)^dagger via eigenbasis phases."""
    m = as_matrix(rho)
    if m.shape[0] != sys.dim:
        raise InputError("dimension mismatch")
    v = sys.eigenbasis
    p = phases(sys, t)
    r = v.conj().T @ m @ v
    r = p[:, None] * r * p.conj()[None, :]
    out = v @ r @ v.conj().T
    out = (out + out.conj().T) / 2
    out = out / np.trace(out).real
    return DensityOperator(out)


def propagator(sys: SpectralSystem, t: float) -> np.ndarray:
    """U(t) = exp(-iHt) (or U_F^t) computed from the source operator, not the eigenbasis."""
    _check_time(sys, t)
    if sys.source is None:
        raise InputError("system has no source operator for time-domain evaluation")
    if sys.is_floquet:
        n = int(round(float(t)))
        u = sys.source if n >= 0 else sys.source.conj().T
        return np.linalg.matrix_power(u, abs(n))
    return sla.expm(-1j * float(t) * sys.source)


def propagator_cache(sys: SpectralSystem, times: Sequence[float]) -> dict:
    """Map each distinct time to its propagator."""
    out: dict = {}
    for t in times:
        key = float(t)
        if key not in out:
            out[key] = propagator(sys, key)
    return out
