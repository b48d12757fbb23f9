"""Thermalization metrics: eigenstate/eigenspace deviations, band metrics, basis fractions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, PathDisagreement
from .spectral import (
    BandSpec,
    EnergyShell,
    SpectralSystem,
    as_matrix,
    band_mask,
    band_restrict,
    eigenspace_partition,
    energy_differences,
    microcanonical_value,
    to_eigenbasis,
)
from .weights import WeightFunction, fourier

CLONED_CAP = 512


@dataclass(frozen=True)
class BasisFamily:
    label: str
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        if v.ndim != 2:
            raise InputError("basis vectors must be a 2-d array of columns")
        dev = np.max(np.abs(v.conj().T @ v - np.eye(v.shape[1])), initial=0.0)
        if dev > 1e-10:
            raise InputError(f"basis columns not orthonormal (residual {dev:.3e})")
        v = np.array(v)
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def computational(cls, dim: int) -> "BasisFamily":
        return cls("computational", np.eye(dim, dtype=complex))

    @classmethod
    def eigenbasis(cls, sys: SpectralSystem, shell: EnergyShell | None = None) -> "BasisFamily":
        v = sys.eigenbasis if shell is None else sys.eigenbasis[:, shell.index_array]
        return cls("eigenbasis", v)

    @classmethod
    def of_observable(cls, a) -> "BasisFamily":
        _, v = np.linalg.eigh(as_matrix(a))
        return cls("observable-eigenbasis", v)

    @classmethod
    def haar(cls, dim: int, seed, shell_vectors: np.ndarray | None = None) -> "BasisFamily":
        """Random orthonormal basis of C^dim, or of the span of `shell_vectors`."""
        rng = np.random.default_rng(seed)
        k = dim if shell_vectors is None else shell_vectors.shape[1]
        z = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        q, r = np.linalg.qr(z)
        q = q * (np.diag(r) / np.abs(np.diag(r)))
        return cls("haar", q if shell_vectors is None else shell_vectors @ q)


@dataclass(frozen=True)
class MetricReport:
    value: float
    context: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return float(np.sqrt(max(self.value, 0.0)))

    def to_json(self) -> dict:
        return {"value": self.value, "epsilon": self.epsilon, **self.context}


def _agree(name: str, a: float, b: float, tol: float, scale: float = 1.0) -> None:
    if abs(a - b) > tol * max(scale, abs(a), abs(b)):
        raise PathDisagreement(name, a, b, tol)


def deviation_matrix(sys: SpectralSystem, a, thermal_value: float) -> np.ndarray:
    """<E_n|A|E_m> - thermal_value * delta_nm."""
    b = to_eigenbasis(sys, a)
    return b - thermal_value * np.eye(sys.dim)


def eigenstate_deviations(sys: SpectralSystem, a, shell: EnergyShell) -> np.ndarray:
    th = microcanonical_value(a, shell, sys)
    diag = np.real(np.diag(to_eigenbasis(sys, a)))[shell.index_array]
    return np.abs(diag - th)


def eigenspace_metric(sys: SpectralSystem, a, eigenspace: EnergyShell,
                      thermal_value: float) -> MetricReport:
    """Unnormalized sum of squared deviations inside one eigenspace."""
    idx = eigenspace.index_array
    b = deviation_matrix(sys, a, thermal_value)[np.ix_(idx, idx)]
    val = float(np.sum(np.abs(b) ** 2))
    return MetricReport(val, {"eigenspace": list(eigenspace.indices), "thermal_value": thermal_value})


def band_metric(sys: SpectralSystem, a, shell: EnergyShell, band: BandSpec,
                thermal_value: float, check_tol: float = 1e-10) -> MetricReport:
    """(1/d) sum over band pairs in the shell of |A_nm - a delta_nm|^2.

    Evaluated as a masked sum and as (1/d) Tr[restricted^2]; the two must agree.
    """
    mask = band_mask(sys, shell, band)
    b = deviation_matrix(sys, a, thermal_value)
    direct = float(np.sum(np.abs(b[mask]) ** 2)) / shell.d
    shifted = as_matrix(a) - thermal_value * np.eye(sys.dim)
    r = band_restrict(sys, shifted, shell, band)
    via_trace = float(np.trace(r @ r).real) / shell.d
    _agree("band_metric", direct, via_trace, check_tol)
    return MetricReport(direct, {"shell": list(shell.indices), "delta_e": band.delta_e,
                                 "circle_metric": band.uses_circle(sys),
                                 "thermal_value": thermal_value, "d": shell.d})


def _cloned_sweep(x: np.ndarray, a: np.ndarray, delta_e: float, period: float | None) -> float:
    """sum_{p,q} a_p a_q [|x_p + x_q| < delta_e] via sorting and prefix sums."""
    order = np.argsort(x, kind="stable")
    xs, as_ = x[order], a[order]
    prefix = np.concatenate(([0.0], np.cumsum(as_)))
    shifts = [0.0] if period is None else [0.0, -period, period, -2 * period, 2 * period]
    total = 0.0
    for sh in shifts:
        # open window (-dE - x_p + sh, dE - x_p + sh) for x_q
        lo = np.searchsorted(xs, -delta_e - xs + sh, side="right")
        hi = np.searchsorted(xs, delta_e - xs + sh, side="left")
        hi = np.maximum(hi, lo)
        total += float(np.dot(as_, prefix[hi] - prefix[lo]))
    return total


def cloned_band_metric(sys: SpectralSystem, a, shell: EnergyShell, band: BandSpec,
                       thermal_value: float, cap: int = CLONED_CAP) -> MetricReport:
    """(1/d^2) sum over quadruples with |E_n + E_l - E_m - E_k| < dE of a_nm a_lk."""
    if shell.d > cap:
        raise InputError(f"shell size {shell.d} exceeds cloned-metric cap {cap}")
    idx = shell.index_array
    b = deviation_matrix(sys, a, thermal_value)[np.ix_(idx, idx)]
    amp = (np.abs(b) ** 2).ravel()
    e = sys.energies[idx]
    x = (e[:, None] - e[None, :]).ravel()
    circle = band.uses_circle(sys)
    # |x_p + x_q| < 4 pi, so images at multiples of 2 pi up to 4 pi cover the circle
    # distance; the open windows stay disjoint while dE <= pi
    if circle and band.delta_e > np.pi:
        raise InputError("circle metric requires delta_e <= pi")
    total = _cloned_sweep(x, amp, band.delta_e, 2 * np.pi if circle else None)
    val = total / shell.d**2
    return MetricReport(val, {"shell": list(shell.indices), "delta_e": band.delta_e,
                              "circle_metric": circle, "thermal_value": thermal_value, "d": shell.d})


def cloned_band_metric_bruteforce(sys: SpectralSystem, a, shell: EnergyShell, band: BandSpec,
                                  thermal_value: float) -> float:
    """O(d^4) reference loop."""
    idx = shell.index_array
    b = deviation_matrix(sys, a, thermal_value)[np.ix_(idx, idx)]
    amp = np.abs(b) ** 2
    e = sys.energies[idx]
    circle = band.uses_circle(sys)
    d = len(idx)
    total = 0.0
    for n in range(d):
        for m in range(d):
            for k in range(d):
                for ell in range(d):
                    y = e[n] + e[ell] - e[m] - e[k]
                    if circle:
                        y = (y + np.pi) % (2 * np.pi) - np.pi
                    if abs(y) < band.delta_e:
                        total += amp[n, m] * amp[ell, k]
    return total / d**2


def basis_deviations(sys: SpectralSystem, a, basis: BasisFamily, w: WeightFunction,
                     thermal_value: float) -> np.ndarray:
    """lambda_k[w] = sum_j w_j <k(t_j)|A|k(t_j)> - thermal_value for every basis state."""
    aeig = to_eigenbasis(sys, a)
    x = energy_differences(sys)
    m = fourier(w, x) * aeig
    c = sys.eigenbasis.conj().T @ basis.vectors
    vals = np.einsum("nk,nm,mk->k", c.conj(), m, c)
    return np.real(vals) - thermal_value


def nonthermal_fraction(sys: SpectralSystem, a, basis: BasisFamily, w: WeightFunction,
                        thermal_value: float, lam: float) -> float:
    if not lam > 0:
        raise InputError("lambda must be positive")
    dev = basis_deviations(sys, a, basis, w, thermal_value)
    return float(np.mean(np.abs(dev) >= lam))


def eigenspace_violation_count(sys: SpectralSystem, a, shell: EnergyShell, thermal_value: float,
                               lam: float, band: BandSpec, rel_tol: float = 1e-10) -> tuple[int, float]:
    """Number of eigenspaces in the shell with metric >= lambda^2, and the bound band_metric*d/lambda^2."""
    if not lam > 0:
        raise InputError("lambda must be positive")
    inside = set(shell.indices)
    count = 0
    for es in eigenspace_partition(sys, rel_tol):
        if not set(es.indices) <= inside:
            continue
        if eigenspace_metric(sys, a, es, thermal_value).value >= lam**2:
            count += 1
    bound = band_metric(sys, a, shell, band, thermal_value).value * shell.d / lam**2
    return count, float(bound)


def participation_fraction(rho, d: int) -> float:
    if d < 1:
        raise InputError("d must be >= 1")
    m = as_matrix(rho)
    return float(1.0 / (d * np.vdot(m, m).real))
