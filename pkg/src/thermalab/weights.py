"""Discrete time-weight functions, their exact Fourier transforms and band calibration."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CalibrationError, InputError

MERGE_TOL = 1e-12
W_FLOOR = 1e-12
_CHUNK_ENTRIES = 2_000_000


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """Non-negative weights on discrete times, normalized to one.

    provenance is "generic" or "cp_pointset"; for the latter `points` holds the
    point set whose autocorrelation produced the atoms.
    """

    times: np.ndarray
    weights: np.ndarray
    provenance: str = "generic"
    points: tuple = field(default=(), compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if t.shape != w.shape or t.size == 0:
            raise InputError("weight function needs matching, non-empty times and weights")
        if np.any(w < 0):
            raise InputError("weights must be non-negative")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(w)):
            raise InputError("times and weights must be finite")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InputError(f"weights sum to {w.sum()!r}, expected 1")
        if self.provenance not in ("generic", "cp_pointset"):
            raise InputError(f"unknown provenance {self.provenance!r}")
        t.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightFunction):
            return NotImplemented
        return (self.provenance == other.provenance and np.array_equal(self.times, other.times)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self) -> int:
        return hash((self.provenance, self.times.tobytes(), self.weights.tobytes()))

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.weights.tolist()))

    @property
    def is_cp(self) -> bool:
        return self.provenance == "cp_pointset"

    def shifted(self, t0: float) -> "WeightFunction":
        """Translate all atoms by t0; only allowed for generic weights."""
        if self.is_cp:
            raise InputError("completely positive autocorrelation weights cannot be time-shifted")
        return WeightFunction(self.times + t0, self.weights, "generic")

    def to_json(self) -> dict:
        out = {"atoms": [[t, w] for t, w in self.atoms], "provenance": self.provenance}
        if self.is_cp:
            out["points"] = list(self.points)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "WeightFunction":
        atoms = np.asarray(data["atoms"], dtype=float).reshape(-1, 2)
        return cls(atoms[:, 0], atoms[:, 1], data.get("provenance", "generic"), tuple(data.get("points", ())))


def merge_atoms(times, weights, tol: float = MERGE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Sum weights of atoms whose times agree within `tol` (chained, after sorting)."""
    t = np.asarray(times, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    order = np.argsort(t, kind="stable")
    t, w = t[order], w[order]
    if t.size == 0:
        return t, w
    new_group = np.concatenate(([True], np.diff(t) > tol))
    gid = np.cumsum(new_group) - 1
    out_w = np.bincount(gid, weights=w)
    out_t = t[new_group]
    return out_t, out_w


def generic_weight(times: Sequence[float], weights: Sequence[float] | None = None,
                   normalize: bool = True) -> WeightFunction:
    t = np.asarray(times, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    if normalize:
        w = w / w.sum()
    t, w = merge_atoms(t, w)
    return WeightFunction(t, w, "generic")


def delta_weight(t0: float = 0.0) -> WeightFunction:
    return WeightFunction(np.array([t0]), np.array([1.0]), "generic")


def fejer_weight(n_atoms: int, spacing: float = 1.0) -> WeightFunction:
    """Triangular window: atoms j*spacing, |j| < n, weight (n - |j|)/n^2."""
    n = int(n_atoms)
    if n < 1:
        raise InputError("fejer window needs n_atoms >= 1")
    if not spacing > 0:
        raise InputError("spacing must be positive")
    j = np.arange(-(n - 1), n)
    w = (n - np.abs(j)) / float(n * n)
    w = w / w.sum()
    pts = tuple(float(k * spacing) for k in range(n))
    return WeightFunction(j * float(spacing), w, "cp_pointset", pts)


def fejer_closed_form(n_atoms: int, spacing: float, delta_e) -> np.ndarray:
    """(1/n^2) (sin(n s x / 2) / sin(s x / 2))^2, with the removable singularities filled."""
    n = int(n_atoms)
    x = np.asarray(delta_e, dtype=float) * spacing / 2.0
    # the squared ratio has period pi; reducing first keeps sin(x) relatively accurate near its zeros
    x = x - np.pi * np.round(x / np.pi)
    num = np.sin(n * x)
    den = np.sin(x)
    small = np.abs(den) < 1e-3
    safe = np.where(small, 1.0, den)
    val = (num / safe) ** 2 / n**2
    # near multiples of pi the ratio loses digits; fall back to the direct Dirichlet sum
    if np.any(small):
        xs = np.atleast_1d(x)[np.atleast_1d(small)]
        k = np.arange(n)
        dir_sum = np.abs(np.exp(-2j * np.outer(xs, k)).sum(axis=1)) ** 2 / n**2
        val = np.array(val, dtype=float, ndmin=1)
        val[np.atleast_1d(small)] = dir_sum
        if np.ndim(delta_e) == 0:
            return val[0]
    return val


def cp_from_pointset(zeta: Sequence[float]) -> WeightFunction:
    """Autocorrelation of a point set: atoms at all differences z_j - z_k, weight 1/eta^2."""
    z = np.asarray(list(zeta), dtype=float).ravel()
    if z.size == 0:
        raise InputError("point set must be non-empty")
    eta = z.size
    diffs = (z[:, None] - z[None, :]).ravel()
    t, w = merge_atoms(diffs, np.full(diffs.size, 1.0 / eta**2))
    w = w / w.sum()
    return WeightFunction(t, w, "cp_pointset", tuple(z.tolist()))


def pointset_closed_form(zeta: Sequence[float], delta_e) -> np.ndarray:
    """|sum_k exp(-i z_k E)|^2 / eta^2."""
    z = np.asarray(list(zeta), dtype=float)
    e = np.atleast_1d(np.asarray(delta_e, dtype=float))
    s = np.exp(-1j * np.outer(e, z)).sum(axis=1)
    out = np.abs(s) ** 2 / z.size**2
    return out if np.ndim(delta_e) else out[0]


def _symmetric_half(w: WeightFunction) -> tuple[np.ndarray, np.ndarray] | None:
    """(t >= 0, folded weights) when the atoms are even in time, else None."""
    t, wt = w.times, w.weights
    order = np.argsort(t)
    t, wt = t[order], wt[order]
    if not (np.array_equal(t, -t[::-1]) and np.array_equal(wt, wt[::-1])):
        return None
    pos = t >= 0
    folded = np.where(t[pos] > 0, 2 * wt[pos], wt[pos])
    return t[pos], folded


def fourier(w: WeightFunction, delta_e):
    """w~(dE) = sum_j w_j exp(-i dE t_j), exact over the atoms; vectorized in delta_e."""
    x = np.asarray(delta_e, dtype=float)
    flat = x.ravel()
    out = np.empty(flat.size, dtype=complex)
    sym = _symmetric_half(w)
    times = w.times if sym is None else sym[0]
    step = max(1, _CHUNK_ENTRIES // max(1, times.size))
    for start in range(0, flat.size, step):
        blk = flat[start:start + step]
        if sym is None:
            out[start:start + step] = np.exp(-1j * np.outer(blk, w.times)) @ w.weights
        else:
            # even atoms: the transform is a real cosine sum over t >= 0
            out[start:start + step] = np.cos(np.outer(blk, sym[0])) @ sym[1]
    if x.ndim == 0:
        return complex(out[0])
    return out.reshape(x.shape)


def poisson_pointset(mean_spacing: float, count: int, seed) -> np.ndarray:
    """Cumulative sums of exponential gaps with the given mean."""
    if count < 1:
        raise InputError("count must be >= 1")
    if not mean_spacing > 0:
        raise InputError("mean spacing must be positive")
    rng = np.random.default_rng(seed)
    return np.cumsum(rng.exponential(mean_spacing, int(count)))


@dataclass(frozen=True)
class BandCalibration:
    W: float
    delta_e_w: float
    w0: float
    e_max_scan: float
    grid_step: float
    n_grid: int

    def to_json(self) -> dict:
        return {"W": self.W, "delta_e_w": self.delta_e_w, "w0": self.w0,
                "e_max_scan": self.e_max_scan, "grid_step": self.grid_step, "n_grid": self.n_grid}


def calibrate(w: WeightFunction, target_band: float, e_max_scan: float,
              grid_step: float | None = None, include: Sequence[float] | None = None,
              require_positive: bool = True) -> BandCalibration:
    """Certify W = min Re w~ on |dE| < band and w0 = max |w~| on band <= |dE| <= e_max_scan.

    The scan is a dense grid plus any extra frequencies in `include` (e.g. the actual level
    differences of a system), which makes the constants exact for that system.
    """
    if not target_band > 0:
        raise InputError("target band must be positive")
    if grid_step is None:
        grid_step = min(target_band / 200.0, max(e_max_scan, target_band) / 1000.0)
    e_top = max(float(e_max_scan), float(target_band))
    n_grid = int(np.floor(e_top / grid_step)) + 1
    if n_grid < 1000:
        raise CalibrationError(f"grid too coarse: {n_grid} points over [0, {e_top}]")
    grid = np.linspace(0.0, e_top, n_grid)
    extra = np.abs(np.asarray(include, dtype=float).ravel()) if include is not None else np.empty(0)
    x_all = np.concatenate([grid, extra, [float(target_band)]])
    # w~(-x) = conj w~(x) for real atoms, so x >= 0 covers both signs
    vals = fourier(w, x_all)
    # W is an infimum over the open band; by continuity the edge value belongs to it
    in_band = x_all <= target_band
    W = float(np.min(vals.real[in_band]))
    out_band = (x_all >= target_band) & (x_all <= e_top)
    w0 = float(np.max(np.abs(vals[out_band]))) if np.any(out_band) else 0.0
    if require_positive and W <= W_FLOOR:
        raise CalibrationError(f"weight cannot certify band {target_band}: W = {W:.3e} <= 0")
    return BandCalibration(W, float(target_band), w0, e_top, float(grid_step), n_grid)
