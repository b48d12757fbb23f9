"""Finite classical reference: phase space split into ergodic subsets of known measure."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

VARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class ClassicalPartition:
    """measures[k] = mu(P_k); observables[name][k] = mu(A intersect P_k)."""

    measures: np.ndarray
    observables: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.asarray(self.measures, dtype=float).ravel()
        if mu.size == 0 or np.any(~np.isfinite(mu)) or np.any(mu <= 0):
            raise InputError("subset measures must be finite and strictly positive")
        obs = {}
        for name, vals in self.observables.items():
            v = np.asarray(vals, dtype=float).ravel()
            if v.shape != mu.shape:
                raise InputError(f"observable {name!r} needs one intersection measure per subset")
            if np.any(v < 0) or np.any(v > mu * (1 + 1e-12)):
                raise InputError(f"observable {name!r}: need 0 <= mu(A & P_k) <= mu(P_k)")
            obs[str(name)] = v
        object.__setattr__(self, "measures", mu)
        object.__setattr__(self, "observables", obs)

    @property
    def total(self) -> float:
        return float(self.measures.sum())

    def intersections(self, a) -> np.ndarray:
        if isinstance(a, str):
            if a not in self.observables:
                raise InputError(f"unknown observable {a!r}")
            return self.observables[a]
        v = np.asarray(a, dtype=float).ravel()
        if v.shape != self.measures.shape:
            raise InputError("intersection vector has the wrong length")
        return v

    def thermal_value(self, a) -> float:
        return float(self.intersections(a).sum() / self.total)

    @classmethod
    def from_json(cls, data: dict) -> "ClassicalPartition":
        unknown = set(data) - {"measures", "observables"}
        if unknown:
            raise InputError(f"unknown partition keys: {sorted(unknown)}")
        return cls(np.asarray(data["measures"], dtype=float), dict(data.get("observables", {})))

    def to_json(self) -> dict:
        return {"measures": self.measures.tolist(),
                "observables": {k: v.tolist() for k, v in self.observables.items()}}


def classical_time_average(part: ClassicalPartition, a, weights) -> float:
    """sum_k (mu(A & P_k) / mu(P_k)) pi_k for initial subset weights pi_k."""
    pi = np.asarray(weights, dtype=float).ravel()
    if pi.shape != part.measures.shape:
        raise InputError(f"expected {part.measures.size} subset weights, got {pi.size}")
    if np.any(pi < 0):
        raise InputError("subset weights must be non-negative")
    return float(np.dot(part.intersections(a) / part.measures, pi))


def classical_eigenstate_check(part: ClassicalPartition, a, tol: float = 1e-12) -> np.ndarray:
    """Per subset: is A spread over it in proportion to its measure?"""
    ratio = part.intersections(a) / part.measures
    return np.abs(ratio - part.thermal_value(a)) <= tol


def state_weights(part: ClassicalPartition, a) -> np.ndarray:
    """Subset weights of the uniform distribution on A."""
    v = part.intersections(a)
    tot = v.sum()
    if not tot > 0:
        raise InputError("observable has zero measure")
    return v / tot


def single_state_determination(part: ClassicalPartition, a) -> tuple[float, bool]:
    """Weighted variance of the subset ratios; zero iff A thermalizes subset by subset."""
    v = part.intersections(a)
    mu_a = float(v.sum())
    if not mu_a > 0:
        raise InputError("observable has zero measure")
    ratio = v / part.measures
    var = float(np.sum(part.measures * (ratio - mu_a / part.total) ** 2) / mu_a)
    return var, bool(var <= VARIANCE_TOL)


def variance_identity_residual(part: ClassicalPartition, a) -> float:
    """|time average from the uniform state on A - thermal value - variance|."""
    var, _ = single_state_determination(part, a)
    ta = classical_time_average(part, a, state_weights(part, a))
    return abs(ta - part.thermal_value(a) - var)


def equivalence_check(part: ClassicalPartition, a, n_states: int = 20, seed: int = 0,
                      tol: float = 1e-10) -> dict:
    """Compare three readings of 'A thermalizes': zero variance, per-subset proportion,
    and a thermal time average for random initial subset weights."""
    var, var_zero = single_state_determination(part, a)
    et = bool(np.all(classical_eigenstate_check(part, a, tol)))
    rng = np.random.default_rng(seed)
    th = part.thermal_value(a)
    all_thermal = True
    for _ in range(n_states):
        pi = rng.dirichlet(np.ones(part.measures.size))
        if abs(classical_time_average(part, a, pi) - th) > tol:
            all_thermal = False
            break
    return {"variance": var, "variance_zero": var_zero, "eigenstate": et, "all_states_thermal": all_thermal,
            "consistent": var_zero == et == all_thermal}


def random_partition(n_subsets: int, seed, proportional: bool = False) -> tuple[ClassicalPartition, str]:
    """Random measures and one observable "A"; proportional=True spreads A evenly."""
    if n_subsets < 1:
        raise InputError("need at least one subset")
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.1, 1.0, n_subsets)
    if proportional:
        frac = np.full(n_subsets, rng.uniform(0.05, 0.95))
    else:
        frac = rng.uniform(0.0, 1.0, n_subsets)
    return ClassicalPartition(mu, {"A": mu * frac}), "A"
