"""Weighted time averages, autocorrelators and the echo family.

Every quantity has an eigenbasis evaluation and a time-domain evaluation built from
propagators of the source operator. `path` selects "eigen", "time" or "both"; with
"both" the two are compared and a PathDisagreement is raised beyond tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import InputError, PathDisagreement
from .spectral import (
    EnergyShell,
    SpectralSystem,
    as_matrix,
    eigenspace_partition,
    energy_differences,
    phases,
    propagator,
    to_eigenbasis,
)
from .weights import WeightFunction, fourier

PATH_TOL = 1e-8
CLONED_PATH_TOL = 1e-7
ECHO_KINDS = ("L_AA", "L_A", "L_H")


def _resolve(name: str, path: str, eigen: Callable[[], complex], time: Callable[[], complex],
             tol: float, scale: float = 1.0):
    if path == "eigen":
        return eigen()
    if path == "time":
        return time()
    if path != "both":
        raise InputError(f"unknown path {path!r}")
    a, b = eigen(), time()
    if abs(a - b) > tol * max(scale, abs(a), abs(b)):
        raise PathDisagreement(name, a, b, tol)
    return a


class _Props:
    """Per-call propagator memo keyed by time."""

    def __init__(self, sys: SpectralSystem):
        self.sys = sys
        self._cache: dict = {}

    def __call__(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._cache:
            self._cache[key] = propagator(self.sys, key)
        return self._cache[key]


def _projector(a) -> np.ndarray:
    from .spectral import Observable

    if isinstance(a, Observable) and not a.is_projector:
        raise InputError("observable must be flagged as a projector")
    m = as_matrix(a)
    if np.max(np.abs(m @ m - m), initial=0.0) > 1e-10:
        raise InputError("observable is not a projector")
    return m


def weighted_average(sys: SpectralSystem, rho, a, w: WeightFunction, path: str = "eigen",
                     tol: float = 1e-9) -> float:
    """sum_j w_j Tr[rho(t_j) A]."""
    r, m = as_matrix(rho), as_matrix(a)

    def eigen():
        re, ae = to_eigenbasis(sys, r), to_eigenbasis(sys, m)
        wt = fourier(w, energy_differences(sys))
        return float(np.real(np.sum(wt * re * ae.T)))

    def time():
        props = _Props(sys)
        tot = 0.0
        for t, wj in zip(w.times, w.weights):
            u = props(t)
            tot += wj * np.real(np.vdot((u @ r @ u.conj().T).conj().T, m))
        return float(tot)

    return _resolve("weighted_average", path, eigen, time, tol)


def infinite_time_average(sys: SpectralSystem, rho, a, rel_tol: float = 1e-10) -> float:
    """Dephased expectation: blocks of rho and A within each eigenspace."""
    re, ae = to_eigenbasis(sys, rho), to_eigenbasis(sys, a)
    tot = 0.0
    for es in eigenspace_partition(sys, rel_tol):
        idx = es.index_array
        tot += np.real(np.sum(re[np.ix_(idx, idx)] * ae[np.ix_(idx, idx)].T))
    return float(tot)


def weighted_autocorrelator(sys: SpectralSystem, a, w_plus: WeightFunction, path: str = "eigen",
                            tol: float = PATH_TOL) -> float:
    """Connected value sum_j w_j Tr[rho_A(t_j) Pi] - Tr[Pi]/D."""
    p = _projector(a)
    trp = float(np.trace(p).real)
    avg = trp / sys.dim

    def eigen():
        b = to_eigenbasis(sys, p) - avg * np.eye(sys.dim)
        wt = fourier(w_plus, energy_differences(sys))
        return float(np.real(np.sum(wt * np.abs(b) ** 2)) / trp)

    def time():
        props = _Props(sys)
        tot = 0.0
        for t, wj in zip(w_plus.times, w_plus.weights):
            u = props(t)
            tot += wj * np.real(np.vdot((u @ p @ u.conj().T).conj().T, p))
        return float(tot / trp - avg)

    return _resolve("weighted_autocorrelator", path, eigen, time, tol)


# ---------------------------------------------------------------- echoes

def _echo_eigen(sys: SpectralSystem, kind: str, p: np.ndarray | None, t1: float, t2: float,
                mixed: bool) -> complex:
    d = sys.dim
    f1 = phases(sys, t1)
    if kind == "L_H":
        return complex(np.mean(f1))
    pe = to_eigenbasis(sys, p)
    trp = float(np.trace(p).real)
    if kind == "L_A":
        return complex(np.sum(f1 * np.real(np.diag(pe))) / (d if mixed else trp))
    f2 = phases(sys, t2)
    return complex(np.sum(f1[:, None] * np.abs(pe) ** 2 * f2.conj()[None, :]) / trp)


def _echo_time(props: _Props, kind: str, p: np.ndarray | None, t1: float, t2: float,
               mixed: bool) -> complex:
    u1 = props(t1)
    d = u1.shape[0]
    if kind == "L_H":
        return complex(np.trace(u1) / d)
    trp = float(np.trace(p).real)
    if kind == "L_A":
        return complex(np.sum(u1 * p.T) / (d if mixed else trp))
    u2 = props(t2)
    x = u1 @ p
    y = u2.conj().T @ p
    return complex(np.sum(x * y.T) / trp)


def echo(sys: SpectralSystem, kind: str, a=None, t1: float = 0.0, t2: float | None = None,
         mixed: bool = False, path: str = "eigen", tol: float = PATH_TOL) -> complex:
    """L_AA = Tr[U(t1) rho_A U(t2)^dag Pi], L_A = Tr[U(t1) rho_A], L_H = Tr[U(t1)]/D.

    With `mixed` L_A uses the maximally mixed reading (1/D) Tr[U(t1) Pi].
    """
    if kind not in ECHO_KINDS:
        raise InputError(f"unknown echo kind {kind!r}")
    if kind == "L_AA" and t2 is None:
        raise InputError("L_AA needs both t1 and t2")
    p = None if kind == "L_H" else _projector(a)
    tt2 = t1 if t2 is None else t2
    props = _Props(sys)
    return _resolve(f"echo[{kind}]", path,
                    lambda: _echo_eigen(sys, kind, p, t1, tt2, mixed),
                    lambda: _echo_time(props, kind, p, t1, tt2, mixed), tol)


def spectral_form_factor(sys: SpectralSystem, t: float, path: str = "eigen") -> float:
    return float(abs(echo(sys, "L_H", t1=t, path=path)) ** 2)


def echo_grid(sys: SpectralSystem, kind: str, a, times1, times2=None, mixed: bool = False,
              path: str = "eigen", tol: float = PATH_TOL) -> list[tuple[float, float, complex]]:
    """Rows (t1, t2, value) for CSV export."""
    rows = []
    t2s = times1 if times2 is None else times2
    for t1, t2 in zip(times1, t2s):
        v = echo(sys, kind, a, t1, t2 if kind == "L_AA" else None, mixed=mixed, path=path, tol=tol)
        rows.append((float(t1), float(t2), v))
    return rows


# ---------------------------------------------------------------- shell echoes

@dataclass(frozen=True)
class ChargeBlock:
    charge: np.ndarray
    s_weight: WeightFunction
    q_center: float = 0.0

    def __post_init__(self):
        q = as_matrix(self.charge)
        if np.max(np.abs(q - q.conj().T), initial=0.0) > 1e-10:
            raise InputError("charge must be Hermitian")
        q = np.array(q)
        q.setflags(write=False)
        object.__setattr__(self, "charge", q)


@dataclass(frozen=True)
class ShellEchoConfig:
    w_plus: WeightFunction
    v_plus: WeightFunction
    e_center: float
    thermal_value: float
    charge: ChargeBlock | None = None


def _shell_eigen_weights(sys: SpectralSystem, cfg: ShellEchoConfig) -> np.ndarray:
    e = sys.energies
    x = e[:, None] - e[None, :]
    ebar = (e[:, None] + e[None, :]) / 2
    return fourier(cfg.w_plus, x) * fourier(cfg.v_plus, ebar - cfg.e_center)


def _bracket(props: _Props, p: np.ndarray, trp: float, a_th: float, t1: float, t2: float) -> complex:
    d = p.shape[0]
    laa = _echo_time(props, "L_AA", p, t1, t2, False)
    la = _echo_time(props, "L_A", p, t1 - t2, t1 - t2, False)
    lh = _echo_time(props, "L_H", None, t1 - t2, t1 - t2, False)
    return laa - 2 * a_th * la + (a_th**2 * d / trp) * lh


def _shell_time_profile(props: _Props, p: np.ndarray, trp: float, cfg: ShellEchoConfig,
                        t: float) -> complex:
    """sum_k v_k e^{+i E_c s_k} bracket(t + s_k/2, t - s_k/2)."""
    tot = 0j
    for s, vk in zip(cfg.v_plus.times, cfg.v_plus.weights):
        ph = np.exp(1j * cfg.e_center * s)
        tot += vk * ph * _bracket(props, p, trp, cfg.thermal_value, t + s / 2, t - s / 2)
    return tot


def shell_echo_expectation(sys: SpectralSystem, a, cfg: ShellEchoConfig, path: str = "eigen",
                           tol: float = PATH_TOL) -> float:
    """Tr[gamma_shell (Pi - A_th)] from weighted echo brackets or the eigenbasis sum."""
    if cfg.charge is not None:
        return charged_shell_echo(sys, a, cfg, path=path, tol=tol)
    p = _projector(a)
    trp = float(np.trace(p).real)

    def eigen():
        b = to_eigenbasis(sys, p) - cfg.thermal_value * np.eye(sys.dim)
        return complex(np.sum(_shell_eigen_weights(sys, cfg) * np.abs(b) ** 2) / trp)

    def time():
        props = _Props(sys)
        tot = 0j
        for t, wj in zip(cfg.w_plus.times, cfg.w_plus.weights):
            tot += wj * _shell_time_profile(props, p, trp, cfg, t)
        return complex(tot)

    return float(np.real(_resolve("shell_echo", path, eigen, time, tol)))


def joint_eigenbasis(sys: SpectralSystem, q, rel_tol: float = 1e-10,
                     comm_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Basis diagonalizing H and Q together; returns (basis, q-values) aligned with sys.energies."""
    qm = as_matrix(q)
    if sys.source is not None and not sys.is_floquet:
        h = sys.source
        comm = np.max(np.abs(h @ qm - qm @ h), initial=0.0)
        if comm > comm_tol:
            raise InputError(f"charge does not commute with H (residual {comm:.3e})")
    v = np.array(sys.eigenbasis)
    qvals = np.empty(sys.dim)
    for es in eigenspace_partition(sys, rel_tol):
        idx = es.index_array
        blk = v[:, idx].conj().T @ qm @ v[:, idx]
        vals, rot = np.linalg.eigh((blk + blk.conj().T) / 2)
        v[:, idx] = v[:, idx] @ rot
        qvals[idx] = vals
    qe = v.conj().T @ qm @ v
    off = np.max(np.abs(qe - np.diag(np.diag(qe))), initial=0.0)
    if off > comm_tol * max(1.0, np.max(np.abs(qvals), initial=0.0)):
        raise InputError(f"charge not block-diagonal in the energy eigenbasis (residual {off:.3e})")
    return v, qvals


def charged_shell_echo(sys: SpectralSystem, a, cfg: ShellEchoConfig, path: str = "eigen",
                       tol: float = PATH_TOL) -> float:
    """Shell echo with e^{-iQ s} insertions and a charge window around q_center."""
    if cfg.charge is None:
        raise InputError("config has no charge block")
    p = _projector(a)
    trp = float(np.trace(p).real)
    qm = cfg.charge.charge
    ublk = cfg.charge.s_weight
    qc = cfg.charge.q_center

    def eigen():
        v, qv = joint_eigenbasis(sys, qm)
        b = v.conj().T @ p @ v - cfg.thermal_value * np.eye(sys.dim)
        qbar = (qv[:, None] + qv[None, :]) / 2
        wts = _shell_eigen_weights(sys, cfg) * fourier(ublk, qbar - qc)
        return complex(np.sum(wts * np.abs(b) ** 2) / trp)

    def time():
        props = _Props(sys)
        qcache: dict = {}

        def uq(s):
            if s not in qcache:
                qcache[s] = sla.expm(-1j * s * qm)
            return qcache[s]

        d = sys.dim
        a_th = cfg.thermal_value
        tot = 0j
        for t, wj in zip(cfg.w_plus.times, cfg.w_plus.weights):
            for s, vk in zip(cfg.v_plus.times, cfg.v_plus.weights):
                t1, t2 = t + s / 2, t - s / 2
                for r, ur in zip(ublk.times, ublk.weights):
                    s1, s2 = r / 2, -r / 2
                    f = props(t1) @ uq(s1)
                    g = props(t2) @ uq(s2)
                    laa = np.sum((f @ p) * (g.conj().T @ p).T) / trp
                    k = g.conj().T @ f
                    la = np.sum(k * p.T) / trp
                    lh = np.trace(k) / d
                    br = laa - 2 * a_th * la + (a_th**2 * d / trp) * lh
                    tot += wj * vk * ur * np.exp(1j * cfg.e_center * s) * np.exp(1j * qc * r) * br
        return complex(tot)

    return float(np.real(_resolve("charged_shell_echo", path, eigen, time, tol)))


def cloned_shell_echo(sys: SpectralSystem, a, cfg_l: ShellEchoConfig, cfg_r: ShellEchoConfig,
                      w_plus: WeightFunction, path: str = "eigen",
                      tol: float = CLONED_PATH_TOL) -> float:
    """Doubled-space shell echo built from single-copy brackets (never forms D^2 x D^2)."""
    if cfg_l.thermal_value != cfg_r.thermal_value:
        raise InputError("left and right configs must share the thermal value")
    p = _projector(a)
    trp = float(np.trace(p).real)

    def eigen():
        e = sys.energies
        b = to_eigenbasis(sys, p) - cfg_l.thermal_value * np.eye(sys.dim)
        amp = (np.abs(b) ** 2).ravel()
        x = (e[:, None] - e[None, :]).ravel()
        ebar = ((e[:, None] + e[None, :]) / 2).ravel()
        cl = amp * fourier(cfg_l.v_plus, ebar - cfg_l.e_center)
        cr = amp * fourier(cfg_r.v_plus, ebar - cfg_r.e_center)
        # sum_{p,q} w~(x_p + x_q) cl_p cr_q = sum_j w_j (sum_p cl_p e^{-i x_p t_j})(...)
        # is the time path; here we expand the pair-pair matrix directly in blocks
        tot = 0j
        step = max(1, 200_000 // max(1, x.size))
        for start in range(0, x.size, step):
            xs = x[start:start + step]
            m = fourier(w_plus, xs[:, None] + x[None, :])
            tot += cl[start:start + step] @ (m @ cr)
        return complex(tot / trp**2)

    def time():
        props = _Props(sys)
        tot = 0j
        for t, wj in zip(w_plus.times, w_plus.weights):
            tot += wj * _shell_time_profile(props, p, trp, cfg_l, t) * _shell_time_profile(props, p, trp, cfg_r, t)
        return complex(tot)

    return float(np.real(_resolve("cloned_shell_echo", path, eigen, time, tol)))


def cloned_weighted_deviation(sys: SpectralSystem, rho, a, w: WeightFunction, thermal_value: float,
                              path: str = "eigen", tol: float = 1e-10) -> float:
    """sum_j w_j (Tr[rho(t_j) A] - A_th)^2, also as a doubled-space weighted average of
    (A - A_th) x (A - A_th) in rho x rho."""
    r = as_matrix(rho)
    bm = as_matrix(a) - thermal_value * np.eye(sys.dim)

    def eigen():
        re, be = to_eigenbasis(sys, r), to_eigenbasis(sys, bm)
        c = (re * be.T).ravel()
        x = energy_differences(sys).ravel()
        keep = np.flatnonzero(c)
        c, x = c[keep], x[keep]
        tot = 0j
        step = max(1, 200_000 // max(1, x.size))
        for start in range(0, x.size, step):
            m = fourier(w, x[start:start + step, None] + x[None, :])
            tot += c[start:start + step] @ (m @ c)
        return complex(tot)

    def time():
        props = _Props(sys)
        tot = 0.0
        for t, wj in zip(w.times, w.weights):
            u = props(t)
            val = np.real(np.sum((u @ r @ u.conj().T) * bm.T))
            tot += wj * val**2
        return complex(tot)

    return float(np.real(_resolve("cloned_weighted_deviation", path, eigen, time, tol)))
