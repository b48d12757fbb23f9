"""One verifier per inequality: both sides evaluated on a concrete instance.

A report `holds` iff lhs <= rhs + 1e-10 * max(1, |rhs|). Constants such as W, w0, V, v0
are calibrated on a dense grid plus the actual level differences of the instance, so
they are exact for that instance rather than grid approximations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from . import metrics as met
from .errors import InputError
from .models import BrickworkCircuit, X, Y, Z, apply_two_site, even_bonds, odd_bonds
from .spectral import (
    BandSpec,
    EnergyShell,
    SpectralSystem,
    as_matrix,
    eigenspace_partition,
    energy_differences,
    microcanonical_value,
    to_eigenbasis,
)
from .weights import BandCalibration, WeightFunction, calibrate, fourier

SLACK = 1e-10


@dataclass
class VerificationReport:
    claim_id: str
    lhs: float
    rhs: float
    instance: dict = field(default_factory=dict)
    informative: bool = True
    notes: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)

    @property
    def holds(self) -> bool:
        return bool(self.lhs <= self.rhs + SLACK * max(1.0, abs(self.rhs)))

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_json(self) -> dict:
        return {"claim_id": self.claim_id, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "holds": self.holds, "informative": self.informative, "notes": self.notes,
                "extras": _jsonable(self.extras), "instance": _jsonable(self.instance)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _shell_diffs(sys: SpectralSystem, shell: EnergyShell, circle: bool) -> np.ndarray:
    idx = shell.index_array
    return np.abs(energy_differences(sys, circle)[np.ix_(idx, idx)]).ravel()


def _scan_limit(sys: SpectralSystem, diffs: np.ndarray, circle: bool) -> float:
    if circle:
        return float(np.pi)
    return float(max(np.max(diffs, initial=0.0), 1e-12))


def tail_calibration(w: WeightFunction, sys: SpectralSystem, shell: EnergyShell,
                     band: BandSpec) -> BandCalibration:
    """w0 = max |w~| over |dE| >= band, scanned to the shell's largest difference."""
    circle = band.uses_circle(sys)
    diffs = _shell_diffs(sys, shell, circle)
    return calibrate(w, band.delta_e, _scan_limit(sys, diffs, circle), include=diffs,
                     require_positive=False)


def band_calibration(w_plus: WeightFunction, sys: SpectralSystem, target_band: float,
                     shell: EnergyShell | None = None) -> BandCalibration:
    """W = min w~ on |dE| < band, including every actual level difference."""
    shell = shell or EnergyShell.full(sys.dim)
    circle = sys.is_floquet
    diffs = _shell_diffs(sys, shell, circle)
    return calibrate(w_plus, target_band, _scan_limit(sys, diffs, circle), include=diffs)


def _check_support(rho: np.ndarray, sys: SpectralSystem, shell: EnergyShell, tol: float = 1e-10) -> None:
    p = shell.projector(sys)
    res = np.max(np.abs(p @ rho @ p - rho), initial=0.0)
    if res > tol:
        raise InputError(f"state not supported in the shell (residual {res:.3e})")


def _require_projector(a) -> np.ndarray:
    m = as_matrix(a)
    if np.max(np.abs(m @ m - m), initial=0.0) > 1e-10:
        raise InputError("verifier needs a projector observable")
    return m


def _basis_in_shell(basis: met.BasisFamily, sys: SpectralSystem, shell: EnergyShell) -> None:
    p = shell.projector(sys)
    res = np.max(np.abs(p @ basis.vectors - basis.vectors), initial=0.0)
    if res > 1e-10:
        raise InputError(f"basis does not lie in the shell (residual {res:.3e})")
    if basis.size != shell.d:
        raise InputError(f"basis has {basis.size} states but the shell has dimension {shell.d}")


# ---------------------------------------------------------------- section 4

def verify_eigenspace_propositions(sys: SpectralSystem, a, rho, shell: EnergyShell,
                                   rel_tol: float = 1e-10, band: BandSpec | None = None,
                                   lam: float = 0.1) -> list[VerificationReport]:
    """Eigenstate (nondegenerate) and eigenspace bounds on the dephased average, plus the
    count of non-thermal eigenspaces against band_metric * d / lambda^2."""
    r = as_matrix(rho)
    _check_support(r, sys, shell)
    th = microcanonical_value(a, shell, sys)
    ita = dyn.infinite_time_average(sys, r, a, rel_tol)
    lhs = abs(ita - th)
    inst = {"shell": list(shell.indices), "thermal_value": th, "rel_tol": rel_tol}
    parts = [es for es in eigenspace_partition(sys, rel_tol) if set(es.indices) <= set(shell.indices)]
    nondeg = all(es.d == 1 for es in parts)
    devs = met.eigenstate_deviations(sys, a, shell)
    r41 = VerificationReport("prop-4.1", lhs, float(np.max(devs)), inst, informative=nondeg,
                             notes="" if nondeg else "spectrum degenerate; eigenstate form not applicable")
    eps = max(np.sqrt(met.eigenspace_metric(sys, a, es, th).value) for es in parts)
    r42 = VerificationReport("prop-4.2", lhs, float(eps), inst, extras={"n_eigenspaces": len(parts)})
    band = band or BandSpec(1e-6 * max(1.0, sys.spread))
    count, bound = met.eigenspace_violation_count(sys, a, shell, th, lam, band, rel_tol)
    rc = VerificationReport("prop-C.1", count, bound, {**inst, "lambda": lam, "delta_e": band.delta_e})
    return [r41, r42, rc]


# ---------------------------------------------------------------- section 5

def verify_thermalization_bound(sys: SpectralSystem, a, rho, shell: EnergyShell, band: BandSpec,
                                w: WeightFunction) -> VerificationReport:
    """|sum w Tr[rho(t) A] - <A>_d| vs (eps + w0 sqrt(<A>_d)) sqrt(d Tr rho^2)."""
    _require_projector(a)
    r = as_matrix(rho)
    _check_support(r, sys, shell)
    th = microcanonical_value(a, shell, sys)
    lhs = abs(dyn.weighted_average(sys, r, a, w) - th)
    eps = met.band_metric(sys, a, shell, band, th).epsilon
    cal = tail_calibration(w, sys, shell, band)
    purity = float(np.vdot(r, r).real)
    rhs = (eps + cal.w0 * np.sqrt(th)) * np.sqrt(shell.d * purity)
    return VerificationReport("thm-5.2", lhs, rhs,
                              {"shell": list(shell.indices), "delta_e": band.delta_e, "thermal_value": th},
                              extras={"epsilon": eps, "w0": cal.w0, "purity": purity})


def verify_basis_fraction(sys: SpectralSystem, a, basis: met.BasisFamily, shell: EnergyShell,
                          band: BandSpec, w: WeightFunction, lam: float) -> VerificationReport:
    """f_lambda over the basis vs (sqrt 2/lambda)(eps + w0 sqrt(<A>_d))."""
    _require_projector(a)
    _basis_in_shell(basis, sys, shell)
    th = microcanonical_value(a, shell, sys)
    f = met.nonthermal_fraction(sys, a, basis, w, th, lam)
    eps = met.band_metric(sys, a, shell, band, th).epsilon
    cal = tail_calibration(w, sys, shell, band)
    rhs = np.sqrt(2) / lam * (eps + cal.w0 * np.sqrt(th))
    return VerificationReport("thm-5.3", f, rhs,
                              {"shell": list(shell.indices), "delta_e": band.delta_e, "lambda": lam,
                               "basis": basis.label},
                              informative=rhs < 1, extras={"epsilon": eps, "w0": cal.w0})


def narrow_shell_within(sys: SpectralSystem, shell: EnergyShell, band: BandSpec,
                        center: float | None = None) -> EnergyShell:
    """Largest run of consecutive shell levels around `center` whose total spread is < delta_e."""
    e = sys.energies[shell.index_array]
    c = float(np.median(e)) if center is None else center
    k = int(np.argmin(np.abs(e - c)))
    lo = hi = k
    while True:
        grown = False
        if hi + 1 < len(e) and e[hi + 1] - e[lo] < band.delta_e:
            hi += 1
            grown = True
        if lo - 1 >= 0 and e[hi] - e[lo - 1] < band.delta_e:
            lo -= 1
            grown = True
        if not grown:
            break
    return EnergyShell(tuple(shell.index_array[lo:hi + 1]))


def verify_instantaneous_equilibrium(sys: SpectralSystem, a, shell: EnergyShell,
                                     narrow_shell: EnergyShell, band: BandSpec, lam: float,
                                     basis: met.BasisFamily | None = None,
                                     rho=None) -> list[VerificationReport]:
    """Instantaneous bounds for states in a shell whose pair gaps all lie inside the band.

    (1) |Tr[rho Pi] - <Pi>_d| vs eps sqrt(d Tr rho^2) for rho in the narrow shell;
    (2) f_lambda over a basis of the narrow shell vs (eps/lambda) sqrt(2 d / d_dE).
    """
    _require_projector(a)
    if not set(narrow_shell.indices) <= set(shell.indices):
        raise InputError("narrow shell must lie inside the shell")
    e = sys.energies[narrow_shell.index_array]
    gaps = energy_differences(sys, band.uses_circle(sys))[np.ix_(narrow_shell.index_array, narrow_shell.index_array)]
    if np.max(np.abs(gaps), initial=0.0) >= band.delta_e:
        raise InputError("narrow shell has level differences outside the band")
    th = microcanonical_value(a, shell, sys)
    eps = met.band_metric(sys, a, shell, band, th).epsilon
    inst = {"shell": list(shell.indices), "narrow_shell": list(narrow_shell.indices),
            "delta_e": band.delta_e, "lambda": lam, "narrow_spread": float(e[-1] - e[0])}
    out = []
    if rho is not None:
        r = as_matrix(rho)
        _check_support(r, sys, narrow_shell)
        lhs = abs(float(np.real(np.sum(r * as_matrix(a).T))) - th)
        rhs = eps * np.sqrt(shell.d * float(np.vdot(r, r).real))
        out.append(VerificationReport("prop-5.4a", lhs, rhs, inst, extras={"epsilon": eps}))
    basis = basis or met.BasisFamily.eigenbasis(sys, narrow_shell)
    _basis_in_shell(basis, sys, narrow_shell)
    diag = np.real(np.einsum("nk,nm,mk->k", basis.vectors.conj(), as_matrix(a), basis.vectors))
    f = float(np.mean(np.abs(diag - th) >= lam))
    rhs = eps / lam * np.sqrt(2 * shell.d / narrow_shell.d)
    out.append(VerificationReport("prop-5.4b", f, rhs, inst, informative=rhs < 1, extras={"epsilon": eps}))
    return out


# ---------------------------------------------------------------- section 6

def verify_autocorr_to_band(sys: SpectralSystem, a, w_plus: WeightFunction,
                            target_band: float) -> VerificationReport:
    """(1/D) band metric at the global thermal value vs Tr[Pi] eps_A / (W D)."""
    p = _require_projector(a)
    if not w_plus.is_cp:
        raise InputError("autocorrelator bounds need a completely positive weight")
    cal = band_calibration(w_plus, sys, target_band)
    trp = float(np.trace(p).real)
    d = sys.dim
    eps_a = abs(dyn.weighted_autocorrelator(sys, p, w_plus))
    lhs = met.band_metric(sys, p, EnergyShell.full(d), BandSpec(target_band), trp / d).value
    rhs = trp * eps_a / (cal.W * d)
    return VerificationReport("prop-6.1", lhs, rhs, {"delta_e_w": target_band, "trace_pi": trp, "D": d},
                              extras={"W": cal.W, "eps_A": eps_a})


def verify_bypass_chain(sys: SpectralSystem, a, basis: met.BasisFamily, w_plus: WeightFunction,
                        w: WeightFunction, lam: float, target_band: float) -> list[VerificationReport]:
    """Bounds obtained from a measured autocorrelator alone.

    `rhs` is the bound as stated for each claim. `extras` carries the bound obtained by
    composing the band bound with the thermalization theorems, which keeps a square root
    on eps_A / W, and its verdict. The two differ when eps_A is not small.
    """
    p = _require_projector(a)
    if not w_plus.is_cp:
        raise InputError("autocorrelator bounds need a completely positive weight")
    d = sys.dim
    trp = float(np.trace(p).real)
    g = trp / d
    full = EnergyShell.full(d)
    cal_w = band_calibration(w_plus, sys, target_band)
    cal_tail = tail_calibration(w, sys, full, BandSpec(target_band))
    eps_a = abs(dyn.weighted_autocorrelator(sys, p, w_plus))
    W, w0 = cal_w.W, cal_tail.w0
    inst = {"delta_e_w": target_band, "lambda": lam, "trace_pi": trp, "D": d, "basis": basis.label}
    ex = {"W": W, "w0": w0, "eps_A": eps_a}

    f = met.nonthermal_fraction(sys, p, basis, w, g, lam)
    printed_62 = np.sqrt(2 * g) / lam * (w0 + eps_a / W * np.sqrt(g))
    composed_62 = np.sqrt(2 * g) / lam * (w0 + np.sqrt(eps_a / W))
    r62 = VerificationReport("cor-6.2", f, printed_62, inst, informative=printed_62 < 1,
                             extras={**ex, "rhs_composed": composed_62,
                                     "holds_composed": bool(f <= composed_62 + SLACK * max(1, composed_62))})

    lhs63 = abs(dyn.weighted_autocorrelator(sys, p, w))
    printed_63 = w0 + eps_a / W * np.sqrt(g)
    composed_63 = w0 + np.sqrt(eps_a / W)
    r63 = VerificationReport("cor-6.3", lhs63, printed_63, inst,
                             extras={**ex, "rhs_composed": composed_63,
                                     "holds_composed": bool(lhs63 <= composed_63 + SLACK * max(1, composed_63))})
    return [r62, r63]


def verify_bulky_reverse(sys: SpectralSystem, a, w: WeightFunction, lam: float,
                         basis: met.BasisFamily | None = None) -> VerificationReport:
    """|autocorrelator| vs (D/Tr Pi) f_lambda[B_A] (1 - lambda) + lambda over an eigenbasis of Pi."""
    p = _require_projector(a)
    basis = basis or met.BasisFamily.of_observable(p)
    pb = basis.vectors.conj().T @ p @ basis.vectors
    if np.max(np.abs(pb - np.diag(np.diag(pb))), initial=0.0) > 1e-9:
        raise InputError("basis must diagonalize the projector")
    d = sys.dim
    trp = float(np.trace(p).real)
    f = met.nonthermal_fraction(sys, p, basis, w, trp / d, lam)
    lhs = abs(dyn.weighted_autocorrelator(sys, p, w))
    rhs = d / trp * f * (1 - lam) + lam
    return VerificationReport("bulky-reverse", lhs, rhs, {"lambda": lam, "trace_pi": trp, "D": d},
                              informative=rhs < 1, extras={"f_lambda": f},
                              notes="" if rhs < 1 else "bound >= 1: projector not bulky enough")


# ---------------------------------------------------------------- section 7

def shell_v_calibration(v_plus: WeightFunction, sys: SpectralSystem, shell: EnergyShell,
                        e_center: float, n_grid: int = 2001) -> float:
    """V = min Re v~(E - E_c) over the closed interval spanned by the shell and all pair midpoints."""
    e = sys.energies[shell.index_array]
    grid = np.linspace(e[0], e[-1], n_grid)
    mids = ((e[:, None] + e[None, :]) / 2).ravel()
    vals = fourier(v_plus, np.concatenate([grid, mids, e]) - e_center).real
    return float(np.min(vals))


def verify_shell_echo_theorems(sys: SpectralSystem, a, cfg: dyn.ShellEchoConfig, shell_v: EnergyShell,
                               band: BandSpec, energy_set: tuple[float, float] | None = None,
                               v_nc: WeightFunction | None = None, w_nc: WeightFunction | None = None,
                               band_72: BandSpec | None = None) -> list[VerificationReport]:
    """Echo -> shell band metric, and shell band metric -> echo.

    For the first claim `shell_v` must lie in the interval where v~ >= V and `band` within
    the W-band of cfg.w_plus. For the second, `energy_set` = [lo, hi] defines the shell of
    all levels in it; v0 is max |v~(E - E_c)| over E outside [lo + dE, hi - dE] within the
    spectrum and w0 is the tail of w beyond dE.
    """
    p = _require_projector(a)
    trp = float(np.trace(p).real)
    out = []

    th = microcanonical_value(p, shell_v, sys)
    cfg1 = dyn.ShellEchoConfig(cfg.w_plus, cfg.v_plus, cfg.e_center, th)
    eps_a = abs(dyn.shell_echo_expectation(sys, p, cfg1))
    cal_w = band_calibration(cfg.w_plus, sys, band.delta_e)
    V = shell_v_calibration(cfg.v_plus, sys, shell_v, cfg.e_center)
    if V <= 0:
        raise InputError(f"v~ is not positive over the shell (V = {V:.3e})")
    lhs = met.band_metric(sys, p, shell_v, band, th).value
    rhs = trp * eps_a / (cal_w.W * V * shell_v.d)
    out.append(VerificationReport("thm-7.1", lhs, rhs,
                                  {"shell": list(shell_v.indices), "delta_e": band.delta_e,
                                   "e_center": cfg.e_center, "thermal_value": th},
                                  extras={"W": cal_w.W, "V": V, "eps_A": eps_a}))

    if energy_set is not None:
        lo, hi = energy_set
        b72 = band_72 or band
        de = b72.delta_e
        shell = EnergyShell.window(sys, lo, hi)
        th2 = microcanonical_value(p, shell, sys)
        v = v_nc or cfg.v_plus
        w = w_nc or cfg.w_plus
        cfg2 = dyn.ShellEchoConfig(w, v, cfg.e_center, th2)
        echo_val = abs(dyn.shell_echo_expectation(sys, p, cfg2))
        eps2 = met.band_metric(sys, p, shell, b72, th2).value
        e = sys.energies
        mids = ((e[:, None] + e[None, :]) / 2).ravel()
        scan = np.concatenate([np.linspace(e[0], e[-1], 4001), mids])
        outside = (scan < lo + de) | (scan > hi - de)
        v0 = float(np.max(np.abs(fourier(v, scan[outside] - cfg.e_center)), initial=0.0))
        cal_t = tail_calibration(w, sys, EnergyShell.full(sys.dim), b72)
        w0 = cal_t.w0
        rhs2 = shell.d / trp * eps2 + v0 + v0 * w0 + w0
        bvec = to_eigenbasis(sys, p) - th2 * np.eye(sys.dim)
        norm = float(np.sum(np.abs(bvec) ** 2) / trp)
        out.append(VerificationReport("thm-7.2", echo_val, rhs2,
                                      {"energy_set": [lo, hi], "delta_e": de, "e_center": cfg.e_center,
                                       "d": shell.d, "thermal_value": th2},
                                      extras={"epsilon_sq": eps2, "v0": v0, "w0": w0,
                                              "total_weight": norm}))
    return out


def verify_cloned_echo_bound(sys: SpectralSystem, a, cfg_l: dyn.ShellEchoConfig, cfg_r: dyn.ShellEchoConfig,
                             w_plus: WeightFunction, shell_v: EnergyShell, band: BandSpec) -> VerificationReport:
    """Cloned shell echo -> cloned band metric: metric < (Tr Pi)^2 eps_A / (W V_L V_R d^2)."""
    p = _require_projector(a)
    trp = float(np.trace(p).real)
    th = microcanonical_value(p, shell_v, sys)
    cl = dyn.ShellEchoConfig(cfg_l.w_plus, cfg_l.v_plus, cfg_l.e_center, th)
    cr = dyn.ShellEchoConfig(cfg_r.w_plus, cfg_r.v_plus, cfg_r.e_center, th)
    eps_a = abs(dyn.cloned_shell_echo(sys, p, cl, cr, w_plus))
    idx = shell_v.index_array
    x = energy_differences(sys)[np.ix_(idx, idx)].ravel()
    spread = float(np.max(np.abs(x), initial=0.0))
    cal = calibrate(w_plus, band.delta_e, max(2 * spread, band.delta_e), require_positive=True,
                    include=_pair_sums_sample(x, band.delta_e))
    vl = shell_v_calibration(cl.v_plus, sys, shell_v, cl.e_center)
    vr = shell_v_calibration(cr.v_plus, sys, shell_v, cr.e_center)
    lhs = met.cloned_band_metric(sys, p, shell_v, band, th).value
    rhs = trp**2 * eps_a / (cal.W * vl * vr * shell_v.d**2)
    return VerificationReport("cloned-7.1", lhs, rhs, {"shell": list(shell_v.indices), "delta_e": band.delta_e},
                              extras={"W": cal.W, "V_L": vl, "V_R": vr, "eps_A": eps_a})


def _pair_sums_sample(x: np.ndarray, delta_e: float) -> np.ndarray:
    """All pair sums x_p + x_q with |x_p + x_q| < delta_e (the ones that matter for W)."""
    xs = np.sort(x)
    out = []
    for xp in xs:
        lo = np.searchsorted(xs, -delta_e - xp, side="right")
        hi = np.searchsorted(xs, delta_e - xp, side="left")
        out.append(xp + xs[lo:hi])
    return np.abs(np.concatenate(out)) if out else np.empty(0)


# ---------------------------------------------------------------- section 8

def cloned_tail_w0(w: WeightFunction, sys: SpectralSystem, shell: EnergyShell, band: BandSpec) -> float:
    """Rigorous max |w~| over |dE| >= band for cloned differences (up to twice the shell spread).

    The grid maximum is padded by half a step times the Lipschitz constant sum_j w_j |t_j|,
    which bounds |w~| between grid points without enumerating d^4 differences.
    """
    idx = shell.index_array
    e = sys.energies[idx]
    top = max(2 * float(e[-1] - e[0]), band.delta_e)
    cal = calibrate(w, band.delta_e, top, require_positive=False)
    lip = float(np.sum(w.weights * np.abs(w.times)))
    return min(1.0, cal.w0 + 0.5 * cal.grid_step * lip)


def basis_trajectories(sys: SpectralSystem, a, basis: met.BasisFamily, w: WeightFunction,
                       thermal_value: float) -> np.ndarray:
    """dev[k, j] = <k(t_j)|A|k(t_j)> - thermal_value."""
    ae = to_eigenbasis(sys, a)
    c = sys.eigenbasis.conj().T @ basis.vectors
    out = np.empty((basis.size, w.times.size))
    for j, t in enumerate(w.times):
        ct = np.exp(-1j * sys.energies * t)[:, None] * c
        out[:, j] = np.real(np.einsum("nk,nm,mk->k", ct.conj(), ae, ct))
    return out - thermal_value


def verify_cloned_thermalization_bound(sys: SpectralSystem, a, rho, shell: EnergyShell, band: BandSpec,
                                       w: WeightFunction) -> VerificationReport:
    """sum w (Tr[rho(t) Pi] - <Pi>_d)^2 vs (eps + w0 <Pi>_d) d Tr rho^2 with eps from the cloned metric."""
    p = _require_projector(a)
    r = as_matrix(rho)
    _check_support(r, sys, shell)
    th = microcanonical_value(p, shell, sys)
    lhs = dyn.cloned_weighted_deviation(sys, r, p, w, th, path="time")
    eps = met.cloned_band_metric(sys, p, shell, band, th).epsilon
    w0 = cloned_tail_w0(w, sys, shell, band)
    purity = float(np.vdot(r, r).real)
    rhs = (eps + w0 * th) * shell.d * purity
    return VerificationReport("cloned-thm-5.2", lhs, rhs, {"shell": list(shell.indices), "delta_e": band.delta_e},
                              extras={"epsilon": eps, "w0": w0, "purity": purity})


def verify_cloned_corollaries(sys: SpectralSystem, a, basis: met.BasisFamily, shell: EnergyShell,
                              band: BandSpec, w: WeightFunction, big_lambda: float, probs,
                              kappa: float, lam: float) -> list[VerificationReport]:
    """Pair-correlation fraction F_Lambda, and ensemble equilibrium at non-exceptional times."""
    p = _require_projector(a)
    _basis_in_shell(basis, sys, shell)
    th = microcanonical_value(p, shell, sys)
    eps = met.cloned_band_metric(sys, p, shell, band, th).epsilon
    w0 = cloned_tail_w0(w, sys, shell, band)
    dev = basis_trajectories(sys, p, basis, w, th)
    lam_kl = (dev * w.weights[None, :]) @ dev.T
    frac = float(np.mean(np.abs(lam_kl) >= big_lambda))
    core = eps + w0 * th
    inst = {"shell": list(shell.indices), "delta_e": band.delta_e, "Lambda": big_lambda,
            "kappa": kappa, "lambda": lam}
    r81 = VerificationReport("cor-8.1", frac, np.sqrt(2) / big_lambda * core, inst,
                             informative=np.sqrt(2) / big_lambda * core < 1, extras={"epsilon": eps, "w0": w0})

    pk = np.asarray(probs, dtype=float)
    if pk.size != basis.size or np.any(pk < 0) or abs(pk.sum() - 1) > 1e-12:
        raise InputError("ensemble probabilities must be a distribution over the basis")
    d = shell.d
    purity = float(np.sum(pk**2))
    mu = 1.0 / (d * purity)
    traj = pk @ dev
    threshold = core / kappa * d * purity
    exceptional = traj**2 >= threshold
    mass = float(np.sum(w.weights[exceptional]))
    r82 = VerificationReport("cor-8.2", mass, kappa, inst,
                             extras={"mu": mu, "mu_required": core / (kappa * lam**2),
                                     "max_dev_regular": float(np.max(np.abs(traj[~exceptional]), initial=0.0)),
                                     "equilibrium_guaranteed": bool(mu >= core / (kappa * lam**2))})
    out = [r81, r82]
    if mu >= core / (kappa * lam**2):
        reg = float(np.max(np.abs(traj[~exceptional]), initial=0.0))
        out.append(VerificationReport("cor-8.2-equilibrium", reg, lam, inst, extras={"mu": mu}))
    return out


# ---------------------------------------------------------------- appendix A

def gram_schmidt_charges(charges) -> tuple[list[np.ndarray], float]:
    """Trace-orthogonalize the charges; returns them and the max Frobenius adjustment."""
    out: list[np.ndarray] = []
    adj = 0.0
    for q in charges:
        m = np.array(as_matrix(q))
        orig = m.copy()
        for o in out:
            m = m - np.vdot(o, m) / np.vdot(o, o) * o
        m = (m + m.conj().T) / 2
        if np.linalg.norm(m) < 1e-12:
            raise InputError("charges are linearly dependent")
        adj = max(adj, float(np.linalg.norm(m - orig)))
        out.append(m)
    return out, adj


def mazur_suzuki(sys: SpectralSystem, a, charges, w_plus: WeightFunction, w2_plus: WeightFunction,
                 target_band: float, orth_tol: float = 1e-8) -> VerificationReport:
    """Finite-time lower bound on a CP-averaged autocorrelator by approximately conserved charges.

    Reported as bound <= autocorrelator: lhs = W sum_k | |Tr A Q_k| - s_k |^2 / Tr Q_k^2 with
    s_k = sqrt(dQ_k^2 / (1 - w20) Tr A^2), rhs = sum_j w_j Tr[A(t_j) A]. `extras` also has
    the clamped bound using max(0, |Tr A Q_k| - s_k), the form the reverse triangle
    inequality supports when s_k exceeds the overlap.
    """
    am = as_matrix(a)
    if not (w_plus.is_cp and w2_plus.is_cp):
        raise InputError("Mazur-Suzuki bound needs completely positive weights")
    qs = [as_matrix(q) for q in charges]
    for i in range(len(qs)):
        for j in range(i):
            ov = abs(np.vdot(qs[i], qs[j]))
            scale = np.sqrt(np.vdot(qs[i], qs[i]).real * np.vdot(qs[j], qs[j]).real)
            if ov > orth_tol * scale:
                raise InputError(f"charges {j},{i} not orthogonal (overlap {ov / scale:.3e})")
    x = energy_differences(sys)
    ae = to_eigenbasis(sys, am)
    autocorr = float(np.real(np.sum(fourier(w_plus, x) * np.abs(ae) ** 2)))
    cal = band_calibration(w_plus, sys, target_band)
    cal2 = tail_calibration(w2_plus, sys, EnergyShell.full(sys.dim), BandSpec(target_band))
    w20 = cal2.w0
    if w20 >= 1:
        raise InputError("w2_plus does not suppress the tail (w20 >= 1)")
    tra2 = float(np.real(np.vdot(am, am)))
    w2t = fourier(w2_plus, x)
    per = []
    total = 0.0
    total_clamped = 0.0
    for q in qs:
        qe = to_eigenbasis(sys, q)
        trq2 = float(np.real(np.vdot(q, q)))
        dq2 = abs(float(np.real(np.sum((1 - w2t) * np.abs(qe) ** 2))))
        s = np.sqrt(dq2 / (1 - w20) * tra2)
        ov = abs(float(np.real(np.trace(am @ q))))
        total += (ov - s) ** 2 / trq2
        total_clamped += max(0.0, ov - s) ** 2 / trq2
        per.append({"dQ2": dq2, "overlap": ov, "s": s, "trQ2": trq2, "clamped": bool(ov < s)})
    bound = cal.W * total
    bound_c = cal.W * total_clamped
    return VerificationReport("mazur-suzuki", bound, autocorr, {"delta_e_w": target_band, "n_charges": len(qs)},
                              extras={"W": cal.W, "w20": w20, "charges": per, "lhs_clamped": bound_c,
                                      "holds_clamped": bool(bound_c <= autocorr + SLACK * max(1, autocorr)),
                                      "ratio": autocorr / bound if bound > 0 else float("inf")})


def dq2_time_domain(sys: SpectralSystem, q, w2_plus: WeightFunction) -> float:
    """|Tr Q^2 - sum_j w_j Tr[Q(t_j) Q]| with Heisenberg-picture propagators."""
    from .spectral import propagator

    qm = as_matrix(q)
    tot = 0.0
    for t, wj in zip(w2_plus.times, w2_plus.weights):
        u = propagator(sys, t)
        tot += wj * np.real(np.sum((u.conj().T @ qm @ u) * qm.T))
    return abs(float(np.real(np.vdot(qm, qm))) - tot)


# ---------------------------------------------------------------- appendix B

def _apply_layer(u: np.ndarray, circ: BrickworkCircuit, parity: str, inverse: bool) -> np.ndarray:
    n = circ.n_qubits
    gates, bonds = (circ.even_gates, even_bonds(n)) if parity == "even" else (circ.odd_gates, odd_bonds(n))
    for g, (i, j) in zip(gates, bonds):
        u = apply_two_site(u, g.conj().T if inverse else g, i, j, n)
    return u


def _pair_gram(u: np.ndarray, out_site: int, in_site: int, n: int) -> np.ndarray:
    """T[a, b, c, d] = sum over all other indices of conj(U[a.., b..]) U[c.., d..], with a, c on
    the output leg of `out_site` and b, d on the input leg of `in_site`."""
    t = u.reshape((2,) * (2 * n))
    v = np.moveaxis(t, (out_site, n + in_site), (0, 1)).reshape(4, -1)
    return (v.conj() @ v.T).reshape(2, 2, 2, 2)


def _gram_correlator(g: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    """Tr[U^dag a U b] from the pair Gram tensor; a acts on the output site, b on the input site."""
    return complex(np.einsum("abcd,ac,db->", g, a, b))


def _layer_unitaries(circ: BrickworkCircuit, max_layers: int):
    """Yield (tau, U(tau)) on the layer clock for tau = 1..max_layers, then -1..-max_layers.

    U(tau) applies even, odd, even, ... layers; U(-tau) undoes the layers preceding t = 0
    (odd, even, ...).
    """
    dim = circ.dim
    for sign in (+1, -1):
        u = np.eye(dim, dtype=complex)
        for k in range(1, max_layers + 1):
            if sign > 0:
                u = _apply_layer(u, circ, "even" if k % 2 == 1 else "odd", False)
            else:
                # U(-k) = L_{-k+1}^dag U(-k+1): left-multiplying keeps the earliest layer last
                u = _apply_layer(u, circ, "odd" if k % 2 == 1 else "even", True)
            yield sign * k, u


def layer_correlators(circ: BrickworkCircuit, max_layers: int) -> dict:
    """|Tr[U(tau)^dag a U(tau) b]|/D on the layer clock for |tau| <= max_layers.

    Returns per-tau maxima over sites and Paulis for same-site pairs, and for comoving
    pairs b at site s, a at site s +- tau.
    """
    n = circ.n_qubits
    dim = circ.dim
    paulis = (X, Y, Z)
    res = {"tau": [], "same_site": [], "comoving_right": [], "comoving_left": []}
    for tau, u in _layer_unitaries(circ, max_layers):
        k = abs(tau)
        same, right, left = 0.0, 0.0, 0.0
        for s in range(n):
            g = _pair_gram(u, s, s, n)
            same = max(same, max(abs(_gram_correlator(g, op, op)) for op in paulis) / dim)
            for tgt, key in (((s + k) % n, "r"), ((s - k) % n, "l")):
                g = _pair_gram(u, tgt, s, n)
                val = max(abs(_gram_correlator(g, op, op2)) for op in paulis for op2 in paulis) / dim
                if key == "r":
                    right = max(right, val)
                else:
                    left = max(left, val)
        res["tau"].append(tau)
        res["same_site"].append(same)
        res["comoving_right"].append(right)
        res["comoving_left"].append(left)
    return res


def dual_unitary_check(circ: BrickworkCircuit, site: int | None = None, weight: WeightFunction | None = None,
                       require_dual: bool = True, comoving: bool = False) -> VerificationReport:
    """max over 0 < |tau| < N of |Tr[a(tau) a]|/D for traceless single-site a (layer clock)."""
    if require_dual and not circ.all_dual:
        raise InputError("circuit contains a gate that is not dual-unitary")
    n = circ.n_qubits
    cor = _same_site_correlators(circ, n - 1, site)
    lhs = max(cor.values())
    extras = {"per_tau": {str(k): v for k, v in sorted(cor.items())}, "all_dual": circ.all_dual}
    if weight is not None:
        tw = np.asarray(weight.times)
        if np.any(tw == 0) or np.any(np.abs(tw) >= n) or np.any(tw != np.round(tw)):
            raise InputError("weight atoms must be integers with 0 < |t| < N")
        zz = _same_site_correlators(circ, n - 1, 0 if site is None else site, paulis=(Z,), signed=True)
        weighted = float(sum(wj * zz[int(t)] for t, wj in zip(tw, weight.weights))) / 2
        extras["weighted_connected_autocorrelator"] = weighted
        lhs = max(lhs, abs(weighted))
    if comoving:
        extras["comoving"] = layer_correlators(circ, n - 1)
    return VerificationReport("dual-unitary", lhs, 1e-9, {"n_qubits": n, "site": site, "clock": "layer"},
                              extras=extras)


def _same_site_correlators(circ: BrickworkCircuit, max_layers: int, site: int | None,
                           paulis=(X, Y, Z), signed: bool = False) -> dict:
    n = circ.n_qubits
    sites = range(n) if site is None else [site]
    out: dict = {}
    for tau, u in _layer_unitaries(circ, max_layers):
        vals = []
        for s in sites:
            g = _pair_gram(u, s, s, n)
            vals += [_gram_correlator(g, op, op) / circ.dim for op in paulis]
        out[tau] = float(np.real(vals[0])) if signed else float(max(abs(v) for v in vals))
    return out
