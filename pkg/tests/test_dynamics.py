import numpy as np
import pytest

from thermalab import dynamics as dyn
from thermalab.errors import InputError, PathDisagreement
from thermalab.models import block_projectors, charged_model, haar_unitary, random_hamiltonian, random_projector
from thermalab.spectral import DensityOperator, SpectralSystem, diagonalize
from thermalab.weights import cp_from_pointset, delta_weight, fejer_weight, fourier, generic_weight

from conftest import diag_system
from oracle_values import AUTOCORR_GUE8, L_AA_GUE8, L_H_GUE8


def test_two_level_loschmidt_vanishes():
    sys = diag_system([0.0, np.pi])
    assert abs(dyn.echo(sys, "L_H", t1=1.0, path="both")) < 1e-15
    assert dyn.spectral_form_factor(sys, 1.0) < 1e-30


def test_frozen_oracles(gue8, proj8):
    assert dyn.weighted_autocorrelator(gue8, proj8, fejer_weight(8, 0.5), path="both") == pytest.approx(
        AUTOCORR_GUE8, abs=1e-12)
    assert abs(dyn.echo(gue8, "L_AA", proj8, 0.7, -0.3, path="both") - L_AA_GUE8) < 1e-12
    assert abs(dyn.echo(gue8, "L_H", t1=1.3, path="both") - L_H_GUE8) < 1e-12


def test_dual_path_all_quantities(gue8, proj8):
    w = fejer_weight(8, 0.4)
    psi = np.exp(1j * np.arange(8)) / np.sqrt(8)
    rho = DensityOperator.pure(psi).matrix
    dyn.weighted_average(gue8, rho, proj8, w, path="both", tol=1e-8)
    dyn.weighted_autocorrelator(gue8, proj8, w, path="both")
    for kind in dyn.ECHO_KINDS:
        for t1, t2 in [(0.0, 0.0), (1.2, -0.7), (-2.0, 3.5)]:
            dyn.echo(gue8, kind, None if kind == "L_H" else proj8, t1, t2, path="both")
    dyn.echo(gue8, "L_A", proj8, 0.9, mixed=True, path="both")
    cfg = dyn.ShellEchoConfig(w, fejer_weight(4, 0.8), 0.1, 0.25)
    dyn.shell_echo_expectation(gue8, proj8, cfg, path="both")
    dyn.cloned_shell_echo(gue8, proj8, cfg, cfg, fejer_weight(3, 0.5), path="both")
    dyn.cloned_weighted_deviation(gue8, rho, proj8, w, 0.25, path="both", tol=1e-7)


def test_floquet_dual_path():
    sys = diagonalize(haar_unitary(16, np.random.default_rng(3)), "floquet")
    p = random_projector(16, 4, 0).matrix
    dyn.weighted_autocorrelator(sys, p, fejer_weight(6, 1.0), path="both")
    for t in (-3, 0, 5):
        dyn.echo(sys, "L_AA", p, t, 2, path="both")
    with pytest.raises(InputError):
        dyn.echo(sys, "L_H", t1=0.5)


def test_disagreement_detected():
    good = diagonalize(random_hamiltonian("gue", 6, 1))
    other = random_hamiltonian("gue", 6, 2)
    broken = SpectralSystem(good.energies, good.eigenbasis, "hamiltonian", source=other)
    with pytest.raises(PathDisagreement):
        dyn.echo(broken, "L_H", t1=1.0, path="both")
    assert dyn.echo(broken, "L_H", t1=1.0, path="eigen") == dyn.echo(good, "L_H", t1=1.0)


def test_echo_at_zero_and_symmetry(gue8, proj8):
    assert dyn.echo(gue8, "L_AA", proj8, 0.0, 0.0) == pytest.approx(1.0)
    a = dyn.echo(gue8, "L_AA", proj8, 0.4, 1.1)
    b = dyn.echo(gue8, "L_AA", proj8, 1.1, 0.4)
    assert abs(a - b.conjugate()) < 1e-12


def test_non_projector_rejected(gue8):
    with pytest.raises(InputError):
        dyn.weighted_autocorrelator(gue8, 0.5 * np.eye(8), fejer_weight(2))
    with pytest.raises(InputError):
        dyn.echo(gue8, "L_X", np.eye(8))


def test_conserved_charge_does_not_decay():
    h, _ = charged_model(3, (4, 6, 6), 2)
    sys = diagonalize(h)
    p = block_projectors(3, (4, 6, 6), 2)[1]
    for w in (fejer_weight(8, 0.7), generic_weight([0.0, 13.0, 400.0])):
        assert dyn.weighted_autocorrelator(sys, p, w, path="both") == pytest.approx(1 - 6 / 16, abs=1e-10)


def test_charge_window_isolates_block():
    # H and Q diagonal, projector block-diagonal in the charge sectors
    e = np.array([0.0, 0.3, 0.7, 1.1, 1.6, 2.0])
    q = np.array([1.0, 1, 2, 2, 3, 3])
    h = np.diag(e).astype(complex)
    rng = np.random.default_rng(4)
    p = np.zeros((6, 6), dtype=complex)
    for lo in (0, 2, 4):
        u = haar_unitary(2, rng)[:, :1]
        p[lo:lo + 2, lo:lo + 2] = u @ u.conj().T
    sys = diagonalize(h)
    # u~(x) = (sin(pi x) / (4 sin(pi x / 4)))^2 vanishes at x = 1, 2, 3
    cfg = dyn.ShellEchoConfig(delta_weight(), delta_weight(), 0.0, 0.25,
                              dyn.ChargeBlock(np.diag(q).astype(complex), fejer_weight(4, np.pi / 2), 1.0))
    val = dyn.shell_echo_expectation(sys, p, cfg, path="both")
    b = p - 0.25 * np.eye(6)
    expect = np.sum(np.abs(b[:2, :2]) ** 2) / np.trace(p).real
    assert val == pytest.approx(expect, abs=1e-12)


def test_cloned_shell_echo_quadruple_oracle():
    d = 6
    sys = diagonalize(random_hamiltonian("gue", d, 9))
    p = random_projector(d, 2, 3).matrix
    w = cp_from_pointset([0.0, 0.6, 1.7])
    cl = dyn.ShellEchoConfig(w, fejer_weight(3, 0.9), -0.2, 0.3)
    cr = dyn.ShellEchoConfig(w, fejer_weight(2, 1.3), 0.4, 0.3)
    wp = fejer_weight(4, 0.5)
    e = sys.energies
    b = sys.eigenbasis.conj().T @ p @ sys.eigenbasis - 0.3 * np.eye(d)
    amp = np.abs(b) ** 2

    def ft(wf, x):
        return sum(wj * np.exp(-1j * x * tj) for tj, wj in wf.atoms)

    # cloned echoes weight each copy by its v window only; w_plus acts on the summed frequency
    val = dyn.cloned_shell_echo(sys, p, cl, cr, wp, path="both")
    tot_plain = 0j
    for n in range(d):
        for m in range(d):
            fl = ft(cl.v_plus, (e[n] + e[m]) / 2 - cl.e_center) * amp[n, m]
            for l in range(d):
                for k in range(d):
                    fr = ft(cr.v_plus, (e[l] + e[k]) / 2 - cr.e_center) * amp[l, k]
                    tot_plain += ft(wp, e[n] - e[m] + e[l] - e[k]) * fl * fr
    trp = np.trace(p).real
    assert val == pytest.approx(float(np.real(tot_plain)) / trp**2, abs=1e-12)


def test_cloned_weighted_deviation_direct():
    sys = diagonalize(random_hamiltonian("gue", 10, 4))
    p = random_projector(10, 3, 1).matrix
    psi = np.ones(10) / np.sqrt(10)
    rho = np.outer(psi, psi)
    w = fejer_weight(5, 0.6)
    direct = 0.0
    for t, wj in w.atoms:
        u = sys.eigenbasis @ np.diag(np.exp(-1j * sys.energies * t)) @ sys.eigenbasis.conj().T
        direct += wj * (np.trace(u @ rho @ u.conj().T @ p).real - 0.3) ** 2
    assert dyn.cloned_weighted_deviation(sys, rho, p, w, 0.3, path="both") == pytest.approx(direct, abs=1e-12)


def test_infinite_time_average_matches_long_window():
    sys = diagonalize(random_hamiltonian("gue", 6, 0))
    p = random_projector(6, 2, 0).matrix
    rho = random_projector(6, 1, 5).matrix
    inf = dyn.infinite_time_average(sys, rho, p)
    long = dyn.weighted_average(sys, rho, p, fejer_weight(4000, 1.3))
    assert long == pytest.approx(inf, abs=5e-3)


def test_echo_grid_rows(gue8, proj8):
    rows = dyn.echo_grid(gue8, "L_AA", proj8, [0.0, 0.5], [0.1, -0.2], path="both")
    assert [r[:2] for r in rows] == [(0.0, 0.1), (0.5, -0.2)]
