"""Regenerate tests/oracle_values.py with an independent mpmath evaluation.

Uses 40-digit arithmetic: mpmath's Hermitian eigensolver and explicit sums over time
atoms, sharing nothing with the package except the seeded input matrices.
"""
import mpmath as mp
import numpy as np

from thermalab.models import random_hamiltonian, random_projector

mp.mp.dps = 40


def to_mp(a):
    return mp.matrix([[mp.mpc(complex(x)) for x in row] for row in np.asarray(a)])


def expm_h(e, v, t):
    n = len(e)
    d = mp.diag([mp.exp(-1j * e[k] * t) for k in range(n)])
    return v * d * v.H


def main():
    h = random_hamiltonian("gue", 8, 0)
    p = random_projector(8, 2, 1).matrix
    H, P = to_mp(h), to_mp(p)
    e, v = mp.eighe(H)
    e = [mp.re(x) for x in e]
    trp = mp.re(sum(P[i, i] for i in range(8)))
    # Fejer n=8, spacing 0.5
    n, s = 8, mp.mpf("0.5")
    auto = mp.mpf(0)
    for j in range(-(n - 1), n):
        wj = mp.mpf(n - abs(j)) / n**2
        u = expm_h(e, v, j * s)
        m = u * P * u.H * P
        auto += wj * mp.re(sum(m[i, i] for i in range(8)))
    auto = auto / trp - trp / 8
    u1, u2 = expm_h(e, v, mp.mpf("0.7")), expm_h(e, v, mp.mpf("-0.3"))
    m = u1 * P * u2.H * P
    laa = sum(m[i, i] for i in range(8)) / trp
    u = expm_h(e, v, mp.mpf("1.3"))
    lh = sum(u[i, i] for i in range(8)) / 8
    lines = [
        '"""Frozen values from tests/make_oracles.py (40-digit mpmath evaluation)."""',
        "",
        "# GUE D=8 seed 0, random projector rank 2 seed 1, Fejer n=8 spacing 0.5",
        f"AUTOCORR_GUE8 = {mp.nstr(auto, 20)}",
        f"L_AA_GUE8 = complex({mp.nstr(mp.re(laa), 20)}, {mp.nstr(mp.im(laa), 20)})",
        f"L_H_GUE8 = complex({mp.nstr(mp.re(lh), 20)}, {mp.nstr(mp.im(lh), 20)})",
        f"ENERGIES_GUE8 = ({', '.join(mp.nstr(x, 20) for x in e)})",
        "",
    ]
    with open(__file__.replace("make_oracles.py", "oracle_values.py"), "w") as fh:
        fh.write("\n".join(lines))


if __name__ == "__main__":
    main()
