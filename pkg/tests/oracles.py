"""Independent high-precision reference values.

Ascending power series for J0, J1 and Y1, evaluated in mpmath arithmetic at
50 digits, and their roots by secant iteration.  Nothing here touches the
package under test.  ``freeze`` writes ``goldens.json``; tests only read it.
"""
from __future__ import annotations

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50
GOLDENS = Path(__file__).with_name("goldens.json")


def _series(x, order, terms=200):
    """sum_k (-1)^k (x/2)^(2k+order) / (k! (k+order)!), plus the digamma-weighted twin."""
    x = mp.mpf(x)
    h = x / 2
    s = t = mp.mpf(0)
    term = h ** order / mp.factorial(order)
    for k in range(terms):
        s += term
        t += term * (mp.digamma(k + 1) + mp.digamma(k + order + 1))
        term *= -h * h / ((k + 1) * (k + 1 + order))
        if abs(term) < mp.mpf(10) ** (-60) * max(abs(s), 1):
            break
    return s, t


def j0(x):
    return _series(x, 0)[0]


def j1(x):
    return _series(x, 1)[0]


def y1(x):
    x = mp.mpf(x)
    s, t = _series(x, 1)
    return 2 / mp.pi * s * mp.log(x / 2) - 2 / (mp.pi * x) - t / mp.pi


def secant_root(f, a, b, tol=mp.mpf(10) ** (-40), maxiter=200):
    fa, fb = f(a), f(b)
    if fa * fb > 0:
        raise ValueError("root not bracketed")
    # bisection down to a small bracket, then secant
    for _ in range(60):
        m = (a + b) / 2
        fm = f(m)
        if fa * fm <= 0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    for _ in range(maxiter):
        c = b - fb * (b - a) / (fb - fa)
        a, fa, b, fb = b, fb, c, f(c)
        if abs(b - a) < tol:
            return b
    raise RuntimeError("secant did not converge")


def cross_product(k):
    return j1(k) * y1(2 * k) - j1(2 * k) * y1(k)


def compute():
    j01 = secant_root(j0, mp.mpf(2), mp.mpf(3))
    j11 = secant_root(j1, mp.mpf(3), mp.mpf(4.5))
    k = secant_root(cross_product, mp.mpf(2.5), mp.mpf(3.5))
    return {
        "j0_1": j01,
        "j1_1": j11,
        "wedge_mu": j11 ** 2,
        "wedge_s1": j01 / j11,
        "trapezoid_k": k,
        "trapezoid_mu": k ** 2,
        "j0_at_0.1": j0(mp.mpf("0.1")),
    }


def freeze(path=GOLDENS):
    vals = {k: mp.nstr(v, 30) for k, v in compute().items()}
    path.write_text(json.dumps(vals, indent=2, sort_keys=True) + "\n")


def load():
    return {k: float(v) for k, v in json.loads(GOLDENS.read_text()).items()}


if __name__ == "__main__":
    freeze()
