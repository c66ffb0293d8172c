"""Pure-Python Dormand-Prince 5(4) integrator for the flux system.

Integrates ``phi' = q / omega``, ``q' = -mu * omega * phi`` where
``q = omega * phi'``.  Mirrors ``_dopri.pyx`` line for line; keep the two in
sync.
"""
import math

import numpy as np

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525,
                          -1 / 40)

STATUS_END, STATUS_ZERO, STATUS_NONFINITE, STATUS_STEP, STATUS_MAXSTEPS = 0, 1, 2, 3, 4

SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 10.0


def _horner(breaks, coefs, x):
    m = len(coefs)
    k = 0
    while k < m - 1 and x >= breaks[k + 1]:
        k += 1
    row = coefs[k]
    out = row[-1]
    for j in range(len(row) - 2, -1, -1):
        out = out * x + row[j]
    return out


def integrate(breaks, coefs, mu, x0, phi0, flux0, x_end, rtol, atol, h_max,
              stop_at_zero, max_steps=1_000_000, omega=None):
    """Adaptive integration from ``x0`` to ``x_end``.

    Returns ``(xs, ys, ks, n_rejected, status)`` where ``ks[i]`` holds the
    seven stage derivatives of step ``i`` (for dense output).  ``omega``
    overrides the piecewise polynomial with a scalar callable.
    """
    if omega is None:
        breaks_l = [float(b) for b in breaks]
        coefs_l = [[float(c) for c in row] for row in coefs]

        def omega(x):
            return _horner(breaks_l, coefs_l, x)

        interior = breaks_l[1:-1]
    else:
        interior = []

    def rhs(x, p, q):
        w = omega(x)
        return q / w, -mu * w * p

    xs = [x0]
    ys = [(phi0, flux0)]
    ks = []
    n_rej = 0
    status = STATUS_END
    x, p, q = x0, phi0, flux0
    kb = 0
    while kb < len(interior) and interior[kb] <= x:
        kb += 1
    h = h_max
    k1p, k1q = rhs(x, p, q)
    for _ in range(max_steps):
        if x >= x_end:
            break
        target = x_end
        if kb < len(interior) and interior[kb] < x_end:
            target = interior[kb]
        h = min(h, h_max)
        land = x + h >= target
        if land:
            h = target - x
        k2p, k2q = rhs(x + C2 * h, p + h * A21 * k1p, q + h * A21 * k1q)
        k3p, k3q = rhs(x + C3 * h, p + h * (A31 * k1p + A32 * k2p),
                       q + h * (A31 * k1q + A32 * k2q))
        k4p, k4q = rhs(x + C4 * h, p + h * (A41 * k1p + A42 * k2p + A43 * k3p),
                       q + h * (A41 * k1q + A42 * k2q + A43 * k3q))
        k5p, k5q = rhs(x + C5 * h, p + h * (A51 * k1p + A52 * k2p + A53 * k3p + A54 * k4p),
                       q + h * (A51 * k1q + A52 * k2q + A53 * k3q + A54 * k4q))
        x6 = target if land else x + h
        k6p, k6q = rhs(x6, p + h * (A61 * k1p + A62 * k2p + A63 * k3p + A64 * k4p + A65 * k5p),
                       q + h * (A61 * k1q + A62 * k2q + A63 * k3q + A64 * k4q + A65 * k5q))
        pn = p + h * (A71 * k1p + A73 * k3p + A74 * k4p + A75 * k5p + A76 * k6p)
        qn = q + h * (A71 * k1q + A73 * k3q + A74 * k4q + A75 * k5q + A76 * k6q)
        k7p, k7q = rhs(x6, pn, qn)
        ep = h * (E1 * k1p + E3 * k3p + E4 * k4p + E5 * k5p + E6 * k6p + E7 * k7p)
        eq = h * (E1 * k1q + E3 * k3q + E4 * k4q + E5 * k5q + E6 * k6q + E7 * k7q)
        sp = atol + rtol * max(abs(p), abs(pn))
        sq = atol + rtol * max(abs(q), abs(qn))
        err = math.sqrt(0.5 * ((ep / sp) ** 2 + (eq / sq) ** 2))
        if not (math.isfinite(pn) and math.isfinite(qn) and math.isfinite(err)):
            status = STATUS_NONFINITE
            break
        if err <= 1.0:
            ks.append((k1p, k1q, k2p, k2q, k3p, k3q, k4p, k4q, k5p, k5q, k6p, k6q, k7p, k7q))
            crossed = (pn < 0.0) != (p < 0.0) or pn == 0.0
            x, p, q = x6, pn, qn
            xs.append(x)
            ys.append((p, q))
            k1p, k1q = k7p, k7q
            if land and kb < len(interior) and x >= interior[kb]:
                kb += 1
            factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            h = h * factor
            if stop_at_zero and crossed:
                status = STATUS_ZERO
                break
        else:
            n_rej += 1
            h = h * max(MIN_FACTOR, SAFETY * err ** -0.2)
            if h < 1e-15 * max(1.0, abs(x)):
                status = STATUS_STEP
                break
    else:
        status = STATUS_MAXSTEPS
    ks_arr = np.array(ks, dtype=float).reshape(-1, 7, 2)
    return np.array(xs), np.array(ys, dtype=float).reshape(-1, 2), ks_arr, n_rej, status
