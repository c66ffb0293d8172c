# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) integrator for the flux system.

Same algorithm and operation order as ``_dopri_py.integrate``.
"""
from libc.math cimport fabs, sqrt, pow, isfinite

import numpy as np

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784
cdef double A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40

cdef int STATUS_END = 0, STATUS_ZERO = 1, STATUS_NONFINITE = 2, STATUS_STEP = 3
cdef int STATUS_MAXSTEPS = 4
cdef double SAFETY = 0.9, MIN_FACTOR = 0.2, MAX_FACTOR = 10.0


cdef inline double _omega(double x, const double[::1] breaks, const double[:, ::1] coefs) nogil:
    cdef Py_ssize_t m = coefs.shape[0], d = coefs.shape[1], k = 0, j
    cdef double out
    while k < m - 1 and x >= breaks[k + 1]:
        k += 1
    out = coefs[k, d - 1]
    for j in range(d - 2, -1, -1):
        out = out * x + coefs[k, j]
    return out


def integrate(const double[::1] breaks, const double[:, ::1] coefs, double mu, double x0,
              double phi0, double flux0, double x_end, double rtol, double atol, double h_max,
              bint stop_at_zero, Py_ssize_t max_steps=1000000):
    """See ``_dopri_py.integrate``; the callable-weight path is Python only."""
    cdef Py_ssize_t cap = 1024, n = 1, it, kb = 1, nb = breaks.shape[0]
    cdef Py_ssize_t n_rej = 0
    cdef int status = STATUS_END
    cdef double x = x0, p = phi0, q = flux0, h = h_max, target, x6, w, err, sp, sq, factor
    cdef double k1p, k1q, k2p, k2q, k3p, k3q, k4p, k4q, k5p, k5q, k6p, k6q, k7p, k7q
    cdef double pp, qq, pn, qn, ep, eq
    cdef bint land, crossed

    xs_a = np.empty(cap)
    ys_a = np.empty((cap, 2))
    ks_a = np.empty((cap, 7, 2))
    cdef double[::1] xs = xs_a
    cdef double[:, ::1] ys = ys_a
    cdef double[:, :, ::1] ks = ks_a
    xs[0] = x
    ys[0, 0] = p
    ys[0, 1] = q

    # interior breakpoints are breaks[1 .. nb-2]
    while kb < nb - 1 and breaks[kb] <= x:
        kb += 1

    w = _omega(x, breaks, coefs)
    k1p = q / w
    k1q = -mu * w * p
    for it in range(max_steps):
        if x >= x_end:
            break
        target = x_end
        if kb < nb - 1 and breaks[kb] < x_end:
            target = breaks[kb]
        if h > h_max:
            h = h_max
        land = x + h >= target
        if land:
            h = target - x

        pp = p + h * A21 * k1p
        qq = q + h * A21 * k1q
        w = _omega(x + C2 * h, breaks, coefs)
        k2p = qq / w
        k2q = -mu * w * pp
        pp = p + h * (A31 * k1p + A32 * k2p)
        qq = q + h * (A31 * k1q + A32 * k2q)
        w = _omega(x + C3 * h, breaks, coefs)
        k3p = qq / w
        k3q = -mu * w * pp
        pp = p + h * (A41 * k1p + A42 * k2p + A43 * k3p)
        qq = q + h * (A41 * k1q + A42 * k2q + A43 * k3q)
        w = _omega(x + C4 * h, breaks, coefs)
        k4p = qq / w
        k4q = -mu * w * pp
        pp = p + h * (A51 * k1p + A52 * k2p + A53 * k3p + A54 * k4p)
        qq = q + h * (A51 * k1q + A52 * k2q + A53 * k3q + A54 * k4q)
        w = _omega(x + C5 * h, breaks, coefs)
        k5p = qq / w
        k5q = -mu * w * pp
        x6 = target if land else x + h
        pp = p + h * (A61 * k1p + A62 * k2p + A63 * k3p + A64 * k4p + A65 * k5p)
        qq = q + h * (A61 * k1q + A62 * k2q + A63 * k3q + A64 * k4q + A65 * k5q)
        w = _omega(x6, breaks, coefs)
        k6p = qq / w
        k6q = -mu * w * pp
        pn = p + h * (A71 * k1p + A73 * k3p + A74 * k4p + A75 * k5p + A76 * k6p)
        qn = q + h * (A71 * k1q + A73 * k3q + A74 * k4q + A75 * k5q + A76 * k6q)
        k7p = qn / w
        k7q = -mu * w * pn
        ep = h * (E1 * k1p + E3 * k3p + E4 * k4p + E5 * k5p + E6 * k6p + E7 * k7p)
        eq = h * (E1 * k1q + E3 * k3q + E4 * k4q + E5 * k5q + E6 * k6q + E7 * k7q)
        sp = atol + rtol * max(fabs(p), fabs(pn))
        sq = atol + rtol * max(fabs(q), fabs(qn))
        err = sqrt(0.5 * ((ep / sp) * (ep / sp) + (eq / sq) * (eq / sq)))
        if not (isfinite(pn) and isfinite(qn) and isfinite(err)):
            status = STATUS_NONFINITE
            break
        if err <= 1.0:
            if n >= cap:
                cap *= 2
                xs_a = np.resize(xs_a, cap)
                ys_a = np.resize(ys_a, (cap, 2))
                ks_a = np.resize(ks_a, (cap, 7, 2))
                xs = xs_a
                ys = ys_a
                ks = ks_a
            ks[n - 1, 0, 0] = k1p; ks[n - 1, 0, 1] = k1q
            ks[n - 1, 1, 0] = k2p; ks[n - 1, 1, 1] = k2q
            ks[n - 1, 2, 0] = k3p; ks[n - 1, 2, 1] = k3q
            ks[n - 1, 3, 0] = k4p; ks[n - 1, 3, 1] = k4q
            ks[n - 1, 4, 0] = k5p; ks[n - 1, 4, 1] = k5q
            ks[n - 1, 5, 0] = k6p; ks[n - 1, 5, 1] = k6q
            ks[n - 1, 6, 0] = k7p; ks[n - 1, 6, 1] = k7q
            crossed = ((pn < 0.0) != (p < 0.0)) or pn == 0.0
            x = x6
            p = pn
            q = qn
            xs[n] = x
            ys[n, 0] = p
            ys[n, 1] = q
            n += 1
            k1p = k7p
            k1q = k7q
            if land and kb < nb - 1 and x >= breaks[kb]:
                kb += 1
            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = min(MAX_FACTOR, SAFETY * pow(err, -0.2))
            h = h * factor
            if stop_at_zero and crossed:
                status = STATUS_ZERO
                break
        else:
            n_rej += 1
            h = h * max(MIN_FACTOR, SAFETY * pow(err, -0.2))
            if h < 1e-15 * max(1.0, fabs(x)):
                status = STATUS_STEP
                break
    else:
        status = STATUS_MAXSTEPS
    return (np.array(xs_a[:n]), np.array(ys_a[:n]), np.array(ks_a[:n - 1]), n_rej, status)
