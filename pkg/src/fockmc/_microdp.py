"""Compiled recurrences for fixed-energy occupation moments at large N.

Exact-integer counting of microstates is exponential in table size once N
reaches the hundreds, but the first three moments of the ground-state
occupation at fixed total energy obey polynomial recurrences in the
q-series (energy generating function) picture:

    M_r(N, E) = sum_{N0} N0^r Gamma_ex(N - N0, E)

collect into series G_r(N) = sum_E M_r(N, E) q^E satisfying

    N     * G_0(N) = sum_m s(q^m) G_0(N-m)
    (N-1) * G_1(N) = sum_m (s(q^m) + 1) G_1(N-m),           G_1(1) = delta_E0
    (N-1) * G_2(N) = sum_m (s(q^m) + 2 - (-1)^m) G_2(N-m),  G_2(1) = delta_E0

where s(q) is the single-particle partition sum including the ground mode,
a closed-form product of geometric series on integer-grid spectra.
Multiplying a truncated series by s(q^m) is then a handful of in-place
prefix passes, O(E_max) each.

Coefficients span thousands of decimal orders, so each series carries an
exponential tilt exp(-sigma*E) plus a per-row log offset; sigma cancels in
moment ratios and only entries within ~600 nats of the row maximum are
trustworthy (the caller masks the rest).
"""

from __future__ import annotations

import numpy as np
from numba import njit

KIND_HARMONIC1D = 0
KIND_HARMONIC3D = 1


@njit(cache=True, nogil=True)
def _mult_sp_sum(v, m, kind, lam, tpow):
    """In-place multiply the tilted series v by s(q^m).

    Each factor 1/(1 - q^stride) is one forward prefix pass with the tilt
    folded into the stride weight.
    """
    n = v.size
    if kind == KIND_HARMONIC3D:
        s1 = m * lam
        t1 = tpow[s1]
        for _ in range(2):
            for e in range(s1, n):
                v[e] += t1 * v[e - s1]
    t2 = tpow[m]
    for e in range(m, n):
        v[e] += t2 * v[e - m]


@njit(cache=True, nogil=True)
def moment_series(N, e_max, kind, lam, sigma, r):
    """Tilted series of M_r(n, E) for n = 0..N; returns (rows, log_offsets)."""
    n_e = e_max + 1
    tpow = np.exp(-sigma * np.arange(max(n_e, lam * N + 1)).astype(np.float64))
    rows = np.zeros((N + 1, n_e))
    off = np.zeros(N + 1)
    if r == 0:
        rows[0, 0] = 1.0
        start = 1
    else:
        rows[1, 0] = 1.0
        off[0] = -np.inf
        start = 2
    lo = 0 if r == 0 else 1
    for n in range(start, N + 1):
        acc = np.zeros(n_e)
        ref = -1e300
        for m in range(1, n - lo + 1):
            if off[n - m] > ref:
                ref = off[n - m]
        for m in range(1, n - lo + 1):
            w = np.exp(off[n - m] - ref)
            if w == 0.0:
                continue
            tmp = rows[n - m].copy()
            _mult_sp_sum(tmp, m, kind, lam, tpow)
            if r == 0:
                extra = 0.0
            elif r == 1:
                extra = 1.0
            else:
                extra = 2.0 - (1.0 if m % 2 == 0 else -1.0)
            for e in range(n_e):
                acc[e] += w * (tmp[e] + extra * rows[n - m, e])
        denom = float(n if r == 0 else n - 1)
        mx = 0.0
        for e in range(n_e):
            acc[e] /= denom
            if acc[e] > mx:
                mx = acc[e]
        rows[n] = acc / mx
        off[n] = ref + np.log(mx)
    return rows, off
