"""Overlap integrals of squared harmonic-oscillator eigenfunctions.

The density-density matrix elements of a contact interaction factorize,
for a harmonic trap, into per-Cartesian-dimension integrals

    J[m, n] = int h_m(x)^2 h_n(x)^2 dx

where h_n are the normalized Hermite functions of a unit-frequency
oscillator (hbar = m = omega = 1).  The integrand is a polynomial times
exp(-2 x^2), so Gauss-Hermite quadrature with m + n + 1 nodes is exact up
to the accuracy of the nodes themselves.  Hermite-function values grow
like exp(x^2 / 2) at the outer nodes, so the recurrence is evaluated with
a per-node floating point scale carried separately in log space.
"""

from __future__ import annotations

import numpy as np
from scipy.special import roots_hermite

_RENORM = 1e120


def _log_abs_hermite_table(nmax: int, x: np.ndarray) -> np.ndarray:
    """log |H~_n(x)| for n = 0..nmax, where H~_n = h_n * exp(x^2/2).

    Uses the stable two-term recurrence with per-node rescaling.  Signs are
    dropped: callers only ever need the square.
    """
    npts = x.size
    logs = np.empty((nmax + 1, npts))
    scale = np.zeros(npts)
    prev = np.zeros(npts)
    cur = np.full(npts, np.pi ** -0.25)
    with np.errstate(divide="ignore"):
        logs[0] = np.log(np.abs(cur))
    for n in range(1, nmax + 1):
        nxt = x * np.sqrt(2.0 / n) * cur - np.sqrt((n - 1) / n) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RENORM
        if big.any():
            f = np.where(big, np.abs(cur), 1.0)
            cur = cur / f
            prev = prev / f
            scale = scale + np.where(big, np.log(f), 0.0)
        with np.errstate(divide="ignore"):
            logs[n] = np.log(np.abs(cur)) + scale
    return logs


def squared_overlap_table(nmax: int) -> np.ndarray:
    """Symmetric table J[m, n] = int h_m^2 h_n^2 dx for m, n = 0..nmax."""
    npts = 2 * nmax + 2
    u = roots_hermite(npts)[0]
    # Quadrature weights via the Christoffel sum over the orthonormal
    # polynomials; the tabulated weights underflow at the outer nodes for
    # large npts while the integrand compensates, so keep them in log form.
    logp = _log_abs_hermite_table(npts - 1, u)
    m = 2.0 * logp
    mx = m.max(axis=0)
    logw = -(mx + np.log(np.exp(m - mx).sum(axis=0)))
    # substitute x = u / sqrt(2): dx = du / sqrt(2), weight exp(-u^2) absorbed
    logh = _log_abs_hermite_table(nmax, u / np.sqrt(2.0))
    # J[m, n] = sum_i w_i * H~_m(x_i)^2 H~_n(x_i)^2 / sqrt(2)
    b = np.exp(0.5 * logw[None, :] + 2.0 * logh)
    table = (b @ b.T) / np.sqrt(2.0)
    return 0.5 * (table + table.T)
