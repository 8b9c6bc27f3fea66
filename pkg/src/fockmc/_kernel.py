"""Compiled inner loop of the Fock-state random walk.

One step moves a single atom between modes.  The source mode is drawn
with probability proportional to ``exp(-gamma*eps_i) * N_i`` and the
destination with probability proportional to
``exp(-gamma*eps_k) * (N_k + 1)`` evaluated on the occupations left after
removing the source atom (so a self-move carries weight ``N_i**2``).  Both
draws are realized rejection-free in their heavy part:

* source: a uniformly random atom, thinned by ``exp(-gamma*eps)``;
* destination: a mixture of the static distribution ``exp(-gamma*eps)``
  over all modes (the spontaneous ``+1``) and a uniformly random remaining
  atom thinned the same way (the Bose-enhanced part).

The Metropolis-Hastings acceptance is ``min(1, exp(-beta*dE) * A/A')``
where ``A`` is the source normalizer before the move and ``A'`` after; the
destination normalizers of the forward and reverse proposals coincide, so
this ratio is the entire asymmetry correction.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64, float64, int64

_MASK = uint64(0xFFFFFFFFFFFFFFFF)

INTER_NONE = 0
INTER_RING = 1
INTER_HARMONIC = 2

_RECALC_EVERY = 1 << 20


@njit(inline="always")
def _next(s):
    # splitmix64
    s = (s + uint64(0x9E3779B97F4A7C15)) & _MASK
    z = s
    z = ((z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)) & _MASK
    z = ((z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)) & _MASK
    return s, z ^ (z >> uint64(31))


@njit(inline="always")
def _u01(z):
    return float64(z >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _randint(z, n):
    return np.int64(z % uint64(n))


@njit(cache=True, nogil=True)
def _overlap(i, k, qns, dim_table, ndim, pref):
    v = pref
    for d in range(ndim):
        v *= dim_table[qns[i, d], qns[k, d]]
    return v


@njit(cache=True, nogil=True)
def _delta_int(i, k, occ, occ_list, n_occ, qns, dim_table, ndim, pref, g):
    if i == k:
        return 0.0
    ni = occ[i]
    nk = occ[k]
    cross = 0.0
    for a in range(n_occ):
        m = occ_list[a]
        if m == i or m == k:
            continue
        cross += (_overlap(k, m, qns, dim_table, ndim, pref)
                  - _overlap(i, m, qns, dim_table, ndim, pref)) * occ[m]
    d = (-2.0 * _overlap(i, i, qns, dim_table, ndim, pref) * (ni - 1)
         + 2.0 * _overlap(k, k, qns, dim_table, ndim, pref) * nk
         + 4.0 * cross
         + 4.0 * _overlap(i, k, qns, dim_table, ndim, pref) * (ni - nk - 1))
    return 0.5 * g * d


@njit(cache=True, nogil=True)
def _interaction_total(occ, occ_list, n_occ, qns, dim_table, ndim, pref, g):
    tot = 0.0
    for a in range(n_occ):
        i = occ_list[a]
        ni = occ[i]
        tot += _overlap(i, i, qns, dim_table, ndim, pref) * ni * (ni - 1)
        for b in range(a + 1, n_occ):
            j = occ_list[b]
            tot += 4.0 * _overlap(i, j, qns, dim_table, ndim, pref) * ni * occ[j]
    return 0.5 * g * tot


@njit(cache=True, nogil=True)
def run_chain_kernel(eps, w, cumw, c0, beta, n_atoms, g, inter_kind,
                     ring_coef, qns, dim_table, ndim, pref,
                     burn_in, thinning, n_records, seed, occ_init):
    """Run one chain; returns (N0, E, step_index, accepted, occupations)."""
    n_modes = eps.size
    occ = occ_init.copy()
    occ_list = np.empty(n_modes, np.int64)
    pos = np.full(n_modes, -1, np.int64)
    n_occ = 0
    atoms = np.empty(n_atoms, np.int64)
    ia = 0
    for m in range(n_modes):
        if occ[m] > 0:
            occ_list[n_occ] = m
            pos[m] = n_occ
            n_occ += 1
            for _ in range(occ[m]):
                atoms[ia] = m
                ia += 1
    a_norm = 0.0
    e_sp = 0.0
    for t in range(n_occ):
        m = occ_list[t]
        a_norm += w[m] * occ[m]
        e_sp += eps[m] * occ[m]
    if inter_kind == INTER_RING:
        ssq = 0
        for t in range(n_occ):
            ssq += occ[occ_list[t]] ** 2
        e_int = 0.5 * ring_coef * (2.0 * n_atoms * n_atoms - n_atoms - ssq)
    elif inter_kind == INTER_HARMONIC:
        e_int = _interaction_total(occ, occ_list, n_occ, qns, dim_table, ndim, pref, g)
    else:
        e_int = 0.0

    rec_n0 = np.empty(n_records, np.int64)
    rec_e = np.empty(n_records, np.float64)
    rec_step = np.empty(n_records, np.int64)
    s = uint64(seed)
    s, _ = _next(s)
    step = int64(0)
    ir = 0
    accepted = int64(0)
    total_steps = burn_in + thinning * n_records
    while step < total_steps:
        step += 1
        # source: uniform atom thinned by w
        while True:
            s, z = _next(s)
            a = _randint(z, n_atoms)
            i = atoms[a]
            if w[i] >= 1.0:
                break
            s, z = _next(s)
            if _u01(z) <= w[i]:
                break
        a_t = a_norm - w[i]
        # destination: spontaneous (static) vs Bose-enhanced (occupied) part
        s, z = _next(s)
        if _u01(z) * (c0 + a_t) < c0:
            s, z = _next(s)
            k = np.searchsorted(cumw, _u01(z) * c0)
            if k >= n_modes:
                k = n_modes - 1
        elif n_atoms == 1:
            k = i
        else:
            while True:
                s, z = _next(s)
                b = _randint(z, n_atoms - 1)
                if b >= a:
                    b += 1
                k = atoms[b]
                if w[k] >= 1.0:
                    break
                s, z = _next(s)
                if _u01(z) <= w[k]:
                    break
        if k != i:
            d_e = eps[k] - eps[i]
            if inter_kind == INTER_RING:
                d_e += ring_coef * (occ[i] - occ[k] - 1)
            elif inter_kind == INTER_HARMONIC:
                d_e += _delta_int(i, k, occ, occ_list, n_occ, qns,
                                  dim_table, ndim, pref, g)
            a_new = a_norm - w[i] + w[k]
            log_r = -beta * d_e + np.log(a_norm / a_new)
            ok = log_r >= 0.0
            if not ok:
                s, z = _next(s)
                ok = _u01(z) < np.exp(log_r)
            if ok:
                accepted += 1
                occ[i] -= 1
                if occ[i] == 0:
                    t = pos[i]
                    last = occ_list[n_occ - 1]
                    occ_list[t] = last
                    pos[last] = t
                    pos[i] = -1
                    n_occ -= 1
                if occ[k] == 0:
                    occ_list[n_occ] = k
                    pos[k] = n_occ
                    n_occ += 1
                occ[k] += 1
                atoms[a] = k
                a_norm = a_new
                e_sp += eps[k] - eps[i]
                e_int += d_e - (eps[k] - eps[i])
        if step % _RECALC_EVERY == 0:
            # refresh running sums to keep float drift out of long chains
            a_norm = 0.0
            for t in range(n_occ):
                m = occ_list[t]
                a_norm += w[m] * occ[m]
            if inter_kind == INTER_RING:
                ssq = 0
                for t in range(n_occ):
                    ssq += occ[occ_list[t]] ** 2
                e_int = 0.5 * ring_coef * (2.0 * n_atoms * n_atoms - n_atoms - ssq)
            elif inter_kind == INTER_HARMONIC:
                e_int = _interaction_total(occ, occ_list, n_occ, qns,
                                           dim_table, ndim, pref, g)
        if step > burn_in and (step - burn_in) % thinning == 0:
            rec_n0[ir] = occ[0]
            rec_e[ir] = e_sp + e_int
            rec_step[ir] = step
            ir += 1
    return rec_n0, rec_e, rec_step, accepted, occ
