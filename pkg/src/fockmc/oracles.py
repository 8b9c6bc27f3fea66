"""Exact reference computations for occupation statistics.

Two families:

* canonical: the atom-number recurrence for Z(N, beta), kept in log space,
  giving p(N0) through the excited-only partition function;
* microcanonical: exact-integer counting of configurations at fixed total
  energy on an integer energy grid, plus a floating-point moment
  recurrence (:mod:`._microdp`) that reaches N in the thousands where the
  integer tables would not fit.

Everything here is deterministic and sampler-free; the test suite uses it
as the ground truth for the Monte Carlo results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp, zeta

from . import _microdp
from .model import ModeBasis, ResourceError, TrapSpec

# ---------------------------------------------------------------------------
# spectra as (energy, degeneracy) lists


def energy_levels(trap: TrapSpec, cutoff_energy: int):
    """Distinct level energies <= cutoff and their degeneracies.

    Unlike a full mode basis this never enumerates individual modes, so it
    stays cheap for 3D traps at high cutoff.
    """
    if cutoff_energy < 1:
        raise ValueError("cutoff_energy must be >= 1")
    if trap.kind == "harmonic1d":
        eps = np.arange(cutoff_energy + 1, dtype=float)
        deg = np.ones_like(eps)
    elif trap.kind == "ring1d":
        nmax = int(math.isqrt(cutoff_energy))
        eps = np.arange(nmax + 1, dtype=float) ** 2
        deg = np.full(nmax + 1, 2.0)
        deg[0] = 1.0
    else:
        lam = trap.aspect
        pairs = {}
        s = 0
        while lam * s <= cutoff_energy:
            e_perp = lam * s
            for nz in range(int(math.floor(cutoff_energy - e_perp)) + 1):
                e = e_perp + nz
                pairs[e] = pairs.get(e, 0.0) + (s + 1)
            s += 1
        eps = np.array(sorted(pairs))
        deg = np.array([pairs[e] for e in sorted(pairs)])
    return eps, deg


def _levels_of(source, cutoff=None):
    if isinstance(source, ModeBasis):
        return source.levels()
    if isinstance(source, TrapSpec):
        if cutoff is None:
            raise ValueError("cutoff required when passing a TrapSpec")
        return energy_levels(source, cutoff)
    eps, deg = source
    return np.asarray(eps, float), np.asarray(deg, float)


# ---------------------------------------------------------------------------
# canonical ensemble


@dataclass
class CanonicalTable:
    """log Z(n, beta) for n = 0..N at fixed beta over one spectrum."""

    log_Z: np.ndarray
    beta: float
    excited_only: bool

    @property
    def N(self) -> int:
        return self.log_Z.size - 1


def canonical_Z(source, N: int, beta: float,
                excited_only: bool = False) -> CanonicalTable:
    """Atom-number recurrence Z(n) = (1/n) sum_m Z1(m*beta) Z(n-m).

    ``source`` is a ModeBasis, an (energies, degeneracies) pair, or a
    TrapSpec together with an implied cutoff via :func:`energy_levels`.
    With ``excited_only`` the zero-energy ground level is dropped, giving
    the excited-subsystem table Z_ex.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    eps, deg = _levels_of(source)
    if excited_only:
        keep = eps > 0
        eps, deg = eps[keep], deg[keep]
    if eps.size == 0:
        raise ValueError("empty spectrum")
    logd = np.log(deg)
    # single-particle log partition functions at stretched inverse temperature
    lz1 = np.array([logsumexp(logd - m * beta * eps) for m in range(1, N + 1)])
    log_Z = np.empty(N + 1)
    log_Z[0] = 0.0
    for n in range(1, N + 1):
        log_Z[n] = logsumexp(lz1[:n] + log_Z[n - 1::-1]) - math.log(n)
    return CanonicalTable(log_Z=log_Z, beta=beta, excited_only=excited_only)


@dataclass
class GroundStateDistribution:
    """p(N0) for N0 = 0..N at one value of the ensemble's control parameter."""

    p: np.ndarray
    ensemble: str           # "canonical" | "microcanonical"
    control: float          # beta or E

    @property
    def N(self) -> int:
        return self.p.size - 1


def canonical_p_N0(source, N: int, beta: float) -> GroundStateDistribution:
    """p(N0) = Z_ex(N - N0) / Z(N) with Z(N) = sum_k Z_ex(k)."""
    table = canonical_Z(source, N, beta, excited_only=True)
    lz = table.log_Z
    p_ex = np.exp(lz - logsumexp(lz))   # p_ex[k] = P(N_ex = k)
    return GroundStateDistribution(p=p_ex[::-1].copy(), ensemble="canonical",
                                   control=beta)


def distribution_moments(dist: GroundStateDistribution):
    """(mean, variance) of N0 under the distribution."""
    n0 = np.arange(dist.p.size)
    mean = float((dist.p * n0).sum())
    var = float((dist.p * n0 * n0).sum() - mean * mean)
    return mean, var


def canonical_moments(source, N: int, beta: float):
    return distribution_moments(canonical_p_N0(source, N, beta))


def canonical_mean_energy(source, N: int, beta: float) -> float:
    """-d ln Z / d beta by a symmetric finite difference."""
    h = 1e-6 * beta
    hi = logsumexp(canonical_Z(source, N, beta + h, excited_only=True).log_Z)
    lo = logsumexp(canonical_Z(source, N, beta - h, excited_only=True).log_Z)
    return -(hi - lo) / (2 * h)


def harmonic1d_closed_form(N0: int, N: int, beta: float) -> float:
    """p(N0) of the 1D harmonic trap in closed form.

    p = q^(N-N0) * prod_{j=N-N0+1}^{N} (1 - q^j) with q = exp(-beta).
    The product starts one step above the exponent: the factors are the
    tail of the Euler product of Z_ex(N - N0) over the full Z.
    """
    if not 0 <= N0 <= N:
        raise ValueError("need 0 <= N0 <= N")
    if beta <= 0:
        raise ValueError("beta must be positive")
    log_p = -beta * (N - N0)
    for j in range(N - N0 + 1, N + 1):
        log_p += math.log1p(-math.exp(-beta * j))
    return math.exp(log_p)


# ---------------------------------------------------------------------------
# microcanonical ensemble, exact integers


def partitions_1d(n_ex: int, energy: int) -> int:
    """Number of partitions of ``energy`` into exactly ``n_ex`` positive parts.

    Two-way recurrence: drop a 1 from every partition containing one, or
    subtract 1 from every part of a partition that contains none.
    """
    if n_ex < 0 or energy < 0:
        raise ValueError("arguments must be non-negative")
    table = [[0] * (energy + 1) for _ in range(n_ex + 1)]
    table[0][0] = 1
    for n in range(1, n_ex + 1):
        for e in range(1, energy + 1):
            acc = table[n - 1][e - 1]
            if e >= n:
                acc += table[n][e - n]
            table[n][e] = acc
    return table[n_ex][energy]


MICRO_ENTRY_LIMIT = 40_000_000


@dataclass
class MicroTable:
    """Exact-integer counts of fixed-energy configurations.

    ``gamma_ex[n][E]`` is the number of ways to place n atoms on excited
    levels with total energy exactly E, degeneracies folded in through
    stars-and-bars factors.  Entries are Python integers: no rounding,
    ever.
    """

    N: int
    E_max: int
    levels: list
    degeneracies: list
    _gamma_ex: list

    def gamma_ex(self, n: int, energy: int) -> int:
        if not (0 <= n <= self.N and 0 <= energy <= self.E_max):
            raise ValueError("index outside the table")
        return self._gamma_ex[n][energy]

    def gamma(self, n: int, energy: int) -> int:
        """Ground-inclusive count: any number of the n atoms may sit at 0."""
        return sum(self.gamma_ex(k, energy) for k in range(n + 1))


def micro_recurrence(source, N: int, E_max: int) -> MicroTable:
    """Level-by-level sweep filling the exact-integer table.

    Each level of energy eps and degeneracy D contributes a convolution
    with the stars-and-bars factor binom(D + k - 1, k) for k atoms placed
    on it.  Only levels with 0 < eps <= E_max can be occupied at total
    energy <= E_max, so the sweep is finite even for an infinite spectrum.
    """
    if isinstance(source, (ModeBasis, TrapSpec)):
        trap = source if isinstance(source, TrapSpec) else source.trap
        if not trap.integer_grid:
            raise ValueError(
                f"microcanonical recurrence needs an integer energy grid; "
                f"aspect ratio {trap.aspect} is not an integer")
        eps, deg = _levels_of(source, cutoff=E_max)
    else:
        eps, deg = _levels_of(source)
    if not np.all(eps == np.round(eps)):
        raise ValueError("microcanonical recurrence needs an integer energy grid")
    if N < 0 or E_max < 0:
        raise ValueError("N and E_max must be non-negative")
    entries = (N + 1) * (E_max + 1)
    if entries > MICRO_ENTRY_LIMIT:
        raise ResourceError(
            f"microcanonical table would hold {entries} exact integers "
            f"(limit {MICRO_ENTRY_LIMIT}); reduce N or E_max")
    levels = [(int(e), int(d)) for e, d in zip(eps, deg) if 0 < e <= E_max]
    if eps[0] == 0 and max(eps) < E_max and isinstance(source, tuple):
        raise ValueError("spectrum truncated below E_max; raise the cutoff")
    cur = [[0] * (E_max + 1) for _ in range(N + 1)]
    cur[0][0] = 1
    for e_lvl, d_lvl in levels:
        binom = [math.comb(d_lvl + k - 1, k) for k in range(N + 1)]
        nxt = [[0] * (E_max + 1) for _ in range(N + 1)]
        for n in range(N + 1):
            row = nxt[n]
            for k in range(n + 1):
                if k * e_lvl > E_max:
                    break
                b = binom[k]
                src = cur[n - k]
                for energy in range(k * e_lvl, E_max + 1):
                    v = src[energy - k * e_lvl]
                    if v:
                        row[energy] += b * v
        cur = nxt
    return MicroTable(N=N, E_max=E_max, levels=[e for e, _ in levels],
                      degeneracies=[d for _, d in levels], _gamma_ex=cur)


def micro_p_N0(table: MicroTable, N: int, energy: int) -> GroundStateDistribution:
    """p(N0) = Gamma_ex(N - N0, E) / Gamma(N, E), exact ratio emitted as floats."""
    total = table.gamma(N, energy)
    if total == 0:
        raise ValueError(f"no configuration reaches energy E={energy}; "
                         f"the distribution is undefined there")
    p = np.array([float(Fraction(table.gamma_ex(N - n0, energy), total))
                  for n0 in range(N + 1)])
    return GroundStateDistribution(p=p, ensemble="microcanonical",
                                   control=float(energy))


def micro_p_N0_cumulative(table: MicroTable, N: int, energy: int) -> GroundStateDistribution:
    """Same distribution through the ground-inclusive cumulative counts.

    p(N0) = [G(N - N0, E) - G(N - N0 - 1, E)] / G(N, E) where G(n, E)
    counts configurations of n atoms with any number of them at zero
    energy.  Differencing strips the ground-mode freedom and must agree
    with :func:`micro_p_N0` integer-for-integer.
    """
    total = table.gamma(N, energy)
    if total == 0:
        raise ValueError(f"no configuration reaches energy E={energy}; "
                         f"the distribution is undefined there")
    p = []
    for n0 in range(N + 1):
        hi = table.gamma(N - n0, energy)
        lo = table.gamma(N - n0 - 1, energy) if N - n0 - 1 >= 0 else 0
        p.append(float(Fraction(hi - lo, total)))
    return GroundStateDistribution(p=np.array(p), ensemble="microcanonical",
                                   control=float(energy))


# ---------------------------------------------------------------------------
# microcanonical ensemble, large N (floating point moment recurrences)


@dataclass
class MicroMoments:
    """Mean/variance of N0 versus total energy E on the integer grid."""

    N: int
    E_max: int
    mean: np.ndarray        # index by E
    var: np.ndarray
    log_weight: np.ndarray  # ln M0(E) up to one common constant
    valid: np.ndarray       # bool: entries with trustworthy precision


def micro_moments_large(trap: TrapSpec, N: int, E_max: int,
                        sigma: float) -> MicroMoments:
    """First two moments of N0 at every total energy 0..E_max.

    ``sigma`` tilts the internal series toward the energy region of
    interest (use the inverse temperature whose mean energy you care
    about); entries more than ~600 nats below the tilted maximum are
    flagged invalid instead of silently rounding to garbage.
    """
    if trap.kind == "harmonic1d":
        kind, lam = _microdp.KIND_HARMONIC1D, 1
    elif trap.kind == "harmonic3d":
        if not trap.integer_grid:
            raise ValueError(
                f"microcanonical moments need an integer energy grid; "
                f"aspect ratio {trap.aspect} is not an integer")
        kind, lam = _microdp.KIND_HARMONIC3D, int(trap.aspect)
    else:
        raise ValueError("no closed-form spectrum product for trap "
                         f"{trap.kind!r}; use micro_recurrence at small sizes")
    logm = []
    for r in range(3):
        rows, off = _microdp.moment_series(N, E_max, kind, lam, sigma, r)
        with np.errstate(divide="ignore"):
            logm.append(np.log(rows[N]) + off[N])
    l0, l1, l2 = logm
    valid = np.isfinite(l0) & (l0 > np.nanmax(l0) - 600.0)
    with np.errstate(invalid="ignore"):
        mean = np.exp(l1 - l0)
        var = np.exp(l2 - l0) - mean ** 2
    mean[~valid] = np.nan
    var[~valid] = np.nan
    # undo the tilt so log_weight really is ln M0(E) + const
    log_weight = l0 + sigma * np.arange(E_max + 1)
    return MicroMoments(N=N, E_max=E_max, mean=mean, var=var,
                        log_weight=log_weight, valid=valid)


# ---------------------------------------------------------------------------
# asymptotic constants and ensemble ratios


def asymptotics() -> dict:
    """Large-N limits of fluctuations per atom in the isotropic 3D trap."""
    micro = zeta(2) / zeta(3) - 0.75 * zeta(3) / zeta(4)
    cano = zeta(2) / zeta(3)
    return {
        "micro_limit": float(micro),
        "cano_limit": float(cano),
        "S_3D": float(micro / cano),
    }


def _quadratic_peak(x, y):
    """Vertex of the parabola through three points; returns (x*, y*)."""
    c = np.polyfit(x, y, 2)
    if c[0] >= 0:
        # no interior maximum; fall back to the best sample
        i = int(np.argmax(y))
        return float(x[i]), float(y[i])
    xs = -c[1] / (2 * c[0])
    return float(xs), float(np.polyval(c, xs))


def canonical_peak(trap: TrapSpec, N: int, t_grid=None):
    """Locate the temperature of maximal canonical variance.

    Without an explicit grid, a coarse geometric scan around the
    condensation temperature scale brackets the peak and a linear scan
    plus quadratic refinement pins it down.  A user-supplied grid whose
    maximum sits on the boundary is refused.
    """
    def var_at(T):
        cutoff = max(8, int(math.ceil(12.0 * T)))
        levels = energy_levels(trap, cutoff)
        return canonical_moments(levels, N, 1.0 / T)[1]

    if t_grid is not None:
        t_grid = np.asarray(t_grid, float)
        if t_grid.size < 5:
            raise ValueError("temperature grid needs at least 5 points")
        v = np.array([var_at(T) for T in t_grid])
        i = int(np.argmax(v))
        if i in (0, t_grid.size - 1):
            raise ValueError(
                f"canonical variance is maximal at the grid boundary "
                f"T={t_grid[i]:g}; extend the temperature grid")
        t_star, v_star = _quadratic_peak(t_grid[i - 1:i + 2], v[i - 1:i + 2])
        return t_star, v_star, list(zip(t_grid, v))

    if trap.kind == "harmonic3d":
        t_scale = (N / float(zeta(3))) ** (1.0 / 3.0) * trap.aspect ** (2.0 / 3.0)
    else:
        t_scale = N / math.log(max(N, 2))
    coarse = np.geomspace(0.05 * t_scale, 3.0 * t_scale, 21)
    v = np.array([var_at(T) for T in coarse])
    i = int(np.argmax(v))
    grid = list(zip(coarse, v))
    # the high-T flank is nearly a cliff (the condensate vanishes), so one
    # quadratic through widely spaced points lands short of the peak; zoom
    # until the bracket is narrow before fitting
    lo = coarse[max(i - 1, 0)]
    hi = coarse[min(i + 1, coarse.size - 1)]
    while (hi - lo) > 2e-3 * coarse[i]:
        fine = np.linspace(lo, hi, 13)
        vf = np.array([var_at(T) for T in fine])
        grid += list(zip(fine, vf))
        j = int(np.clip(np.argmax(vf), 1, fine.size - 2))
        lo, hi = fine[j - 1], fine[j + 1]
    t_star, v_star = _quadratic_peak(fine[j - 1:j + 2], vf[j - 1:j + 2])
    return t_star, v_star, grid


@dataclass
class SResult:
    """Exact ensemble-ratio observables for one trap and atom number."""

    S: float
    S_tilde: float
    T_max: float
    var_cano_max: float
    E_peak: int
    var_micro_max: float
    E_mean: float
    var_micro_at_E_mean: float


def exact_S(trap: TrapSpec, N: int, t_grid=None, sigma=None) -> SResult:
    """Peak-to-peak and fixed-temperature ensemble ratios, recurrence-exact.

    S compares the maximal microcanonical variance (over total energy E)
    with the maximal canonical variance (over T).  S-tilde instead takes
    the microcanonical variance at the canonical mean energy of T_max,
    mirroring what a post-selection analysis at fixed temperature
    measures.
    """
    t_max, var_cano_max, _ = canonical_peak(trap, N, t_grid)
    cutoff = max(8, int(math.ceil(12.0 * t_max)))
    levels = energy_levels(trap, cutoff)
    e_mean = canonical_mean_energy(levels, N, 1.0 / t_max)
    if sigma is None:
        sigma = 1.0 / t_max
    e_max = max(int(math.ceil(1.8 * e_mean)), 64)
    for _ in range(3):
        mm = micro_moments_large(trap, N, e_max, sigma)
        idx = np.flatnonzero(mm.valid & (np.arange(e_max + 1) >= 1))
        var = mm.var
        i = idx[int(np.nanargmax(var[idx]))]
        if i < idx[-1] - 1:
            break
        e_max = int(1.5 * e_max)
    else:
        raise ValueError("microcanonical variance still rising at the top of "
                         f"the energy range E={e_max}; peak not bracketed")
    e_pts = np.array([i - 1, i, i + 1], float)
    _, var_micro_max = _quadratic_peak(e_pts, var[i - 1:i + 2])
    e_round = int(round(e_mean))
    e_round = min(max(e_round, 0), e_max)
    var_at_mean = float(var[e_round])
    return SResult(S=var_micro_max / var_cano_max,
                   S_tilde=var_at_mean / var_cano_max,
                   T_max=t_max, var_cano_max=var_cano_max,
                   E_peak=int(i), var_micro_max=var_micro_max,
                   E_mean=float(e_mean), var_micro_at_E_mean=var_at_mean)
