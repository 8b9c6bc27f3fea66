"""Estimators on sample sets: moments, post-selection, extrapolation.

The post-selection route to the microcanonical ensemble keeps the
fraction f of records whose energies are closest to the parent set's mean
energy and extrapolates the variance to f -> 0 with a polynomial fit; the
temperature label of the parent canonical run is carried along unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import System, TrapSpec, build_basis, default_cutoff
from .sampler import SamplerParams, SampleSet, run_chains

MIN_CHAINS_FOR_ERRORS = 4


@dataclass(frozen=True)
class MomentEstimate:
    mean_N0: float
    var_N0: float
    stderr_mean: float
    stderr_var: float
    W: int


def moments(sset: SampleSet) -> MomentEstimate:
    """Population mean and variance of N0 over all records.

    Standard errors come from the spread between per-chain estimates and
    are reported as NaN below four chains.
    """
    if len(sset) == 0:
        raise ValueError("cannot estimate moments of an empty sample set")
    n0 = sset.N0.astype(float)
    mean = n0.mean()
    var = (n0 * n0).mean() - mean * mean
    chains = [idx for idx in sset.chains() if idx.size > 0]
    if len(chains) >= MIN_CHAINS_FOR_ERRORS:
        k = len(chains)
        means = np.array([n0[idx].mean() for idx in chains])
        varis = np.array([(n0[idx] ** 2).mean() - n0[idx].mean() ** 2
                          for idx in chains])
        stderr_mean = means.std(ddof=1) / math.sqrt(k)
        stderr_var = varis.std(ddof=1) / math.sqrt(k)
    else:
        stderr_mean = stderr_var = float("nan")
    return MomentEstimate(mean_N0=float(mean), var_N0=float(var),
                          stderr_mean=float(stderr_mean),
                          stderr_var=float(stderr_var), W=len(sset))


def autocorrelation_time(sset: SampleSet, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time of N0 in units of recorded samples.

    Averaged over chains with the usual self-consistent window (sum until
    lag exceeds 5 times the running estimate).
    """
    taus = []
    for idx in sset.chains():
        x = sset.N0[idx].astype(float)
        if x.size < 8 or x.var() == 0:
            continue
        x = x - x.mean()
        lim = max_lag if max_lag is not None else x.size // 4
        c0 = (x * x).mean()
        tau = 0.5
        for lag in range(1, lim):
            rho = (x[:-lag] * x[lag:]).mean() / c0
            tau += rho
            if lag > 5 * tau:
                break
        taus.append(2.0 * tau)
    return float(np.mean(taus)) if taus else float("nan")


def post_select(sset: SampleSet, f: float) -> SampleSet:
    """Keep the ceil(f*W) records with energy nearest the parent mean.

    The window is symmetric around E_mean of the *parent* set; ties are
    broken by record order, so shrinking f yields nested subsets.  The
    implied window width is recorded on the returned set.
    """
    if not 0.0 < f <= 1.0:
        raise ValueError("retained fraction must lie in (0, 1]")
    if len(sset) == 0:
        raise ValueError("cannot post-select an empty sample set")
    keep = math.ceil(f * len(sset))
    if keep < 1:
        raise ValueError("post-selection would retain no records")
    e_mean = sset.E.mean()
    dist = np.abs(sset.E - e_mean)
    order = np.argsort(dist, kind="stable")[:keep]
    idx = np.sort(order)
    width = 2.0 * float(dist[idx].max()) if keep > 0 else 0.0
    return sset.subset(idx, window_width=width)


DEFAULT_F_GRID = (1.0, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1, 0.05)


@dataclass
class PostSelectionCurve:
    """Variance of N0 versus retained fraction f at fixed temperature."""

    points: list          # of (f, delta_E, var_N0, stderr_var)
    E_mean: float
    T: float | None = None


def post_selection_curve(sset: SampleSet, f_grid=DEFAULT_F_GRID) -> PostSelectionCurve:
    fs = sorted(set(f_grid), reverse=True)
    if fs[0] > 1.0 or fs[-1] <= 0.0:
        raise ValueError("f grid must lie in (0, 1]")
    pts = []
    for f in fs:
        sub = post_select(sset, f)
        est = moments(sub)
        pts.append((f, sub.window_width, est.var_N0, est.stderr_var))
    beta = sset.params.beta
    return PostSelectionCurve(points=pts, E_mean=float(sset.E.mean()),
                              T=1.0 / beta if beta else None)


CONDITION_LIMIT = 1e8


def extrapolate_micro(curve: PostSelectionCurve, fit_degree: int = 2,
                      f_fit_max: float = 1.0):
    """Polynomial fit of var(f), intercept at f = 0 with propagated stderr.

    Points are weighted by 1/stderr^2 when every stderr is finite and
    positive, otherwise fitted unweighted.  ``f_fit_max`` drops the
    wide-window points from the fit: near f = 1 the variance rises toward
    the full canonical value, and that steep section can steer a low-order
    polynomial away from the f -> 0 limit.
    """
    pts = [p for p in curve.points if p[0] <= f_fit_max]
    if len(pts) < fit_degree + 2:
        raise ValueError(f"need at least {fit_degree + 2} points for a "
                         f"degree-{fit_degree} fit, got {len(pts)}")
    f = np.array([p[0] for p in pts])
    v = np.array([p[2] for p in pts])
    s = np.array([p[3] for p in pts])
    weighted = np.all(np.isfinite(s)) and np.all(s > 0)
    vander = np.vander(f, fit_degree + 1)
    scaled = vander / s[:, None] if weighted else vander
    cond = np.linalg.cond(scaled)
    if cond > CONDITION_LIMIT:
        raise ValueError(f"extrapolation fit is ill-conditioned "
                         f"(condition number {cond:.2e}); thin the f grid "
                         f"or lower the degree")
    if weighted:
        coef, cov = np.polyfit(f, v, fit_degree, w=1.0 / s, cov="unscaled")
        stderr = float(np.sqrt(cov[-1, -1]))
    else:
        coef = np.polyfit(f, v, fit_degree)
        resid = v - np.polyval(coef, f)
        dof = max(len(pts) - (fit_degree + 1), 1)
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(vander.T @ vander)
        stderr = float(np.sqrt(cov[-1, -1]))
    return float(coef[-1]), stderr


def micro_variance_repeated(system: System, params: SamplerParams,
                            repeats: int = 4, f_grid=DEFAULT_F_GRID,
                            fit_degree: int = 2, threads: int = 1,
                            f_fit_max: float = 1.0):
    """Full post-selection analysis over independent parent sets.

    Returns (var_micro, stderr, curves); the error is the spread of the
    per-parent extrapolated intercepts.
    """
    if repeats < 2:
        raise ValueError("need at least 2 repeats for a spread estimate")
    intercepts = []
    curves = []
    for r in range(repeats):
        p = SamplerParams(beta=params.beta, samples_target=params.samples_target,
                          seed=params.seed + 7919 * r, gamma=params.gamma,
                          burn_in_steps=params.burn_in_steps,
                          thinning=params.thinning,
                          chain_count=params.chain_count)
        parent = run_chains(system, p, threads=threads)
        curve = post_selection_curve(parent, f_grid)
        curves.append(curve)
        intercepts.append(extrapolate_micro(curve, fit_degree, f_fit_max)[0])
    intercepts = np.array(intercepts)
    return (float(intercepts.mean()),
            float(intercepts.std(ddof=1) / math.sqrt(repeats)),
            curves)


@dataclass
class PeakScan:
    grid: list            # of (T, MomentEstimate)
    T_max: float
    var_max: float


def _system_at(trap: TrapSpec, N: int, g: float, T: float) -> System:
    basis = build_basis(trap, default_cutoff(T))
    return System(basis=basis, N=N, g=g)


def scan_peak(trap: TrapSpec, N: int, g: float, t_grid, params: SamplerParams,
              threads: int = 1) -> PeakScan:
    """Sample the variance across temperatures and locate its maximum.

    The peak temperature comes from a quadratic through the three
    largest-variance grid points; a maximum on the grid boundary is
    refused because the peak is then not bracketed.
    """
    t_grid = np.asarray(sorted(t_grid), float)
    if t_grid.size < 5:
        raise ValueError("temperature grid needs at least 5 points")
    grid = []
    for T in t_grid:
        system = _system_at(trap, N, g, T)
        p = SamplerParams(beta=1.0 / T, samples_target=params.samples_target,
                          seed=params.seed, gamma=params.gamma,
                          burn_in_steps=params.burn_in_steps,
                          thinning=params.thinning,
                          chain_count=params.chain_count)
        grid.append((float(T), moments(run_chains(system, p, threads=threads))))
    variances = np.array([est.var_N0 for _, est in grid])
    i = int(np.argmax(variances))
    if i in (0, t_grid.size - 1):
        raise ValueError(f"variance is maximal at the boundary T={t_grid[i]:g}; "
                         f"extend the temperature grid to bracket the peak")
    x = t_grid[i - 1:i + 2]
    y = variances[i - 1:i + 2]
    c = np.polyfit(x, y, 2)
    if c[0] < 0:
        t_max = float(-c[1] / (2 * c[0]))
        var_max = float(np.polyval(c, t_max))
    else:
        t_max, var_max = float(t_grid[i]), float(variances[i])
    return PeakScan(grid=grid, T_max=t_max, var_max=var_max)


def s_tilde(var_micro: float, stderr_micro: float,
            var_cano: float, stderr_cano: float):
    """Ratio of microcanonical to canonical variance with propagated error."""
    if var_cano <= 0:
        raise ValueError("canonical variance must be positive")
    ratio = var_micro / var_cano
    rel = math.hypot(stderr_micro / var_micro if var_micro else 0.0,
                     stderr_cano / var_cano)
    return ratio, abs(ratio) * rel


def measure_s_tilde(trap: TrapSpec, N: int, g: float, t_max: float,
                    params: SamplerParams, repeats: int = 4,
                    f_grid=DEFAULT_F_GRID, fit_degree: int = 2,
                    threads: int = 1, f_fit_max: float = 1.0):
    """Sampler-side S-tilde at a given peak temperature.

    Runs repeated parent sets at T_max, extrapolates the post-selection
    variance to f -> 0 and divides by the canonical (f = 1) variance of
    the same parents.
    """
    system = _system_at(trap, N, g, t_max)
    p = SamplerParams(beta=1.0 / t_max, samples_target=params.samples_target,
                      seed=params.seed, gamma=params.gamma,
                      burn_in_steps=params.burn_in_steps,
                      thinning=params.thinning, chain_count=params.chain_count)
    vm, sm, curves = micro_variance_repeated(system, p, repeats=repeats,
                                             f_grid=f_grid,
                                             fit_degree=fit_degree,
                                             threads=threads,
                                             f_fit_max=f_fit_max)
    canos = np.array([c.points[0][2] for c in curves])  # f = 1 entries
    vc = float(canos.mean())
    sc = float(canos.std(ddof=1) / math.sqrt(len(canos)))
    return s_tilde(vm, sm, vc, sc) + (vm, sm, vc, sc)
