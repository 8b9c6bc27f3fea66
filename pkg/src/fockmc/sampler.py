"""Metropolis-Hastings random walk over Fock states.

`run_chain` / `run_chains` drive the compiled kernel and return
array-backed :class:`SampleSet` objects.  `propose` and
`acceptance_log_prob` are reference implementations of a single step with
exact log proposal densities; they are what the desk-scale detailed
balance and stationarity tests exercise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernel
from .model import FockState, ModeBasis, System


def _mix64(x: int) -> int:
    """splitmix64 finalizer; decorrelates nearby user seeds.

    Chain streams are the mixed seed XOR the chain id.  Mixing first
    matters: raw seeds 1, 2, 3 XORed with small chain ids would produce
    overlapping stream sets across runs.
    """
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def default_gamma(n_atoms: int, beta: float) -> float:
    """Proposal tempering: 0.2 at N=100 and 0.1 at N=1000, log-interpolated,
    but never above 0.8*beta.

    The cap is essential: once gamma exceeds beta, orbitals with
    exp(-gamma*eps) below their Boltzmann occupancy exp(-beta*eps) are
    proposed so rarely that the chain takes exp((gamma-beta)*eps) steps to
    populate them -- the stationary law stays correct while the mixing
    time explodes.  (The two anchor values correspond to 0.8/T at the
    fluctuation peak of the isotropic 3D trap, which is where they were
    tuned.)
    """
    gamma = 0.2 - 0.1 * (math.log10(max(n_atoms, 1)) - 2.0)
    gamma = min(0.4, max(0.05, gamma))
    return min(gamma, 0.8 * beta)


@dataclass(frozen=True)
class SamplerParams:
    """Knobs of one sampling run.  ``None`` fields resolve from the system."""

    beta: float
    samples_target: int
    seed: int = 0
    gamma: float | None = None
    burn_in_steps: int | None = None
    thinning: int | None = None
    chain_count: int = 1

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.samples_target < 1:
            raise ValueError("samples_target must be >= 1")
        if self.thinning is not None and self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.chain_count < 1:
            raise ValueError("chain_count must be >= 1")

    def resolved(self, system: System) -> "SamplerParams":
        n = system.N
        return replace(
            self,
            gamma=(self.gamma if self.gamma is not None
                   else default_gamma(n, self.beta)),
            burn_in_steps=(self.burn_in_steps if self.burn_in_steps is not None
                           else 50 * n),
            thinning=self.thinning if self.thinning is not None else n,
        )


@dataclass(frozen=True)
class SampleRecord:
    N0: int
    E: float
    chain_id: int
    step_index: int


class SampleSet:
    """Records of (N0, E) from one or more chains over one system."""

    def __init__(self, N0, E, chain_id, step_index, params: SamplerParams,
                 descriptors: dict, window_width: float | None = None,
                 equilibration_flag: bool = False):
        self.N0 = np.asarray(N0, dtype=np.int64)
        self.E = np.asarray(E, dtype=np.float64)
        self.chain_id = np.asarray(chain_id, dtype=np.int64)
        self.step_index = np.asarray(step_index, dtype=np.int64)
        self.params = params
        self.descriptors = dict(descriptors)
        self.window_width = window_width
        self.equilibration_flag = equilibration_flag

    def __len__(self) -> int:
        return self.N0.size

    @property
    def W(self) -> int:
        return self.N0.size

    def __iter__(self):
        for n0, e, c, s in zip(self.N0, self.E, self.chain_id, self.step_index):
            yield SampleRecord(int(n0), float(e), int(c), int(s))

    def chains(self) -> list[np.ndarray]:
        """Index arrays of each chain, in chain-id order."""
        return [np.flatnonzero(self.chain_id == c)
                for c in np.unique(self.chain_id)]

    def subset(self, idx: np.ndarray, window_width: float | None = None) -> "SampleSet":
        return SampleSet(self.N0[idx], self.E[idx], self.chain_id[idx],
                         self.step_index[idx], self.params, self.descriptors,
                         window_width=window_width,
                         equilibration_flag=self.equilibration_flag)


def thermal_start(system: System, beta: float) -> FockState:
    """Deterministic near-equilibrium initial state.

    Excited modes get the integer part of their Bose-Einstein occupancy
    (scaled down if that overshoots N) and the remainder condenses.
    Starting every chain fully condensed instead leaves a long transient
    that all chains share, which the between-chain error estimate cannot
    detect.
    """
    basis = system.basis
    eps = basis.energies
    occ = np.zeros(basis.n_modes, np.int64)
    with np.errstate(over="ignore"):
        be = 1.0 / np.expm1(beta * eps[1:])
    total = be.sum()
    if total > system.N:
        be *= system.N / total
    base = np.floor(be).astype(np.int64)
    # largest-remainder rounding: plain flooring would drop the many modes
    # with fractional occupancy and start far too condensed
    short = int(round(be.sum())) - int(base.sum())
    if short > 0:
        frac = be - base
        base[np.argpartition(frac, -short)[-short:]] += 1
    occ[1:] = base
    occ[0] = system.N - occ[1:].sum()
    return FockState.from_occupations(
        basis, {m: int(n) for m, n in enumerate(occ) if n}, g=system.g)


def _static_tables(basis: ModeBasis, gamma: float):
    w = np.exp(-gamma * basis.energies)
    cumw = np.cumsum(w)
    return w, cumw, float(cumw[-1])


def propose(state: FockState, basis: ModeBasis, gamma: float,
            rng: np.random.Generator):
    """Draw one single-atom move; return ((i, k), log_forward, log_backward).

    The reverse density is evaluated on the post-move occupations, as the
    acceptance rule requires.
    """
    w, _, c0 = _static_tables(basis, gamma)
    occ = state.occupations
    src_modes = np.array(sorted(occ))
    src_w = np.array([w[m] * occ[m] for m in src_modes])
    a_norm = src_w.sum()
    i = int(rng.choice(src_modes, p=src_w / a_norm))
    # destination weights on occupations with the source atom removed
    dest_w = w.copy()
    for m, n in occ.items():
        dest_w[m] += w[m] * n
    dest_w[i] -= w[i]
    b_norm = dest_w.sum()  # == c0 + a_norm - w[i]
    k = int(rng.choice(basis.n_modes, p=dest_w / b_norm))
    log_forward = (math.log(w[i] * occ[i] / a_norm)
                   + math.log(dest_w[k] / b_norm))
    if k == i:
        return (i, k), log_forward, log_forward
    # reverse move k -> i on the post-move state
    a_rev = a_norm - w[i] + w[k]
    nk_after = occ.get(k, 0) + 1
    # destination normalizer of the reverse proposal equals b_norm, and the
    # reverse destination weight of mode i is w[i] * N_i (old occupation)
    log_backward = (math.log(w[k] * nk_after / a_rev)
                    + math.log(w[i] * occ[i] / b_norm))
    return (i, k), log_forward, log_backward


def acceptance_log_prob(delta_e: float, beta: float, log_forward: float,
                        log_backward: float) -> float:
    """log of the Metropolis-Hastings acceptance probability (<= 0)."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return min(0.0, -beta * delta_e + log_backward - log_forward)


def _kernel_args(system: System, gamma: float):
    basis = system.basis
    w, cumw, c0 = _static_tables(basis, gamma)
    if system.g == 0.0:
        kind = _kernel.INTER_NONE
        ring_coef = 0.0
        qns = np.zeros((1, 1), np.int64)
        table = np.zeros((1, 1))
        ndim = 0
        pref = 0.0
    elif basis.trap.kind == "ring1d":
        kind = _kernel.INTER_RING
        ring_coef = system.g / basis.trap.length
        qns = np.zeros((1, 1), np.int64)
        table = np.zeros((1, 1))
        ndim = 0
        pref = 0.0
    else:
        kind = _kernel.INTER_HARMONIC
        ring_coef = 0.0
        qns = np.ascontiguousarray(basis.qns)
        table = basis.dim_overlaps()
        ndim = qns.shape[1]
        pref = basis.overlap_prefactor
    return w, cumw, c0, kind, ring_coef, qns, table, ndim, pref


def run_chain(system: System, params: SamplerParams, chain_id: int = 0,
              initial: FockState | None = None) -> SampleSet:
    """Run a single chain; fully deterministic given (seed, chain_id)."""
    p = params.resolved(system)
    basis = system.basis
    w, cumw, c0, kind, ring_coef, qns, table, ndim, pref = _kernel_args(system, p.gamma)
    if initial is None:
        initial = thermal_start(system, p.beta)
    if initial.N != system.N:
        raise ValueError("initial state has wrong atom number")
    occ_init = np.zeros(basis.n_modes, np.int64)
    for m, n in initial.occupations.items():
        occ_init[m] = n
    seed = np.uint64(_mix64(p.seed)) ^ np.uint64(chain_id)
    n0, e, step, accepted, _ = _kernel.run_chain_kernel(
        basis.energies, w, cumw, c0, p.beta, system.N, system.g, kind,
        ring_coef, qns, table, ndim, pref,
        p.burn_in_steps, p.thinning, p.samples_target, seed, occ_init)
    cid = np.full(n0.size, chain_id, np.int64)
    out = SampleSet(n0, e, cid, step, p, system.descriptors())
    out.acceptance_rate = accepted / max(1, p.burn_in_steps + p.thinning * p.samples_target)
    return out


def run_chains(system: System, params: SamplerParams,
               threads: int = 1) -> SampleSet:
    """Run ``params.chain_count`` independent chains and merge them.

    Chains share no mutable state; the per-chain stream is seeded with
    ``seed XOR chain_id``.  The compiled kernel releases the GIL, so a
    thread pool gives real parallelism.
    """
    p = params.resolved(system)
    n_chains = p.chain_count
    per_chain = -(-p.samples_target // n_chains)
    cp = replace(p, samples_target=per_chain)
    if threads > 1 and n_chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sets = list(pool.map(lambda c: run_chain(system, cp, chain_id=c),
                                 range(n_chains)))
    else:
        sets = [run_chain(system, cp, chain_id=c) for c in range(n_chains)]
    merged = merge(sets)
    merged.equilibration_flag = any(_halves_disagree(s) for s in sets)
    return merged


def _halves_disagree(sset: SampleSet, z: float = 5.0) -> bool:
    """Crude equilibration flag: do the two halves of a chain disagree?"""
    n0 = sset.N0
    if n0.size < 16:
        return False
    half = n0.size // 2
    a, b = n0[:half].astype(float), n0[half:].astype(float)
    spread = math.sqrt(a.var() / a.size + b.var() / b.size)
    if spread == 0:
        return abs(a.mean() - b.mean()) > 0
    return abs(a.mean() - b.mean()) > z * spread


def merge(sets: list[SampleSet]) -> SampleSet:
    """Concatenate sample sets after checking they describe the same run."""
    if not sets:
        raise ValueError("nothing to merge")
    first = sets[0]
    for other in sets[1:]:
        for key, val in first.descriptors.items():
            if other.descriptors.get(key) != val:
                raise ValueError(
                    f"cannot merge sample sets: descriptor {key!r} differs "
                    f"({val!r} vs {other.descriptors.get(key)!r})")
        if other.params.beta != first.params.beta:
            raise ValueError("cannot merge sample sets: beta differs")
    return SampleSet(
        np.concatenate([s.N0 for s in sets]),
        np.concatenate([s.E for s in sets]),
        np.concatenate([s.chain_id for s in sets]),
        np.concatenate([s.step_index for s in sets]),
        first.params, first.descriptors,
        equilibration_flag=any(s.equilibration_flag for s in sets))


def write_csv(sset: SampleSet, fh) -> None:
    """Columnar text dump: descriptor/param comments, then one row per record."""
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        for key, val in sset.descriptors.items():
            fh.write(f"# {key}={val}\n")
        p = sset.params
        for key in ("beta", "gamma", "burn_in_steps", "thinning",
                    "samples_target", "seed", "chain_count"):
            fh.write(f"# {key}={getattr(p, key)}\n")
        if sset.window_width is not None:
            fh.write(f"# window_width={sset.window_width}\n")
        fh.write("chain_id,step_index,N0,E\n")
        for c, s, n0, e in zip(sset.chain_id, sset.step_index, sset.N0, sset.E):
            fh.write(f"{c},{s},{n0},{float(e)!r}\n")
    finally:
        if close:
            fh.close()


def read_csv(fh) -> SampleSet:
    close = False
    if isinstance(fh, str):
        fh = open(fh)
        close = True
    try:
        meta = {}
        header = None
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    finally:
        if close:
            fh.close()
    data = np.array(rows, dtype=object)
    param_keys = {"beta": float, "gamma": float, "burn_in_steps": int,
                  "thinning": int, "samples_target": int, "seed": int,
                  "chain_count": int}
    params = SamplerParams(**{k: conv(meta[k]) for k, conv in param_keys.items()
                              if k in meta})
    desc_conv = {"trap": str, "length": float, "omega": float, "aspect": float,
                 "N": int, "g": float, "cutoff": int}
    desc = {k: conv(meta[k]) for k, conv in desc_conv.items() if k in meta}
    window = float(meta["window_width"]) if "window_width" in meta else None
    return SampleSet(data[:, 2].astype(np.int64), data[:, 3].astype(float),
                     data[:, 0].astype(np.int64), data[:, 1].astype(np.int64),
                     params, desc, window_width=window)
