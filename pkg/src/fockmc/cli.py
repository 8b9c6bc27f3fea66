"""Command-line front end.

Every run writes CSV artifacts plus a manifest (seed, config hash,
package version) into the output directory; CSV bodies are deterministic
functions of the config, so a rerun with the same file is byte-identical.
Files are written to a temporary name and renamed into place, so an
interrupted run never leaves a truncated CSV behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, oracles, sampler, stats
from .config import ConfigError, ExperimentConfig, load_config, serialize
from .model import ResourceError, System, TrapSpec, build_basis, default_cutoff
from .presets import get_preset
from .sampler import SamplerParams, run_chains


def _write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _params(cfg: ExperimentConfig, beta: float) -> SamplerParams:
    return SamplerParams(beta=beta, samples_target=cfg.samples, seed=cfg.seed,
                         gamma=cfg.gamma, burn_in_steps=cfg.burn_in,
                         thinning=cfg.thinning, chain_count=cfg.chains)


def _system(cfg: ExperimentConfig, temperature: float) -> System:
    basis = build_basis(cfg.trap, default_cutoff(temperature))
    return System(basis=basis, N=cfg.N, g=cfg.g)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(rows, header) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _run_sample(cfg, out, threads):
    for temperature in cfg.temperatures:
        system = _system(cfg, temperature)
        sset = run_chains(system, _params(cfg, 1.0 / temperature),
                          threads=threads)
        path = os.path.join(out, f"samples_T{temperature:g}.csv")
        import io
        buf = io.StringIO()
        sampler.write_csv(sset, buf)
        _write_atomic(path, buf.getvalue())
    return 0


def _run_exact_canonical(cfg, out, threads):
    rows = []
    for temperature in cfg.temperatures:
        levels = oracles.energy_levels(cfg.trap, default_cutoff(temperature))
        mean, var = oracles.canonical_moments(levels, cfg.N, 1.0 / temperature)
        rows.append((temperature, mean, var, 0.0, "exact"))
    _write_atomic(os.path.join(out, "exact_canonical.csv"),
                  _csv(rows, ("T", "mean_N0", "var_N0", "stderr", "source")))
    return 0


def _run_exact_micro(cfg, out, threads):
    energies = [int(e) for e in cfg.energies]
    e_max = max(energies)
    rows = []
    try:
        table = oracles.micro_recurrence(cfg.trap, cfg.N, e_max)
        for energy in energies:
            dist = oracles.micro_p_N0(table, cfg.N, energy)
            mean, var = oracles.distribution_moments(dist)
            rows.append((energy, mean, var, "exact"))
    except ResourceError:
        # exact-integer table too large: fall back to the float moment
        # recurrence, tilted toward the requested energy range
        sigma = (1.0 / cfg.temperatures[0]) if cfg.temperatures else 0.2
        mm = oracles.micro_moments_large(cfg.trap, cfg.N,
                                         int(1.3 * e_max) + 16, sigma)
        for energy in energies:
            if not mm.valid[energy]:
                raise ValueError(f"energy E={energy} outside the precision "
                                 f"window of the moment recurrence; adjust "
                                 f"the temperatures hint") from None
            rows.append((energy, float(mm.mean[energy]), float(mm.var[energy]),
                         "exact"))
    _write_atomic(os.path.join(out, "exact_micro.csv"),
                  _csv(rows, ("E", "mean_N0", "var_N0", "source")))
    return 0


def _run_postselect(cfg, out, threads):
    curve_rows, extrap_rows = [], []
    for temperature in cfg.temperatures:
        system = _system(cfg, temperature)
        vm, sm, curves = stats.micro_variance_repeated(
            system, _params(cfg, 1.0 / temperature), repeats=cfg.repeats,
            f_grid=cfg.fractions, fit_degree=cfg.fit_degree, threads=threads)
        for curve in curves[:1]:   # one representative curve per temperature
            for f, delta_e, var, stderr in curve.points:
                w = math.ceil(f * cfg.samples)
                curve_rows.append((temperature, f, delta_e, var, stderr, w))
        extrap_rows.append((temperature, vm, sm))
    _write_atomic(os.path.join(out, "postselect.csv"),
                  _csv(curve_rows, ("T", "f", "delta_E", "var_N0", "stderr", "W")))
    _write_atomic(os.path.join(out, "micro_extrapolated.csv"),
                  _csv(extrap_rows, ("T", "var_N0", "stderr")))
    return 0


def _run_scan_peak(cfg, out, threads):
    scan = stats.scan_peak(cfg.trap, cfg.N, cfg.g, cfg.temperatures,
                           _params(cfg, 1.0 / cfg.temperatures[0]),
                           threads=threads)
    rows = [(temperature, est.mean_N0, est.var_N0, est.stderr_var, "fss")
            for temperature, est in scan.grid]
    for temperature, _ in scan.grid:
        levels = oracles.energy_levels(cfg.trap, default_cutoff(temperature))
        mean, var = oracles.canonical_moments(levels, cfg.N, 1.0 / temperature)
        rows.append((temperature, mean, var, 0.0, "exact"))
    _write_atomic(os.path.join(out, "scan.csv"),
                  _csv(rows, ("T", "mean_N0", "var_N0", "stderr", "source")))
    _write_atomic(os.path.join(out, "peak.csv"),
                  _csv([(scan.T_max, scan.var_max)], ("T_max", "var_max")))
    return 0


EXACT_S_MAX_N = 2000


def _run_s_ratio(cfg, out, threads):
    rows = []
    t_max, var_cano, _ = oracles.canonical_peak(cfg.trap, cfg.N)
    rows.append(("T_max", t_max, 0.0))
    rows.append(("var_cano_max", var_cano, 0.0))
    if cfg.trap.kind != "ring1d" and cfg.trap.integer_grid \
            and cfg.N <= EXACT_S_MAX_N:
        res = oracles.exact_S(cfg.trap, cfg.N)
        rows.append(("S_exact", res.S, 0.0))
        rows.append(("S_tilde_exact", res.S_tilde, 0.0))
    if cfg.samples:
        ratio, err, vm, sm, vc, sc = stats.measure_s_tilde(
            cfg.trap, cfg.N, cfg.g, t_max, _params(cfg, 1.0 / t_max),
            repeats=cfg.repeats, f_grid=cfg.fractions,
            fit_degree=cfg.fit_degree, threads=threads)
        rows.append(("S_tilde_fss", ratio, err))
        rows.append(("var_micro_fss", vm, sm))
        rows.append(("var_cano_fss", vc, sc))
    _write_atomic(os.path.join(out, "s_ratio.csv"),
                  _csv(rows, ("name", "value", "stderr")))
    return 0


def _run_verify(cfg, out, threads):
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:                     # noqa: BLE001
            checks.append((name, False, str(exc)))

    trap1d = TrapSpec("harmonic1d")

    def _closed_form():
        # closed form assumes the untruncated spectrum: generous cutoff
        levels = oracles.energy_levels(trap1d, 400)
        for temperature in np.linspace(2.0, 12.0, 5):
            dist = oracles.canonical_p_N0(levels, 20, 1.0 / temperature)
            ref = np.array([oracles.harmonic1d_closed_form(n0, 20, 1.0 / temperature)
                            for n0 in range(21)])
            assert np.abs(dist.p - ref).max() < 1e-10

    def _partitions():
        table = oracles.micro_recurrence(trap1d, 8, 12)
        for n in range(9):
            for e in range(13):
                assert table.gamma_ex(n, e) == oracles.partitions_1d(n, e)
        assert all(oracles.partitions_1d(n, n + 1) == 1 for n in range(1, 51))

    def _zeta():
        a = oracles.asymptotics()
        assert abs(a["S_3D"] - a["micro_limit"] / a["cano_limit"]) < 1e-12

    def _normalization():
        levels = oracles.energy_levels(trap1d, 300)
        for temperature in np.linspace(2.0, 30.0, 5):
            dist = oracles.canonical_p_N0(levels, 50, 1.0 / temperature)
            assert abs(dist.p.sum() - 1.0) < 1e-10

    def _moment_recurrence():
        table = oracles.micro_recurrence(trap1d, 6, 12)
        mm = oracles.micro_moments_large(trap1d, 6, 12, 0.3)
        for energy in range(1, 13):
            dist = oracles.micro_p_N0(table, 6, energy)
            mean, var = oracles.distribution_moments(dist)
            assert abs(mm.mean[energy] - mean) < 1e-8
            assert abs(mm.var[energy] - var) < 1e-7

    def _cutoff_doubling():
        temperature = 17.6
        for cut in (default_cutoff(temperature), 2 * default_cutoff(temperature)):
            levels = oracles.energy_levels(trap1d, cut)
            mean, var = oracles.canonical_moments(levels, 100, 1.0 / temperature)
        base = oracles.canonical_moments(
            oracles.energy_levels(trap1d, default_cutoff(temperature)),
            100, 1.0 / temperature)
        assert abs(mean - base[0]) < 1e-3 and abs(var - base[1]) < 1e-2

    check("closed-form vs recurrence", _closed_form)
    check("partition recurrences agree", _partitions)
    check("zeta-limit identity", _zeta)
    check("canonical normalization", _normalization)
    check("moment recurrence vs exact table", _moment_recurrence)
    check("cutoff doubling stable", _cutoff_doubling)

    n_pass = sum(1 for _, ok, _ in checks if ok)
    for name, ok, msg in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({msg})" if msg else ""))
    print(f"{n_pass}/{len(checks)} checks passed")
    _write_atomic(os.path.join(out, "verify.csv"),
                  _csv([(n, int(ok)) for n, ok, _ in checks],
                       ("check", "passed")))
    return 0 if n_pass == len(checks) else 1


_RUNNERS = {
    "sample": _run_sample,
    "exact-canonical": _run_exact_canonical,
    "exact-micro": _run_exact_micro,
    "postselect": _run_postselect,
    "scan-peak": _run_scan_peak,
    "s-ratio": _run_s_ratio,
    "verify": _run_verify,
}


def run(cfg: ExperimentConfig, out: str, threads: int = 1) -> int:
    os.makedirs(out, exist_ok=True)
    normalized = serialize(cfg)
    status = _RUNNERS[cfg.mode](cfg, out, threads)
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "config_sha256": hashlib.sha256(normalized.encode()).hexdigest(),
        "created_unix": time.time(),
    }
    _write_atomic(os.path.join(out, "manifest.json"),
                  json.dumps(manifest, indent=2) + "\n")
    _write_atomic(os.path.join(out, "config.ini"), normalized)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fockmc",
        description="Monte Carlo occupation statistics of trapped Bose gases")
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="path to an INI experiment config")
    src.add_argument("--preset", help="named preset (figure2..figure8)")
    parser.add_argument("--out", help="output directory (default ./fockmc-out; "
                                      "env FOCKMC_OUT)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int,
                        help="worker threads (env FOCKMC_THREADS; default 1)")
    parser.add_argument("--scale", type=float, default=1.0,
                        help="divide N and sampling budgets by this factor")
    args = parser.parse_args(argv)

    try:
        if args.preset:
            cfg = get_preset(args.preset, scale=args.scale)
        else:
            with open(args.config) as fh:
                cfg = load_config(fh.read())
            if args.scale != 1.0:
                cfg.N = max(1, int(round(cfg.N / args.scale)))
                cfg.samples = max(1, int(round(cfg.samples / args.scale)))
    except (ConfigError, KeyError, OSError) as exc:
        print(exc, file=sys.stderr)
        return 2

    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.out or os.environ.get("FOCKMC_OUT", "fockmc-out")
    threads = args.threads if args.threads is not None else \
        int(os.environ.get("FOCKMC_THREADS", "1"))
    try:
        return run(cfg, out, threads=threads)
    except (ValueError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
