"""Experiment configuration: INI-style text in, validated dataclass out.

Parsing collects *all* validation problems before reporting, so a config
with three mistakes produces three messages, and unknown keys are
rejected outright (typo safety).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .model import TRAP_KINDS, TrapSpec

MODES = ("sample", "exact-canonical", "exact-micro", "postselect",
         "scan-peak", "s-ratio", "verify")

_KNOWN = {
    "trap": {"kind", "length", "omega", "aspect"},
    "system": {"n", "g"},
    "run": {"mode", "temperatures", "energies", "seed", "out"},
    "sampler": {"gamma", "burn_in", "thinning", "samples", "chains"},
    "postselect": {"fractions", "repeats", "fit_degree"},
}


class ConfigError(ValueError):
    """Carries every validation problem found in one pass."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" +
                         "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class ExperimentConfig:
    trap: TrapSpec
    N: int
    g: float = 0.0
    mode: str = "sample"
    temperatures: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    seed: int = 0
    out: str | None = None
    gamma: float | None = None
    burn_in: int | None = None
    thinning: int | None = None
    samples: int = 100_000
    chains: int = 8
    fractions: list = field(default_factory=lambda: [1.0, 0.8, 0.6, 0.4,
                                                     0.3, 0.2, 0.1, 0.05])
    repeats: int = 4
    fit_degree: int = 2


def _floats(text):
    return [float(tok) for tok in text.replace(",", " ").split()]


def load_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"not parseable as key=value sections: {exc}"])
    problems = []
    for section in cp.sections():
        if section not in _KNOWN:
            problems.append(f"unknown section [{section}]")
            continue
        for key in cp[section]:
            if key not in _KNOWN[section]:
                problems.append(f"unknown key {key!r} in section [{section}]")

    def get(section, key, conv, default=None):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except ValueError:
            problems.append(f"[{section}] {key}={raw!r} is not a valid "
                            f"{conv.__name__}")
            return default

    kind = get("trap", "kind", str, "")
    if kind not in TRAP_KINDS:
        problems.append(f"trap kind must be one of {TRAP_KINDS}, got {kind!r}")
    length = get("trap", "length", float, 1.0)
    omega = get("trap", "omega", float, 1.0)
    aspect = get("trap", "aspect", float, 1.0)
    if length is not None and length <= 0:
        problems.append("trap length must be positive")
    if aspect is not None and aspect < 1:
        problems.append("aspect ratio must satisfy lambda >= 1")

    n_atoms = get("system", "n", int, 0)
    if n_atoms is not None and n_atoms < 1:
        problems.append("atom number N must be >= 1")
    g = get("system", "g", float, 0.0)
    if g is not None and g < 0:
        problems.append("attractive interactions unsupported (g < 0)")

    mode = get("run", "mode", str, "sample")
    if mode not in MODES:
        problems.append(f"mode must be one of {MODES}, got {mode!r}")
    temperatures = get("run", "temperatures", _floats, [])
    energies = get("run", "energies", _floats, [])
    seed = get("run", "seed", int, 0)
    out = get("run", "out", str, None)
    if mode in ("sample", "exact-canonical", "postselect", "scan-peak") \
            and not temperatures:
        problems.append(f"mode {mode!r} needs a temperatures list")
    if mode == "exact-micro":
        if not energies:
            problems.append("mode 'exact-micro' needs an energies list")
        if kind in TRAP_KINDS and not TrapSpec(kind, length or 1.0, omega or 1.0,
                                               max(aspect or 1.0, 1.0)).integer_grid:
            problems.append(
                f"mode 'exact-micro' requires an integer energy grid; "
                f"aspect ratio {aspect} is not an integer")
        if energies and any(e != int(e) or e < 0 for e in energies):
            problems.append("exact-micro energies must be non-negative integers")
    if temperatures and any(t <= 0 for t in temperatures):
        problems.append("temperatures must be positive")

    gamma = get("sampler", "gamma", float, None)
    if gamma is not None and gamma < 0:
        problems.append("gamma must be >= 0")
    burn_in = get("sampler", "burn_in", int, None)
    thinning = get("sampler", "thinning", int, None)
    if thinning is not None and thinning < 1:
        problems.append("thinning must be >= 1")
    samples = get("sampler", "samples", int, 100_000)
    if samples is not None and samples < 1:
        problems.append("samples must be >= 1")
    chains = get("sampler", "chains", int, 8)
    if chains is not None and chains < 1:
        problems.append("chains must be >= 1")

    fractions = get("postselect", "fractions", _floats,
                    [1.0, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1, 0.05])
    if fractions and (max(fractions) > 1.0 or min(fractions) <= 0.0):
        problems.append("post-selection fractions must lie in (0, 1]")
    repeats = get("postselect", "repeats", int, 4)
    if repeats is not None and repeats < 2:
        problems.append("repeats must be >= 2")
    fit_degree = get("postselect", "fit_degree", int, 2)

    if problems:
        raise ConfigError(problems)
    trap = TrapSpec(kind, length=length, omega=omega, aspect=aspect)
    return ExperimentConfig(trap=trap, N=n_atoms, g=g, mode=mode,
                            temperatures=temperatures, energies=energies,
                            seed=seed, out=out, gamma=gamma, burn_in=burn_in,
                            thinning=thinning, samples=samples, chains=chains,
                            fractions=fractions, repeats=repeats,
                            fit_degree=fit_degree)


def serialize(cfg: ExperimentConfig) -> str:
    """Normalized text form; parse(serialize(parse(x))) == parse(x)."""
    cp = configparser.ConfigParser()
    cp["trap"] = {"kind": cfg.trap.kind}
    if cfg.trap.kind == "ring1d":
        cp["trap"]["length"] = repr(cfg.trap.length)
    if cfg.trap.kind == "harmonic1d":
        cp["trap"]["omega"] = repr(cfg.trap.omega)
    if cfg.trap.kind == "harmonic3d":
        cp["trap"]["aspect"] = repr(cfg.trap.aspect)
    cp["system"] = {"n": str(cfg.N), "g": repr(cfg.g)}
    run = {"mode": cfg.mode, "seed": str(cfg.seed)}
    if cfg.temperatures:
        run["temperatures"] = " ".join(repr(t) for t in cfg.temperatures)
    if cfg.energies:
        run["energies"] = " ".join(repr(e) for e in cfg.energies)
    if cfg.out:
        run["out"] = cfg.out
    cp["run"] = run
    sampler = {"samples": str(cfg.samples), "chains": str(cfg.chains)}
    if cfg.gamma is not None:
        sampler["gamma"] = repr(cfg.gamma)
    if cfg.burn_in is not None:
        sampler["burn_in"] = str(cfg.burn_in)
    if cfg.thinning is not None:
        sampler["thinning"] = str(cfg.thinning)
    cp["sampler"] = sampler
    cp["postselect"] = {
        "fractions": " ".join(repr(f) for f in cfg.fractions),
        "repeats": str(cfg.repeats),
        "fit_degree": str(cfg.fit_degree),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
