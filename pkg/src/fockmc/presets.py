"""Ready-made experiment configurations.

Each preset mirrors one of the published benchmark setups at a size that
runs on a desk machine; ``scale`` divides the atom number and sampling
budget for even quicker runs.  Temperature grids bracket the fluctuation
peak of each configuration (located with the exact canonical oracle).
"""

from __future__ import annotations

import math

from .config import ExperimentConfig
from .model import TrapSpec

# circumference of the unit ring; with L = 1 the Hartree cost of leaving
# the condensate (~ g N / L) would dwarf the temperature at the published
# couplings and freeze the walk
RING_LENGTH = 2 * math.pi


def _grid(center, lo=0.5, hi=1.3, n=11):
    step = (hi - lo) / (n - 1)
    return [round(center * (lo + i * step), 4) for i in range(n)]


def _scaled(n, scale):
    return max(1, int(round(n / scale)))


def figure2(scale=1.0):
    """Ring, N=100: canonical variance across the peak, ideal vs interacting."""
    return ExperimentConfig(
        trap=TrapSpec("ring1d", length=RING_LENGTH), N=_scaled(100, scale),
        g=1.0, mode="scan-peak", temperatures=_grid(22.9),
        samples=_scaled(200_000, scale), chains=8)


def figure3(scale=1.0):
    """Ring, N=100, low temperature: variance vs coupling strength."""
    return ExperimentConfig(
        trap=TrapSpec("ring1d", length=RING_LENGTH), N=_scaled(100, scale),
        g=1.0, mode="sample", temperatures=[5.0],
        samples=_scaled(200_000, scale), chains=8)


def figure4(scale=1.0):
    """1D harmonic trap, N=100: variance vs temperature, g in {0, 0.1}."""
    return ExperimentConfig(
        trap=TrapSpec("harmonic1d"), N=_scaled(100, scale), g=0.1,
        mode="scan-peak", temperatures=_grid(17.6),
        samples=_scaled(200_000, scale), chains=8)


def figure5(scale=1.0):
    """1D harmonic trap, N=100: post-selected variance vs temperature."""
    return ExperimentConfig(
        trap=TrapSpec("harmonic1d"), N=_scaled(100, scale), g=0.0,
        mode="postselect", temperatures=_grid(17.6, lo=0.6, hi=1.2, n=7),
        samples=_scaled(400_000, scale), chains=8)


def figure6(scale=10.0):
    """3D trap: post-selection curves at the peak (published at N=10^4)."""
    return ExperimentConfig(
        trap=TrapSpec("harmonic3d", aspect=1.0), N=_scaled(10_000, scale),
        g=0.0, mode="postselect", temperatures=[_scaled(10_000, scale) ** (1 / 3) * 0.88],
        samples=_scaled(400_000, scale / 10.0), chains=8)


def figure7(scale=1.0):
    """3D isotropic trap: exact ensemble ratios S and S-tilde vs N."""
    return ExperimentConfig(
        trap=TrapSpec("harmonic3d", aspect=1.0), N=_scaled(1000, scale),
        g=0.0, mode="s-ratio", temperatures=[],
        samples=_scaled(400_000, scale), chains=8)


def figure7_large(scale=1.0):
    """Opt-in long run: sampler-side S-tilde at N=10^5 (hours, no CI gate)."""
    return ExperimentConfig(
        trap=TrapSpec("harmonic3d", aspect=1.0), N=_scaled(100_000, scale),
        g=0.0, mode="s-ratio", temperatures=[],
        samples=_scaled(2_000_000, scale), chains=8)


def figure8(scale=1.0):
    """3D trap, N=100, weak coupling: canonical and post-selected variance."""
    return ExperimentConfig(
        trap=TrapSpec("harmonic3d", aspect=1.0), N=_scaled(100, scale), g=0.01,
        mode="postselect", temperatures=_grid(3.29, lo=0.6, hi=1.2, n=7),
        samples=_scaled(200_000, scale), chains=8)


PRESETS = {
    "figure2": figure2,
    "figure3": figure3,
    "figure4": figure4,
    "figure5": figure5,
    "figure6": figure6,
    "figure7": figure7,
    "figure7-large": figure7_large,
    "figure8": figure8,
}


def get_preset(name: str, scale: float = 1.0) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: "
                       f"{', '.join(sorted(PRESETS))}")
    return PRESETS[name](scale) if scale != 1.0 else PRESETS[name]()
