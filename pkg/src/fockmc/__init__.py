"""Monte Carlo occupation statistics of trapped Bose gases.

Samples Fock-state configurations of an ideal or weakly interacting gas
in the canonical ensemble, post-selects fixed-energy windows to reach the
microcanonical ensemble, and cross-checks both against exact recurrence
evaluations.
"""

__version__ = "0.1.0"

from .model import (FockState, ModeBasis, ResourceError, System, TrapSpec,
                    build_basis, default_cutoff)
from .sampler import SamplerParams, SampleSet, run_chain, run_chains

__all__ = [
    "FockState", "ModeBasis", "ResourceError", "System", "TrapSpec",
    "build_basis", "default_cutoff",
    "SamplerParams", "SampleSet", "run_chain", "run_chains",
]
