"""Trap geometries, truncated mode bases and Fock-state energies.

Everything is expressed in the natural units of each trap:

* ``ring1d`` -- a 1D box of length ``L`` with periodic boundary conditions.
  Mode energies are ``n**2`` in units of ``2 pi^2 hbar^2 / (m L^2)``;
  temperatures share the same unit and the coupling ``g`` enters only
  through the constant density overlap ``1/L``.
* ``harmonic1d`` -- energies ``n`` in units of ``hbar omega``
  (``hbar = m = omega = 1``).
* ``harmonic3d`` -- energies ``aspect*(nx+ny) + nz`` in units of
  ``hbar omega_z`` with aspect ratio ``aspect = omega_perp / omega_z``
  (``hbar = m = omega_z = 1``).  The ground-state energy is shifted to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hermite import squared_overlap_table

TRAP_KINDS = ("ring1d", "harmonic1d", "harmonic3d")

DEFAULT_MODE_LIMIT = 4_000_000


class ResourceError(RuntimeError):
    """A requested table or basis would exceed the configured budget."""


@dataclass(frozen=True)
class TrapSpec:
    """Trap geometry plus the unit conventions attached to it."""

    kind: str
    length: float = 1.0       # ring1d only: box/ring length L
    omega: float = 1.0        # harmonic1d only: unit setter, never enters numerics
    aspect: float = 1.0       # harmonic3d only: lambda = omega_perp / omega_z

    def __post_init__(self):
        if self.kind not in TRAP_KINDS:
            raise ValueError(f"unknown trap kind {self.kind!r}, expected one of {TRAP_KINDS}")
        if self.kind == "ring1d" and self.length <= 0:
            raise ValueError("ring length must be positive")
        if self.kind == "harmonic3d" and self.aspect < 1:
            raise ValueError("aspect ratio must satisfy lambda >= 1")

    @property
    def integer_grid(self) -> bool:
        """Whether mode energies all land on an integer lattice."""
        if self.kind == "harmonic3d":
            return float(self.aspect).is_integer()
        return True


@dataclass(frozen=True)
class Mode:
    index: int
    qn: tuple[int, ...]
    energy: float


@dataclass
class ModeBasis:
    """Ordered truncated single-particle basis for one trap.

    Mode 0 is always the unique zero-energy ground mode and energies are
    non-decreasing along the enumeration.  The density-overlap table
    ``I(i, j)`` is exposed through :meth:`overlap`; for harmonic traps it
    is factorized per Cartesian dimension and built lazily on first use.
    """

    trap: TrapSpec
    modes: list[Mode]
    cutoff_energy: int
    energies: np.ndarray = field(repr=False)
    qns: np.ndarray = field(repr=False)
    _dim_table: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def dim_overlaps(self) -> np.ndarray:
        """Per-dimension squared-wavefunction overlap table (harmonic only)."""
        if self.trap.kind == "ring1d":
            raise ValueError("ring trap has a constant overlap, no per-dimension table")
        if self._dim_table is None:
            nmax = int(self.qns.max())
            self._dim_table = squared_overlap_table(nmax)
        return self._dim_table

    @property
    def overlap_prefactor(self) -> float:
        """Scale factor multiplying the product of per-dimension overlaps.

        Each Cartesian dimension of frequency ``w`` contributes
        ``sqrt(w)`` (its inverse oscillator length) in natural units, so a
        3D trap with two transverse dimensions at ``lambda`` contributes
        ``lambda`` overall.
        """
        if self.trap.kind == "harmonic3d":
            return float(self.trap.aspect)
        return 1.0

    def overlap(self, i: int, j: int) -> float:
        """Density overlap I(i, j) = int |phi_i|^2 |phi_j|^2."""
        if self.trap.kind == "ring1d":
            return 1.0 / self.trap.length
        table = self.dim_overlaps()
        val = self.overlap_prefactor
        for a, b in zip(self.qns[i], self.qns[j]):
            val *= table[a, b]
        return val

    def levels(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct energies and their degeneracies, in increasing order."""
        eps, deg = np.unique(self.energies, return_counts=True)
        return eps, deg


def _ring_modes(cutoff: int):
    nmax = int(np.floor(np.sqrt(cutoff)))
    out = [(0,)]
    for n in range(1, nmax + 1):
        out.append((-n,))
        out.append((n,))
    return [(q, float(q[0] * q[0])) for q in out]


def _harmonic1d_modes(cutoff: int):
    return [((n,), float(n)) for n in range(cutoff + 1)]


def _harmonic3d_modes(cutoff: int, aspect: float):
    out = []
    n_perp_max = int(np.floor(cutoff / aspect))
    for nx in range(n_perp_max + 1):
        for ny in range(n_perp_max + 1):
            e_perp = aspect * (nx + ny)
            if e_perp > cutoff:
                continue
            for nz in range(int(np.floor(cutoff - e_perp)) + 1):
                out.append(((nx, ny, nz), e_perp + nz))
    return out


def build_basis(trap: TrapSpec, cutoff_energy: int,
                mode_limit: int = DEFAULT_MODE_LIMIT) -> ModeBasis:
    """Enumerate every mode with energy <= cutoff_energy.

    Modes are sorted by energy, ties broken lexicographically on quantum
    numbers.  Raises :class:`ResourceError` when the enumeration would
    exceed ``mode_limit`` modes.
    """
    if cutoff_energy < 1:
        raise ValueError("cutoff_energy must be >= 1")
    if trap.kind == "ring1d":
        raw = _ring_modes(cutoff_energy)
    elif trap.kind == "harmonic1d":
        raw = _harmonic1d_modes(cutoff_energy)
    else:
        est = (int(cutoff_energy / trap.aspect) + 1) ** 2 * (cutoff_energy + 1)
        if est > 8 * mode_limit:
            raise ResourceError(
                f"harmonic3d basis at cutoff {cutoff_energy} would enumerate "
                f"roughly {est // 8} modes, above the limit of {mode_limit}")
        raw = _harmonic3d_modes(cutoff_energy, trap.aspect)
    if len(raw) > mode_limit:
        raise ResourceError(
            f"basis would contain {len(raw)} modes, above the limit of {mode_limit}")
    raw.sort(key=lambda t: (t[1], t[0]))
    modes = [Mode(i, qn, e) for i, (qn, e) in enumerate(raw)]
    energies = np.array([m.energy for m in modes])
    qns = np.array([m.qn for m in modes], dtype=np.int64)
    return ModeBasis(trap=trap, modes=modes, cutoff_energy=cutoff_energy,
                     energies=energies, qns=qns)


def default_cutoff(temperature: float) -> int:
    """Truncation energy in trap quanta: generous multiple of k_B T."""
    return max(4, int(np.ceil(12.0 * temperature)))


@dataclass
class FockState:
    """Occupation vector over a basis with cached energies.

    ``occupations`` is sparse: only occupied modes appear.  The cached
    single-particle energy ``e_sp`` and interaction energy ``e_int`` (for
    the coupling ``g`` the state was built with) are updated incrementally
    by :meth:`apply_move`.
    """

    occupations: dict[int, int]
    N: int
    g: float
    e_sp: float
    e_int: float

    @classmethod
    def from_occupations(cls, basis: ModeBasis, occupations: dict[int, int],
                         g: float = 0.0) -> "FockState":
        occ = {m: int(n) for m, n in occupations.items() if n > 0}
        if any(n < 0 for n in occupations.values()):
            raise ValueError("occupations must be non-negative")
        state = cls(occupations=occ, N=sum(occ.values()), g=g, e_sp=0.0, e_int=0.0)
        state.e_sp = sum(n * basis.energies[m] for m, n in occ.items())
        state.e_int = interaction_energy(state, basis, g)
        return state

    @classmethod
    def ground(cls, basis: ModeBasis, N: int, g: float = 0.0) -> "FockState":
        return cls.from_occupations(basis, {0: N}, g)

    @property
    def energy(self) -> float:
        return self.e_sp + self.e_int

    def apply_move(self, basis: ModeBasis, move: tuple[int, int]) -> None:
        """Move one atom from mode ``move[0]`` to mode ``move[1]``."""
        i, k = move
        d_sp = basis.energies[k] - basis.energies[i]
        d_int = energy_delta(self, move, basis, self.g) - d_sp
        if self.occupations.get(i, 0) < 1:
            raise ValueError(f"source mode {i} is unoccupied")
        if i != k:
            self.occupations[i] -= 1
            if self.occupations[i] == 0:
                del self.occupations[i]
            self.occupations[k] = self.occupations.get(k, 0) + 1
            self.e_sp += d_sp
            self.e_int += d_int


def interaction_energy(state: FockState, basis: ModeBasis, g: float) -> float:
    """Fock-state expectation of the contact interaction.

    ``(g/2) * [sum_i I(i,i) N_i (N_i - 1) + 4 sum_{i<j} I(i,j) N_i N_j]``,
    i.e. the diagonal part of the two-body operator with the direct plus
    exchange factor for distinct modes.
    """
    if g < 0:
        raise ValueError("attractive interactions (g < 0) are unsupported")
    if g == 0.0 or state.N < 2:
        return 0.0
    occ = state.occupations
    if basis.trap.kind == "ring1d":
        sum_sq = sum(n * n for n in occ.values())
        return (g / (2.0 * basis.trap.length)) * (2.0 * state.N ** 2 - state.N - sum_sq)
    items = list(occ.items())
    total = 0.0
    for a, (i, ni) in enumerate(items):
        total += basis.overlap(i, i) * ni * (ni - 1)
        for j, nj in items[a + 1:]:
            total += 4.0 * basis.overlap(i, j) * ni * nj
    return 0.5 * g * total


def state_energy(state: FockState, basis: ModeBasis, g: float) -> float:
    """Total energy: single-particle part plus interaction expectation."""
    e_sp = sum(n * basis.energies[m] for m, n in state.occupations.items())
    return e_sp + interaction_energy(state, basis, g)


def energy_delta(state: FockState, move: tuple[int, int], basis: ModeBasis,
                 g: float) -> float:
    """Energy change of moving one atom i -> k, without building the moved state.

    Cost is O(number of occupied modes) in the interacting case and O(1)
    otherwise.
    """
    i, k = move
    occ = state.occupations
    ni = occ.get(i, 0)
    if ni < 1:
        raise ValueError(f"source mode {i} is unoccupied")
    if i == k:
        return 0.0
    d_sp = basis.energies[k] - basis.energies[i]
    if g == 0.0:
        return d_sp
    nk = occ.get(k, 0)
    if basis.trap.kind == "ring1d":
        # closed form: E_int depends only on sum of squared occupations
        return d_sp + (g / basis.trap.length) * (ni - nk - 1)
    cross = 0.0
    for m, nm in occ.items():
        if m == i or m == k:
            continue
        cross += (basis.overlap(k, m) - basis.overlap(i, m)) * nm
    d_int = (-2.0 * basis.overlap(i, i) * (ni - 1)
             + 2.0 * basis.overlap(k, k) * nk
             + 4.0 * cross
             + 4.0 * basis.overlap(i, k) * (ni - nk - 1))
    return d_sp + 0.5 * g * d_int


@dataclass(frozen=True)
class System:
    """A trapped gas: basis, atom number and coupling strength."""

    basis: ModeBasis
    N: int
    g: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one atom")
        if self.g < 0:
            raise ValueError("attractive interactions (g < 0) are unsupported")

    def descriptors(self) -> dict:
        t = self.basis.trap
        return {
            "trap": t.kind,
            "length": t.length,
            "omega": t.omega,
            "aspect": t.aspect,
            "N": self.N,
            "g": self.g,
            "cutoff": self.basis.cutoff_energy,
        }
