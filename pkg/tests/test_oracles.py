import math
from functools import lru_cache

import numpy as np
import pytest
from scipy.special import logsumexp

from fockmc.model import ResourceError, TrapSpec, build_basis
from fockmc.oracles import (asymptotics, canonical_mean_energy,
                            canonical_moments, canonical_p_N0, canonical_peak,
                            canonical_Z, distribution_moments, energy_levels,
                            exact_S, harmonic1d_closed_form, micro_moments_large,
                            micro_p_N0, micro_p_N0_cumulative, micro_recurrence,
                            partitions_1d)

HO1D = TrapSpec("harmonic1d")
ISO3D = TrapSpec("harmonic3d", aspect=1.0)


# ---------------------------------------------------------------------------
# canonical recurrence


def test_canonical_single_atom_is_z1():
    eps = np.array([0.0, 1.0, 2.5])
    deg = np.array([1.0, 2.0, 1.0])
    beta = 0.9
    table = canonical_Z((eps, deg), 1, beta)
    expect = math.log((deg * np.exp(-beta * eps)).sum())
    assert table.log_Z[1] == pytest.approx(expect, rel=1e-13)


def test_canonical_two_atoms_identity():
    # Z(2) = (Z1(beta)^2 + Z1(2 beta)) / 2 for ideal bosons
    eps = np.array([0.0, 1.0, 3.0])
    deg = np.array([1.0, 1.0, 2.0])
    beta = 0.6
    z1 = lambda b: (deg * np.exp(-b * eps)).sum()
    table = canonical_Z((eps, deg), 2, beta)
    assert math.exp(table.log_Z[2]) == pytest.approx(
        0.5 * (z1(beta) ** 2 + z1(2 * beta)), rel=1e-12)


def test_canonical_p_normalized_across_temperatures():
    levels = energy_levels(HO1D, 400)
    for T in np.linspace(0.5, 30.0, 20):
        dist = canonical_p_N0(levels, 100, 1.0 / T)
        assert dist.p.sum() == pytest.approx(1.0, abs=1e-12)
        assert (dist.p >= 0).all()


def test_closed_form_matches_recurrence():
    levels = energy_levels(HO1D, 600)
    for beta in (0.05, 0.3, 1.0):
        dist = canonical_p_N0(levels, 12, beta)
        for n0 in range(13):
            assert dist.p[n0] == pytest.approx(
                harmonic1d_closed_form(n0, 12, beta), rel=1e-9, abs=1e-14)


def test_closed_form_limits():
    assert sum(harmonic1d_closed_form(n0, 30, 0.4)
               for n0 in range(31)) == pytest.approx(1.0, abs=1e-12)
    # zero temperature: everything condenses
    assert harmonic1d_closed_form(30, 30, 50.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        harmonic1d_closed_form(5, 4, 1.0)


def test_canonical_mean_energy_two_level():
    # single atom on levels {0, 1}: <E> = q / (1 + q)
    beta = 1.3
    q = math.exp(-beta)
    got = canonical_mean_energy((np.array([0.0, 1.0]), np.ones(2)), 1, beta)
    assert got == pytest.approx(q / (1 + q), rel=1e-6)


def test_basis_and_levels_agree():
    basis = build_basis(ISO3D, 6)
    dist_a = canonical_p_N0(basis, 15, 0.8)
    dist_b = canonical_p_N0(energy_levels(ISO3D, 6), 15, 0.8)
    assert np.allclose(dist_a.p, dist_b.p, rtol=1e-12)


# ---------------------------------------------------------------------------
# spectra


def test_energy_levels_3d_isotropic_degeneracy():
    eps, deg = energy_levels(ISO3D, 9)
    assert list(eps) == list(range(10))
    for e, d in zip(eps, deg):
        assert d == (e + 1) * (e + 2) / 2


def test_energy_levels_3d_aspect_two():
    eps, deg = energy_levels(TrapSpec("harmonic3d", aspect=2.0), 4)
    got = dict(zip(eps, deg))
    # e = 2 s + nz with transverse degeneracy s + 1
    assert got[0.0] == 1
    assert got[1.0] == 1
    assert got[2.0] == 3
    assert got[3.0] == 3
    assert got[4.0] == 6


def test_energy_levels_ring():
    eps, deg = energy_levels(TrapSpec("ring1d"), 9)
    assert list(eps) == [0.0, 1.0, 4.0, 9.0]
    assert list(deg) == [1.0, 2.0, 2.0, 2.0]


# ---------------------------------------------------------------------------
# exact-integer microcanonical tables


def test_partitions_examples():
    assert partitions_1d(0, 0) == 1
    assert partitions_1d(0, 3) == 0
    assert partitions_1d(2, 5) == 2          # 4+1, 3+2
    assert partitions_1d(3, 6) == 3          # 4+1+1, 3+2+1, 2+2+2
    assert sum(partitions_1d(k, 10) for k in range(11)) == 42  # p(10)


def test_micro_table_matches_partitions():
    table = micro_recurrence(HO1D, 6, 10)
    for n in range(7):
        for e in range(11):
            assert table.gamma_ex(n, e) == partitions_1d(n, e), (n, e)


def _count_states(basis, n_atoms, energy):
    """Occupation-vector enumeration over explicit modes (independent oracle)."""
    eps = [int(e) for e in basis.energies]

    @lru_cache(maxsize=None)
    def count(mode, atoms, e_left):
        if atoms == 0:
            return 1 if e_left == 0 else 0
        if mode == len(eps):
            return 0
        total = 0
        n = 0
        while n <= atoms and n * eps[mode] <= e_left:
            total += count(mode + 1, atoms - n, e_left - n * eps[mode])
            n += 1
        return total

    return count(0, n_atoms, energy)


@pytest.mark.parametrize("trap", [TrapSpec("ring1d"), ISO3D,
                                  TrapSpec("harmonic3d", aspect=2.0)])
def test_micro_table_matches_enumeration(trap):
    e_max = 6
    basis = build_basis(trap, e_max)
    table = micro_recurrence(trap, 4, e_max)
    for n in range(5):
        for e in range(e_max + 1):
            assert table.gamma(n, e) == _count_states(basis, n, e), (n, e)


def test_micro_gamma_examples():
    table = micro_recurrence(ISO3D, 3, 3)
    assert table.gamma(2, 1) == 3      # one atom in any of the 3 first-shell modes
    dist = micro_p_N0(micro_recurrence(HO1D, 3, 3), 3, 3)
    assert np.allclose(dist.p, [1 / 3, 1 / 3, 1 / 3, 0.0])


@pytest.mark.parametrize("trap", [HO1D, TrapSpec("ring1d"), ISO3D])
def test_cumulative_route_is_identical(trap):
    table = micro_recurrence(trap, 6, 10)
    for e in range(1, 11):
        if table.gamma(6, e) == 0:
            continue
        a = micro_p_N0(table, 6, e)
        b = micro_p_N0_cumulative(table, 6, e)
        assert np.array_equal(a.p, b.p), e


def test_micro_unreachable_energy_refused():
    # two ring atoms cannot total E=3 (sums of two squares miss 3)
    table = micro_recurrence(TrapSpec("ring1d"), 2, 8)
    with pytest.raises(ValueError, match="no configuration"):
        micro_p_N0(table, 2, 3)
    with pytest.raises(ValueError, match="no configuration"):
        micro_p_N0_cumulative(table, 2, 3)


def test_micro_refuses_non_integer_grid():
    bad = TrapSpec("harmonic3d", aspect=2.5)
    with pytest.raises(ValueError, match="integer"):
        micro_recurrence(bad, 4, 6)
    with pytest.raises(ValueError, match="integer"):
        micro_moments_large(bad, 4, 6, sigma=1.0)


def test_micro_table_size_limit():
    with pytest.raises(ResourceError, match="reduce N or E_max"):
        micro_recurrence(HO1D, 10_000, 10_000)


def test_distribution_moments_delta():
    dist = micro_p_N0(micro_recurrence(HO1D, 4, 4), 4, 4)
    mean, var = distribution_moments(dist)
    assert mean == pytest.approx((dist.p * np.arange(5)).sum())
    assert var >= 0


# ---------------------------------------------------------------------------
# floating-point moment recurrences


@pytest.mark.parametrize("trap,N,e_max,sigma", [
    (HO1D, 12, 40, 0.5),
    (ISO3D, 8, 20, 0.7),
    (TrapSpec("harmonic3d", aspect=2.0), 6, 16, 0.5),
])
def test_large_n_moments_match_exact_tables(trap, N, e_max, sigma):
    table = micro_recurrence(trap, N, e_max)
    mm = micro_moments_large(trap, N, e_max, sigma)
    for e in range(1, e_max + 1):
        if table.gamma(N, e) == 0:
            continue
        mean, var = distribution_moments(micro_p_N0(table, N, e))
        assert mm.valid[e]
        assert mm.mean[e] == pytest.approx(mean, rel=1e-9, abs=1e-9)
        assert mm.var[e] == pytest.approx(var, rel=1e-8, abs=1e-9)


def test_large_n_moments_weight_ratio():
    # consecutive log-weights must reproduce the exact count ratios
    table = micro_recurrence(HO1D, 10, 30)
    mm = micro_moments_large(HO1D, 10, 30, sigma=0.4)
    for e in range(2, 31):
        ratio = table.gamma(10, e) / table.gamma(10, e - 1)
        assert math.exp(mm.log_weight[e] - mm.log_weight[e - 1]) == \
            pytest.approx(ratio, rel=1e-9)


# ---------------------------------------------------------------------------
# peaks and ensemble ratios


def test_asymptotic_constants():
    a = asymptotics()
    assert a["micro_limit"] == pytest.approx(0.535461, abs=1e-5)
    assert a["cano_limit"] == pytest.approx(1.368430, abs=1e-5)
    assert a["S_3D"] == pytest.approx(0.391296, abs=1e-5)


def test_canonical_peak_auto_and_grid_agree():
    t_auto, v_auto, grid = canonical_peak(HO1D, 20)
    assert len(grid) >= 21
    span = np.linspace(0.7 * t_auto, 1.4 * t_auto, 15)
    t_grid, v_grid, _ = canonical_peak(HO1D, 20, t_grid=span)
    assert t_grid == pytest.approx(t_auto, rel=0.02)
    assert v_grid == pytest.approx(v_auto, rel=0.01)
    # the refined vertex must dominate every sampled point
    assert v_auto >= max(v for _, v in grid) - 1e-9


def test_canonical_peak_grid_validation():
    with pytest.raises(ValueError, match="at least 5"):
        canonical_peak(HO1D, 10, t_grid=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="boundary"):
        # the N=10 peak sits near T~4; this grid ends below it
        canonical_peak(HO1D, 10, t_grid=np.linspace(0.2, 1.0, 6))


def test_exact_s_small_1d():
    res = exact_S(HO1D, 10)
    assert 0.0 < res.S_tilde <= res.S < 1.0
    assert res.S == pytest.approx(0.659, abs=0.01)
    # the microcanonical peak value must agree with the exact-integer table
    table = micro_recurrence(HO1D, 10, res.E_peak + 1)
    _, var_exact = distribution_moments(micro_p_N0(table, 10, res.E_peak))
    assert res.var_micro_max == pytest.approx(var_exact, rel=0.01)
