import math

import numpy as np
import pytest

from fockmc.model import System, TrapSpec, build_basis
from fockmc.oracles import canonical_peak
from fockmc.sampler import SamplerParams, SampleSet
from fockmc.stats import (MIN_CHAINS_FOR_ERRORS, PostSelectionCurve,
                          autocorrelation_time, extrapolate_micro,
                          micro_variance_repeated, moments, post_select,
                          post_selection_curve, s_tilde, scan_peak)

PARAMS = SamplerParams(beta=0.5, samples_target=10)


def _sset(n0, e=None, n_chains=1):
    n0 = np.asarray(n0)
    if e is None:
        e = np.zeros(n0.size)
    chain_id = np.arange(n0.size) % n_chains
    return SampleSet(n0, e, chain_id, np.arange(n0.size), PARAMS,
                     {"trap": "harmonic1d", "N": 5, "g": 0.0})


def test_moments_population_identity():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 30, size=500)
    est = moments(_sset(x, n_chains=4))
    assert est.mean_N0 == pytest.approx(x.mean(), rel=1e-12)
    assert est.var_N0 == pytest.approx(x.var(), rel=1e-12)
    assert est.W == 500


def test_moments_chain_spread_errors():
    rng = np.random.default_rng(2)
    x = rng.normal(10, 2, size=400).round().astype(int)
    est = moments(_sset(x, n_chains=MIN_CHAINS_FOR_ERRORS))
    per_chain = [x[c::MIN_CHAINS_FOR_ERRORS].astype(float)
                 for c in range(MIN_CHAINS_FOR_ERRORS)]
    means = np.array([c.mean() for c in per_chain])
    expect = means.std(ddof=1) / math.sqrt(MIN_CHAINS_FOR_ERRORS)
    assert est.stderr_mean == pytest.approx(expect, rel=1e-12)
    # too few chains: errors are flagged, not guessed
    est3 = moments(_sset(x, n_chains=3))
    assert math.isnan(est3.stderr_mean) and math.isnan(est3.stderr_var)


def test_moments_empty_refused():
    with pytest.raises(ValueError, match="empty"):
        moments(_sset([]))


def test_post_select_identity_and_window():
    e = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
    sset = _sset([1, 2, 3, 4, 5], e)
    full = post_select(sset, 1.0)
    assert np.array_equal(full.N0, sset.N0)
    assert full.window_width == pytest.approx(2 * np.abs(e - e.mean()).max())


def test_post_select_keeps_nearest():
    e = np.array([5.0, 0.0, 4.0, 9.0, 5.5])   # mean 4.7
    sset = _sset([10, 20, 30, 40, 50], e)
    sub = post_select(sset, 0.4)              # keep ceil(2) nearest: E=5.0, 4.0
    assert sorted(sub.N0) == [10, 30]
    assert sub.window_width == pytest.approx(2 * 0.7)


def test_post_select_nesting():
    rng = np.random.default_rng(3)
    sset = _sset(rng.integers(0, 9, 200), rng.normal(size=200))
    kept = None
    for f in (1.0, 0.6, 0.3, 0.1):
        sub = post_select(sset, f)
        ids = set(zip(sub.chain_id.tolist(), sub.step_index.tolist()))
        assert len(sub) == math.ceil(f * 200)
        if kept is not None:
            assert ids <= kept
        kept = ids


def test_post_select_validation():
    sset = _sset([1, 2, 3])
    for f in (0.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            post_select(sset, f)


def test_post_selection_curve_shape():
    rng = np.random.default_rng(4)
    sset = _sset(rng.integers(0, 9, 400), rng.normal(size=400), n_chains=4)
    curve = post_selection_curve(sset, f_grid=(1.0, 0.5, 0.25, 0.125))
    fs = [p[0] for p in curve.points]
    assert fs == [1.0, 0.5, 0.25, 0.125]
    assert curve.points[0][2] == pytest.approx(sset.N0.var(), rel=1e-12)
    assert curve.T == pytest.approx(1 / PARAMS.beta)


def _curve(points):
    return PostSelectionCurve(points=points, E_mean=0.0, T=1.0)


def test_extrapolate_constant_curve():
    pts = [(f, 0.0, 7.5, 0.1) for f in (1.0, 0.8, 0.6, 0.4, 0.2)]
    val, err = extrapolate_micro(_curve(pts))
    assert val == pytest.approx(7.5, abs=1e-9)
    assert err > 0


def test_extrapolate_recovers_polynomial():
    f = np.array([1.0, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1])
    v = 3.0 + 2.0 * f - 1.5 * f ** 2
    pts = [(fi, 0.0, vi, 0.05) for fi, vi in zip(f, v)]
    val, err = extrapolate_micro(_curve(pts), fit_degree=2)
    assert val == pytest.approx(3.0, abs=1e-9)


def test_extrapolate_too_few_points():
    pts = [(f, 0.0, 1.0, 0.1) for f in (1.0, 0.5, 0.2)]
    with pytest.raises(ValueError, match="at least"):
        extrapolate_micro(_curve(pts), fit_degree=2)


def test_extrapolate_ill_conditioned():
    f = [0.9, 0.9 + 1e-9, 0.9 + 2e-9, 0.9 + 3e-9, 0.9 + 4e-9]
    pts = [(fi, 0.0, 1.0, 0.1) for fi in f]
    with pytest.raises(ValueError, match="ill-conditioned"):
        extrapolate_micro(_curve(pts))


def test_micro_variance_repeated_small_run():
    basis = build_basis(TrapSpec("ring1d"), 2)
    system = System(basis=basis, N=3, g=0.0)
    params = SamplerParams(beta=1.0, samples_target=4000, seed=1,
                           chain_count=4)
    vm, err, curves = micro_variance_repeated(system, params, repeats=2,
                                              f_grid=(1.0, 0.6, 0.3, 0.1))
    assert len(curves) == 2
    assert math.isfinite(vm) and math.isfinite(err)
    with pytest.raises(ValueError, match="repeats"):
        micro_variance_repeated(system, params, repeats=1)


def test_scan_peak_boundary_refused():
    params = SamplerParams(beta=1.0, samples_target=2000, seed=0)
    with pytest.raises(ValueError, match="boundary"):
        scan_peak(TrapSpec("harmonic1d"), 5, 0.0,
                  [0.5, 0.7, 0.9, 1.1, 1.3], params)
    with pytest.raises(ValueError, match="at least 5"):
        scan_peak(TrapSpec("harmonic1d"), 5, 0.0, [1.0, 2.0], params)


def test_scan_peak_finds_known_peak():
    trap = TrapSpec("harmonic1d")
    t_exact, v_exact, _ = canonical_peak(trap, 5)
    params = SamplerParams(beta=1.0, samples_target=20_000, seed=7,
                           chain_count=4)
    scan = scan_peak(trap, 5, 0.0, np.linspace(0.3, 2.2, 7) * t_exact, params)
    assert scan.T_max == pytest.approx(t_exact, rel=0.25)
    assert scan.var_max == pytest.approx(v_exact, rel=0.15)
    assert len(scan.grid) == 7


def test_s_tilde_propagation():
    ratio, err = s_tilde(2.0, 0.2, 4.0, 0.4)
    assert ratio == pytest.approx(0.5)
    assert err == pytest.approx(0.5 * math.hypot(0.1, 0.1))
    with pytest.raises(ValueError):
        s_tilde(1.0, 0.1, 0.0, 0.1)


def test_autocorrelation_time_iid_and_duplicated():
    rng = np.random.default_rng(5)
    x = rng.integers(0, 20, 8000)
    tau = autocorrelation_time(_sset(x))
    assert 0.6 < tau < 1.4
    doubled = np.repeat(x[:4000], 2)
    tau2 = autocorrelation_time(_sset(doubled))
    assert 1.5 < tau2 < 2.6
    assert math.isnan(autocorrelation_time(_sset(np.full(100, 3))))
