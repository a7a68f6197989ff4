import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ljchain.ensemble import (Ensemble, beta_infimum, closed_window, empirical_average, empirical_indicator_cdf,
                              expectation_inverse_stiffness, homogeneous, iid, markov, open_window, periodic,
                              sample_realization, window_infimum_beta_n)
from ljchain.potentials import twelve_six

STRONG = twelve_six(1.0, 1.0, "strong")
WEAK = twelve_six(0.4, 1.0, "weak")
SOFT = twelve_six(0.5, 1.0, "soft")


def test_periodic_tiling():
    r = sample_realization(periodic([STRONG, SOFT], [0, 1]), 4, seed=0)
    assert r.bond_index.tolist() == [0, 1, 0, 1]


def test_degenerate_iid_law():
    r = sample_realization(iid([STRONG, SOFT], [1.0, 0.0]), 1000, seed=5)
    assert np.all(r.bond_index == 0)


def test_iid_fraction_binomial():
    n = 100_000
    r = sample_realization(iid([STRONG, SOFT], [0.5, 0.5]), n, seed=11)
    ones = int(np.sum(r.bond_index))
    assert abs(ones / n - 0.5) <= 0.01
    # the tolerance band has essentially full probability under the exact law
    band = stats.binom.cdf(int(0.51 * n), n, 0.5) - stats.binom.cdf(int(0.49 * n) - 1, n, 0.5)
    assert band > 1 - 1e-9
    # and the observed count is not in an extreme tail
    assert 1e-4 < stats.binom.cdf(ones, n, 0.5) < 1 - 1e-4


def test_zero_bonds_rejected():
    with pytest.raises(ValueError):
        sample_realization(homogeneous(STRONG), 0)


def test_cached_values_agree_with_descriptors():
    ens = iid([STRONG, SOFT], [0.3, 0.7])
    r = sample_realization(ens, 50, seed=2)
    for i in (0, 7, 49):
        d = ens.descriptors[r.bond_index[i]]
        assert (r.delta[i], r.alpha[i], r.well_depth[i]) == (d.delta, d.alpha, d.well_depth)
    with pytest.raises(ValueError):
        r.delta[0] = 3.0


def test_law_validation():
    with pytest.raises(ValueError):
        iid([STRONG, SOFT], [0.5, 0.4])
    with pytest.raises(ValueError):
        markov([STRONG, SOFT], [[0.9, 0.1], [0.2, 0.8]], [0.5, 0.5])
    with pytest.raises(ValueError):
        periodic([STRONG], [])
    with pytest.raises(ValueError):
        periodic([STRONG], [1])


def test_markov_marginal_matches_stationary():
    P = [[0.9, 0.1], [0.2, 0.8]]
    ens = markov([STRONG, SOFT], P, [2 / 3, 1 / 3])
    r = sample_realization(ens, 200_000, seed=3)
    frac = float(np.mean(r.bond_index == 1))
    # correlated chain: variance inflated by (1 + rho)/(1 - rho) with rho = 0.7
    se = math.sqrt((1 / 3) * (2 / 3) / r.n * (1.7 / 0.3))
    assert abs(frac - 1 / 3) < 4 * se


# --- expectations ---------------------------------------------------------

def test_expectation_inverse_stiffness_examples():
    assert expectation_inverse_stiffness(homogeneous(STRONG)) == pytest.approx(1 / 36)
    assert expectation_inverse_stiffness(iid([STRONG, SOFT], [0.5, 0.5])) == pytest.approx(1 / 24)
    assert expectation_inverse_stiffness(periodic([STRONG, SOFT], [0, 1, 1])) == pytest.approx(5 / 108)


def test_beta_examples():
    assert beta_infimum(homogeneous(STRONG)) == pytest.approx(1.0)
    assert beta_infimum(iid([STRONG, WEAK], [0.7, 0.3])) == pytest.approx(0.4)
    assert beta_infimum(iid([STRONG, WEAK], [1.0, 0.0])) == pytest.approx(1.0)


# --- empirical averages ------------------------------------------------------

def test_empirical_average_homogeneous_exact():
    r = sample_realization(homogeneous(STRONG), 1000)
    for w in ((0, 1), (0.2, 0.3), (0.5, 0.5)):
        assert empirical_average(r, "inverse_alpha", w) == pytest.approx(1 / 36, rel=1e-15)


def test_empirical_average_iid_clt():
    n = 1_000_000
    r = sample_realization(iid([STRONG, SOFT], [0.5, 0.5]), n, seed=8)
    sd = 0.5 * (1 / 18 - 1 / 36)   # two-point law with equal weights
    assert abs(empirical_average(r) - 1 / 24) <= 3 * sd / math.sqrt(n)


def test_empirical_average_periodic_exact():
    r = sample_realization(periodic([STRONG, SOFT], [0, 1]), 1000)
    assert empirical_average(r, window=(0, 1)) == pytest.approx((1 / 36 + 1 / 18) / 2, rel=1e-14)


def test_empirical_average_ckappa_and_errors():
    r = sample_realization(homogeneous(STRONG), 10)
    assert empirical_average(r, "ckappa", (0, 1), kappa=0.0) == pytest.approx(1512)
    with pytest.raises(ValueError):
        empirical_average(r, window=(0.01, 0.05))
    with pytest.raises(ValueError):
        empirical_average(r, "ckappa")


def test_window_lattice_counts():
    assert closed_window(10, 0.0, 1.0) == (0, 10)
    assert closed_window(10, 0.25, 0.75) == (3, 8)
    assert closed_window(10, 0.3, 0.3) == (3, 4)
    assert open_window(10, 0.5, 0.1) == (5, 6)
    assert open_window(10, 0.0, 0.25) == (0, 3)
    assert open_window(20, 0.5, 0.1) == (9, 12)


def test_indicator_cdf_examples():
    r = sample_realization(iid([STRONG, WEAK], [0.5, 0.5]), 1_000_000, seed=4)
    assert empirical_indicator_cdf(r, 0.5, 0.25, 0.1) == 0.0
    full = empirical_indicator_cdf(r, 0.5, 0.25, 2.0, normalize="nominal")
    assert full == pytest.approx(1.0, abs=2 / r.n)
    lo, hi = open_window(r.n, 0.5, 0.25)
    frac = empirical_indicator_cdf(r, 0.5, 0.25, 0.5)
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / (hi - lo))


def test_indicator_cdf_degenerate_window():
    r = sample_realization(homogeneous(STRONG), 10)
    with pytest.raises(ValueError):
        empirical_indicator_cdf(r, 0.55, 0.04, 1.0)


def test_window_infimum_examples():
    r = sample_realization(homogeneous(STRONG), 100)
    assert window_infimum_beta_n(r, 0.3, 0.1) == (1.0, 21)
    r = sample_realization(periodic([STRONG, WEAK], [0, 0, 0, 1]), 100)
    beta_n, h = window_infimum_beta_n(r, 0.5, 0.1)
    assert beta_n == pytest.approx(0.4)
    assert h == 43 and r.bond_index[h] == 1


def test_window_infimum_miss_probability():
    ens = iid([STRONG, WEAK], [0.5, 0.5])
    n, x, eps = 20, 0.5, 0.1
    lo, hi = open_window(n, x, eps)
    p_miss = 0.5 ** (hi - lo)
    seeds = range(2000)
    misses = sum(window_infimum_beta_n(sample_realization(ens, n, s), x, eps)[0] != pytest.approx(0.4)
                 for s in seeds)
    se = math.sqrt(p_miss * (1 - p_miss) / len(seeds))
    assert abs(misses / len(seeds) - p_miss) <= 3 * se


# --- determinism, stationarity ----------------------------------------------

def test_determinism_across_threads():
    ens = iid([STRONG, SOFT], [0.3, 0.7])
    ref = [sample_realization(ens, 5000, s).bond_index.tobytes() for s in range(16)]
    with ThreadPoolExecutor(max_workers=4) as pool:
        got = list(pool.map(lambda s: sample_realization(ens, 5000, s).bond_index.tobytes(), range(16)))
    assert got == ref
    assert sample_realization(ens, 5000, 1).bond_index.tobytes() != ref[0]


@pytest.mark.parametrize("ens", [
    iid([STRONG, SOFT], [0.3, 0.7]),
    markov([STRONG, SOFT], [[0.9, 0.1], [0.2, 0.8]], [2 / 3, 1 / 3]),
], ids=["iid", "markov"])
def test_stationarity_of_shifted_windows(ens):
    n = 2000
    a = [np.mean(sample_realization(ens, n, s).bond_index[100:600] == 1) for s in range(100)]
    b = [np.mean(sample_realization(ens, n, s).bond_index[1300:1800] == 1) for s in range(100)]
    diff = np.mean(a) - np.mean(b)
    se = math.sqrt(np.var(a, ddof=1) / 100 + np.var(b, ddof=1) / 100)
    assert abs(diff) <= 3 * se


def test_ergodic_rate_slope():
    ens = iid([STRONG, SOFT], [0.5, 0.5])
    ns = [1000, 10_000, 100_000]
    rms = []
    for n in ns:
        err = [empirical_average(sample_realization(ens, n, s)) - 1 / 24 for s in range(48)]
        rms.append(math.sqrt(np.mean(np.square(err))))
    slope = np.polyfit(np.log(ns), np.log(rms), 1)[0]
    assert -0.6 <= slope <= -0.4


@settings(settings.get_profile("invariants"))
@given(p=st.floats(0.0, 1.0), n=st.integers(1, 400), seed=st.integers(0, 2**63 - 1),
       x=st.floats(0, 1), eps=st.floats(0.01, 0.5))
def test_property_window_infimum_bounds_beta(p, n, seed, x, eps):
    ens = Ensemble((STRONG, WEAK), "iid", probabilities=(1 - p, p))
    r = sample_realization(ens, n, seed)
    lo, hi = open_window(n, x, eps)
    if hi <= lo:
        return
    beta_n, h = window_infimum_beta_n(r, x, eps)
    assert beta_n >= beta_infimum(ens) - 1e-15
    assert lo <= h < hi
    assert beta_n == -r.well_depth[h]
    assert np.all(-r.well_depth[lo:h] > beta_n)
