import atexit
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ljchain.energy import DisplacementField, energy_rescaled
from ljchain.ensemble import Ensemble, iid, homogeneous, markov, periodic, sample_realization
from ljchain.homogenize import (COLUMNS, CellFailure, LimitPrediction, LimitProfile, build_recovery_sequence,
                                convergence_study, l1_distance, limit_energy, predict_limit, recovery_schedule,
                                recovery_study)
from ljchain.io import csv_text
from ljchain.minimize import minimize_global
from ljchain.potentials import excess, morse, shifted_quadratic, twelve_six


def lj_scaled(s, eps, sigma, label=""):
    return twelve_six(s * eps, sigma, label)


# --- prediction ---------------------------------------------------------------

def test_predict_homogeneous(homogeneous_lj):
    p = predict_limit(homogeneous_lj, 0.1)
    assert p.alpha_bar == pytest.approx(36) and p.beta == pytest.approx(1)
    assert p.predicted_min == pytest.approx(0.36)
    assert p.gamma_star == pytest.approx(1 / 6)
    assert p.regime == "elastic"


def test_predict_two_stiffness(two_stiffness):
    p = predict_limit(two_stiffness, 0.3)
    assert p.alpha_bar == pytest.approx(24)
    # depths are 1 and 0.5 here, so beta is the weaker 0.5
    assert p.predicted_min == pytest.approx(0.5) and p.regime == "fractured"
    same_depth = iid([twelve_six(1, 1), twelve_six(1, 2 ** 0.5)], [0.5, 0.5])
    q = predict_limit(same_depth, 0.3)
    assert q.alpha_bar == pytest.approx(24) and q.predicted_min == pytest.approx(1.0)


def test_predict_zero_and_critical(homogeneous_lj):
    assert predict_limit(homogeneous_lj, 0.0).predicted_min == 0.0
    assert predict_limit(homogeneous_lj, 0.0).regime == "elastic"
    g = predict_limit(homogeneous_lj, 0.1).gamma_star
    assert predict_limit(homogeneous_lj, g).regime == "critical"
    assert predict_limit(homogeneous_lj, g + 1e-9).regime == "fractured"
    with pytest.raises(ValueError):
        predict_limit(homogeneous_lj, -0.1)
    assert set(predict_limit(homogeneous_lj, 0.1).to_dict()) == set(LimitPrediction.__dataclass_fields__)


# --- limit functional ------------------------------------------------------------

def test_limit_energy_examples(two_stiffness):
    g = 0.2
    p = predict_limit(two_stiffness, g)
    assert limit_energy(LimitProfile.linear(g), p) == pytest.approx(p.alpha_bar * g * g, rel=1e-14)
    assert limit_energy(LimitProfile.step(g, 0.3), p) == pytest.approx(p.beta)
    half = LimitProfile((0.0, 1.0), ((0.0, g / 2),), g)
    assert half.jumps() == [(1.0, pytest.approx(g / 2))]
    assert limit_energy(half, p) == pytest.approx(p.alpha_bar * g * g / 4 + p.beta, rel=1e-14)


def test_limit_energy_inadmissible(homogeneous_lj):
    p = predict_limit(homogeneous_lj, 0.2)
    down = LimitProfile((0.0, 0.5, 1.0), ((0.0,), (-0.1,)), 0.2)
    assert limit_energy(down, p) == math.inf
    assert limit_energy(LimitProfile.linear(0.3), p) == math.inf


def test_affine_with_jump_profile():
    prof = LimitProfile.affine_with_jump(0.5, 0.3, 0.2, at=0.5)
    (x, h), = prof.jumps()
    assert x == pytest.approx(0.5) and h == pytest.approx(0.5 - 0.3 * 0.8)
    assert prof.dirichlet() == pytest.approx(0.09 * 0.8)
    assert prof.value(0.4) == pytest.approx(0.3 * 0.4) and prof.value(0.6) == prof.value(0.55)
    with pytest.raises(ValueError):
        LimitProfile.affine_with_jump(0.2, 0.3, 0.2)
    with pytest.raises(ValueError):
        LimitProfile((0.0, 0.5), ((0.0,),), 1.0)


# --- recovery sequences ------------------------------------------------------------

def test_recovery_homogeneous_is_affine_plus_step(homogeneous_lj):
    n = 1000
    r = sample_realization(homogeneous_lj, n)
    target = LimitProfile.affine_with_jump(0.5, 0.3, 0.2)
    seq = build_recovery_sequence(r, target, 0.1, 0.1, 0.2)
    inc = np.diff(seq.v.values)
    assert seq.h == 0 and inc[0] == pytest.approx(target.jumps()[0][1], abs=1e-12)
    rest = np.delete(inc, seq.h)
    flat = rest[: seq.T - 1]
    assert np.max(np.abs(flat)) < 1e-15
    assert np.allclose(rest[seq.T - 1:], 0.3 / n, rtol=1e-12)
    assert seq.v.values[-1] == 0.5 and seq.boundary_residual <= 1e-12
    assert seq.anchor_residual <= 1e-12


def test_recovery_block_endpoints_shifted(two_stiffness):
    r = sample_realization(two_stiffness, 5000, seed=4)
    target = LimitProfile.affine_with_jump(0.5, 0.3, 0.2)
    g_n = 0.5 + 1e-3
    seq = build_recovery_sequence(r, target, 0.05, 0.05, 0.2, gamma_n=g_n)
    assert len(seq.blocks) == 16
    for _, i_max in seq.blocks:
        x = i_max / r.n
        assert abs(seq.v.values[i_max] - (target.value(x) + g_n - 0.5)) <= 1e-12
    assert seq.v.values[-1] == g_n


def test_recovery_general_location(two_stiffness):
    r = sample_realization(two_stiffness, 10_000, seed=1)
    target = LimitProfile.affine_with_jump(0.5, 0.3, 0.2, at=1 / math.pi)
    seq = build_recovery_sequence(r, target, 0.05, 0.02, 0.2, at=1 / math.pi)
    assert abs(seq.h / r.n - 1 / math.pi) < 0.02
    assert r.bond_index[seq.h] == 1
    assert seq.anchor_residual <= 1e-12 and seq.boundary_residual <= 1e-12
    assert l1_distance(seq.v, target) < 0.02


def test_recovery_parameter_errors(homogeneous_lj):
    r = sample_realization(homogeneous_lj, 1000)
    target = LimitProfile.affine_with_jump(0.5, 0.3, 0.2)
    with pytest.raises(ValueError):
        build_recovery_sequence(r, target, 0.1, 0.3, 0.2)      # eps >= rho
    with pytest.raises(ValueError):
        build_recovery_sequence(r, target, 0.07, 0.05, 0.2)    # mu not (1 - rho)/k
    with pytest.raises(ValueError):
        build_recovery_sequence(sample_realization(homogeneous_lj, 7), target, 0.1, 0.15, 0.2)  # eps >= T/n


def test_recovery_energy_approaches_target(homogeneous_lj):
    rows = recovery_study(homogeneous_lj, 0.5, [1000, 10_000, 100_000], [0])
    target = 36 * 0.09 * 0.8 + 1
    assert all(r.target_energy == pytest.approx(target) for r in rows)
    excesses = [r.excess for r in rows]
    assert all(abs(b) < abs(a) for a, b in zip(excesses, excesses[1:]))
    assert max(excesses) <= 0.02
    assert rows[-1].l1 < 1e-5


def test_recovery_schedule_is_admissible():
    mus = recovery_schedule([10, 20, 40, 80], 0.1, 0.2)
    assert mus == pytest.approx([0.1, 0.05, 0.025, 0.8 / 64])
    for m in mus:
        k = 0.8 / m
        assert abs(k - round(k)) < 1e-9


# --- L1 distance -------------------------------------------------------------------

def test_l1_distance_matches_quadrature():
    rng = np.random.default_rng(3)
    n = 37
    target = LimitProfile.affine_with_jump(0.8, 0.4, 0.3, at=0.45)
    v = DisplacementField(np.cumsum(np.r_[0, rng.normal(0.02, 0.05, n)]), 0.8)
    nodes = np.arange(n + 1) / n

    def gap(x):
        return abs(np.interp(x, nodes, v.values) - target.value(x))

    pts = sorted(set(nodes.tolist()) | set(target.breakpoints))
    ref = sum(integrate.quad(gap, a, b, epsabs=1e-13, epsrel=1e-12)[0] for a, b in zip(pts, pts[1:]))
    assert l1_distance(v, target) == pytest.approx(ref, rel=1e-9)


def test_l1_distance_needs_affine_pieces():
    prof = LimitProfile((0.0, 1.0), ((0.0, 0.0, 1.0),), 1.0)
    with pytest.raises(ValueError):
        l1_distance(DisplacementField.linear(4, 1.0), prof)


# --- convergence studies --------------------------------------------------------------

def test_convergence_elastic(homogeneous_lj):
    tab = convergence_study(homogeneous_lj, 0.05, [100, 1000, 10_000, 100_000], [0])
    gaps = [r.gap for r in tab.rows]
    assert all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.05 * 0.09
    assert all(r.regime == "elastic" for r in tab.rows)
    assert tuple(next(tab.csv_rows())) == COLUMNS


def test_convergence_fracture(homogeneous_lj):
    tab = convergence_study(homogeneous_lj, 0.5, [100, 1000, 10_000], [0])
    assert tab.rows[-1].gap < 0.05
    assert all(r.regime == "fractured(1)" and r.broken_depth == 1.0 for r in tab.rows)


def test_convergence_zero_load(strong_weak):
    tab = convergence_study(strong_weak, 0.0, [10, 100], [0, 1, 2])
    assert all(r.energy == 0.0 and r.gap == 0.0 for r in tab.rows)
    agg = tab.aggregate()
    assert [a["n"] for a in agg] == [10, 100] and agg[0]["count"] == 3


def test_convergence_errors(homogeneous_lj):
    with pytest.raises(ValueError):
        convergence_study(homogeneous_lj, 0.1, [100, 10], [0])
    with pytest.raises(CellFailure, match="n=10 seed=0"):
        convergence_study(homogeneous_lj, 0.1, [10], [0], mode="bogus")


def test_convergence_recovery_mode(homogeneous_lj):
    tab = convergence_study(homogeneous_lj, 0.5, [1000, 10_000], [0], mode="recovery")
    assert [r.regime for r in tab.rows] == ["recovery", "recovery"]
    assert tab.rows[-1].gap < tab.rows[0].gap


def envelope(r, g):
    n = r.n
    linear = energy_rescaled(r, DisplacementField.linear(n, g), gamma_n=g)
    h = int(np.argmin(-r.well_depth))
    incr = np.zeros(n)
    incr[h] = g
    step = energy_rescaled(r, DisplacementField.from_increments(incr, g), gamma_n=g)
    assert step == pytest.approx(excess(r.spec(h), r.delta[h] + g * math.sqrt(n)), rel=1e-12)
    return min(linear, step)


@pytest.mark.parametrize("g", [0.05, 0.5])
def test_sandwich_upper_envelope(strong_weak, homogeneous_lj, g):
    for ens in (homogeneous_lj, strong_weak):
        pred = predict_limit(ens, g).predicted_min
        gaps = []
        for n in (100, 1000, 10_000, 100_000):
            r = sample_realization(ens, n, seed=5)
            env = envelope(r, g)
            assert minimize_global(r, g, k_max=1).energy <= env + 1e-12
            gaps.append(abs(env - pred))
        if ens is homogeneous_lj or g == 0.5:
            assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
            assert gaps[-1] < 0.01 * max(pred, 0.01)
        else:
            # a linear field strains every bond alike, so it sees the arithmetic
            # mean of the stiffnesses instead of the harmonic one
            arith = float(np.mean(ens.alphas)) * g * g
            assert gaps[-1] == pytest.approx(arith - pred, rel=0.05)


def test_workers_do_not_change_tables(strong_weak):
    a = convergence_study(strong_weak, 0.4, [50, 100], [0, 1, 2], workers=1)
    b = convergence_study(strong_weak, 0.4, [50, 100], [0, 1, 2], workers=3)
    assert csv_text(a.csv_rows()) == csv_text(b.csv_rows())


# --- randomized invariants ----------------------------------------------------------

species = st.tuples(st.floats(0.1, 5), st.floats(0.5, 2))


@settings(settings.get_profile("invariants"))
@given(params=st.lists(species, min_size=1, max_size=3), w=st.lists(st.floats(0.05, 1), min_size=3, max_size=3),
       s=st.floats(0.01, 100), g=st.floats(0, 3))
def test_property_scaling_covariance(params, w, s, g):
    p = np.array(w[: len(params)])
    p /= p.sum()
    base = predict_limit(iid([twelve_six(e, sg) for e, sg in params], p), g)
    scaled = predict_limit(iid([lj_scaled(s, e, sg) for e, sg in params], p), g)
    assert scaled.alpha_bar == pytest.approx(s * base.alpha_bar, rel=1e-9)
    assert scaled.beta == pytest.approx(s * base.beta, rel=1e-12)
    assert scaled.predicted_min == pytest.approx(s * base.predicted_min, rel=1e-9, abs=1e-300)
    assert scaled.gamma_star == pytest.approx(base.gamma_star, rel=1e-9)


@settings(settings.get_profile("invariants"))
@given(params=st.lists(species, min_size=1, max_size=4), data=st.data(), g=st.floats(0, 3))
def test_property_relabel_invariance(params, data, g):
    m = len(params)
    w = np.array(data.draw(st.lists(st.floats(0.05, 1), min_size=m, max_size=m)))
    w /= w.sum()
    perm = data.draw(st.permutations(range(m)))
    sup = [twelve_six(e, sg) for e, sg in params]
    a = predict_limit(iid(sup, w), g)
    b = predict_limit(iid([sup[k] for k in perm], w[list(perm)]), g)
    assert b.predicted_min == pytest.approx(a.predicted_min, rel=1e-12, abs=1e-300)
    assert b.alpha_bar == pytest.approx(a.alpha_bar, rel=1e-12)
    assert b.beta == a.beta
    # the periodic law with the matching pattern gives the same marginal
    pat = periodic(sup, list(range(m)))
    q = predict_limit(pat, g)
    assert q.alpha_bar == pytest.approx(predict_limit(iid(sup, [1 / m] * m), g).alpha_bar, rel=1e-12)


_POOLS = {}


def _pool(workers):
    if workers not in _POOLS:
        _POOLS[workers] = ProcessPoolExecutor(max_workers=workers)
        atexit.register(_POOLS[workers].shutdown)
    return _POOLS[workers]


PROPERTY_PALETTE = (twelve_six(1, 1), twelve_six(0.4, 1), twelve_six(0.5, 1), morse(0.8, 2.0, 1.1),
                    shifted_quadratic(20.0, 0.6, 0.5))


@settings(settings.get_profile("invariants"))
@given(k=st.lists(st.sampled_from(range(len(PROPERTY_PALETTE))), min_size=1, max_size=2, unique=True),
       g=st.floats(0, 1.5), n_list=st.lists(st.integers(2, 12), min_size=1, max_size=2, unique=True),
       seeds=st.lists(st.integers(0, 2**31), min_size=1, max_size=2, unique=True),
       workers=st.sampled_from((2, 3)))
def test_property_worker_count_determinism(k, g, n_list, seeds, workers):
    ens = iid([PROPERTY_PALETTE[i] for i in k], [1 / len(k)] * len(k))
    n_list = sorted(n_list)
    serial = convergence_study(ens, g, n_list, seeds, k_max=1)
    pooled = convergence_study(ens, g, n_list, seeds, k_max=1, executor=_pool(workers))
    assert csv_text(serial.csv_rows()) == csv_text(pooled.csv_rows())
