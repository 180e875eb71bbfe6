from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from pssim import KalikowDecomposition, autonormal, ising, perfect_sample, sample_replicas
from pssim.assign import (ConstantInitial, IIDInitial, MappingInitial, StationaryInitial, coupled_finite_horizon,
                          finite_horizon_sample, get_sampler, replica_rng, run_forward_assignment)
from pssim.oracle import truncnorm_mean
from pssim.sketch import run_backward_sketch, run_backward_sketch_timed

from conftest import binom_se, ising_1d

F2 = [(0,), (1,)]


def window_counts(results, F):
    keys = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
    c = {k: 0 for k in keys}
    for r in results:
        c[tuple(r.spins[s] for s in F)] += 1
    return np.array([c[k] for k in keys])


def test_beta_zero_product_law():
    dec = KalikowDecomposition(ising(1, 0.0, states=(-1, 0, 1)))
    res = sample_replicas([(0,), (4,)], dec, 5, 6000, backend="generic")
    assert all(r.n_stop == 2 for r in res)
    x = np.array([[r.spins[(0,)], r.spins[(4,)]] for r in res])
    for col in x.T:
        freq = [(col == v).mean() for v in (-1.0, 0.0, 1.0)]
        assert all(abs(f - 1 / 3) <= 4 * binom_se(1 / 3, len(col)) for f in freq)


def test_symmetric_mean_and_correlation(ising015):
    n = 20000
    res = sample_replicas(F2, ising015, 17, n)
    x = np.array([[r.spins[s] for s in F2] for r in res])
    assert abs(x[:, 0].mean()) <= 3 / math.sqrt(n)
    prod = x[:, 0] * x[:, 1]
    assert abs(prod.mean() - math.tanh(0.15)) <= 3 * prod.std(ddof=1) / math.sqrt(n)


def test_autonormal_iid_moment():
    dec = KalikowDecomposition(autonormal(1, 0.6))
    n = 20000
    res = sample_replicas([(0,)], dec, 3, n)
    x = np.array([r.spins[(0,)] for r in res])
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert abs(x.mean() - truncnorm_mean(0.0, 0.6)) <= 3 * x.std(ddof=1) / math.sqrt(n)


def test_replay_bit_reproducible(ising015):
    rec = run_backward_sketch([(0,), (3,), (7,)], ising015, np.random.default_rng(2))
    a = run_forward_assignment(rec, ising015, np.random.default_rng(99))
    b = run_forward_assignment(rec, ising015, np.random.default_rng(99))
    assert a.spins == b.spins


def test_empty_residual_ignores_initial(ising015):
    for seed in range(30):
        rec = run_backward_sketch_timed([(0,), (1,)], 100.0, ising015, np.random.default_rng(seed))
        if rec.residual:
            continue
        outs = [run_forward_assignment(rec, ising015, np.random.default_rng(seed + 1), ConstantInitial(v)).spins
                for v in (-1.0, 1.0)]
        assert outs[0] == outs[1]


def test_tiny_horizon_returns_initial(ising015):
    eta = MappingInitial({(0,): 1.0, (1,): -1.0})
    res = finite_horizon_sample(F2, 1e-12, eta, ising015, np.random.default_rng(0))
    assert res.spins == {(0,): 1.0, (1,): -1.0}
    assert res.n_stop == 0 and res.residual_size == 2


def test_coupled_outputs_differ_only_with_residual(ising015):
    for seed in range(200):
        a, b = coupled_finite_horizon(F2, 0.8, ConstantInitial(1.0), ConstantInitial(-1.0), ising015,
                                      np.random.default_rng(seed))
        if a.residual_size == 0:
            assert a.spins == b.spins


def test_constant_start_relaxes():
    dec = ising_1d(0.15)
    means = []
    n = 4000
    for j, t in enumerate((0.05, 0.3, 1.0, 3.0)):
        vals = [finite_horizon_sample([(0,)], t, ConstantInitial(1.0), dec, replica_rng(j, r)).spins[(0,)]
                for r in range(n)]
        means.append(float(np.mean(vals)))
    se = 1 / math.sqrt(n)
    for a, b in zip(means, means[1:]):
        assert b <= a + 3 * se
    assert means[0] > 0.8 and abs(means[-1]) < 0.1


def test_law_invariance_under_concatenation(ising015):
    # a timed sketch run from a stationary start has the stationary law
    n = 8000
    direct = sample_replicas(F2, ising015, 1, n)
    shifted = []
    for r in range(n):
        rng = replica_rng(2, r)
        shifted.append(finite_horizon_sample(F2, 0.7, StationaryInitial(ising015, replica_rng(3, r)), ising015, rng))
    table = np.vstack([window_counts(direct, F2), window_counts(shifted, F2)])
    assert chi2_contingency(table).pvalue > 0.001


def test_large_horizon_matches_perfect(ising015):
    g, M = ising015.gamma(), ising015.mass_orbit(0)
    t = 12 / (M * (1 - g))
    n = 6000
    direct = sample_replicas(F2, ising015, 11, n)
    far = sample_replicas(F2, ising015, 12, n, t=t)
    table = np.vstack([window_counts(direct, F2), window_counts(far, F2)])
    assert chi2_contingency(table).pvalue > 0.001


def test_capped_sampler_restarts_and_reports_bias():
    dec = ising_1d(0.15)
    res = perfect_sample([(0,), (1,), (2,)], dec, np.random.default_rng(0), step_cap=3)
    assert res.n_stop <= 3
    g = dec.gamma()
    assert res.bias_bound == pytest.approx(g**3 / (1 - g**3))


def test_iid_initial_reproducible(ising015):
    a = IIDInitial(ising015, np.random.default_rng(5))
    b = IIDInitial(ising015, np.random.default_rng(5))
    a.prepare([(3,), (1,)])
    b.prepare([(1,), (3,)])
    assert a[(1,)] == b[(1,)] and a[(3,)] == b[(3,)]


def test_sampler_cache():
    dec = ising_1d(0.1)
    assert get_sampler(dec, "generic") is get_sampler(dec, "generic")
