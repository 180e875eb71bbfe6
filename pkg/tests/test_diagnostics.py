from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pssim import KalikowDecomposition, autonormal, bounds_report, ising, sample_replicas
from pssim.diagnostics import BoundsReport, log_partition_ratio, mc_partition_ratio, mle_grid, partition_ratio_se
from pssim.kernels import ExponentialKernel, nearest_neighbour
from pssim.oracle import ising_1d_exact

from conftest import ising_1d


def report(gamma: float) -> BoundsReport:
    return BoundsReport(gamma, 1.0, None, ising_1d(0.1))


def test_arithmetic_examples():
    r = report(0.5)
    assert r.nstop_tail(10) == pytest.approx(9.765625e-4)
    assert r.steps_bias(10) == pytest.approx(9.775171e-4, rel=1e-6)
    assert r.nstop_tail(10, 3) == pytest.approx(3 * 0.5**10)


@given(st.floats(0.01, 0.99), st.integers(1, 60))
def test_tail_and_steps_bias_agree(g, N):
    r = report(g)
    t = r.nstop_tail(N)
    assert r.steps_bias(N) == pytest.approx(t / (1 - t), rel=1e-12)


def test_supercritical_bounds_infinite():
    r = bounds_report(ising_1d(0.5))
    assert not r.guaranteed
    assert math.isinf(r.nstop_tail(5)) and math.isinf(r.convergence(1.0)) and math.isinf(r.range_bias(3))


def test_range_bias():
    r = bounds_report(ising_1d(0.15))
    assert r.range_bias(1) == 0.0 and r.range_bias(5) == 0.0
    dec = ising_1d(0.15)
    M = dec.mass_orbit(0)
    expected = (M - dec.alpha_orbit(0, 0)) / M / (1 - dec.gamma())
    assert r.range_bias(0) == pytest.approx(expected, rel=1e-14)
    e = bounds_report(KalikowDecomposition(ising(1, 0.1, ExponentialKernel(1, 0.3, 0.5))))
    assert e.range_bias(2) > e.range_bias(6) > 0.0


def test_report_fields():
    r = bounds_report(ising_1d(0.15))
    assert r.beta_c == pytest.approx(1 / 12)
    assert r.M_underbar == pytest.approx(2 * math.cosh(0.3))
    assert r.convergence(0.0, 2) == 2.0
    assert r.summary()["subcritical"]
    a = bounds_report(KalikowDecomposition(autonormal(1, 0.5)))
    assert a.gamma == 0.0


def test_partition_ratio_identity():
    rng = np.random.default_rng(0)
    S = rng.normal(size=50)
    assert mc_partition_ratio(S, None, 0.3, 0.3) == 1.0
    assert log_partition_ratio(S, None, 0.7, 0.7) == 0.0


def test_partition_ratio_window_oracle():
    psi, theta = 0.15, 0.35
    n = 20000
    dec = ising_1d(psi)
    res = sample_replicas([(0,), (1,)], dec, 8, n)
    T = np.array([r.spins[(0,)] * r.spins[(1,)] for r in res])
    # window law of two sites: Z(theta) / Z(psi) = E_psi exp((theta - psi) s0 s1)
    law = ising_1d_exact(psi).window_marginal(2)
    exact = sum(p * math.exp((theta - psi) * c[0] * c[1]) for c, p in law.items())
    dn = mc_partition_ratio(T, None, theta, psi)
    assert abs(dn - exact) <= 3 * partition_ratio_se(T, None, theta, psi)


def test_mle_grid_vector_statistic():
    rng = np.random.default_rng(1)
    S = rng.choice([-1.0, 1.0], size=(4000, 2))
    grid = [np.array([a, b]) for a in (-0.2, 0.0, 0.2) for b in (-0.2, 0.0, 0.2)]
    best, vals = mle_grid(S, None, S.mean(axis=0), grid, np.zeros(2))
    assert len(vals) == 9
    assert np.allclose(best, 0.0, atol=0.2 + 1e-12)
