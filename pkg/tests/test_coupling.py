from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from pssim import KalikowDecomposition, ising, sample_replicas
from pssim.coupling import (PAIRS, CoupledIsingModel, beta_c, check_sufficient_condition, estimate_dbar,
                            pair_model_from_config, perfect_sample_pair)
from pssim.kernels import ExponentialKernel, FiniteRangeKernel, nearest_neighbour
from pssim.lattice import ball_offsets
from pssim.models import Field, ModelError
from pssim.oracle import ising_1d_exact

NN = nearest_neighbour(1)


def pair(beta=0.05, J=1.0, Jt=1.0, h=0.0, ht=0.0, strict=True):
    return CoupledIsingModel(1, beta, nearest_neighbour(1, J), nearest_neighbour(1, Jt), Field(h, h), Field(ht, ht),
                             strict=strict)


def test_sufficient_condition_examples():
    eps = 0.1
    r = check_sufficient_condition(pair())
    assert r.passed and r.slack[0] == 0.0
    assert not check_sufficient_condition(pair(Jt=1 + eps, strict=False)).passed
    r = check_sufficient_condition(pair(Jt=1 + eps, ht=2 * eps))
    assert r.passed and r.slack[0] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ModelError):
        pair(Jt=1 + eps)


def test_identical_pair_never_splits():
    m = pair(beta=0.1, h=0.2, ht=0.2)
    for x in (-2.0, 0.0, 2.0):
        for own in ((-1, -1), (1, 1)):
            assert m.probabilities(0, own, x, x)[1] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.0, 0.15), st.floats(0.0, 0.5), st.floats(0.0, 0.5),
       st.lists(st.sampled_from(PAIRS), min_size=3, max_size=3))
def test_masses_form_distribution(beta, h, dh, conf):
    m = CoupledIsingModel(1, beta, NN, NN, Field(h, h), Field(h + dh, h + dh))
    eta = dict(zip(ball_offsets(1, 1), conf))
    probs = [m.rate((0,), a, eta) / m.mass_orbit(0) for a in PAIRS]
    assert min(probs) >= -1e-15
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)


def test_ferromagnetic_monotonicity():
    m = pair(beta=0.1, ht=0.3)
    for own, right in itertools.product(PAIRS, PAIRS):
        lo = {(-1,): (-1, -1), (0,): own, (1,): right}
        hi = {(-1,): (1, 1), (0,): own, (1,): right}
        assert m.rate((0,), (1, 1), hi) >= m.rate((0,), (1, 1), lo) - 1e-15


def test_beta_c():
    assert beta_c(nearest_neighbour(1)) == pytest.approx(1 / 12, rel=1e-15)
    assert beta_c(nearest_neighbour(2)) == pytest.approx(1 / 40, rel=1e-15)
    theta, r = 0.2, 0.3
    series = sum((2 * k + 1) * 2 * theta * r**k for k in range(1, 200))
    assert beta_c(ExponentialKernel(1, theta, r)) == pytest.approx(1 / (2 * series), rel=1e-12)


def test_identical_pair_samples_and_dbar():
    m = pair(beta=0.06, h=0.1, ht=0.1)
    dec = KalikowDecomposition(m)
    res = sample_replicas([(0,), (1,)], dec, 1, 500)
    assert all(v[0] == v[1] for r in res for v in r.spins.values())
    est = estimate_dbar([(0,), (1,)], dec, 500, 1)
    assert est.sup == 0.0 and est.order_violations == 0


def test_order_and_half_gap_identity():
    dec = KalikowDecomposition(pair(beta=0.05, ht=0.3))
    F = [(0,), (1,), (2,)]
    res = sample_replicas(F, dec, 4, 3000)
    sig = np.array([[r.spins[s][0] for s in F] for r in res])
    sigt = np.array([[r.spins[s][1] for s in F] for r in res])
    assert (sig <= sigt).all()
    assert np.array_equal((sig != sigt).astype(float), (sigt - sig) / 2)
    est = estimate_dbar(F, dec, 3000, 4)
    assert np.allclose(est.estimate, est.half_gap)
    assert (est.ci_low <= est.estimate).all() and (est.estimate <= est.ci_high).all()


def test_marginal_matches_single_model():
    beta, ht = 0.05, 0.3
    dec = KalikowDecomposition(pair(beta=beta, ht=ht))
    single = KalikowDecomposition(ising(1, beta, field=Field(ht, ht)))
    F = [(0,), (1,)]
    n = 10000
    a = [perfect_sample_pair(F, dec, np.random.default_rng(s))[1] for s in range(n)]
    b = sample_replicas(F, single, 77, n)

    def counts(rs):
        c = {k: 0 for k in itertools.product((-1.0, 1.0), repeat=2)}
        for r in rs:
            c[tuple(float(r.spins[s]) for s in F)] += 1
        return list(c.values())

    assert chi2_contingency(np.array([counts(a), counts(b)])).pvalue > 0.001


def test_field_gap_matches_transfer_matrix():
    beta, delta = 0.05, 0.2
    dec = KalikowDecomposition(pair(beta=beta, ht=delta))
    n = 8000
    est = estimate_dbar([(0,)], dec, n, 21)
    ref = (ising_1d_exact(beta, delta).magnetization - ising_1d_exact(beta, 0.0).magnetization) / 2
    p = est.sup
    assert abs(p - ref) <= 3 * math.sqrt(max(p * (1 - p), 1 / n) / n)


def test_pair_config_and_finite_range():
    m = pair_model_from_config({"model": "ising-pair", "beta": 0.05, "field_tilde": {"type": "constant", "h": 0.1}})
    assert isinstance(m, CoupledIsingModel) and m.range == 1
    with pytest.raises(ModelError):
        CoupledIsingModel(1, 0.05, ExponentialKernel(1, 0.1, 0.3), ExponentialKernel(1, 0.1, 0.3))
