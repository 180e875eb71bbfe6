from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.stats import chisquare

from pssim import KalikowDecomposition, autonormal, gibbs_cont, ising
from pssim.decomposition import DecompositionError
from pssim.kernels import ExponentialKernel, FiniteRangeKernel, nearest_neighbour
from pssim.lattice import CEMETERY, ball_offsets, is_cemetery
from pssim.models import Field
from pssim.oracle import enumerate_decomposition

from conftest import ising_1d

# Enumeration-oracle output for 1-d nearest-neighbour Ising, J = 1, A = {-1, +1}.
# Hand algebra: M = 2 cosh(2b), alpha(-1) = alpha(0) = 2 exp(-2b), alpha(1) = M,
# lambda(-1) = exp(-2b) / cosh(2b), lambda(1) = tanh(2b).
ORACLE_1D = {
    0.1: (2.040133511238152, 1.6374615061559636, 0.8026246797750959, 0.1973753202249041),
    0.15: (2.090677028257721, 1.4816364413634358, 0.7086873875484091, 0.2913126124515909),
    0.5: (3.0861612696304874, 0.7357588823428847, 0.23840584404423512, 0.7615941559557649),
}
# d = 2, beta = 0.1: alpha(-1), alpha(1) and lambda(1)
ORACLE_2D = (1.3406400920712787, 2.16214474367691, 0.37994896225522495)
GAMMA_015 = 0.8739378373547727


@pytest.mark.parametrize("beta", sorted(ORACLE_1D))
def test_frozen_ladder_1d(beta):
    M, a_m1, l_m1, l_1 = ORACLE_1D[beta]
    assert M == pytest.approx(2 * math.cosh(2 * beta), rel=1e-15)
    assert a_m1 == pytest.approx(2 * math.exp(-2 * beta), rel=1e-15)
    assert l_1 == pytest.approx(math.tanh(2 * beta), rel=1e-15)
    dec = ising_1d(beta)
    assert dec.mass_orbit(0) == pytest.approx(M, abs=1e-12)
    assert dec.alpha_orbit(0, -1) == pytest.approx(a_m1, abs=1e-12)
    assert dec.alpha_orbit(0, 0) == pytest.approx(a_m1, abs=1e-12)
    assert dec.alpha_orbit(0, 1) == M
    assert dec.lam_orbit(0, -1) == pytest.approx(l_m1, abs=1e-12)
    assert dec.lam_orbit(0, 0) == 0.0
    assert dec.lam_orbit(0, 1) == pytest.approx(l_1, abs=1e-12)
    assert dec.lam_orbit(0, 2) == 0.0


def test_frozen_ladder_2d():
    dec = KalikowDecomposition(ising(2, 0.1))
    assert dec.alpha_orbit(0, -1) == pytest.approx(ORACLE_2D[0], abs=1e-12)
    assert dec.alpha_orbit(0, 1) == pytest.approx(ORACLE_2D[1], abs=1e-12)
    assert dec.lam_orbit(0, 1) == pytest.approx(ORACLE_2D[2], abs=1e-12)


def test_gamma_values():
    assert ising_1d(0.15).gamma() == pytest.approx(GAMMA_015, abs=1e-15)
    assert GAMMA_015 == pytest.approx(3 * math.tanh(0.3), rel=1e-15)
    assert ising_1d(0.5).gamma() == pytest.approx(3 * math.tanh(1.0), rel=1e-14)
    assert ising_1d(0.0).gamma() == 0.0
    assert not ising_1d(0.5).subcritical


def test_beta_zero():
    for model in (ising(1, 0.0), ising(2, 0.0, states=(-1, 0, 1)), autonormal(1, 0.4), gibbs_cont(1, 0.0)):
        dec = KalikowDecomposition(model)
        assert dec.lam_orbit(0, -1) == 1.0
        assert dec.gamma() == 0.0
    dec = ising_1d(0.0)
    with pytest.raises(DecompositionError):
        dec.sample_p_k((0,), 1, {(-1,): 1.0, (0,): 1.0, (1,): 1.0}, np.random.default_rng(0))
    assert all(dec.sample_range((0,), u) == -1 for u in (0.0, 0.5, 0.999999))


def test_sample_range_inverse_cdf():
    dec = ising_1d(0.15)
    l_m1 = dec.lam_orbit(0, -1)
    assert dec.sample_range((0,), 0.0) == -1
    assert dec.sample_range((0,), l_m1 * 0.999) == -1
    assert dec.sample_range((0,), l_m1 + 1e-9) == 1
    assert dec.sample_range((0,), 1 - 1e-16) == 1


kernels = st.fixed_dictionaries({
    (1,): st.floats(-1, 1), (-1,): st.floats(-1, 1), (2,): st.floats(-0.6, 0.6), (-2,): st.floats(-0.6, 0.6)})
spaces = st.sampled_from([((-1.0, 1.0), None), ((-1.0, 0.0, 1.0), None), ((0.0, 1.0, 2.0), (0.5, 1.0, 2.0)),
                          ((-1.0, 1.0), (1.0, 3.0))])


@settings(max_examples=40, deadline=None)
@given(kernels, spaces, st.floats(0.0, 0.6), st.floats(-0.5, 0.5))
def test_ladder_matches_enumeration(table, space, beta, h):
    states, weights = space
    model = ising(1, beta, FiniteRangeKernel(1, table), Field(h, h), states, weights)
    dec = KalikowDecomposition(model)
    tab = enumerate_decomposition(model)
    M = tab.M
    assert dec.mass_orbit(0) == pytest.approx(M, abs=1e-12 * max(1.0, M))
    prev = -1.0
    for k in tab.alpha:
        a = dec.alpha_orbit(0, k)
        assert a == pytest.approx(tab.alpha[k], abs=1e-12 * max(1.0, M))
        assert a >= prev
        prev = a
    L = model.kernel.range
    assert dec.alpha_orbit(0, L) == dec.mass_orbit(0)
    total = sum(dec.lam_orbit(0, k) for k in range(-1, L + 1))
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(kernels, spaces, st.floats(0.0, 0.6), st.floats(-0.5, 0.5), st.data())
def test_reconstruction_identity(table, space, beta, h, data):
    states, weights = space
    model = ising(1, beta, FiniteRangeKernel(1, table), Field(h, h), states, weights)
    dec = KalikowDecomposition(model)
    offs = ball_offsets(1, 2)
    eta = {o: data.draw(st.sampled_from(states)) for o in offs}
    for a in list(states) + [CEMETERY]:
        assert dec.reconstruct_rate((0,), a, eta) == pytest.approx(model.rate((0,), a, eta), abs=1e-12)


def test_reconstruction_exhaustive_2d():
    model = ising(2, 0.12, field=Field(0.3, -0.2))
    dec = KalikowDecomposition(model)
    offs = ball_offsets(2, 1)
    for origin in ((0, 0), (1, 0)):
        worst = 0.0
        for vals in itertools.product((-1.0, 1.0), repeat=len(offs)):
            eta = {tuple(a + b for a, b in zip(origin, o)): v for o, v in zip(offs, vals)}
            for a in (-1.0, 1.0, CEMETERY):
                worst = max(worst, abs(dec.reconstruct_rate(origin, a, eta) - model.rate(origin, a, eta)))
        assert worst <= 1e-12


def test_pk_pmf_normalised():
    dec = KalikowDecomposition(ising(1, 0.3, FiniteRangeKernel(1, {(1,): 1.0, (-1,): 0.4, (2,): -0.5}),
                                     states=(-1, 0, 1)))
    for vals in itertools.product((-1.0, 0.0, 1.0), repeat=5):
        w = dict(zip(ball_offsets(1, 2), vals))
        for k in (1, 2):
            if dec.lam_orbit(0, k) <= 0:
                continue
            pmf = dec.pk_pmf((0,), k, w.__getitem__)
            assert pmf.min() >= 0.0
            assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    pm1 = dec.pminus1_pmf(0)
    assert pm1[-1] == 0.0 and pm1.sum() == pytest.approx(1.0)


def test_p_minus1_uniform_and_never_cemetery():
    dec = ising_1d(0.4)
    pmf = dec.pminus1_pmf(0)
    assert pmf[:2] == pytest.approx([0.5, 0.5], abs=1e-15)
    rng = np.random.default_rng(3)
    draws = [dec.sample_p_minus1((0,), rng) for _ in range(10**6)]
    assert not any(is_cemetery(x) for x in draws)
    plus = sum(1 for x in draws if x == 1.0)
    assert abs(plus / 10**6 - 0.5) < 5 * 0.5 / 1000


def test_sample_p_k_chi_square():
    dec = KalikowDecomposition(ising(1, 0.3, FiniteRangeKernel(1, {(1,): 1.0, (-1,): 0.4, (2,): -0.5}),
                                     states=(-1, 0, 1)))
    w = {(-2,): 1.0, (-1,): -1.0, (0,): 0.0, (1,): 1.0, (2,): 0.0}
    k = 1
    pmf = dec.pk_pmf((0,), k, w.__getitem__)
    rng = np.random.default_rng(11)
    n = 10**5
    counts = {}
    for _ in range(n):
        x = dec.sample_p_k((0,), k, w, rng)
        key = "D" if is_cemetery(x) else x
        counts[key] = counts.get(key, 0) + 1
    keys = [-1.0, 0.0, 1.0, "D"]
    obs = np.array([counts.get(c, 0) for c in keys], dtype=float)
    exp = pmf * n
    mask = exp > 0
    assert obs[~mask].sum() == 0
    assert chisquare(obs[mask], exp[mask]).pvalue > 0.001


def test_ising_layer_one_identity():
    beta = 0.2
    dec = ising_1d(beta)
    M = dec.mass_orbit(0)
    for l, r in itertools.product((-1.0, 1.0), repeat=2):
        w = {(-1,): l, (0,): 1.0, (1,): r}
        for a in (-1.0, 1.0, CEMETERY):
            lhs = M * dec.lam_orbit(0, 1) * dec.density_p_k((0,), 1, a, w) + \
                M * dec.lam_orbit(0, -1) * dec.density_p_minus1((0,), a)
            assert lhs == pytest.approx(dec.model.rate((0,), a, w), abs=1e-12)


@pytest.mark.parametrize("model", [gibbs_cont(1, 0.35), autonormal(1, 0.4, nearest_neighbour(1, 0.25))])
def test_continuous_reconstruction_and_normalisation(model):
    dec = KalikowDecomposition(model)
    rng = np.random.default_rng(5)
    lo, hi = model.space.lo, model.space.hi
    for _ in range(20):
        eta = {o: float(rng.uniform(lo, hi)) for o in ball_offsets(1, 1)}
        for a in list(rng.uniform(lo, hi, 3)) + [CEMETERY]:
            assert dec.reconstruct_rate((0,), a, eta) == pytest.approx(model.rate((0,), a, eta), abs=1e-6)
        for k in (0, 1):
            if dec.lam_orbit(0, k) <= 0:
                continue
            dens = quad(lambda x: dec.density_p_k((0,), k, x, eta), lo, hi, points=[0.0], epsabs=1e-11, limit=200)[0]
            total = dens * model.space.density + dec.density_p_k((0,), k, CEMETERY, eta)
            assert total == pytest.approx(1.0, abs=1e-7)


def test_continuous_sampler_matches_density():
    model = gibbs_cont(1, 0.5)
    dec = KalikowDecomposition(model)
    eta = {(-1,): 0.8, (0,): 0.0, (1,): 0.6}
    rng = np.random.default_rng(9)
    xs = [dec.sample_p_k((0,), 1, eta, rng) for _ in range(20000)]
    cem = sum(1 for x in xs if is_cemetery(x)) / len(xs)
    real = np.array([x for x in xs if not is_cemetery(x)])
    p_cem = dec.density_p_k((0,), 1, CEMETERY, eta)
    assert abs(cem - p_cem) <= 4 * math.sqrt(p_cem * (1 - p_cem) / len(xs)) + 1e-3
    # mean of the real part against quadrature
    num = quad(lambda x: x * dec.density_p_k((0,), 1, x, eta), -1, 1, points=[0.0])[0]
    den = quad(lambda x: dec.density_p_k((0,), 1, x, eta), -1, 1, points=[0.0])[0]
    assert abs(real.mean() - num / den) <= 4 * real.std() / math.sqrt(len(real))


def test_infinite_range_ladder():
    dec = KalikowDecomposition(ising(1, 0.1, ExponentialKernel(1, 0.5, 0.4)))
    K = dec.effective_range(0)
    assert K is not None
    lam = [dec.lam_orbit(0, k) for k in range(-1, K + 1)]
    assert min(lam) >= 0.0 and sum(lam) == pytest.approx(1.0, abs=1e-12)
    partial = sum((2 * k + 1) * dec.lam_orbit(0, k) for k in range(0, K + 1))
    assert dec.gamma() >= partial - 1e-15
    assert dec.gamma() < 1.0


def test_alternating_field_orbits_differ():
    dec = KalikowDecomposition(ising(1, 0.2, field=Field(0.5, -0.1)))
    assert dec.mass_orbit(0) != dec.mass_orbit(1)
    for o in (0, 1):
        assert sum(dec.lam_orbit(o, k) for k in (-1, 0, 1)) == pytest.approx(1.0, abs=1e-12)
