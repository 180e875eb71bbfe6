"""Engine-against-oracle suites behind ``pssim validate``."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .assign import sample_replicas
from .decomposition import KalikowDecomposition
from .diagnostics import bounds_report
from .lattice import CEMETERY, ball_offsets
from .models import AutonormalModel, ExpFamilyModel
from .sketch import ancestor_statistics

LADDER_TOL = 1e-12
QUAD_TOL = 1e-6
RECON_SAMPLE = 4096


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _finite_exp(model) -> bool:
    return isinstance(model, ExpFamilyModel) and model.space.finite and model.kernel.range is not None


def _reconstruction(decomp: KalikowDecomposition, rng: np.random.Generator) -> Check:
    model = decomp.model
    d = model.d
    L = model.kernel.range if model.kernel.range is not None else 1
    offs = [o for o in ball_offsets(d, L) if any(o)]
    atoms = list(model.space.atoms)
    origin = (0,) * d
    total = len(atoms) ** (len(offs) + 1)
    if total <= RECON_SAMPLE:
        configs = itertools.product(range(len(atoms)), repeat=len(offs) + 1)
    else:
        configs = (tuple(rng.integers(0, len(atoms), len(offs) + 1)) for _ in range(RECON_SAMPLE))
    worst = 0.0
    n = 0
    for c in configs:
        eta = {origin: atoms[c[0]]}
        eta.update({o: atoms[j] for o, j in zip(offs, c[1:])})
        for a in atoms + [CEMETERY]:
            worst = max(worst, abs(decomp.reconstruct_rate(origin, a, eta) - model.rate(origin, a, eta)))
        n += 1
    return Check("reconstruction", worst <= LADDER_TOL, f"max |delta| = {worst:.3g} over {n} configurations")


def suite_ladder(cfg, decomp: KalikowDecomposition, seed: int) -> List[Check]:
    from .oracle import autonormal_ladder_quadrature, enumerate_decomposition

    model = decomp.model
    rng = np.random.default_rng(seed)
    out: List[Check] = []
    if isinstance(model, AutonormalModel):
        K = model.kernel.range
        if K is None:
            return [Check("ladder", False, "quadrature oracle needs a finite-range kernel")]
        table = {o: model.kernel.coupling(o) for o in ball_offsets(model.d, K) if any(o)}
        worst = 0.0
        for k in range(-1, K + 1):
            ref = autonormal_ladder_quadrature(model.sigma, table, k)
            worst = max(worst, abs(decomp.alpha_orbit(0, k) - ref))
        out.append(Check("alpha vs quadrature", worst <= QUAD_TOL, f"max |delta| = {worst:.3g}"))
        return out
    if hasattr(model, "Jt"):
        # pair model: only the reconstruction identity has an oracle
        return [_pair_reconstruction(decomp, rng)]
    if not _finite_exp(model):
        return [Check("ladder", False, "enumeration oracle needs finite spins and a finite-range kernel")]
    tab = enumerate_decomposition(model)
    da = max(abs(decomp.alpha_orbit(0, k) - tab.alpha[k]) for k in tab.alpha)
    dl = max(abs(decomp.lam_orbit(0, k) - tab.lam[k]) for k in tab.lam)
    out.append(Check("alpha vs enumeration", da <= LADDER_TOL, f"max |delta| = {da:.3g}"))
    out.append(Check("lambda vs enumeration", dl <= LADDER_TOL, f"max |delta| = {dl:.3g}"))
    s = sum(decomp.lam_orbit(0, k) for k in tab.lam)
    out.append(Check("sum lambda", abs(s - 1.0) <= LADDER_TOL, f"|sum - 1| = {abs(s - 1.0):.3g}"))
    out.append(_reconstruction(decomp, rng))
    return out


def _pair_reconstruction(decomp, rng) -> Check:
    from .coupling import PAIRS

    model = decomp.model
    d = model.d
    L = model.range
    offs = [o for o in ball_offsets(d, L) if any(o)]
    origin = (0,) * d
    worst, n = 0.0, 0
    for _ in range(RECON_SAMPLE // 4):
        eta = {origin: PAIRS[rng.integers(3)]}
        eta.update({o: PAIRS[rng.integers(3)] for o in offs})
        for a in list(PAIRS) + [CEMETERY]:
            worst = max(worst, abs(decomp.reconstruct_rate(origin, a, eta) - model.rate(origin, a, eta)))
        n += 1
    return Check("pair reconstruction", worst <= LADDER_TOL, f"max |delta| = {worst:.3g} over {n} configurations")


def suite_law(cfg, decomp: KalikowDecomposition, seed: int) -> List[Check]:
    from .oracle import forward_glauber_torus, ising_1d_exact, truncnorm_mean

    model = decomp.model
    n = cfg.sampler.replicas
    if decomp.gamma() >= 1.0:
        return [Check("law", False, f"gamma = {decomp.gamma():.4g} >= 1; no perfect sampler")]
    if isinstance(model, AutonormalModel):
        if model.kernel.total_abs != 0.0:
            return [Check("law", False, "law oracle covers the autonormal model only with J = 0")]
        res = sample_replicas([(0,) * model.d], decomp, seed, n, backend=cfg.sampler.backend)
        x = np.array([r.spins[(0,) * model.d] for r in res], dtype=float)
        ref = truncnorm_mean(0.0, model.sigma)
        se = x.std(ddof=1) / math.sqrt(n)
        return [Check("iid truncated-normal mean", abs(x.mean() - ref) <= 3 * se,
                      f"mean {x.mean():.5f} vs {ref:.5f} (3 s.e. = {3 * se:.2g})")]
    if not _finite_exp(model):
        return [Check("law", False, "no law oracle for this model")]
    d = model.d
    o, e = (0,) * d, (1,) + (0,) * (d - 1)
    res = sample_replicas([o, e], decomp, seed, n, backend=cfg.sampler.backend)
    x = np.array([[r.spins[o], r.spins[e]] for r in res], dtype=float)
    m_hat, m_se = x[:, 0].mean(), x[:, 0].std(ddof=1) / math.sqrt(n)
    c = x[:, 0] * x[:, 1]
    c_hat, c_se = c.mean(), c.std(ddof=1) / math.sqrt(n)
    kern = model.kernel
    w = model.space.weights
    nn_1d = (d == 1 and kern.range == 1 and kern.coupling((1,)) == kern.coupling((-1,))
             and tuple(model.space.atoms) == (-1.0, 1.0) and w[0] == w[1] and not model.field.alternating)
    if nn_1d:
        ex = ising_1d_exact(model.beta, model.field.value(0), kern.coupling((1,)))
        m_ref, c_ref = ex.magnetization, ex.nn_correlation
        m_tol, c_tol = 3 * m_se, 3 * c_se
        src = "transfer matrix"
    else:
        size = max(8, 4 * kern.range + 2)
        tor = forward_glauber_torus(model, size, 200, 2000, np.random.default_rng(seed + 1), window=[o, e])
        m_ref = tor.mean[0]
        prods = tor.samples[:, 0] * tor.samples[:, 1]
        c_ref = prods.mean()
        bm = np.array([b.mean() for b in np.array_split(prods, 50)])
        m_tol = 3 * math.hypot(m_se, tor.se[0])
        c_tol = 3 * math.hypot(c_se, bm.std(ddof=1) / math.sqrt(50))
        src = f"torus size {size}"
    return [
        Check(f"mean vs {src}", abs(m_hat - m_ref) <= m_tol, f"{m_hat:.5f} vs {m_ref:.5f} (tol {m_tol:.2g})"),
        Check(f"neighbour correlation vs {src}", abs(c_hat - c_ref) <= c_tol,
              f"{c_hat:.5f} vs {c_ref:.5f} (tol {c_tol:.2g})"),
    ]


def suite_bounds(cfg, decomp: KalikowDecomposition, seed: int) -> List[Check]:
    rep = bounds_report(decomp)
    if not rep.guaranteed:
        return [Check("bounds", False, f"gamma = {rep.gamma:.4g} >= 1; bounds are vacuous")]
    F = cfg.sampler.sites
    n = cfg.sampler.replicas
    M = rep.M_underbar
    rate = M * (1.0 - rep.gamma)
    probes = [0.5 / rate, 1.0 / rate, 2.0 / rate]
    st = ancestor_statistics(F, decomp, np.random.default_rng(seed), probes, n)
    out = []
    for N, p in st.nstop_tail.items():
        b = rep.nstop_tail(N, len(F))
        se = math.sqrt(max(p * (1 - p), 1.0 / n) / n)
        out.append(Check(f"P(N_STOP > {N})", p <= b + 3 * se, f"{p:.4g} <= {b:.4g} + 3 s.e."))
    for s, m, se in zip(st.horizons, st.mean_size, st.se_size):
        b = rep.ancestor_mean(s, len(F))
        out.append(Check(f"E|C_s| at s = {s:.3g}", m <= b + 3 * se, f"{m:.4g} <= {b:.4g} + 3 s.e."))
    return out
