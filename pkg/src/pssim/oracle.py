"""Brute-force references that share no numerical path with the engine.

* ``enumerate_decomposition``: local infima and the alpha/lambda ladder by
  exhausting every configuration of the ball V(L), for finite spins.
* ``ising_1d_exact``: infinite-volume 1-d nearest-neighbour Ising through
  the 2x2 transfer matrix.
* ``forward_glauber_torus``: a plain uniformised Glauber chain on a torus.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

ENUM_BUDGET = 10**7


class OracleError(ValueError):
    pass


def _offsets_by_distance(d: int, L: int) -> List[Tuple[int, ...]]:
    # every V(k) is a prefix of this list
    pts = [p for p in itertools.product(range(-L, L + 1), repeat=d) if sum(map(abs, p)) <= L]
    return sorted(pts, key=lambda p: (sum(map(abs, p)), p))


@dataclass
class EnumerationTable:
    states: Tuple[float, ...]
    weights: np.ndarray
    offsets: List[Tuple[int, ...]]
    M: float
    alpha: Dict[int, float]
    lam: Dict[int, float]
    cinf: Dict[int, np.ndarray]  # k -> array (|A| + 1, |A|^{|V(k)|}); last row is Delta
    rates: np.ndarray  # (|A| + 1, |A|^{|V(L)|}) full rates, Delta last

    def prefix_size(self, k: int) -> int:
        return sum(1 for o in self.offsets if sum(map(abs, o)) <= k) if k >= 0 else 0


def enumerate_decomposition(model, L: int | None = None) -> EnumerationTable:
    """Exact ladder of a finite-spin exponential-family model by enumeration."""
    space = model.space
    if not space.finite:
        raise OracleError("enumeration needs a finite state space")
    kernel = model.kernel
    if kernel.range is None:
        raise OracleError("enumeration needs a finite-range kernel")
    L = kernel.range if L is None else max(L, kernel.range)
    d = model.d
    offs = _offsets_by_distance(d, L)
    states = tuple(float(a) for a in space.atoms)
    n = len(states)
    if n ** len(offs) > ENUM_BUDGET:
        raise OracleError(f"{n}^{len(offs)} configurations exceed the budget {ENUM_BUDGET}")
    w = np.array(space.weights, dtype=float)
    Jvec = np.array([kernel.coupling(o) for o in offs])
    h = model.field.value(0)
    beta = model.beta
    vals = np.array(states)
    # all configurations; first offset is the slowest index
    grid = np.array(list(itertools.product(range(n), repeat=len(offs))), dtype=np.int64)
    field = vals[grid] @ Jvec + h
    c = np.exp(beta * np.outer(vals, field))  # (n, configs)
    mass = w @ c
    M = float(mass.max())
    rates = np.vstack([c, (M - mass)[None, :]])
    alpha, lam, cinf = {}, {}, {}
    shape = (n,) * len(offs)
    for k in range(-1, L + 1):
        p = 0 if k < 0 else sum(1 for o in offs if sum(map(abs, o)) <= k)
        r = rates.reshape((n + 1,) + (n ** p, -1))
        inf = r.min(axis=2)
        if k < 0:
            inf[-1] = 0.0
        cinf[k] = inf
        tot = w @ inf[:n] + inf[n]
        alpha[k] = float(tot.min()) if k >= 0 else float(w @ inf[:n, 0])
    lam[-1] = alpha[-1] / M
    for k in range(0, L + 1):
        lam[k] = (alpha[k] - alpha[k - 1]) / M
    return EnumerationTable(states, w, offs, M, alpha, lam, cinf, rates)


@dataclass
class Ising1D:
    beta: float
    h: float
    J: float
    magnetization: float
    nn_correlation: float
    eigenvalue: float
    vector: np.ndarray  # leading eigenvector over (-1, +1)

    def window_marginal(self, n: int) -> Dict[Tuple[int, ...], float]:
        """Law of n consecutive spins in infinite volume."""
        T = _transfer(self.beta, self.h, self.J)
        v = self.vector
        out = {}
        for cfg in itertools.product((-1, 1), repeat=n):
            idx = [(s + 1) // 2 for s in cfg]
            p = v[idx[0]] * v[idx[-1]]
            for a, b in zip(idx, idx[1:]):
                p *= T[a, b] / self.eigenvalue
            out[cfg] = float(p)
        return out

    def correlation(self, r: int) -> float:
        """E[s_0 s_r]."""
        T = _transfer(self.beta, self.h, self.J)
        S = np.diag([-1.0, 1.0])
        v = self.vector
        P = np.linalg.matrix_power(T / self.eigenvalue, r)
        return float(v @ S @ P @ S @ v)


def _transfer(beta: float, h: float, J: float) -> np.ndarray:
    s = np.array([-1.0, 1.0])
    return np.exp(beta * J * np.outer(s, s) + beta * h * (s[:, None] + s[None, :]) / 2.0)


def ising_1d_exact(beta: float, h: float = 0.0, J: float = 1.0) -> Ising1D:
    """Stationary law of the 1-d nearest-neighbour Ising model (weights exp(beta J s s' + beta h s))."""
    T = _transfer(beta, h, J)
    evals, evecs = np.linalg.eigh(T)
    lead = int(np.argmax(evals))
    v = np.abs(evecs[:, lead])
    v /= np.linalg.norm(v)
    m = float(v[1] ** 2 - v[0] ** 2)
    tmp = Ising1D(beta, h, J, m, 0.0, float(evals[lead]), v)
    tmp.nn_correlation = tmp.correlation(1)
    return tmp


def magnetization_1d(beta: float, h: float, J: float = 1.0) -> float:
    """Closed form sinh(H) / sqrt(sinh(H)^2 + exp(-4K)), K = beta J, H = beta h."""
    H, K = beta * h, beta * J
    return math.sinh(H) / math.sqrt(math.sinh(H) ** 2 + math.exp(-4 * K))


@dataclass
class TorusRun:
    window: Tuple[Tuple[int, ...], ...]
    mean: np.ndarray
    se: np.ndarray
    samples: np.ndarray  # recorded window configurations
    size: int


def forward_glauber_torus(model, size: int, burn_in: int, horizon: int, rng: np.random.Generator,
                          window: Sequence[Tuple[int, ...]] | None = None, thin: int | None = None,
                          batches: int = 50) -> TorusRun:
    """Uniformised Glauber chain for a finite-spin model on the torus (Z/size)^d.

    ``burn_in`` and ``horizon`` count sweeps (size^d site updates). The window
    is recorded once per ``thin`` updates; error bars use batch means.
    """
    space = model.space
    if not space.finite:
        raise OracleError("torus oracle needs a finite state space")
    kernel = model.kernel
    if kernel.range is None or 2 * kernel.range >= size:
        raise OracleError("kernel does not fit on the torus")
    d = model.d
    vals = np.array([float(a) for a in space.atoms])
    w = np.array(space.weights, dtype=float)
    n = len(vals)
    offs, Js = [], []
    for p in itertools.product(range(-kernel.range, kernel.range + 1), repeat=d):
        J = kernel.coupling(p)
        if J != 0.0:
            offs.append(np.array(p))
            Js.append(J)
    beta = model.beta
    fields = model.field
    nsite = size**d
    cfg = rng.integers(0, n, size=(size,) * d)
    # M by brute force over the extreme local fields of the torus neighbourhood
    lo, hi = vals.min(), vals.max()
    xmax = sum(max(J * lo, J * hi) for J in Js)
    xmin = sum(min(J * lo, J * hi) for J in Js)
    Ms = {}
    for parity in (0, 1):
        h = fields.value(parity) if fields.alternating else fields.value(0)
        Ms[parity] = max(float(w @ np.exp(beta * vals * (x + h))) for x in (xmin, xmax))
    window = tuple(tuple(s) for s in (window or [(0,) * d]))
    thin = thin or nsite
    total = (burn_in + horizon) * nsite
    rec = []
    coords = rng.integers(0, size, size=(total, d))
    us = rng.random(total)
    for step in range(total):
        i = coords[step]
        x = 0.0
        for off, J in zip(offs, Js):
            x += J * vals[cfg[tuple((i + off) % size)]]
        parity = int(i.sum()) & 1 if fields.alternating else 0
        h = fields.value(parity)
        M = Ms[parity]
        rates = w * np.exp(beta * vals * (x + h))
        cum = np.cumsum(rates) / M
        j = int(np.searchsorted(cum, us[step], side="right"))
        if j < n:
            cfg[tuple(i)] = j
        if step >= burn_in * nsite and (step - burn_in * nsite) % thin == 0:
            rec.append([vals[cfg[tuple(np.array(s) % size)]] for s in window])
    samples = np.array(rec)
    mean = samples.mean(axis=0)
    nb = max(2, min(batches, len(samples) // 2))
    bm = np.array([b.mean(axis=0) for b in np.array_split(samples, nb)])
    se = bm.std(axis=0, ddof=1) / math.sqrt(nb)
    return TorusRun(window, mean, se, samples, size)


def truncnorm_mean(mu: float, sigma: float, lower: float = 0.0, upper: float = 1.0) -> float:
    """Mean of N(mu, sigma^2) conditioned on [lower, upper], via erf (independent of the engine)."""
    a, b = (lower - mu) / sigma, (upper - mu) / sigma
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    Z = 0.5 * (math.erf(b / math.sqrt(2)) - math.erf(a / math.sqrt(2)))
    return mu + sigma * (phi(a) - phi(b)) / Z


def autonormal_ladder_quadrature(sigma: float, Jtable: Dict[Tuple[int, ...], float], k: int, grid: int = 401,
                                 ) -> float:
    """alpha(k) of the autonormal model by quadrature and a brute search over fields.

    For each partial field s over the seen shells and each unseen field in
    its range the truncated-normal density is evaluated on a fine grid; the
    local infimum is the pointwise minimum over a dense set of unseen fields
    and its integral uses adaptive quadrature. alpha(k) is the minimum over
    a dense grid of s refined by a bounded scalar search.
    """
    from scipy.integrate import quad
    from scipy.optimize import minimize_scalar
    from scipy.stats import truncnorm

    seen = [J for o, J in Jtable.items() if sum(map(abs, o)) <= k]
    unseen = [J for o, J in Jtable.items() if sum(map(abs, o)) > k]
    P_u = sum(J for J in unseen if J > 0)
    N_u = -sum(J for J in unseen if J < 0)
    P_s = sum(J for J in seen if J > 0)
    N_s = -sum(J for J in seen if J < 0)

    def pdf(a, mu):
        return truncnorm.pdf(a, (0 - mu) / sigma, (1 - mu) / sigma, loc=mu, scale=sigma)

    def overlap(s):
        if P_u + N_u == 0:
            return 1.0
        mus = np.linspace(s - N_u, s + P_u, grid)
        f = lambda a: float(np.min(pdf(a, mus)))
        return quad(f, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)[0]

    if P_s + N_s == 0:
        return overlap(0.0)
    ss = np.linspace(-N_s, P_s, 33)
    vals = [overlap(s) for s in ss]
    j = int(np.argmin(vals))
    res = minimize_scalar(overlap, bounds=(ss[max(j - 1, 0)], ss[min(j + 1, len(ss) - 1)]), method="bounded",
                          options={"xatol": 1e-10})
    return min(vals[j], float(res.fun))
