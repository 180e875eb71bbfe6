"""Closed-form guarantees and the Monte-Carlo partition-ratio helper."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .decomposition import KalikowDecomposition


@dataclass(frozen=True)
class BoundsReport:
    """Bounds derived from gamma; every evaluator returns inf when gamma >= 1."""

    gamma: float
    M_underbar: float
    beta_c: float | None
    decomp: KalikowDecomposition

    @property
    def guaranteed(self) -> bool:
        return self.gamma < 1.0

    def nstop_tail(self, N: int, n_sites: int = 1) -> float:
        """P(N_STOP > N) <= |F| gamma^N."""
        if not self.guaranteed:
            return math.inf
        return n_sites * self.gamma**N

    def convergence(self, t: float, n_sites: int = 1) -> float:
        """Coupling / total-variation bound |F| exp(-M (1 - gamma) t) at horizon t."""
        if not self.guaranteed:
            return math.inf
        return n_sites * math.exp(-self.M_underbar * (1.0 - self.gamma) * t)

    def ancestor_mean(self, s: float, n_sites: int = 1) -> float:
        """E|C_s| <= |F| exp(-M (1 - gamma) s)."""
        return self.convergence(s, n_sites)

    def steps_bias(self, N: int) -> float:
        """Bias of a sampler that abandons runs longer than N steps: gamma^N / (1 - gamma^N)."""
        if not self.guaranteed:
            return math.inf
        g = self.gamma**N
        return g / (1.0 - g)

    def range_bias(self, L: int) -> float:
        """sup_i (M_i - alpha_i(L)) / M_i / (1 - gamma)."""
        if not self.guaranteed:
            return math.inf
        d = self.decomp
        worst = 0.0
        for o in d.model.orbits:
            M = d.mass_orbit(o)
            worst = max(worst, (M - d.alpha_orbit(o, L)) / M)
        return worst / (1.0 - self.gamma)

    def summary(self) -> dict:
        return {"gamma": self.gamma, "subcritical": self.guaranteed, "M_underbar": self.M_underbar,
                "beta_c": self.beta_c}


def bounds_report(decomp: KalikowDecomposition) -> BoundsReport:
    from .coupling import beta_c

    model = decomp.model
    kern = getattr(model, "Jt", None) or model.kernel
    try:
        bc = beta_c(kern) if all(J >= 0 for r in range(1, (kern.range or 1) + 1) for _, J in kern.shell(r)) else None
    except Exception:
        bc = None
    M = min(decomp.mass_orbit(o) for o in model.orbits)
    return BoundsReport(decomp.gamma(), M, bc, decomp)


# ---------------------------------------------------------------------------
# partition-function ratios


def _stats(samples, T: Callable | None) -> np.ndarray:
    if T is None:
        arr = np.asarray(samples, dtype=float)
    else:
        arr = np.asarray([T(x) for x in samples], dtype=float)
    if arr.size == 0:
        raise ValueError("no samples")
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def mc_partition_ratio(samples: Sequence, T: Callable | None, theta, psi) -> float:
    """d_n(theta) = mean_i exp(<T(X_i), theta - psi>), an estimate of Z(theta) / Z(psi).

    ``samples`` are window configurations drawn at ``psi`` (or precomputed
    statistic vectors when ``T`` is None).
    """
    return math.exp(log_partition_ratio(samples, T, theta, psi))


def log_partition_ratio(samples: Sequence, T: Callable | None, theta, psi) -> float:
    S = _stats(samples, T)
    delta = np.atleast_1d(np.asarray(theta, dtype=float) - np.asarray(psi, dtype=float))
    return float(logsumexp(S @ delta) - math.log(len(S)))


def partition_ratio_se(samples: Sequence, T: Callable | None, theta, psi) -> float:
    """Standard error of d_n(theta)."""
    S = _stats(samples, T)
    delta = np.atleast_1d(np.asarray(theta, dtype=float) - np.asarray(psi, dtype=float))
    v = np.exp(S @ delta)
    return float(v.std(ddof=1) / math.sqrt(len(v)))


def mle_grid(samples: Sequence, T: Callable | None, observed, grid: Sequence, psi) -> tuple[float, np.ndarray]:
    """argmax over ``grid`` of <T_obs, theta> - log d_n(theta).

    ``observed`` is the statistic of the data (a mean for iid observations).
    Returns the maximiser and the objective on the grid.
    """
    S = _stats(samples, T)
    obs = np.atleast_1d(np.asarray(observed, dtype=float))
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    vals = []
    for th in grid:
        th = np.atleast_1d(np.asarray(th, dtype=float))
        vals.append(float(obs @ th) - (float(logsumexp(S @ (th - psi))) - math.log(len(S))))
    vals = np.asarray(vals)
    return grid[int(np.argmax(vals))], vals
