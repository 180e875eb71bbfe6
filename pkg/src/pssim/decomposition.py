"""Convex decomposition of the rates into a mixture of finite-range densities.

For every site orbit we keep a lazily extended ladder

    alpha(-1) <= alpha(0) <= ... <= M,    lambda(k) = (alpha(k) - alpha(k-1)) / M,

and sample from the configuration independent layered densities p^{[k]}.
``p^{[k]}(.|w)`` is built by laying the configuration dependent ladder
alpha(l, w), l = -1..k, along a mass axis and keeping the part of it that
falls inside the fixed segment [alpha(k-1), alpha(k)]. Every layer that
overlaps the segment contributes the normalised increment
Delta^{[m]} = c^{[m]} - c^{[m-1]} (Delta atom included) with weight equal
to its share of the overlap.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .lattice import CEMETERY, Site, ball_size, is_cemetery, shell_size
from .models import ContinuousLocalInf, FiniteLocalInf, RateModel, UndeterminedSpinError

CLAMP_TOL = 1e-12  # relative slack allowed between alpha(k, w) and alpha(k)
WEIGHT_TOL = 1e-9
SNAP = 1e-13  # relative size below which a ladder increment is treated as 0
SATURATE = 1e-15  # certified relative deficit below which alpha(k) is set to M


class DecompositionError(RuntimeError):
    """Internal consistency failure (ladder or mixture weights)."""


class RangeCapExceeded(RuntimeError):
    """The range ladder had to be extended past the configured hard cap."""

    def __init__(self, cap: int, u: float):
        super().__init__(f"range draw u={u!r} needs the ladder past the cap L={cap}")
        self.cap = cap
        self.u = u


class GammaError(RuntimeError):
    """The tail of sum_k |V(k)| lambda(k) could not be certified."""


@dataclass(frozen=True)
class Component:
    weight: float
    layer: int
    upper: Any  # c^{[layer]}
    lower: Any  # c^{[layer - 1]}
    mass: float  # alpha(layer, w) - alpha(layer - 1, w)


class KalikowDecomposition:
    def __init__(self, model: RateModel, range_cap: int = 4096):
        self.model = model
        self.range_cap = int(range_cap)
        self._alpha: Dict[int, List[float]] = {o: [] for o in model.orbits}
        self._cum: Dict[int, List[float]] = {o: [] for o in model.orbits}
        self._lock = threading.Lock()
        self._pmf_cache: Dict[tuple, np.ndarray] = {}
        self._comp_cache: Dict[tuple, Tuple[Component, ...]] = {}
        self._gamma: float | None = None

    # ------------------------------------------------------------------ ladder

    @property
    def homogeneous(self) -> bool:
        return len(self.model.orbits) == 1

    @property
    def finite(self) -> bool:
        return self.model.finite

    def orbit(self, i: Site) -> int:
        return self.model.orbit(i)

    def mass(self, i: Site) -> float:
        return self.model.mass_orbit(self.model.orbit(i))

    def mass_orbit(self, orbit: int) -> float:
        return self.model.mass_orbit(orbit)

    def _extend(self, orbit: int, k: int) -> None:
        alphas = self._alpha[orbit]
        if len(alphas) > k + 1:
            return
        with self._lock:
            M = self.model.mass_orbit(orbit)
            L = self.model.range
            while len(alphas) <= k + 1:
                j = len(alphas) - 1
                if j > self.range_cap:
                    raise RangeCapExceeded(self.range_cap, float("nan"))
                if L is not None and j >= L:
                    a = M
                else:
                    a = min(self.model.alpha_inf(orbit, j), M)
                    if alphas:
                        prev = alphas[-1]
                        if a - prev <= SNAP * M:
                            a = prev
                    if j >= 0:
                        bound = self.model.deficit_bound(orbit, j)
                        if bound is not None and bound <= SATURATE:
                            a = M
                alphas.append(a)
                self._cum[orbit].append(1.0 if a == M else a / M)

    def alpha_orbit(self, orbit: int, k: int) -> float:
        if k < -1:
            raise ValueError("k must be >= -1")
        self._extend(orbit, k)
        return self._alpha[orbit][k + 1]

    def alpha(self, i: Site, k: int) -> float:
        return self.alpha_orbit(self.model.orbit(i), k)

    def lam_orbit(self, orbit: int, k: int) -> float:
        M = self.model.mass_orbit(orbit)
        if k == -1:
            return self.alpha_orbit(orbit, -1) / M
        return (self.alpha_orbit(orbit, k) - self.alpha_orbit(orbit, k - 1)) / M

    def lam(self, i: Site, k: int) -> float:
        """lambda_i(k)."""
        return self.lam_orbit(self.model.orbit(i), k)

    def cumulative(self, orbit: int, k: int) -> float:
        """sum_{l <= k} lambda(l) = alpha(k) / M."""
        self._extend(orbit, k)
        return self._cum[orbit][k + 1]

    def effective_range(self, orbit: int = 0) -> int | None:
        """Smallest K with alpha(K) = M, if the ladder saturates within the cap."""
        M = self.model.mass_orbit(orbit)
        L = self.model.range
        top = L if L is not None else self.range_cap
        for k in range(-1, top + 1):
            if self.alpha_orbit(orbit, k) == M:
                return k
        return None

    # ------------------------------------------------------------------ gamma

    def gamma(self) -> float:
        """sup over orbits of sum_{k>=0} |V(k)| lambda(k); an upper bound when the tail is bounded."""
        if self._gamma is None:
            self._gamma = max(self._gamma_orbit(o) for o in self.model.orbits)
        return self._gamma

    @property
    def subcritical(self) -> bool:
        return self.gamma() < 1.0

    def _gamma_orbit(self, orbit: int) -> float:
        d = self.model.d
        total = 0.0
        K = self.effective_range(orbit) if self.model.range is not None else None
        if K is not None:
            for k in range(0, K + 1):
                total += ball_size(d, k) * self.lam_orbit(orbit, k)
            return total
        # sum the ladder actually used (snapped and saturated) while it
        # saturates within the cap; a certified tail only closes a ladder
        # that never reaches M
        for k in range(0, self.range_cap + 1):
            total += ball_size(d, k) * self.lam_orbit(orbit, k)
            if self.alpha_orbit(orbit, k) == self.model.mass_orbit(orbit):
                return total
        tail = self._tail_after(orbit, self.range_cap)
        if tail is not None:
            return total + tail
        raise GammaError(f"subcriticality sum not certified within range cap {self.range_cap}")

    def _tail_after(self, orbit: int, k: int) -> float | None:
        # sum_{j>k} |V(j)| lambda(j) <= |V(k+1)| r_k + sum_{j>k} |S(j+1)| r_j,
        # with r_j = (M - alpha(j)) / M bounded by the model's deficit bound
        model, d = self.model, self.model.d
        b = model.deficit_bound(orbit, k)
        if b is None:
            return None
        if b <= SATURATE:
            return 0.0
        tail = ball_size(d, k + 1) * b
        j = k + 1
        prev = None
        while True:
            bj = model.deficit_bound(orbit, j)
            if bj <= SATURATE:
                break
            term = shell_size(d, j + 1) * bj
            tail += term
            if prev is not None and prev > 0 and term / prev < 1 and term * (term / prev) / (1 - term / prev) < 1e-16:
                break
            prev = term
            j += 1
            if j > k + 100000:
                return None
        return tail

    # ------------------------------------------------------------------ sampling: range

    def sample_range(self, i: Site, u: float) -> int:
        return self.sample_range_orbit(self.model.orbit(i), u)

    def sample_range_orbit(self, orbit: int, u: float) -> int:
        cum = self._cum[orbit]
        if not cum or cum[-1] <= u:
            k = len(cum) - 1
            while True:
                if k > self.range_cap:
                    raise RangeCapExceeded(self.range_cap, u)
                self._extend(orbit, k)
                if cum[k + 1] > u:
                    break
                k += 1
        return bisect.bisect_right(cum, u) - 1

    def range_cdf(self, orbit: int = 0) -> np.ndarray:
        """Cumulative alpha(k)/M for k = -1..K with K the effective range."""
        K = self.effective_range(orbit)
        if K is None:
            raise GammaError("ladder does not saturate; no finite range table")
        return np.array(self._cum[orbit][: K + 2])

    # ------------------------------------------------------------------ p^{[-1]}

    def pminus1_pmf(self, orbit: int) -> np.ndarray:
        """Finite A: p^{[-1]} over atoms followed by a zero Delta entry."""
        key = (orbit, -1)
        pmf = self._pmf_cache.get(key)
        if pmf is None:
            inf = self.model.local_inf(orbit, -1, 0.0)
            pmf = np.append(inf.masses / inf.mass_A, 0.0)
            self._pmf_cache[key] = pmf
        return pmf

    def sample_p_minus1(self, i: Site, rng) -> Any:
        orbit = self.model.orbit(i)
        if self.lam_orbit(orbit, -1) <= 0.0:
            raise DecompositionError("lambda(-1) = 0: p^{[-1]} is undefined")
        u = rng.random()
        if self.finite:
            return self._finite_draw(self.pminus1_pmf(orbit), u)
        inf = self.model.local_inf(orbit, -1, 0.0)
        return _invert(inf.cdf, u * inf.mass_A, inf.lower, inf.upper)

    def _finite_draw(self, pmf: np.ndarray, u: float) -> Any:
        cdf = _cdf(pmf)
        j = int(np.searchsorted(cdf, u, side="right"))
        j = min(j, len(pmf) - 1)
        atoms = self.model.space.atoms
        return CEMETERY if j == len(atoms) else atoms[j]

    # ------------------------------------------------------------------ p^{[k]}

    def components(self, i: Site, k: int, lookup: Callable[[Site], Any]) -> Tuple[Component, ...]:
        """Mixture components of p^{[k]}(.|w); weights sum to 1."""
        orbit = self.model.orbit(i)
        keys = self.model.layer_keys(i, k, lookup)
        return self._components(orbit, k, keys)

    def _components(self, orbit: int, k: int, keys: tuple) -> Tuple[Component, ...]:
        ck = (orbit, k, keys)
        hit = self._comp_cache.get(ck)
        if hit is not None:
            return hit
        if len(self._comp_cache) > 200000:
            self._comp_cache.clear()
        model = self.model
        M = model.mass_orbit(orbit)
        lo_t = self.alpha_orbit(orbit, k - 1)
        hi_t = self.alpha_orbit(orbit, k)
        seg = hi_t - lo_t
        if seg <= 0.0:
            raise DecompositionError(f"lambda({k}) = 0: p^{{[{k}]}} is undefined")
        infs = [model.local_inf(orbit, l, keys[l + 1]) for l in range(-1, k + 1)]
        A = [f.total for f in infs]
        A[0] = infs[0].mass_A  # no Delta mass at range -1
        for l in range(1, len(A)):
            if A[l] < A[l - 1]:
                A[l] = A[l - 1]
        if A[-1] < hi_t:
            if hi_t - A[-1] > CLAMP_TOL * M:
                raise DecompositionError(
                    f"alpha({k}, w) = {A[-1]!r} is below alpha({k}) = {hi_t!r}")
            A[-1] = hi_t
        comps = []
        wsum = 0.0
        for m in range(0, k + 1):
            a0, a1 = A[m], A[m + 1]
            ov = min(a1, hi_t) - max(a0, lo_t)
            if ov <= 0.0 or a1 <= a0:
                continue
            w = ov / seg
            wsum += w
            comps.append(Component(w, m, infs[m + 1], infs[m], a1 - a0))
        if abs(wsum - 1.0) > WEIGHT_TOL:
            raise DecompositionError(f"mixture weights sum to {wsum!r}")
        out = tuple(comps)
        self._comp_cache[ck] = out
        return out

    def pk_pmf(self, i: Site, k: int, lookup: Callable[[Site], Any]) -> np.ndarray:
        """Finite A: p^{[k]}(.|w) over atoms followed by the Delta entry."""
        orbit = self.model.orbit(i)
        keys = self.model.layer_keys(i, k, lookup)
        return self._pk_pmf(orbit, k, keys)

    def _pk_pmf(self, orbit: int, k: int, keys: tuple) -> np.ndarray:
        ck = (orbit, k, keys)
        pmf = self._pmf_cache.get(ck)
        if pmf is not None:
            return pmf
        if len(self._pmf_cache) > 200000:
            self._pmf_cache.clear()
        pmf = np.zeros(len(self.model.space.atoms) + 1)
        for c in self._components(orbit, k, keys):
            inc = np.append(c.upper.masses - c.lower.masses, c.upper.cemetery - c.lower.cemetery)
            np.maximum(inc, 0.0, out=inc)
            pmf += (c.weight / c.mass) * inc
        pmf /= pmf.sum()
        self._pmf_cache[ck] = pmf
        return pmf

    def sample_p_k(self, i: Site, k: int, w: Mapping[Site, Any] | Callable[[Site], Any], rng) -> Any:
        """Draw from p^{[k]}(.|w); ``w`` is a local configuration or a lookup."""
        if k < 0:
            return self.sample_p_minus1(i, rng)
        lookup = w if callable(w) else _strict_lookup(w)
        orbit = self.model.orbit(i)
        keys = self.model.layer_keys(i, k, lookup)
        if self.finite:
            return self._finite_draw(self._pk_pmf(orbit, k, keys), rng.random())
        comps = self._components(orbit, k, keys)
        u1 = rng.random()
        u2 = rng.random()
        acc = 0.0
        chosen = comps[-1]
        for c in comps:
            acc += c.weight
            if u1 < acc:
                chosen = c
                break
        x = u2 * chosen.mass
        atom = max(chosen.upper.cemetery - chosen.lower.cemetery, 0.0)
        if x < atom:
            return CEMETERY
        up, lo = chosen.upper, chosen.lower
        return _invert(lambda t: up.cdf(t) - lo.cdf(t), x - atom, up.lower, up.upper)

    # ------------------------------------------------------------------ densities

    def density_p_minus1(self, i: Site, a) -> float:
        """p^{[-1]}(a) with respect to rho*."""
        if is_cemetery(a):
            return 0.0
        orbit = self.model.orbit(i)
        inf = self.model.local_inf(orbit, -1, 0.0)
        return inf.value(self.model._value_arg(a)) / inf.mass_A

    def density_p_k(self, i: Site, k: int, a, w: Mapping[Site, Any] | Callable[[Site], Any]) -> float:
        """p^{[k]}(a|w) with respect to rho*."""
        if k < 0:
            return self.density_p_minus1(i, a)
        lookup = w if callable(w) else _strict_lookup(w)
        orbit = self.model.orbit(i)
        M = self.model.mass_orbit(orbit)
        arg = self.model._value_arg(a)
        val = 0.0
        for c in self.components(i, k, lookup):
            val += c.weight * (c.upper.value(arg) - c.lower.value(arg)) / c.mass
        return val

    def reconstruct_rate(self, i: Site, a, eta) -> float:
        """M [lambda(-1) p^{[-1]}(a) + sum_k lambda(k) p^{[k]}(a|eta)]; verification only."""
        self.model.check_value(a)
        orbit = self.model.orbit(i)
        M = self.model.mass_orbit(orbit)
        lookup = _strict_lookup(eta)
        total = M * self.lam_orbit(orbit, -1) * self.density_p_minus1(i, a)
        k = 0
        while self.cumulative(orbit, k - 1) < 1.0:
            lam = self.lam_orbit(orbit, k)
            if lam > 0.0:
                total += M * lam * self.density_p_k(i, k, a, lookup)
            if self.model.range is None and 1.0 - self.cumulative(orbit, k) < 1e-15:
                break
            k += 1
        return total

    # ------------------------------------------------------------------ reporting

    def ladder_rows(self, orbit: int = 0, K: int | None = None) -> List[dict]:
        """Rows k, alpha, lambda, partial_sum, |V(k)|, gamma_contribution."""
        if K is None:
            K = self.effective_range(orbit)
            if K is None:
                K = 32
        d = self.model.d
        rows = []
        for k in range(-1, K + 1):
            lam = self.lam_orbit(orbit, k)
            v = ball_size(d, k)
            rows.append({
                "k": k,
                "alpha": self.alpha_orbit(orbit, k),
                "lambda": lam,
                "partial_sum": self.cumulative(orbit, k),
                "V": v,
                "gamma_contribution": v * lam if k >= 0 else 0.0,
            })
        return rows


def _cdf(pmf: np.ndarray) -> np.ndarray:
    c = np.cumsum(pmf)
    return c / c[-1]


def _strict_lookup(w) -> Callable[[Site], Any]:
    def lookup(j):
        v = w[j]
        if is_cemetery(v):
            raise UndeterminedSpinError(f"site {j} has no real spin")
        return v

    return lookup


def _invert(F: Callable[[float], float], target: float, lo: float, hi: float) -> float:
    """Smallest t in [lo, hi] with F(t) = target for a continuous nondecreasing F."""
    if target <= 0.0:
        return lo
    top = F(hi)
    if target >= top:
        return hi
    return brentq(lambda t: F(t) - target, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
