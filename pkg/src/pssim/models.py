"""Rate families c_i(a, eta) and their exact local infima.

Every shipped model depends on the configuration only through linear local
fields sum_j J(i, j) eta(j), so conditioning on a ball V_i(k) reduces to
knowing the partial field ``s`` over 1 <= ||j - i|| <= k. The unseen sites
then range over an interval of extra field [x_lo, x_hi] whose end points are
attained by extremal spins, and every infimum or supremum over the unseen
part is taken at one of those end points. Local infima are therefore closed
form for all three families, including infinite-range kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Hashable, Mapping, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import log_ndtr

from .kernels import Kernel, kernel_from_config
from .lattice import CEMETERY, Site, SparseConfiguration, is_cemetery, l1_norm

SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ModelError(ValueError):
    pass


class UndeterminedSpinError(RuntimeError):
    """A conditioning site was still undetermined when a density needed it."""


# ---------------------------------------------------------------------------
# state spaces


@dataclass(frozen=True)
class FiniteStateSpace:
    atoms: Tuple[Any, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.atoms) == 0 or len(self.atoms) != len(self.weights):
            raise ModelError("finite state space needs matching non-empty atoms/weights")
        if any(w <= 0 for w in self.weights):
            raise ModelError("reference weights must be positive")
        if len(set(self.atoms)) != len(self.atoms):
            raise ModelError("atoms must be distinct")

    finite = True

    @property
    def mass(self) -> float:
        return float(sum(self.weights))

    @property
    def lo(self) -> float:
        return min(self.atoms)

    @property
    def hi(self) -> float:
        return max(self.atoms)

    def index(self, a) -> int:
        return self._index()[a]

    @lru_cache(maxsize=None)
    def _index(self) -> Dict[Any, int]:
        return {a: n for n, a in enumerate(self.atoms)}

    def contains(self, a) -> bool:
        try:
            return a in self._index()
        except TypeError:
            return False


@dataclass(frozen=True)
class IntervalStateSpace:
    """[lower, upper] with a constant reference density."""

    lower: float
    upper: float
    density: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ModelError("interval needs finite bounds with lower < upper")
        if self.density <= 0:
            raise ModelError("reference density must be positive")

    finite = False

    @property
    def mass(self) -> float:
        return self.density * (self.upper - self.lower)

    @property
    def lo(self) -> float:
        return self.lower

    @property
    def hi(self) -> float:
        return self.upper

    def contains(self, a) -> bool:
        try:
            return self.lower <= float(a) <= self.upper
        except (TypeError, ValueError):
            return False


StateSpace = FiniteStateSpace | IntervalStateSpace


# ---------------------------------------------------------------------------
# local infima c^{[k]}(. | w)


class FiniteLocalInf:
    """c^{[k]}(.|w) on a finite space, stored as masses c(a) rho({a})."""

    __slots__ = ("masses", "cemetery", "weights", "total")

    def __init__(self, masses: np.ndarray, cemetery: float, weights: np.ndarray):
        self.masses = masses
        self.cemetery = cemetery
        self.weights = weights
        self.total = float(masses.sum()) + cemetery

    @property
    def mass_A(self) -> float:
        return float(self.masses.sum())

    def value(self, a_index: int | None) -> float:
        """Density w.r.t. rho*; ``None`` is the cemetery."""
        if a_index is None:
            return self.cemetery
        return float(self.masses[a_index] / self.weights[a_index])


class ContinuousLocalInf:
    """Interface for c^{[k]}(.|w) on an interval: density, cdf and Delta atom."""

    lower: float
    upper: float
    cemetery: float

    def value(self, a: float) -> float:
        raise NotImplementedError

    def cdf(self, t: float) -> float:
        raise NotImplementedError

    @property
    def mass_A(self) -> float:
        return self.cdf(self.upper)

    @property
    def total(self) -> float:
        return self.mass_A + self.cemetery


def _int_exp(kappa: float, a: float, b: float) -> float:
    """int_a^b exp(kappa x) dx for a <= b."""
    if b <= a:
        return 0.0
    z = kappa * (b - a)
    if abs(z) < 1e-12:
        return math.exp(kappa * a) * (b - a) * (1.0 + 0.5 * z)
    return math.exp(kappa * a) * math.expm1(z) / kappa


class ExpLocalInf(ContinuousLocalInf):
    """rho0 * exp(a * kappa(a)) with kappa = kneg on a < 0 and kpos on a >= 0."""

    __slots__ = ("kneg", "kpos", "rho0", "lower", "upper", "cemetery", "_mass")

    def __init__(self, kneg, kpos, rho0, lower, upper, cemetery):
        self.kneg, self.kpos, self.rho0 = kneg, kpos, rho0
        self.lower, self.upper, self.cemetery = lower, upper, cemetery
        self._mass = self.cdf(upper)

    def value(self, a: float | None) -> float:
        if a is None:
            return self.cemetery
        return math.exp(a * (self.kneg if a < 0 else self.kpos))

    def cdf(self, t: float) -> float:
        t = min(max(t, self.lower), self.upper)
        neg = _int_exp(self.kneg, self.lower, min(t, 0.0))
        pos = _int_exp(self.kpos, max(self.lower, 0.0), t)
        return self.rho0 * (neg + pos)

    @property
    def mass_A(self) -> float:
        return self._mass


def _phi_diff(a: float, b: float) -> float:
    """Phi(b) - Phi(a) for a <= b, without cancellation in either tail."""
    if a >= 0.0:
        return 0.5 * (math.erfc(a / SQRT2) - math.erfc(b / SQRT2))
    if b <= 0.0:
        return 0.5 * (math.erfc(-b / SQRT2) - math.erfc(-a / SQRT2))
    return 1.0 - 0.5 * (math.erfc(-a / SQRT2) + math.erfc(b / SQRT2))


def _log_phi_diff(a: float, b: float) -> float:
    d = _phi_diff(a, b)
    if d > 1e-300:
        return math.log(d)
    # deep tail: log(Phi(b) - Phi(a)) via log_ndtr on the side away from 0
    if a >= 0.0:
        a, b = -b, -a
    lb, la = float(log_ndtr(b)), float(log_ndtr(a))
    return lb + math.log1p(-math.exp(la - lb))


class TruncNormal:
    """Normal(mu, sigma^2) restricted to [0, 1]."""

    __slots__ = ("mu", "sigma", "log_z")

    def __init__(self, mu: float, sigma: float):
        self.mu, self.sigma = mu, sigma
        self.log_z = _log_phi_diff(-mu / sigma, (1.0 - mu) / sigma)

    def pdf(self, a: float) -> float:
        z = (a - self.mu) / self.sigma
        return math.exp(-0.5 * z * z - LOG_SQRT_2PI - self.log_z) / self.sigma

    def cdf(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= 1.0:
            return 1.0
        lo = -self.mu / self.sigma
        return math.exp(_log_phi_diff(lo, (t - self.mu) / self.sigma) - self.log_z)

    def mean(self) -> float:
        a, b = -self.mu / self.sigma, (1.0 - self.mu) / self.sigma
        pa = math.exp(-0.5 * a * a - LOG_SQRT_2PI - self.log_z)
        pb = math.exp(-0.5 * b * b - LOG_SQRT_2PI - self.log_z)
        return min(1.0, max(0.0, self.mu + self.sigma * (pa - pb)))


class MinTNLocalInf(ContinuousLocalInf):
    """min over locations mu in [mu1, mu2] of the truncated-normal density.

    The log density is concave in the location, so the minimum is the lower
    envelope of the two end-point densities; they cross once, at ``x``.
    """

    __slots__ = ("lower", "upper", "cemetery", "t1", "t2", "x", "_mass")

    def __init__(self, mu1: float, mu2: float, sigma: float):
        self.lower, self.upper, self.cemetery = 0.0, 1.0, 0.0
        self.t1 = TruncNormal(mu1, sigma)
        self.t2 = TruncNormal(mu2, sigma) if mu2 > mu1 else None
        if self.t2 is None:
            self.x = 0.0
        else:
            x = 0.5 * (mu1 + mu2) - sigma**2 / (mu2 - mu1) * (self.t1.log_z - self.t2.log_z)
            self.x = min(max(x, 0.0), 1.0)
        self._mass = self.cdf(1.0)

    def value(self, a: float | None) -> float:
        if a is None:
            return self.cemetery
        if self.t2 is None:
            return self.t1.pdf(a)
        return self.t2.pdf(a) if a < self.x else self.t1.pdf(a)

    def cdf(self, t: float) -> float:
        if self.t2 is None:
            return self.t1.cdf(t)
        if t <= self.x:
            return self.t2.cdf(t)
        return self.t2.cdf(self.x) + self.t1.cdf(t) - self.t1.cdf(self.x)

    @property
    def mass_A(self) -> float:
        return self._mass


# ---------------------------------------------------------------------------
# external fields


@dataclass(frozen=True)
class Field:
    """Bounded external field: constant, or alternating on the two sublattices."""

    h_even: float = 0.0
    h_odd: float = 0.0

    @property
    def alternating(self) -> bool:
        return self.h_even != self.h_odd

    def orbit(self, i: Site) -> int:
        return (sum(i) & 1) if self.alternating else 0

    def value(self, orbit: int) -> float:
        return self.h_odd if orbit == 1 else self.h_even

    @property
    def orbits(self) -> Tuple[int, ...]:
        return (0, 1) if self.alternating else (0,)

    def at(self, i: Site) -> float:
        return self.value(self.orbit(i))


def field_from_config(spec: Mapping | None) -> Field:
    if spec is None:
        return Field()
    kind = spec.get("type", "constant")
    if kind == "constant":
        h = float(spec.get("h", 0.0))
        return Field(h, h)
    if kind == "alternating":
        return Field(float(spec["h_even"]), float(spec["h_odd"]))
    raise ModelError(f"unknown field type {kind!r}")


# ---------------------------------------------------------------------------
# models


class RateModel:
    """Common surface used by the decomposition and the samplers."""

    name = "abstract"
    d: int
    space: StateSpace
    kernel: Kernel

    @property
    def finite(self) -> bool:
        return self.space.finite

    @property
    def range(self) -> int | None:
        return self.kernel.range

    @property
    def orbits(self) -> Tuple[int, ...]:
        return (0,)

    def orbit(self, i: Site) -> int:
        return 0

    def orbit_representative(self, orbit: int) -> Site:
        return (orbit,) + (0,) * (self.d - 1)

    def mass_bound(self, i: Site) -> float:
        return self.mass_orbit(self.orbit(i))

    def mass_orbit(self, orbit: int) -> float:
        raise NotImplementedError

    def layer_keys(self, i: Site, k: int, lookup: Callable[[Site], Any]) -> tuple:
        raise NotImplementedError

    def local_inf(self, orbit: int, l: int, key) -> FiniteLocalInf | ContinuousLocalInf:
        raise NotImplementedError

    def alpha_inf(self, orbit: int, k: int) -> float:
        raise NotImplementedError

    def deficit_bound(self, orbit: int, k: int) -> float | None:
        """Upper bound on (M - alpha(k)) / M, or None if unavailable."""
        return None

    # -- model-level operations -------------------------------------------

    def check_value(self, a) -> None:
        if not is_cemetery(a) and not self.space.contains(a):
            raise ModelError(f"spin value {a!r} is outside the state space")

    def _value_arg(self, a):
        if is_cemetery(a):
            return None
        return self.space.index(a) if self.finite else float(a)

    def local_inf_rate(self, i: Site, a, w: Mapping[Site, Any], k: int) -> float:
        """c_i^{[k]}(a | w) for a local configuration ``w`` covering V_i(k)."""
        if k < -1:
            raise ModelError("range must be >= -1")
        self.check_value(a)

        def lookup(j):
            v = w[j]
            if is_cemetery(v):
                raise UndeterminedSpinError(f"site {j} has no real spin")
            return v

        keys = self.layer_keys(i, k, lookup)
        return self.local_inf(self.orbit(i), k, keys[-1]).value(self._value_arg(a))

    def rate(self, i: Site, a, eta) -> float:
        raise NotImplementedError


def _config_field(kernel: Kernel, i: Site, eta, values_ok: Callable[[Any], None]) -> float:
    """sum_j J(i, j) eta(j), exactly, for total configurations."""
    get = eta.__getitem__
    if kernel.range is not None:
        total = 0.0
        for r in range(1, kernel.range + 1):
            for off, J in kernel.shell(r):
                v = get(tuple(a + b for a, b in zip(i, off)))
                if is_cemetery(v):
                    raise ModelError("configuration is not specified on the kernel support")
                values_ok(v)
                total += J * float(v)
        return total
    if not isinstance(eta, SparseConfiguration) or is_cemetery(eta.default):
        raise ModelError("infinite-range kernel needs a total configuration (real default)")
    values_ok(eta.default)
    total = 0.0
    seen = 0.0
    for j, v in eta.items():
        if j == i:
            continue
        J = kernel(i, j)
        values_ok(v)
        total += J * float(v)
        seen += J
    return total + float(eta.default) * (kernel.total_signed - seen)


class ExpFamilyModel(RateModel):
    """c_i(a, eta) = exp(beta * a * (sum_j J(i, j) eta(j) + h_i)).

    With a finite state space this is the ``ising`` family; with an interval
    and a constant reference density it is ``gibbs-cont``.
    """

    def __init__(self, space: StateSpace, d: int, beta: float, kernel: Kernel, field: Field | None = None,
                 name: str = "ising"):
        if beta < 0:
            raise ModelError("beta must be >= 0")
        if kernel.d != d:
            raise ModelError("kernel dimension does not match model dimension")
        self.space, self.d, self.beta, self.kernel = space, d, float(beta), kernel
        self.field = field or Field()
        self.name = name
        if space.finite:
            self._atoms = np.array([float(a) for a in space.atoms])
            self._weights = np.array(space.weights, dtype=float)
        self._lo, self._hi = float(space.lo), float(space.hi)
        self._inf_cache: Dict[tuple, Any] = {}
        self._M = {o: self._sup_mass(self.field.value(o), *self._free(-1)) for o in self.orbits}

    # geometry of the unseen part -----------------------------------------

    @lru_cache(maxsize=None)
    def _free(self, k: int) -> Tuple[float, float]:
        """Extra field range [x_lo, x_hi] from the sites with ||j - i|| > k."""
        P, N = self.kernel.tail_parts(k)
        return self._lo * P - self._hi * N, self._hi * P - self._lo * N

    @lru_cache(maxsize=None)
    def _seen(self, k: int) -> Tuple[float, float]:
        """Range of achievable partial fields over 1 <= ||j - i|| <= k."""
        P, N = self.kernel.inner_parts(k)
        return self._lo * P - self._hi * N, self._hi * P - self._lo * N

    def _f(self, y: float) -> float:
        """int rho(da) exp(beta a y)."""
        b = self.beta * y
        if self.finite:
            return float(np.dot(self._weights, np.exp(self._atoms * b)))
        sp = self.space
        return sp.density * _int_exp(b, sp.lower, sp.upper)

    def _sup_mass(self, y: float, xlo: float, xhi: float) -> float:
        # int rho exp(beta a x) is convex in x: the sup over [y+xlo, y+xhi] is at an end
        return max(self._f(y + xlo), self._f(y + xhi))

    # RateModel surface --------------------------------------------------

    @property
    def orbits(self):
        return self.field.orbits

    def orbit(self, i: Site) -> int:
        return self.field.orbit(i)

    def mass_orbit(self, orbit: int) -> float:
        return self._M[orbit]

    def layer_keys(self, i, k, lookup):
        keys = [0.0, 0.0] if k >= 0 else [0.0]
        s = 0.0
        for l in range(1, k + 1):
            for off, J in self.kernel.shell(l):
                s += J * float(lookup(tuple(a + b for a, b in zip(i, off))))
            keys.append(s)
        return tuple(keys)

    def local_inf(self, orbit: int, l: int, key: float):
        ck = (orbit, l, key)
        hit = self._inf_cache.get(ck)
        if hit is not None:
            return hit
        if len(self._inf_cache) > 200000:
            self._inf_cache.clear()
        y = key + self.field.value(orbit)
        xlo, xhi = self._free(l)
        kpos = self.beta * (y + xlo)
        kneg = self.beta * (y + xhi)
        if l < 0:
            cem = 0.0
        else:
            cem = max(0.0, self._M[orbit] - self._sup_mass(y, xlo, xhi))
        if self.finite:
            a = self._atoms
            masses = self._weights * np.exp(a * np.where(a < 0, kneg, kpos))
            out = FiniteLocalInf(masses, cem, self._weights)
        else:
            sp = self.space
            out = ExpLocalInf(kneg, kpos, sp.density, sp.lower, sp.upper, cem)
        self._inf_cache[ck] = out
        return out

    def alpha_inf(self, orbit: int, k: int) -> float:
        if k < 0:
            return self.local_inf(orbit, -1, 0.0).mass_A
        if self.range is not None and k >= self.range:
            return self._M[orbit]
        # the mass is min of a non-increasing and a non-decreasing function
        # of the partial field, so the inf over w sits at an extreme field
        smin, smax = self._seen(k)
        return min(self.local_inf(orbit, k, smin).total, self.local_inf(orbit, k, smax).total)

    def deficit_bound(self, orbit: int, k: int) -> float | None:
        xlo, xhi = self._free(k)
        amax = max(abs(self._lo), abs(self._hi))
        h = abs(self.field.value(orbit))
        sig = amax * self.kernel.total_abs
        top = self.space.mass * math.exp(self.beta * amax * (h + sig))
        return min(1.0, top * -math.expm1(-self.beta * amax * (xhi - xlo)) / self._M[orbit])

    def rate(self, i: Site, a, eta) -> float:
        self.check_value(a)
        y = self.field.at(i) + _config_field(self.kernel, i, eta, self.check_value)
        if is_cemetery(a):
            return max(0.0, self._M[self.orbit(i)] - self._f(y))
        return math.exp(self.beta * float(a) * y)

    def __repr__(self):
        return f"ExpFamilyModel({self.name}, d={self.d}, beta={self.beta}, kernel={self.kernel!r})"


class AutonormalModel(RateModel):
    """Truncated-normal heat bath on [0, 1] with location sum_j J(i, j) eta(j)."""

    name = "autonormal"

    def __init__(self, d: int, sigma: float, kernel: Kernel):
        if sigma <= 0:
            raise ModelError("sigma must be > 0")
        if kernel.d != d:
            raise ModelError("kernel dimension does not match model dimension")
        self.d, self.sigma, self.kernel = d, float(sigma), kernel
        self.space = IntervalStateSpace(0.0, 1.0, 1.0)
        self._inf_cache: Dict[tuple, MinTNLocalInf] = {}

    @lru_cache(maxsize=None)
    def _free(self, k: int) -> Tuple[float, float]:
        P, N = self.kernel.tail_parts(k)
        return -N, P

    @lru_cache(maxsize=None)
    def _seen(self, k: int) -> Tuple[float, float]:
        P, N = self.kernel.inner_parts(k)
        return -N, P

    def mass_orbit(self, orbit: int) -> float:
        return 1.0

    def layer_keys(self, i, k, lookup):
        keys = [0.0, 0.0] if k >= 0 else [0.0]
        s = 0.0
        for l in range(1, k + 1):
            for off, J in self.kernel.shell(l):
                s += J * float(lookup(tuple(a + b for a, b in zip(i, off))))
            keys.append(s)
        return tuple(keys)

    def local_inf(self, orbit: int, l: int, key: float) -> MinTNLocalInf:
        ck = (l, key)
        hit = self._inf_cache.get(ck)
        if hit is None:
            if len(self._inf_cache) > 200000:
                self._inf_cache.clear()
            xlo, xhi = self._free(l)
            hit = MinTNLocalInf(key + xlo, key + xhi, self.sigma)
            self._inf_cache[ck] = hit
        return hit

    def _overlap(self, s: float, k: int) -> float:
        xlo, xhi = self._free(k)
        return MinTNLocalInf(s + xlo, s + xhi, self.sigma).mass_A

    @lru_cache(maxsize=None)
    def alpha_inf(self, orbit: int, k: int) -> float:
        if k < 0:
            return self.local_inf(0, -1, 0.0).mass_A
        if self.range is not None and k >= self.range:
            return 1.0
        smin, smax = self._seen(k)
        if smax - smin < 1e-15:
            return self._overlap(smin, k)
        grid = np.linspace(smin, smax, 129)
        vals = [self._overlap(s, k) for s in grid]
        j = int(np.argmin(vals))
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
        res = minimize_scalar(lambda s: self._overlap(s, k), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = min(vals[j], float(res.fun))
        # a threshold a hair below the true infimum keeps every segment inside
        # the configuration ladder; the decomposition stays exact in law
        return max(0.0, best - 1e-12)

    def deficit_bound(self, orbit: int, k: int) -> float | None:
        # 1 - alpha(k) is a total-variation distance between truncated normals
        # whose locations differ by at most the unseen weight W; the location
        # derivative of the density has L1 norm <= 1 / (2 sigma^2)
        xlo, xhi = self._free(k)
        return min(1.0, (xhi - xlo) / (4.0 * self.sigma**2))

    def rate(self, i: Site, a, eta) -> float:
        self.check_value(a)
        if is_cemetery(a):
            return 0.0
        h = _config_field(self.kernel, i, eta, self.check_value)
        return TruncNormal(h, self.sigma).pdf(float(a))

    def __repr__(self):
        return f"AutonormalModel(d={self.d}, sigma={self.sigma}, kernel={self.kernel!r})"


# ---------------------------------------------------------------------------
# construction


def ising(d: int = 1, beta: float = 0.0, kernel: Kernel | None = None, field: Field | None = None,
          states: Sequence[float] = (-1.0, 1.0), weights: Sequence[float] | None = None) -> ExpFamilyModel:
    from .kernels import nearest_neighbour

    weights = tuple(float(w) for w in (weights or [1.0] * len(states)))
    space = FiniteStateSpace(tuple(float(s) for s in states), weights)
    return ExpFamilyModel(space, d, beta, kernel if kernel is not None else nearest_neighbour(d), field, "ising")


def gibbs_cont(d: int = 1, beta: float = 0.0, kernel: Kernel | None = None, density: float = 1.0,
               lower: float = -1.0, upper: float = 1.0) -> ExpFamilyModel:
    from .kernels import nearest_neighbour

    space = IntervalStateSpace(lower, upper, density)
    return ExpFamilyModel(space, d, beta, kernel if kernel is not None else nearest_neighbour(d), None,
                          "gibbs-cont")


def autonormal(d: int = 1, sigma: float = 1.0, kernel: Kernel | None = None) -> AutonormalModel:
    from .kernels import ZeroKernel

    return AutonormalModel(d, sigma, kernel if kernel is not None else ZeroKernel(d))


def model_from_config(cfg: Mapping) -> RateModel:
    """Deserialize ``{"model": ..., "d": ..., "beta": ..., "kernel": ..., ...}``."""
    try:
        kind = cfg["model"]
        d = int(cfg.get("d", 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"bad model block: {exc}") from exc
    if d < 1:
        raise ModelError("d must be >= 1")
    # an absent kernel means nearest neighbour for the Ising-type models and none for autonormal
    kernel = kernel_from_config(d, cfg["kernel"]) if cfg.get("kernel") is not None else None
    if kind == "ising":
        states = cfg.get("states", [-1.0, 1.0])
        return ising(d, float(cfg.get("beta", 0.0)), kernel, field_from_config(cfg.get("field")),
                     states, cfg.get("weights"))
    if kind == "gibbs-cont":
        ref = cfg.get("reference", {})
        return gibbs_cont(d, float(cfg.get("beta", 0.0)), kernel, float(ref.get("density", 1.0)))
    if kind == "autonormal":
        return autonormal(d, float(cfg.get("sigma", 1.0)), kernel)
    raise ModelError(f"unknown model {kind!r}")
