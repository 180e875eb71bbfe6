"""Forward spin assignment and the end-to-end samplers.

A replica consumes one random stream: the sketch first, then the
assignment, which replays the recorded events from the last one back to
the first. Each replayed event costs one uniform on a finite state space
and two on an interval.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _backend
from .decomposition import DecompositionError, KalikowDecomposition
from .lattice import CEMETERY, Site, SparseConfiguration, is_cemetery
from .models import UndeterminedSpinError
from .sketch import SketchRecord, SupercriticalError, _run, run_backward_sketch, run_backward_sketch_timed
from .tables import KernelTables, build_tables, eligibility, pack_many, unpack_many


class ConsistencyError(RuntimeError):
    """A replica hit an internal-consistency check and was aborted."""


@dataclass
class AssignmentResult:
    spins: Dict[Site, Any]
    n_stop: int
    t_stop: float = 0.0
    truncated: bool = False
    restarts: int = 0
    residual_size: int = 0
    bias_bound: Optional[float] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def values(self, sites: Sequence[Site]) -> List[Any]:
        return [self.spins[s] for s in sites]


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent stream for replica ``replica`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica,))))


# ---------------------------------------------------------------------------
# initial conditions


class InitialCondition:
    """A total configuration described finitely; lookups may be lazy."""

    name = "abstract"

    def __getitem__(self, site: Site) -> Any:
        raise NotImplementedError

    def prepare(self, sites: Sequence[Site]) -> None:
        """Hook called with the residual set, in sorted order, before lookups."""


class ConstantInitial(InitialCondition):
    name = "constant"

    def __init__(self, value):
        self.value = value

    def __getitem__(self, site):
        return self.value


class CheckerboardInitial(InitialCondition):
    name = "checkerboard"

    def __init__(self, even, odd):
        self.even, self.odd = even, odd

    def __getitem__(self, site):
        return self.odd if sum(site) & 1 else self.even


class IIDInitial(InitialCondition):
    """Independent spins from rho / rho(A), drawn from ``rng`` in sorted site order."""

    name = "iid"

    def __init__(self, decomp: KalikowDecomposition, rng: np.random.Generator):
        self.space = decomp.model.space
        self.rng = rng
        self.values: Dict[Site, Any] = {}

    def _draw(self):
        sp = self.space
        if sp.finite:
            w = np.asarray(sp.weights, dtype=float)
            j = int(np.searchsorted(np.cumsum(w) / w.sum(), self.rng.random(), side="right"))
            return sp.atoms[min(j, len(w) - 1)]
        return sp.lower + (sp.upper - sp.lower) * self.rng.random()

    def prepare(self, sites):
        for s in sorted(sites):
            if s not in self.values:
                self.values[s] = self._draw()

    def __getitem__(self, site):
        if site not in self.values:
            self.values[site] = self._draw()
        return self.values[site]


class StationaryInitial(InitialCondition):
    """A perfect sample of the invariant law on the residual set."""

    name = "stationary"

    def __init__(self, decomp: KalikowDecomposition, rng: np.random.Generator, backend: str = "auto"):
        self.decomp, self.rng, self.backend = decomp, rng, backend
        self.values: Dict[Site, Any] = {}

    def prepare(self, sites):
        need = sorted(s for s in sites if s not in self.values)
        if need:
            self.values.update(perfect_sample(need, self.decomp, self.rng, backend=self.backend).spins)

    def __getitem__(self, site):
        if site not in self.values:
            self.prepare([site])
        return self.values[site]


class MappingInitial(InitialCondition):
    name = "mapping"

    def __init__(self, values: Mapping[Site, Any] | SparseConfiguration):
        self.values = values

    def __getitem__(self, site):
        return self.values[site]


def initial_from_config(spec: Mapping | None, decomp: KalikowDecomposition, rng: np.random.Generator,
                        backend: str = "auto") -> InitialCondition:
    if spec is None:
        spec = {"type": "iid"}
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type")
    space = decomp.model.space
    if kind == "constant":
        v = spec.get("value", space.hi)
        return ConstantInitial(float(v))
    if kind == "checkerboard":
        return CheckerboardInitial(float(spec.get("even", space.hi)), float(spec.get("odd", space.lo)))
    if kind == "iid":
        return IIDInitial(decomp, rng)
    if kind == "stationary":
        return StationaryInitial(decomp, rng, backend)
    raise ValueError(f"unknown initial condition {kind!r}")


# ---------------------------------------------------------------------------
# generic assignment


def run_forward_assignment(record: SketchRecord, decomp: KalikowDecomposition, rng,
                           initial: InitialCondition | Mapping | None = None) -> AssignmentResult:
    """Replay the sketch forward in time; ``initial`` seeds the residual set."""
    if record.truncated:
        raise ValueError("cannot assign spins from a truncated sketch")
    sigma: Dict[Site, Any] = {}
    if record.residual:
        if initial is None:
            raise ValueError("sketch left a residual set but no initial configuration was given")
        if isinstance(initial, InitialCondition):
            initial.prepare(record.residual)
        for j in record.residual:
            v = initial[j]
            if is_cemetery(v):
                raise ValueError(f"initial configuration is undetermined at {j}")
            sigma[j] = v

    def lookup(j):
        v = sigma.get(j, CEMETERY)
        if v is CEMETERY:
            raise UndeterminedSpinError(f"site {j} is still undetermined")
        return v

    sites, ks = record.sites, record.ks
    try:
        for idx in range(len(ks) - 1, -1, -1):
            I, K = sites[idx], ks[idx]
            if K < 0:
                W = decomp.sample_p_minus1(I, rng)
            else:
                W = decomp.sample_p_k(I, K, lookup, rng)
            if W is not CEMETERY:
                sigma[I] = W
    except (UndeterminedSpinError, DecompositionError) as exc:
        raise ConsistencyError(str(exc)) from exc
    spins = {}
    for i in record.F:
        v = sigma.get(i, CEMETERY)
        if v is CEMETERY:
            raise ConsistencyError(f"query site {i} was never assigned")
        spins[i] = v
    return AssignmentResult(spins, record.n_stop, record.t_stop, False, residual_size=len(record.residual))


def run_forward_assignment_with_initial(record: SketchRecord, eta, decomp: KalikowDecomposition,
                                        rng) -> AssignmentResult:
    return run_forward_assignment(record, decomp, rng, initial=eta)


# ---------------------------------------------------------------------------
# backends


class Sampler:
    """Sketch and assignment through the generic engine or the table kernels.

    ``backend`` is one of "auto", "generic", "python" and "cython". The
    kernel backends need :func:`pssim.tables.eligibility` to pass; "auto"
    uses the compiled kernels when they are both built and eligible.
    """

    def __init__(self, decomp: KalikowDecomposition, backend: str = "auto"):
        self.decomp = decomp
        self.tables: KernelTables | None = None
        reason = eligibility(decomp)
        if backend == "auto":
            if reason is not None:
                backend = "generic"
            else:
                backend = _backend.default_name()
        if backend in ("python", "cython"):
            if reason is not None:
                raise ValueError(f"{backend} kernels unavailable: {reason}")
            self.kern = _backend.kernels(backend)
            self.tables = build_tables(decomp)
        elif backend != "generic":
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self.d = decomp.model.d

    def sketch(self, F: Iterable[Site], rng: np.random.Generator, step_cap: int | None = None,
               t: float | None = None) -> SketchRecord:
        if step_cap is None:
            g = self.decomp.gamma()
            if g >= 1.0:
                raise SupercriticalError(g)
        if self.tables is None:
            if t is not None and not t > 0:
                raise ValueError("time horizon must be > 0")
            return _run(F, self.decomp, rng, step_cap, t)
        F = tuple(sorted(set(tuple(s) for s in F)))
        if not F:
            raise ValueError("query set F must be non-empty")
        tab = self.tables
        sites, ks, times, residual, T, truncated = self.kern.sketch(
            tab.M, tab.range_cdf, tab.ball_delta, tab.ball_start, pack_many(F), rng.bit_generator,
            -1 if step_cap is None else int(step_cap), math.inf if t is None else float(t))
        rec = SketchRecord(F)
        d = self.d
        rec.sites = unpack_many(sites, d)
        rec.ks = np.asarray(ks).tolist()
        rec.times = np.asarray(times, dtype=float).tolist()
        rec.residual = tuple(unpack_many(residual, d))
        rec.t_stop = float(T)
        rec.truncated = bool(truncated)
        return rec

    def assign(self, record: SketchRecord, rng: np.random.Generator,
               initial: InitialCondition | Mapping | None = None) -> AssignmentResult:
        if self.tables is None:
            return run_forward_assignment(record, self.decomp, rng, initial)
        if record.truncated:
            raise ValueError("cannot assign spins from a truncated sketch")
        tab = self.tables
        space = self.decomp.model.space
        init_keys = np.zeros(0, dtype=np.int64)
        init_vals = np.zeros(0, dtype=np.int32)
        if record.residual:
            if initial is None:
                raise ValueError("sketch left a residual set but no initial configuration was given")
            if isinstance(initial, InitialCondition):
                initial.prepare(record.residual)
            vals = []
            for j in record.residual:
                v = initial[j]
                if is_cemetery(v):
                    raise ValueError(f"initial configuration is undetermined at {j}")
                vals.append(space.index(v))
            init_keys = pack_many(record.residual)
            init_vals = np.array(vals, dtype=np.int32)
        ev_site = pack_many(record.sites) if record.sites else np.zeros(0, dtype=np.int64)
        ev_k = np.asarray(record.ks, dtype=np.int32)
        try:
            out = self.kern.assign(tab.n_atoms, tab.pm1_cdf, tab.pk_flat, tab.pk_start, tab.ball_delta,
                                   tab.ball_start, ev_site, ev_k, init_keys, init_vals, pack_many(record.F),
                                   rng.bit_generator)
        except RuntimeError as exc:
            raise ConsistencyError(str(exc)) from exc
        atoms = space.atoms
        spins = {}
        for i, j in zip(record.F, out):
            if j < 0:
                raise ConsistencyError(f"query site {i} was never assigned")
            spins[i] = atoms[int(j)]
        return AssignmentResult(spins, record.n_stop, record.t_stop, False, residual_size=len(record.residual))


def get_sampler(decomp: KalikowDecomposition, backend: str = "auto") -> Sampler:
    cache = decomp.__dict__.setdefault("_samplers", {})
    s = cache.get(backend)
    if s is None:
        s = cache[backend] = Sampler(decomp, backend)
    return s


# ---------------------------------------------------------------------------
# samplers


def steps_bias(gamma: float, N: int) -> float:
    """Total-variation bound gamma^N / (1 - gamma^N) for a sampler capped at N steps."""
    if gamma >= 1.0:
        return math.inf
    g = gamma**N
    return g / (1.0 - g)


def perfect_sample(F: Iterable[Site], decomp: KalikowDecomposition, rng, step_cap: int | None = None,
                   backend: str = "auto", max_restarts: int = 10**6) -> AssignmentResult:
    """One draw from the invariant law restricted to F.

    With ``step_cap`` the sketch is abandoned and restarted, on the same
    stream, whenever it needs more than ``step_cap`` events. The output is
    then the law conditioned on N_STOP <= step_cap, whose distance to the
    exact law is at most gamma^N / (1 - gamma^N).
    """
    sampler = get_sampler(decomp, backend)
    restarts = 0
    while True:
        rec = sampler.sketch(F, rng, step_cap=step_cap)
        if not rec.truncated:
            break
        restarts += 1
        if restarts > max_restarts:
            raise RuntimeError(f"step cap {step_cap} hit {restarts} times in a row")
    res = sampler.assign(rec, rng)
    res.restarts = restarts
    if step_cap is not None:
        res.bias_bound = steps_bias(decomp.gamma(), step_cap)
        res.truncated = restarts > 0
    return res


def finite_horizon_sample(F: Iterable[Site], t: float, eta, decomp: KalikowDecomposition, rng,
                          backend: str = "auto") -> AssignmentResult:
    """sigma_t^eta(F): the process at time ``t`` started from ``eta``."""
    sampler = get_sampler(decomp, backend)
    rec = sampler.sketch(F, rng, t=t)
    return sampler.assign(rec, rng, eta)


def coupled_finite_horizon(F: Iterable[Site], t: float, eta, zeta, decomp: KalikowDecomposition, rng,
                           backend: str = "auto") -> Tuple[AssignmentResult, AssignmentResult]:
    """Both initial conditions driven by one sketch and the same assignment draws."""
    sampler = get_sampler(decomp, backend)
    rec = sampler.sketch(F, rng, t=t)
    state = rng.bit_generator.state
    a = sampler.assign(rec, rng, eta)
    rng.bit_generator.state = state
    b = sampler.assign(rec, rng, zeta)
    return a, b


def thread_count() -> int:
    try:
        n = int(os.environ.get("PSSIM_THREADS", "0"))
    except ValueError:
        n = 0
    cpu = os.cpu_count() or 1
    return max(1, min(n, cpu) if n > 0 else cpu)


def sample_replicas(F: Sequence[Site], decomp: KalikowDecomposition, seed: int, replicas: int,
                    step_cap: int | None = None, t: float | None = None,
                    initial: Callable[[np.random.Generator], Any] | None = None,
                    backend: str = "auto", first: int = 0) -> List[AssignmentResult]:
    """Replicas ``first .. first + replicas - 1``, each on its own derived stream.

    ``initial`` builds the initial condition of a finite-horizon replica from
    an auxiliary stream, so it never disturbs the replica's own stream.
    """
    get_sampler(decomp, backend)
    decomp.gamma()

    def one(r: int) -> AssignmentResult:
        rng = replica_rng(seed, r)
        if t is None:
            return perfect_sample(F, decomp, rng, step_cap=step_cap, backend=backend)
        aux = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r, 1))))
        eta = initial(aux) if initial is not None else IIDInitial(decomp, aux)
        return finite_horizon_sample(F, t, eta, decomp, rng, backend=backend)

    idx = range(first, first + replicas)
    n = thread_count()
    if n == 1 or replicas < 64:
        return [one(r) for r in idx]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, idx, chunksize=64))
