"""Backward sketch: the reverse-time exploration of the ancestor set.

Each step draws a site I of the current ancestor set C (proportionally to
M_I), a range K ~ lambda_I and an exponential holding time with rate
sum_{j in C} M_j, in that order, three uniforms per step. K = -1 removes I
from C; K >= 0 adds the ball V_I(K).
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .decomposition import KalikowDecomposition
from .lattice import Site, ball_offsets


class SupercriticalError(RuntimeError):
    """Sketch refused: gamma >= 1 and no step cap was given."""

    def __init__(self, gamma: float):
        super().__init__(f"supercritical decomposition (gamma = {gamma:.6g} >= 1); supply a step cap")
        self.gamma = gamma


@dataclass(frozen=True)
class SketchEvent:
    site: Site
    k: int
    index: int
    time: float


@dataclass
class SketchRecord:
    """The event array B with its stopping data."""

    F: Tuple[Site, ...]
    sites: List[Site] = field(default_factory=list)
    ks: List[int] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    residual: Tuple[Site, ...] = ()
    t_stop: float = 0.0
    truncated: bool = False

    @property
    def n_stop(self) -> int:
        return len(self.ks)

    @property
    def success(self) -> bool:
        return not self.residual and not self.truncated

    @property
    def events(self) -> List[SketchEvent]:
        return [SketchEvent(s, k, n + 1, t) for n, (s, k, t) in enumerate(zip(self.sites, self.ks, self.times))]

    def to_json(self) -> str:
        return json.dumps({
            "n_stop": self.n_stop,
            "events": [[list(s), k, t] for s, k, t in zip(self.sites, self.ks, self.times)],
            "truncated": self.truncated,
            "residual": [list(s) for s in self.residual],
            "t_stop": self.t_stop,
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str, F: Sequence[Site] = ()) -> "SketchRecord":
        obj = json.loads(text)
        rec = cls(tuple(tuple(s) for s in F))
        for s, k, t in obj["events"]:
            rec.sites.append(tuple(s))
            rec.ks.append(int(k))
            rec.times.append(float(t))
        rec.truncated = bool(obj.get("truncated", False))
        rec.residual = tuple(tuple(s) for s in obj.get("residual", ()))
        rec.t_stop = float(obj.get("t_stop", 0.0))
        return rec

    def replay(self) -> List[Tuple[Site, ...]]:
        """Ancestor sets after each event, recomputed from F."""
        C = set(self.F)
        d = len(self.F[0]) if self.F else 0
        out = [tuple(sorted(C))]
        for s, k in zip(self.sites, self.ks):
            C = _apply(C, s, k, d)
            out.append(tuple(sorted(C)))
        return out


def _apply(C: set, site: Site, k: int, d: int) -> set:
    C = set(C)
    if k < 0:
        C.discard(site)
    else:
        C.update(tuple(a + b for a, b in zip(site, off)) for off in ball_offsets(d, k))
    return C


class _AncestorSet:
    """Sorted ancestor set with cumulative site masses for inhomogeneous models."""

    def __init__(self, F: Iterable[Site], decomp: KalikowDecomposition):
        self.decomp = decomp
        self.members: List[Site] = sorted(set(F))
        self.index = set(self.members)
        self.d = len(self.members[0])
        self.homogeneous = decomp.homogeneous
        self.M0 = decomp.mass_orbit(decomp.model.orbits[0])

    def __len__(self):
        return len(self.members)

    def total_mass(self) -> float:
        if self.homogeneous:
            return self.M0 * len(self.members)
        return math.fsum(self.decomp.mass(s) for s in self.members)

    def pick(self, u: float) -> Site:
        n = len(self.members)
        if self.homogeneous:
            return self.members[min(int(u * n), n - 1)]
        masses = np.array([self.decomp.mass(s) for s in self.members])
        cdf = np.cumsum(masses)
        j = int(np.searchsorted(cdf / cdf[-1], u, side="right"))
        return self.members[min(j, n - 1)]

    def apply(self, site: Site, k: int) -> None:
        if k < 0:
            self.index.discard(site)
            j = bisect.bisect_left(self.members, site)
            del self.members[j]
            return
        for off in ball_offsets(self.d, k):
            s = tuple(a + b for a, b in zip(site, off))
            if s not in self.index:
                self.index.add(s)
                bisect.insort(self.members, s)


def sketch_step(C: _AncestorSet, decomp: KalikowDecomposition, rng) -> Tuple[Site, int, float]:
    """One step on a non-empty ancestor set: returns (I, K, holding time) and updates C."""
    u_site = rng.random()
    u_range = rng.random()
    u_time = rng.random()
    I = C.pick(u_site)
    K = decomp.sample_range(I, u_range)
    dt = -math.log1p(-u_time) / C.total_mass()
    C.apply(I, K)
    return I, K, dt


def _check_subcritical(decomp: KalikowDecomposition, step_cap) -> None:
    if step_cap is None:
        g = decomp.gamma()
        if g >= 1.0:
            raise SupercriticalError(g)


def run_backward_sketch(F: Iterable[Site], decomp: KalikowDecomposition, rng,
                        step_cap: int | None = None) -> SketchRecord:
    """Sketch until the ancestor set dies out, or until ``step_cap`` events."""
    _check_subcritical(decomp, step_cap)
    return _run(F, decomp, rng, step_cap, None)


def run_backward_sketch_timed(F: Iterable[Site], t: float, decomp: KalikowDecomposition, rng,
                              step_cap: int | None = None) -> SketchRecord:
    """Sketch for reversed time ``t``; the surviving ancestors become ``residual``.

    The event whose holding time would carry the clock to ``t`` is not applied.
    """
    if not t > 0:
        raise ValueError("time horizon must be > 0")
    _check_subcritical(decomp, step_cap)
    return _run(F, decomp, rng, step_cap, float(t))


def _run(F, decomp, rng, step_cap, t) -> SketchRecord:
    F = tuple(sorted(set(tuple(s) for s in F)))
    if not F:
        raise ValueError("query set F must be non-empty")
    C = _AncestorSet(F, decomp)
    rec = SketchRecord(F)
    T = 0.0
    sites, ks, times = rec.sites, rec.ks, rec.times
    while len(C):
        if step_cap is not None and len(ks) >= step_cap:
            rec.truncated = True
            break
        u_site = rng.random()
        u_range = rng.random()
        u_time = rng.random()
        I = C.pick(u_site)
        K = decomp.sample_range(I, u_range)
        T_next = T - math.log1p(-u_time) / C.total_mass()
        if t is not None and T_next >= t:
            T = t
            break
        T = T_next
        C.apply(I, K)
        sites.append(I)
        ks.append(K)
        times.append(T)
    rec.residual = tuple(C.members)
    rec.t_stop = T
    return rec


@dataclass
class AncestorSummary:
    horizons: Tuple[float, ...]
    mean_size: Tuple[float, ...]
    se_size: Tuple[float, ...]
    nstop_tail: dict
    nstop_mean: float
    extinct_fraction: float
    replicas: int


def ancestor_statistics(F: Iterable[Site], decomp: KalikowDecomposition, rng, horizons: Sequence[float],
                        replicas: int, tail_points: Sequence[int] = (5, 10, 20, 40),
                        step_cap: int = 10**7) -> AncestorSummary:
    """Monte-Carlo E|C_s| at the given reversed times and the N_STOP tail."""
    F = tuple(sorted(set(F)))
    hs = np.asarray(sorted(horizons), dtype=float)
    sums = np.zeros(len(hs))
    sq = np.zeros(len(hs))
    nstops = np.empty(replicas, dtype=np.int64)
    extinct = 0
    for r in range(replicas):
        rec = _run(F, decomp, rng, step_cap, None)
        extinct += not rec.residual
        nstops[r] = rec.n_stop
        sizes = [len(F)]
        for s in rec.replay()[1:]:
            sizes.append(len(s))
        # |C_s| is the size after the last event at time <= s
        idx = np.searchsorted(np.asarray(rec.times), hs, side="right")
        vals = np.asarray(sizes)[idx]
        sums += vals
        sq += vals * vals
    mean = sums / replicas
    var = np.maximum(sq / replicas - mean**2, 0.0)
    se = np.sqrt(var / max(replicas - 1, 1))
    tails = {int(N): float(np.mean(nstops > N)) for N in tail_points}
    return AncestorSummary(tuple(hs), tuple(mean), tuple(se), tails, float(nstops.mean()),
                           extinct / replicas, replicas)
