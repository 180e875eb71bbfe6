"""Flat lookup tables for the compiled sampling kernels.

Eligible models are homogeneous, have a finite state space and a ladder
that saturates at a finite range K. Sites are packed into int64 keys, 21
bits per coordinate with an offset of 2^20, which keeps lexicographic
order, and a ball V_i(k) becomes a list of key deltas. The p^{[k]} CDF
rows are indexed by the base-|A| code of the spins on V_i(k), first site
most significant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .decomposition import KalikowDecomposition, _cdf
from .lattice import Site, ball_offsets

SHIFT = 21
BIAS = 1 << 20
MAX_D = 3
DEFAULT_ROW_BUDGET = 1 << 16


class PackError(ValueError):
    pass


def pack(site: Site) -> int:
    key = 0
    for c in site:
        if not -BIAS <= c < BIAS:
            raise PackError(f"coordinate {c} outside the packable range")
        key = (key << SHIFT) | (c + BIAS)
    return key


def unpack(key: int, d: int) -> Site:
    mask = (1 << SHIFT) - 1
    out = []
    for _ in range(d):
        out.append((key & mask) - BIAS)
        key >>= SHIFT
    return tuple(reversed(out))


def pack_many(sites: Iterable[Site]) -> np.ndarray:
    arr = np.asarray(list(sites), dtype=np.int64)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.ndim != 2:
        raise PackError("sites must share one dimension")
    if arr.min() < -BIAS or arr.max() >= BIAS:
        raise PackError("coordinate outside the packable range")
    key = np.zeros(len(arr), dtype=np.int64)
    for n in range(arr.shape[1]):
        key = (key << SHIFT) | (arr[:, n] + BIAS)
    return key


def unpack_many(keys: np.ndarray, d: int) -> list:
    keys = np.asarray(keys, dtype=np.int64)
    mask = (1 << SHIFT) - 1
    cols = [((keys >> (SHIFT * (d - 1 - n))) & mask) - BIAS for n in range(d)]
    return list(zip(*(c.tolist() for c in cols)))


def offset_delta(off: Site) -> int:
    d = len(off)
    return sum(c * (1 << (SHIFT * (d - 1 - n))) for n, c in enumerate(off))


@dataclass
class KernelTables:
    d: int
    n_atoms: int
    M: float
    K: int
    range_cdf: np.ndarray  # alpha(k)/M for k = -1..K
    ball_delta: np.ndarray  # concatenated key deltas of V(0), ..., V(K)
    ball_start: np.ndarray  # K + 2 offsets into ball_delta
    pm1_cdf: np.ndarray  # n_atoms + 1
    pk_flat: np.ndarray  # concatenated CDF rows, each n_atoms + 1 long
    pk_start: np.ndarray  # K + 1 row offsets; -1 where lambda(k) = 0

    @property
    def rows(self) -> int:
        return len(self.pk_flat) // (self.n_atoms + 1)


def eligibility(decomp: KalikowDecomposition, row_budget: int = DEFAULT_ROW_BUDGET) -> Optional[str]:
    """None if tables can be built, otherwise the reason they cannot."""
    model = decomp.model
    if not model.finite:
        return "continuous state space"
    if not decomp.homogeneous:
        return "inhomogeneous field"
    if model.d > MAX_D:
        return f"dimension {model.d} > {MAX_D}"
    if model.range is None:
        return "infinite-range kernel"
    K = decomp.effective_range(0)
    if K is None:
        return "ladder does not saturate"
    n = len(model.space.atoms)
    rows = 0
    for k in range(0, K + 1):
        if decomp.lam_orbit(0, k) > 0.0:
            rows += n ** len(ball_offsets(model.d, k))
            if rows > row_budget:
                return f"p^[k] table needs more than {row_budget} rows"
    return None


def build_tables(decomp: KalikowDecomposition, row_budget: int = DEFAULT_ROW_BUDGET) -> KernelTables:
    reason = eligibility(decomp, row_budget)
    if reason is not None:
        raise ValueError(f"kernel tables unavailable: {reason}")
    model = decomp.model
    d = model.d
    atoms = model.space.atoms
    n = len(atoms)
    K = decomp.effective_range(0)
    origin = (0,) * d
    deltas, starts = [], [0]
    for k in range(0, K + 1):
        deltas.extend(offset_delta(off) for off in ball_offsets(d, k))
        starts.append(len(deltas))
    rows, pk_start = [], []
    for k in range(0, K + 1):
        if decomp.lam_orbit(0, k) <= 0.0:
            pk_start.append(-1)
            continue
        pk_start.append(len(rows) * (n + 1))
        offs = ball_offsets(d, k)
        for combo in itertools.product(range(n), repeat=len(offs)):
            w = {off: atoms[c] for off, c in zip(offs, combo)}
            rows.append(_cdf(decomp.pk_pmf(origin, k, w.__getitem__)))
    return KernelTables(
        d=d,
        n_atoms=n,
        M=decomp.mass_orbit(0),
        K=K,
        range_cdf=np.ascontiguousarray(decomp.range_cdf(0), dtype=np.float64),
        ball_delta=np.array(deltas, dtype=np.int64),
        ball_start=np.array(starts, dtype=np.int64),
        pm1_cdf=np.ascontiguousarray(_cdf(decomp.pminus1_pmf(0)), dtype=np.float64),
        pk_flat=np.ascontiguousarray(np.concatenate(rows) if rows else np.zeros(0), dtype=np.float64),
        pk_start=np.array(pk_start, dtype=np.int64),
    )
