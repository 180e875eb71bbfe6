"""Translation-invariant pairwise interaction kernels J(i, j) = J(j - i).

Kernels come from named families so that the shell sums
S^{<=k} and the tails S^{>k} are available exactly. The decomposition ladder
needs the positive and negative parts of J separately, because the extremal
spins of the unseen sites depend on the sign of each coupling.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import inf, isfinite
from typing import Dict, Mapping, Sequence, Tuple

from .lattice import Site, l1_norm, shell_offsets, shell_size


class KernelError(ValueError):
    pass


class Kernel:
    """Base class. Subclasses define ``d``, ``range`` and ``coupling``."""

    d: int
    range: int | None  # None: infinite range

    def coupling(self, offset: Site) -> float:
        raise NotImplementedError

    def __call__(self, i: Site, j: Site) -> float:
        return self.coupling(tuple(b - a for a, b in zip(i, j)))

    def shell(self, k: int) -> Tuple[Tuple[Site, float], ...]:
        """(offset, J) pairs at L1 distance ``k`` with J != 0, lexicographic."""
        return self._shell(k)

    @lru_cache(maxsize=None)
    def _shell(self, k: int) -> Tuple[Tuple[Site, float], ...]:
        if k <= 0 or (self.range is not None and k > self.range):
            return ()
        out = []
        for off in shell_offsets(self.d, k):
            J = self.coupling(off)
            if J != 0.0:
                out.append((off, J))
        return tuple(out)

    def shell_parts(self, k: int) -> Tuple[float, float]:
        """(sum of J^+, sum of J^-) over the shell at distance ``k``."""
        pos = neg = 0.0
        for _, J in self.shell(k):
            if J > 0:
                pos += J
            else:
                neg -= J
        return pos, neg

    def shell_abs(self, k: int) -> float:
        p, n = self.shell_parts(k)
        return p + n

    def inner_parts(self, k: int) -> Tuple[float, float]:
        """(sum J^+, sum J^-) over 1 <= ||j - i|| <= k."""
        pos = neg = 0.0
        for r in range(1, k + 1):
            p, n = self.shell_parts(r)
            pos += p
            neg += n
        return pos, neg

    def tail_parts(self, k: int) -> Tuple[float, float]:
        """(sum J^+, sum J^-) over ||j - i|| > k, for k >= -1."""
        raise NotImplementedError

    def S_le(self, k: int) -> float:
        p, n = self.inner_parts(max(k, 0))
        return p + n

    def S_gt(self, k: int) -> float:
        p, n = self.tail_parts(k)
        return p + n

    @property
    def total_abs(self) -> float:
        """Sigma_i = sum_j |J(i, j)|."""
        return self.S_gt(-1)

    @property
    def total_signed(self) -> float:
        p, n = self.tail_parts(-1)
        return p - n

    def support_radius(self) -> int:
        if self.range is None:
            raise KernelError("infinite-range kernel has no finite support")
        return self.range


class FiniteRangeKernel(Kernel):
    """Kernel given by an explicit table of offsets."""

    def __init__(self, d: int, table: Mapping[Site, float]):
        if d < 1:
            raise KernelError("dimension must be >= 1")
        clean: Dict[Site, float] = {}
        for off, J in table.items():
            off = tuple(int(c) for c in off)
            if len(off) != d:
                raise KernelError(f"offset {off} does not have dimension {d}")
            if l1_norm(off) == 0:
                if J != 0:
                    raise KernelError("J(i, i) must be 0")
                continue
            if not isfinite(J):
                raise KernelError("couplings must be finite")
            if J != 0:
                clean[off] = float(J)
        self.d = d
        self.table = clean
        self.range = max((l1_norm(o) for o in clean), default=0)

    def coupling(self, offset: Site) -> float:
        return self.table.get(tuple(offset), 0.0)

    def tail_parts(self, k: int) -> Tuple[float, float]:
        pos = neg = 0.0
        for r in range(max(k + 1, 1), self.range + 1):
            p, n = self.shell_parts(r)
            pos += p
            neg += n
        return pos, neg

    def __repr__(self) -> str:
        return f"FiniteRangeKernel(d={self.d}, range={self.range}, entries={len(self.table)})"


def nearest_neighbour(d: int, J: float = 1.0) -> FiniteRangeKernel:
    table = {}
    for axis in range(d):
        for s in (-1, 1):
            off = [0] * d
            off[axis] = s
            table[tuple(off)] = J
    return FiniteRangeKernel(d, table)


def power_law(d: int, theta: float, p: float, L: int) -> FiniteRangeKernel:
    """J = theta / ||i - j||^p for 1 <= ||i - j|| <= L."""
    if L < 1:
        raise KernelError("power-law truncation L must be >= 1")
    table = {}
    for r in range(1, L + 1):
        for off in shell_offsets(d, r):
            table[off] = theta / r**p
    return FiniteRangeKernel(d, table)


class ExponentialKernel(Kernel):
    """J(i, j) = theta * r^||i - j|| for j != i; infinite range, 0 < r < 1."""

    def __init__(self, d: int, theta: float, r: float):
        if not 0.0 < r < 1.0:
            raise KernelError("exponential kernel needs 0 < r < 1")
        if d < 1:
            raise KernelError("dimension must be >= 1")
        self.d = d
        self.theta = float(theta)
        self.r = float(r)
        self.range = None
        self._tail_cache: Dict[int, float] = {}

    def coupling(self, offset: Site) -> float:
        n = l1_norm(offset)
        return 0.0 if n == 0 else self.theta * self.r**n

    def _shell(self, k: int):
        if k <= 0:
            return ()
        J = self.theta * self.r**k
        if J == 0.0:
            return ()
        return tuple((off, J) for off in shell_offsets(self.d, k))

    def shell_parts(self, k: int) -> Tuple[float, float]:
        if k <= 0:
            return 0.0, 0.0
        s = shell_size(self.d, k) * abs(self.theta) * self.r**k
        return (s, 0.0) if self.theta >= 0 else (0.0, s)

    def _abs_tail(self, k: int) -> float:
        # sum_{n > k} |S_d(n)| r^n by direct summation; the terms are
        # polynomial times geometric so the remainder after the cut-off is
        # bounded by term * q / (1 - q) once the term ratio q drops below 1.
        k = max(k, 0)
        if k in self._tail_cache:
            return self._tail_cache[k]
        total = 0.0
        n = k + 1
        prev = None
        while True:
            term = shell_size(self.d, n) * self.r**n
            total += term
            if prev is not None and prev > 0:
                q = term / prev
                if q < 1.0 and term * q / (1.0 - q) <= 1e-17 * total:
                    break
            if term == 0.0:
                break
            prev = term
            n += 1
            if n > k + 100000:
                raise KernelError("tail sum did not converge")
        self._tail_cache[k] = total
        return total

    def tail_parts(self, k: int) -> Tuple[float, float]:
        s = abs(self.theta) * self._abs_tail(k)
        return (s, 0.0) if self.theta >= 0 else (0.0, s)

    def __repr__(self) -> str:
        return f"ExponentialKernel(d={self.d}, theta={self.theta}, r={self.r})"


class ZeroKernel(FiniteRangeKernel):
    def __init__(self, d: int):
        super().__init__(d, {})


def kernel_from_config(d: int, spec: Mapping | None) -> Kernel:
    """Build a kernel from its JSON description.

    Recognised ``type`` values: ``nn`` (``J``), ``table`` (``entries`` as a
    list of ``[offset, J]``), ``exponential`` (``theta``, ``r``), ``power``
    (``theta``, ``p``, ``L``) and ``zero``.
    """
    if spec is None:
        return ZeroKernel(d)
    kind = spec.get("type", "nn")
    if kind == "nn":
        return nearest_neighbour(d, float(spec.get("J", 1.0)))
    if kind == "table":
        entries = spec.get("entries")
        if not entries:
            raise KernelError("table kernel needs a non-empty 'entries' list")
        table = {}
        for item in entries:
            off, J = item
            off = (off,) if isinstance(off, (int, float)) else tuple(off)
            table[tuple(int(c) for c in off)] = float(J)
        return FiniteRangeKernel(d, table)
    if kind == "exponential":
        return ExponentialKernel(d, float(spec["theta"]), float(spec["r"]))
    if kind == "power":
        return power_law(d, float(spec["theta"]), float(spec["p"]), int(spec["L"]))
    if kind == "zero":
        return ZeroKernel(d)
    raise KernelError(f"unknown kernel type {kind!r}")


def kernel_le(small: Kernel, big: Kernel, radius: int) -> bool:
    """J <= J~ entrywise on all offsets within ``radius``."""
    for r in range(1, radius + 1):
        for off in shell_offsets(small.d, r):
            if small.coupling(off) > big.coupling(off) + 1e-15:
                return False
    return True
