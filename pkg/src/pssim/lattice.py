"""Lattice geometry, spin values and sparse configurations on Z^d.

Sites are plain tuples of ints. The infinite lattice is never materialised:
configurations only store the sites that have been touched and answer every
other lookup with a default value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Any, Dict, Iterable, Iterator, Mapping, Tuple

Site = Tuple[int, ...]


class _Cemetery:
    """The extra spin value meaning "keep the current value"."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "CEMETERY"

    def __reduce__(self):
        return (_Cemetery, ())


CEMETERY = _Cemetery()


def is_cemetery(value: Any) -> bool:
    return value is CEMETERY


def l1_norm(site: Site) -> int:
    return sum(abs(c) for c in site)


def l1_distance(a: Site, b: Site) -> int:
    return sum(abs(x - y) for x, y in zip(a, b))


def origin(d: int) -> Site:
    return (0,) * d


@lru_cache(maxsize=None)
def shell_offsets(d: int, k: int) -> Tuple[Site, ...]:
    """Offsets at L1 distance exactly ``k``, in lexicographic order."""
    if k < 0:
        return ()
    if d == 1:
        return ((-k,), (k,)) if k > 0 else ((0,),)
    out = []
    for first in range(-k, k + 1):
        for rest in shell_offsets(d - 1, k - abs(first)):
            out.append((first,) + rest)
    return tuple(sorted(out))


@lru_cache(maxsize=None)
def ball_offsets(d: int, k: int) -> Tuple[Site, ...]:
    """Offsets of the L1 ball of radius ``k``, in lexicographic order."""
    if k < 0:
        raise ValueError(f"ball radius must be >= 0, got {k}")
    out = []
    for r in range(k + 1):
        out.extend(shell_offsets(d, r))
    return tuple(sorted(out))


def shell_size(d: int, k: int) -> int:
    """Number of sites at L1 distance exactly ``k`` from a point of Z^d."""
    if k < 0:
        return 0
    if k == 0:
        return 1
    return sum(2**i * comb(d, i) * comb(k - 1, i - 1) for i in range(1, min(d, k) + 1))


def ball_size(d: int, k: int) -> int:
    """|V_i(k)|; independent of the centre."""
    if k < 0:
        return 0
    return sum(2**i * comb(d, i) * comb(k, i) for i in range(0, min(d, k) + 1))


def translate(center: Site, offset: Site) -> Site:
    return tuple(c + o for c, o in zip(center, offset))


def ball_sites(center: Site, k: int) -> Tuple[Site, ...]:
    """All sites within L1 distance ``k`` of ``center``, lexicographically."""
    if k < 0:
        raise ValueError(f"ball radius must be >= 0, got {k}")
    return tuple(translate(center, off) for off in ball_offsets(len(center), k))


@dataclass(frozen=True)
class Ball:
    center: Site
    radius: int
    members: Tuple[Site, ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "members", ball_sites(self.center, self.radius))

    def __contains__(self, site: Site) -> bool:
        return l1_distance(site, self.center) <= self.radius

    def __iter__(self) -> Iterator[Site]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)


class SparseConfiguration:
    """Finite map Site -> spin value with a default for untouched sites.

    The default is normally :data:`CEMETERY`, meaning "not yet determined",
    as in the initial state of the forward assignment. A Real default turns
    the object into a total configuration that is constant off its support.
    """

    __slots__ = ("_values", "default")

    def __init__(self, values: Mapping[Site, Any] | None = None, default: Any = CEMETERY):
        self._values: Dict[Site, Any] = dict(values or {})
        self.default = default

    def __getitem__(self, site: Site) -> Any:
        return self._values.get(site, self.default)

    def __setitem__(self, site: Site, value: Any) -> None:
        self._values[site] = value

    def __contains__(self, site: Site) -> bool:
        return site in self._values

    def __len__(self) -> int:
        return len(self._values)

    def get(self, site: Site, default: Any = None) -> Any:
        return self._values.get(site, self.default if default is None else default)

    def items(self) -> Iterable[Tuple[Site, Any]]:
        return self._values.items()

    def assigned(self) -> Tuple[Site, ...]:
        return tuple(sorted(self._values))

    def copy(self) -> "SparseConfiguration":
        return SparseConfiguration(self._values, self.default)

    def __repr__(self) -> str:
        return f"SparseConfiguration({dict(sorted(self._values.items()))!r}, default={self.default!r})"


def restrict(config: SparseConfiguration | Mapping[Site, Any], ball: Ball | Iterable[Site]) -> Dict[Site, Any]:
    """η(V): the values of ``config`` on the sites of ``ball``, in lexicographic order."""
    sites = ball.members if isinstance(ball, Ball) else sorted(ball)
    if isinstance(config, SparseConfiguration):
        return {s: config[s] for s in sites}
    return {s: config[s] for s in sites}
