"""Fine cap families, Omega_b regions and coarse tau caps, all exact.

Scales are powers of two ``R = 2**(m*l)``.  With ``R**(-1/m) = 2**-l`` the
unit interval splits into ``I_0 = [0, 2**-l]`` and dyadic shells
``I_k = [2**(k-1-l), 2**(k-l)]`` for ``k = 1..l``; shell ``k`` is cut into
``2**(m*(k-1)/2)`` pieces of equal length.
"""

from __future__ import annotations

import itertools
import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .dyadic import Dyadic, pow2
from .geometry import ONE, ZERO, Box, Cap, Cube, Curved, Flat, Interval, cap_volume

__all__ = [
    "ScaleError",
    "scale_level",
    "interval_family",
    "interval_count",
    "cube_intervals",
    "coarse_intervals",
    "CapFamily",
    "cap_family",
    "Region",
    "omega_regions",
    "coarse_caps",
    "caps_in",
    "CoverReport",
    "verify_cover",
]


class ScaleError(ValueError):
    """Raised for scales that are not of the form 2**(m*l)."""


def scale_level(scale: int | Dyadic, m: int, min_level: int = 1) -> int:
    """Return ``l`` with ``scale == 2**(m*l)``; raise :class:`ScaleError` otherwise."""
    if isinstance(scale, Dyadic):
        if not scale.is_power_of_two() or scale.log2() < 0:
            raise ScaleError(f"scale {scale} must be 2^(m*l) with m={m}")
        e = scale.log2()
    else:
        if isinstance(scale, bool) or not isinstance(scale, int) or scale < 1:
            raise ScaleError(f"scale {scale!r} must be a positive integer 2^(m*l)")
        if scale & (scale - 1):
            raise ScaleError(f"scale {scale} is not a power of two; need 2^(m*l) with m={m}")
        e = scale.bit_length() - 1
    if e % m:
        raise ScaleError(f"scale {scale} = 2^{e} is not of the form 2^(m*l) with m={m}")
    level = e // m
    if level < min_level:
        raise ScaleError(f"scale {scale} needs l >= {min_level} in 2^(m*l)")
    return level


def _check_m(m: int) -> None:
    if m < 4 or m % 2:
        raise ValueError("m must be an even integer >= 4")


def interval_count(R: int, m: int) -> int:
    """Closed-form size of :func:`interval_family`."""
    level = scale_level(R, m)
    return 1 + sum(2 ** (m * (k - 1) // 2) for k in range(1, level + 1))


def interval_family(R: int, m: int) -> list[Interval]:
    """``I_0`` followed by every ``I_{k,mu}`` in (k, mu) order."""
    _check_m(m)
    level = scale_level(R, m)
    out = [Interval(ZERO, pow2(-level), Flat())]
    for k in range(1, level + 1):
        start = pow2(k - 1 - level)
        piece = pow2(-(m - 2) * (k - 1) // 2 - level)
        for mu in range(1, 2 ** (m * (k - 1) // 2) + 1):
            out.append(Interval(start + piece * (mu - 1), start + piece * mu, Curved(k, mu)))
    return out


def cube_intervals(scale: int, m: int, min_level: int = 1) -> list[Interval]:
    """The ``scale**(-1/2)`` grid on [0, 1]."""
    level = scale_level(scale, m, min_level)
    half = m * level // 2  # m even, so always integral
    side = pow2(-half)
    return [Interval(side * i, side * (i + 1), Cube()) for i in range(2**half)]


def coarse_intervals(K: int, m: int) -> list[Interval]:
    """``J_{lam,iota}`` for dyadic ``lam`` in [K^{-1/m}, 1/2], in (lam, iota) order."""
    _check_m(m)
    level = scale_level(K, m)
    out = []
    for j in range(level, 0, -1):
        lam = pow2(-j)
        piece = pow2(j * (m - 2) // 2 - m * level // 2)
        n_iota = 2 ** (m * level // 2 - j * m // 2)
        for iota in range(1, n_iota + 1):
            out.append(
                Interval(lam + piece * (iota - 1), lam + piece * iota, Curved(lam=lam, iota=iota))
            )
    return out


class CapFamily(Sequence):
    """Lazy Cartesian product of per-coordinate interval lists.

    Families at desk scale reach ~10^8 caps, so caps are built on demand.
    Iteration and indexing are lexicographic in the coordinate order.
    """

    def __init__(
        self, factors: Sequence[Sequence[Interval]], scale: int, surface_id: str | None = None
    ):
        self.factors = tuple(tuple(f) for f in factors)
        if any(not f for f in self.factors):
            raise ValueError("every coordinate needs at least one interval")
        self.scale = scale
        self.surface_id = surface_id

    @property
    def dim(self) -> int:
        return len(self.factors)

    def __len__(self) -> int:
        return math.prod(len(f) for f in self.factors)

    def _make(self, coords: tuple[Interval, ...]) -> Cap:
        return Cap(coords, self.scale, self.surface_id)

    def __iter__(self) -> Iterator[Cap]:
        for coords in itertools.product(*self.factors):
            yield self._make(coords)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self[i] for i in range(*idx.indices(len(self)))]
        n = len(self)
        if idx < 0:
            idx += n
        if not 0 <= idx < n:
            raise IndexError("cap index out of range")
        coords = []
        for f in reversed(self.factors):
            idx, r = divmod(idx, len(f))
            coords.append(f[r])
        return self._make(tuple(reversed(coords)))

    def __contains__(self, cap: object) -> bool:
        if not isinstance(cap, Cap) or cap.dim != self.dim:
            return False
        return all(iv in set(f) for iv, f in zip(cap.coords, self.factors))

    def key_set(self) -> set:
        """Set of coordinate tuples; only sensible for modest sizes."""
        return set(itertools.product(*self.factors))

    def total_volume(self) -> Dyadic:
        vol = ONE
        for f in self.factors:
            vol = vol * sum((iv.length for iv in f), ZERO)
        return vol

    def __repr__(self) -> str:
        return f"CapFamily(dim={self.dim}, size={len(self)}, scale={self.scale})"


def cap_family(R: int, m: int, s: int, n: int, surface_id: str | None = None) -> CapFamily:
    """Family F_n(R, m, s, n-1-s): R^{-1/2} cubes in the first ``s``
    coordinates times :func:`interval_family` in the rest."""
    _check_m(m)
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 <= s <= n - 1:
        raise ValueError("s must lie in [0, n-1]")
    curved = interval_family(R, m)
    cubes = cube_intervals(R, m) if s else []
    return CapFamily([cubes] * s + [curved] * (n - 1 - s), R, surface_id)


@dataclass(frozen=True)
class Region:
    """``Omega_b``: [0,1]^s times J_{b_j} in the remaining coordinates."""

    label: tuple[int, ...]
    cap: Cap

    def box(self) -> Box:
        return self.cap.box()

    @property
    def coords(self) -> tuple[Interval, ...]:
        return self.cap.coords


def omega_regions(K: int, m: int, s: int, n: int) -> list[Region]:
    """All ``2**(n-1-s)`` regions, labels in lexicographic order."""
    _check_m(m)
    level = scale_level(K, m)
    if not 0 <= s <= n - 1:
        raise ValueError("s must lie in [0, n-1]")
    cut = pow2(-level)
    j0 = Interval(ZERO, cut, Flat())
    j1 = Interval(cut, ONE, Curved())
    full = Interval(ZERO, ONE, Cube())
    out = []
    for bits in itertools.product((0, 1), repeat=n - 1 - s):
        coords = (full,) * s + tuple(j1 if b else j0 for b in bits)
        out.append(Region(bits, Cap(coords, K)))
    return out


def coarse_caps(
    K: int, m: int, s: int, n: int, include_flat: bool = False, surface_id: str | None = None
) -> CapFamily:
    """Coarse caps tau covering ``Omega_(1,...,1)``.

    With ``include_flat`` each non-cube coordinate may also be ``J_0``, so
    the caps tile all of [0,1]^{n-1}.
    """
    if not 0 <= s <= n - 1:
        raise ValueError("s must lie in [0, n-1]")
    curved = coarse_intervals(K, m)
    if include_flat:
        curved = [Interval(ZERO, pow2(-scale_level(K, m)), Flat())] + curved
    cubes = cube_intervals(K, m) if s else []
    return CapFamily([cubes] * s + [curved] * (n - 1 - s), K, surface_id)


def caps_in(parent: Cap | Region, family: Iterable[Cap]) -> list[Cap] | CapFamily:
    """Members of ``family`` whose closure lies in the closure of ``parent``."""
    pcap = parent.cap if isinstance(parent, Region) else parent
    if isinstance(family, CapFamily):
        if family.dim != pcap.dim:
            raise ValueError("parent and family live in different dimensions")
        factors = [[iv for iv in f if p.contains(iv)] for f, p in zip(family.factors, pcap.coords)]
        if any(not f for f in factors):
            return []
        return CapFamily(factors, family.scale, family.surface_id)
    return [c for c in family if pcap.contains(c)]


# -- cover verification ------------------------------------------------------


@dataclass
class CoverReport:
    ok: bool
    n_caps: int
    total_volume: Dyadic
    domain_volume: Dyadic
    deficit: Dyadic
    excess: Dyadic
    overlap: tuple[Cap, Cap] | None
    outside: Cap | None
    method: str

    def summary(self) -> str:
        if self.ok:
            return f"cover ok: {self.n_caps} caps, volume {self.total_volume} ({self.method})"
        parts = [f"cover FAILED ({self.method}, {self.n_caps} caps)"]
        if self.deficit:
            parts.append(f"volume deficit {self.deficit}")
        if self.excess:
            parts.append(f"volume excess {self.excess}")
        if self.overlap:
            parts.append(f"overlap {self.overlap[0]} / {self.overlap[1]}")
        if self.outside:
            parts.append(f"cap outside domain {self.outside}")
        return "; ".join(parts)


def _to_dyadic(x: float | Dyadic) -> Dyadic:
    return x if isinstance(x, Dyadic) else Dyadic.from_fraction(Fraction(x))


def _domain_intervals(domain: Box | Cap | Region) -> list[tuple[Dyadic, Dyadic]]:
    if isinstance(domain, Region):
        domain = domain.cap
    if isinstance(domain, Cap):
        return [(iv.lo, iv.hi) for iv in domain.coords]
    if domain.kind != "box":
        raise ValueError("cover checks need a box domain")
    return [
        (_to_dyadic(float(c - h)), _to_dyadic(float(c + h)))
        for c, h in zip(domain.center, domain.half_widths)
    ]


def _partitions(factor: Sequence[Interval], lo: Dyadic, hi: Dyadic) -> tuple[bool, int | None]:
    """Is ``factor`` an interior-disjoint tiling of [lo, hi]?  Returns the
    index (in sorted order) of the first offending interval on failure."""
    ivs = sorted(factor, key=lambda iv: (iv.lo, iv.hi))
    cursor = lo
    for i, iv in enumerate(ivs):
        if iv.lo != cursor:
            return False, i
        cursor = iv.hi
    return cursor == hi, None


def _verify_factorwise(family: CapFamily, dom) -> CoverReport:
    if family.dim != len(dom):
        raise ValueError("family and domain differ in dimension")
    dom_vol = math.prod((hi - lo for lo, hi in dom), start=ONE)
    total = family.total_volume()
    ok = all(_partitions(f, lo, hi)[0] for f, (lo, hi) in zip(family.factors, dom))
    if ok:
        return CoverReport(True, len(family), total, dom_vol, ZERO, ZERO, None, None, "factorwise")
    # fall back to the generic sweep for a precise diagnosis
    report = _verify_sweep(list(family), dom)
    report.method = "factorwise+sweep"
    return report


def _as_int_grid(caps: Sequence[Cap], dom) -> tuple[list[list[tuple[int, int]]], list[tuple[int, int]]]:
    """Scale every endpoint to a common power of two so comparisons are
    plain integer comparisons (still exact)."""
    exps = [e.exponent for lo, hi in dom for e in (lo, hi) if e]
    for c in caps:
        for iv in c.coords:
            exps.extend(e.exponent for e in (iv.lo, iv.hi) if e)
    base = min(exps, default=0)

    def conv(d: Dyadic) -> int:
        return d.mantissa << (d.exponent - base) if d else 0

    boxes = [[(conv(iv.lo), conv(iv.hi)) for iv in c.coords] for c in caps]
    return boxes, [(conv(lo), conv(hi)) for lo, hi in dom]


def _find_overlap(boxes: list[list[tuple[int, int]]], ids: list[int], d: int) -> tuple[int, int] | None:
    """Return a pair of ids with overlapping interiors, or None.

    Coordinate ``d`` is cut at every endpoint; two boxes overlap iff they
    share an elementary slab there and overlap in the later coordinates.
    """
    cuts = sorted({x for i in ids for x in boxes[i][d]})
    slabs: list[list[int]] = [[] for _ in range(len(cuts) - 1)]
    for i in ids:
        lo, hi = boxes[i][d]
        for k in range(bisect_left(cuts, lo), bisect_left(cuts, hi)):
            slabs[k].append(i)
    last = len(boxes[ids[0]]) - 1 if ids else 0
    prev = None
    for members in slabs:
        if len(members) < 2 or members == prev:
            prev = members
            continue
        prev = members
        if d == last:
            return members[0], members[1]
        hit = _find_overlap(boxes, members, d + 1)
        if hit:
            return hit
    return None


def _verify_sweep(caps: list[Cap], dom) -> CoverReport:
    dom_vol = math.prod((hi - lo for lo, hi in dom), start=ONE)
    total = sum((cap_volume(c) for c in caps), ZERO)
    outside = None
    for c in caps:
        if c.dim != len(dom):
            raise ValueError("cap and domain differ in dimension")
        if not all(lo <= iv.lo and iv.hi <= hi for iv, (lo, hi) in zip(c.coords, dom)):
            outside = c
            break
    overlap = None
    if caps:
        boxes, _ = _as_int_grid(caps, dom)
        hit = _find_overlap(boxes, list(range(len(caps))), 0)
        if hit:
            overlap = (caps[hit[0]], caps[hit[1]])
    deficit = dom_vol - total if total <= dom_vol else ZERO
    excess = total - dom_vol if total > dom_vol else ZERO
    ok = not deficit and not excess and overlap is None and outside is None
    return CoverReport(ok, len(caps), total, dom_vol, deficit, excess, overlap, outside, "sweep")


def verify_cover(family: Iterable[Cap], domain: Box | Cap | Region | None = None) -> CoverReport:
    """Exact check that ``family`` tiles ``domain`` (default [0,1]^{n-1}).

    Volumes are summed exactly and interiors are checked for overlap.
    Lazy product families are checked one coordinate at a time, which is
    equivalent and avoids enumerating them.
    """
    if isinstance(family, CapFamily):
        dim = family.dim
    else:
        family = list(family)
        dim = family[0].dim if family else (None if domain is None else _dim_of(domain))
    dom = _domain_intervals(domain) if domain is not None else [(ZERO, ONE)] * (dim or 0)
    if isinstance(family, CapFamily):
        return _verify_factorwise(family, dom)
    return _verify_sweep(family, dom)


def _dim_of(domain) -> int:
    if isinstance(domain, Region):
        return domain.cap.dim
    if isinstance(domain, Cap):
        return domain.dim
    return domain.dim
