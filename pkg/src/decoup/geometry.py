"""Interval, cap and box value types."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .dyadic import Dyadic

__all__ = [
    "Cube",
    "Flat",
    "Curved",
    "Interval",
    "Cap",
    "Box",
    "cap_volume",
    "caps_disjoint_interiors",
    "ONE",
    "ZERO",
]

ZERO = Dyadic(0)
ONE = Dyadic(1)


@dataclass(frozen=True)
class Cube:
    """Coordinate carrying an R^{-1/2} (or K^{-1/2}) cube side."""

    def __str__(self) -> str:
        return "cube"


@dataclass(frozen=True)
class Flat:
    """The degenerate piece [0, R^{-1/m}] (I_0 or J_0)."""

    def __str__(self) -> str:
        return "flat"


@dataclass(frozen=True)
class Curved:
    """A curved piece, indexed either by (k, mu) for fine families or by
    (lam, iota) for the coarse family.  A bare ``Curved()`` marks J_1."""

    k: int | None = None
    mu: int | None = None
    lam: Dyadic | None = None
    iota: int | None = None

    def __str__(self) -> str:
        if self.k is not None:
            return f"curved(k={self.k};mu={self.mu})"
        if self.lam is not None:
            return f"curved(lam={self.lam};iota={self.iota})"
        return "curved"


Role = Cube | Flat | Curved


@dataclass(frozen=True)
class Interval:
    lo: Dyadic
    hi: Dyadic
    role: Role = Cube()

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def length(self) -> Dyadic:
        return self.hi - self.lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def interiors_overlap(self, other: "Interval") -> bool:
        return self.lo < other.hi and other.lo < self.hi

    def bounds(self) -> tuple[float, float]:
        return self.lo.to_float(), self.hi.to_float()

    def key(self) -> tuple[Dyadic, Dyadic]:
        return self.lo, self.hi

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"


@dataclass(frozen=True)
class Cap:
    """Product of coordinate intervals in [0,1]^{n-1}.

    ``scale`` is the R (or K) the cap was cut at; ``surface_id`` names the
    surface whose family it belongs to.
    """

    coords: tuple[Interval, ...]
    scale: int = 1
    surface_id: str | None = None

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def volume(self) -> Dyadic:
        return cap_volume(self)

    def count_role(self, kind: type) -> int:
        return sum(isinstance(iv.role, kind) for iv in self.coords)

    def contains(self, other: "Cap") -> bool:
        return all(a.contains(b) for a, b in zip(self.coords, other.coords))

    def key(self) -> tuple:
        return tuple(iv.key() for iv in self.coords)

    def bounds(self) -> np.ndarray:
        """Float ``(dim, 2)`` array of [lo, hi] per coordinate."""
        return np.array([iv.bounds() for iv in self.coords], dtype=float)

    def box(self) -> "Box":
        b = self.bounds()
        return Box(0.5 * (b[:, 0] + b[:, 1]), 0.5 * (b[:, 1] - b[:, 0]))

    def product(self, other: "Cap") -> "Cap":
        return Cap(self.coords + other.coords, self.scale, self.surface_id)

    def __str__(self) -> str:
        return " x ".join(str(iv) for iv in self.coords)


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box, or the ellipsoid inscribed in it when ``kind='ball'``."""

    center: np.ndarray
    half_widths: np.ndarray
    kind: str = "box"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        h = np.atleast_1d(np.asarray(self.half_widths, dtype=float))
        if h.shape == (1,) and c.shape[0] > 1:
            h = np.full_like(c, h[0])
        if c.shape != h.shape:
            raise ValueError("center and half-widths differ in dimension")
        if np.any(h <= 0):
            raise ValueError("half-widths must be strictly positive")
        if self.kind not in ("box", "ball"):
            raise ValueError(f"unknown box kind {self.kind!r}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_widths", h)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> "Box":
        c = np.asarray(center, dtype=float)
        return cls(c, np.full(c.shape, float(radius)), "ball")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(2 * self.half_widths))
        from scipy.special import gamma

        d = self.dim
        return float(np.pi ** (d / 2) / gamma(d / 2 + 1) * np.prod(self.half_widths))

    def contains_points(self, x: np.ndarray) -> np.ndarray:
        """Closed-membership mask for points ``x`` of shape ``(..., dim)``."""
        z = (np.asarray(x) - self.center) / self.half_widths
        if self.kind == "box":
            return np.all(np.abs(z) <= 1 + 1e-12, axis=-1)
        return np.sum(z * z, axis=-1) <= 1 + 1e-12


def cap_volume(c: Cap) -> Dyadic:
    return reduce(lambda acc, iv: acc * iv.length, c.coords, ONE)


def caps_disjoint_interiors(a: Cap, b: Cap) -> bool:
    """True iff the open interiors of ``a`` and ``b`` do not meet."""
    if a.dim != b.dim:
        raise ValueError("caps live in different dimensions")
    return not all(x.interiors_overlap(y) for x, y in zip(a.coords, b.coords))
