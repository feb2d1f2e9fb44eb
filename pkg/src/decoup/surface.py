"""Hypersurfaces xi -> (xi, phi_1(xi_1)+...+phi_s(xi_s)+xi_{s+1}^m+...+xi_{n-1}^m).

Each of the first ``s`` coordinates carries a polynomial phase of degree at
most ``m``; the remaining coordinates carry the monomial ``t**m``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "PhaseSpec",
    "SurfaceSpec",
    "NondegeneracyReport",
    "phase_total",
    "graph_point",
    "check_m_nondegenerate",
    "poly_range",
    "default_ratio",
]

BISECT_TOL = 1e-12


def default_ratio(m: int) -> float:
    return 2.0 ** (-(m - 2))


@dataclass(frozen=True)
class PhaseSpec:
    """Polynomial phase ``sum_l coefficients[l] * t**l``."""

    coefficients: tuple[float, ...]
    C: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs:
            raise ValueError("a phase needs at least one coefficient")
        if self.C <= 0:
            raise ValueError("degeneracy constant C must be positive")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self) -> int:
        nz = np.nonzero(self.coefficients)[0]
        return int(nz[-1]) if nz.size else 0

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @classmethod
    def monomial(cls, m: int, C: float = 1.0) -> "PhaseSpec":
        return cls(tuple([0.0] * m + [1.0]), C)


@dataclass(frozen=True)
class SurfaceSpec:
    n: int
    m: int
    s: int = 0
    phases: tuple[PhaseSpec, ...] = field(default_factory=tuple)
    name: str | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("ambient dimension n must be >= 2")
        if self.m < 4 or self.m % 2:
            raise ValueError("degree m must be an even integer >= 4")
        if not 0 <= self.s <= self.n - 1:
            raise ValueError("s must lie in [0, n-1]")
        object.__setattr__(self, "phases", tuple(self.phases))
        if len(self.phases) != self.s:
            raise ValueError(f"expected {self.s} phases, got {len(self.phases)}")
        for ph in self.phases:
            if ph.degree > self.m:
                raise ValueError(f"phase degree {ph.degree} exceeds m={self.m}")

    @classmethod
    def standard(cls, n: int, m: int, s: int = 0) -> "SurfaceSpec":
        """Surface with ``phi_j(t) = t**2`` (C=2) on the first ``s`` coordinates."""
        return cls(n, m, s, tuple(PhaseSpec((0.0, 0.0, 1.0), 2.0) for _ in range(s)))

    @property
    def surface_id(self) -> str:
        if self.name:
            return self.name
        return f"F(n={self.n},m={self.m},s={self.s})"

    def coordinate_poly(self, j: int) -> Polynomial:
        """Phase polynomial carried by coordinate ``j`` (0-based)."""
        if j < self.s:
            return self.phases[j].poly
        return Polynomial([0.0] * self.m + [1.0])

    def coordinate_polys(self) -> list[Polynomial]:
        return [self.coordinate_poly(j) for j in range(self.n - 1)]

    # -- JSON -----------------------------------------------------------

    def to_dict(self) -> dict:
        cs = [ph.C for ph in self.phases]
        C: float | list[float] = cs[0] if cs and all(c == cs[0] for c in cs) else cs
        return {
            "n": self.n,
            "m": self.m,
            "s": self.s,
            "phases": [list(ph.coefficients) for ph in self.phases],
            "C": C if cs else 1.0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurfaceSpec":
        raw_c = d.get("C", 1.0)
        phases = d.get("phases", [])
        cs = raw_c if isinstance(raw_c, list) else [raw_c] * len(phases)
        return cls(
            int(d["n"]),
            int(d["m"]),
            int(d.get("s", len(phases))),
            tuple(PhaseSpec(tuple(p), float(c)) for p, c in zip(phases, cs)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SurfaceSpec":
        return cls.from_dict(json.loads(text))


def _check_dim(surface: SurfaceSpec, xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != surface.n - 1:
        raise ValueError(f"expected {surface.n - 1} coordinates, got {xi.shape[-1]}")
    return xi


def phase_total(surface: SurfaceSpec, xi) -> float | np.ndarray:
    """Sum of the coordinate phases at ``xi`` (last axis = coordinates)."""
    xi = _check_dim(surface, xi)
    total = sum(surface.coordinate_poly(j)(xi[..., j]) for j in range(surface.n - 1))
    return float(total) if np.ndim(total) == 0 else total


def graph_point(surface: SurfaceSpec, xi) -> np.ndarray:
    xi = _check_dim(surface, xi)
    return np.concatenate([xi, np.atleast_1d(phase_total(surface, xi))], axis=-1)


# -- polynomial extrema on an interval ---------------------------------------


def _roots_in(p: Polynomial, lo: float, hi: float) -> list[float]:
    """Real roots of ``p`` in [lo, hi] by recursive derivative isolation.

    Between consecutive critical points ``p`` is monotone, so every sign
    change there brackets exactly one root, which bisection pins down.
    """
    p = p.trim()
    if p.degree() <= 0:
        return []
    if p.degree() == 1:
        c0, c1 = p.coef[:2]
        r = -c0 / c1
        return [r] if lo <= r <= hi else []
    knots = [lo] + _roots_in(p.deriv(), lo, hi) + [hi]
    roots = []
    for a, b in zip(knots[:-1], knots[1:]):
        fa, fb = p(a), p(b)
        if fa == 0:
            roots.append(a)
            continue
        if fa * fb > 0:
            continue
        while b - a > BISECT_TOL:
            mid = 0.5 * (a + b)
            fm = p(mid)
            if fm == 0:
                a = b = mid
                break
            if fa * fm < 0:
                b = mid
            else:
                a, fa = mid, fm
        roots.append(0.5 * (a + b))
    if p(hi) == 0 and (not roots or roots[-1] != hi):
        roots.append(hi)
    return sorted(set(roots))


def poly_range(p: Polynomial, lo: float = 0.0, hi: float = 1.0) -> tuple[float, float]:
    """Exact-up-to-bisection (min, max) of a polynomial over [lo, hi]."""
    candidates = [lo, hi] + _roots_in(p.deriv(), lo, hi)
    vals = p(np.asarray(candidates))
    return float(vals.min()), float(vals.max())


@dataclass
class NondegeneracyReport:
    ok: bool
    ranges: list[tuple[float, float]]
    second_range: tuple[float, float]
    violations: list[str]

    @property
    def second_ratio(self) -> float:
        lo, hi = self.second_range
        return lo / hi if hi > 0 else 0.0


def check_m_nondegenerate(
    phase: PhaseSpec, m: int, ratio: float | None = None, rtol: float = 1e-12
) -> NondegeneracyReport:
    """Check m-nondegeneracy of ``phase`` on [0, 1].

    Every derivative of order 0..m must stay within [0, C]; the second
    derivative's range [lo, hi] must satisfy ``lo >= ratio * hi`` and
    ``hi <= C``.  ``ratio=1/2`` with ``hi = C`` is the strict definition;
    the default ``2**-(m-2)`` accepts rescaled phases.  ``rtol`` absorbs
    floating-point noise at exact boundary cases.
    """
    if phase.degree > m:
        raise ValueError(f"phase degree {phase.degree} exceeds m={m}")
    ratio = default_ratio(m) if ratio is None else ratio
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    C = phase.C
    slack = rtol * max(1.0, C)
    p = phase.poly
    ranges, violations = [], []
    for order in range(m + 1):
        lo, hi = poly_range(p.deriv(order) if order else p)
        ranges.append((lo, hi))
        if lo < -slack:
            violations.append(f"derivative {order} negative (min {lo:.6g})")
        if hi > C + slack:
            violations.append(f"derivative {order} exceeds C={C:.6g} (max {hi:.6g})")
    second = ranges[2]
    if second[0] < ratio * second[1] - slack:
        violations.append(
            f"second derivative range [{second[0]:.6g}, {second[1]:.6g}] "
            f"breaks ratio {ratio:.6g}"
        )
    if second[1] <= 0:
        violations.append("second derivative vanishes identically")
    return NondegeneracyReport(not violations, ranges, second, violations)
