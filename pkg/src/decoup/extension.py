"""Extension operator E_Q g on x-lattices.

    E_Q g(x) = int_Q g(xi) e(x' . xi + x_n * Phi(xi)) d xi,   e(t) = exp(2 pi i t)

``extend_direct`` sums the tensor quadrature at every lattice point.
``extend_separable`` uses that ``Phi`` is a sum of one-variable phases, so
each rank-1 term of ``g`` turns into a product of 1-D tables indexed by
``(x_j, x_n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma

from .geometry import Box, Cap
from .quadrature import (
    CYCLES_PER_PANEL,
    DEFAULT_ORDER,
    NyquistError,
    Rule1D,
    factor_at_points,
    factor_table,
    panels_needed,
)
from .surface import SurfaceSpec, poly_range

__all__ = [
    "Lattice",
    "GridFunction",
    "SeparableFunction",
    "SampledField",
    "NyquistError",
    "nyquist_lattice",
    "plan_rules",
    "required_panels",
    "extend_direct",
    "extend_separable",
    "extend_at_points",
    "weight_eval",
    "weight_exponent",
    "weight_integral",
    "weight_radius",
    "weight_lattice",
]

TWO_PI = 2.0 * np.pi
_POINT_CHUNK = 1 << 15


# -- lattices ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Lattice:
    """Tensor lattice ``anchor + step * index`` or an explicit point cloud.

    Monte Carlo clouds record their seed and the measure each point carries.
    """

    anchor: np.ndarray
    steps: np.ndarray
    counts: tuple[int, ...]
    points: np.ndarray | None = None
    seed: int | None = None
    point_measure: float | None = None
    region: Box | None = None
    sampling: str = "uniform"
    weight: tuple | None = None  # (center, R, exponent) when sampled from the weight

    def __post_init__(self):
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        object.__setattr__(self, "steps", np.asarray(self.steps, dtype=float))
        if self.points is None:
            if np.any(self.steps <= 0):
                raise ValueError("lattice steps must be positive")
            if len(self.counts) != self.anchor.size or min(self.counts) < 1:
                raise ValueError("one positive count per coordinate is required")
        elif self.seed is None:
            raise ValueError("Monte Carlo lattices must record their seed")

    @property
    def mode(self) -> str:
        return "tensor" if self.points is None else "montecarlo"

    @property
    def is_tensor(self) -> bool:
        return self.points is None

    @property
    def dim(self) -> int:
        return self.anchor.size if self.is_tensor else self.points.shape[1]

    @property
    def size(self) -> int:
        return math.prod(self.counts) if self.is_tensor else self.points.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.counts) if self.is_tensor else (self.size,)

    @property
    def cell_measure(self) -> float:
        if self.is_tensor:
            return float(np.prod(self.steps))
        return float(self.point_measure)

    def axes(self) -> list[np.ndarray]:
        if not self.is_tensor:
            raise ValueError("Monte Carlo lattices have no axes")
        return [a + h * np.arange(c) for a, h, c in zip(self.anchor, self.steps, self.counts)]

    def coords(self) -> np.ndarray:
        """All points as an ``(N, n)`` array (row-major over the axes)."""
        if not self.is_tensor:
            return self.points
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def max_abs(self) -> np.ndarray:
        """Largest ``|x_i|`` per coordinate."""
        if self.is_tensor:
            return np.array([np.max(np.abs(ax[[0, -1]])) for ax in self.axes()])
        return np.max(np.abs(self.points), axis=0)

    @classmethod
    def single(cls, x: Sequence[float]) -> "Lattice":
        x = np.asarray(x, dtype=float)
        return cls(x, np.ones_like(x), (1,) * x.size)


def nyquist_lattice(
    ball: Box,
    step: float = 0.5,
    mode: str = "tensor",
    count: int | None = None,
    seed: int | None = None,
) -> Lattice:
    """Tensor lattice over the bounding box of ``ball``, or a seeded uniform
    sample of ``count`` points inside it."""
    if step > 0.5:
        raise NyquistError(f"step {step} exceeds 1/2; E g would be undersampled")
    if step <= 0:
        raise ValueError("step must be positive")
    if mode == "tensor":
        k = np.floor(ball.half_widths / step + 1e-9).astype(int)
        anchor = ball.center - k * step
        return Lattice(anchor, np.full(ball.dim, step), tuple(int(2 * v + 1) for v in k), region=ball)
    if mode != "montecarlo":
        raise ValueError(f"unknown lattice mode {mode!r}")
    if count is None or seed is None:
        raise ValueError("Monte Carlo mode needs count and seed")
    rng = np.random.default_rng(seed)
    if ball.kind == "ball":
        d = rng.standard_normal((count, ball.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = rng.random(count) ** (1.0 / ball.dim)
        pts = ball.center + d * r[:, None] * ball.half_widths
    else:
        pts = ball.center + (2 * rng.random((count, ball.dim)) - 1) * ball.half_widths
    return Lattice(
        ball.center, np.zeros(ball.dim), (), pts, seed, ball.volume / count, region=ball
    )


# -- functions on xi-space -----------------------------------------------------


def _box_of(Q: Box | Cap) -> Box:
    return Q.box() if isinstance(Q, Cap) else Q


def _q_bounds(Q: Box | Cap) -> np.ndarray:
    b = _box_of(Q)
    return np.stack([b.center - b.half_widths, b.center + b.half_widths], axis=1)


def required_panels(
    Q: Box | Cap,
    surface: SurfaceSpec,
    xmax: np.ndarray,
    bandwidth: float = 0.0,
    cycles: float = CYCLES_PER_PANEL,
) -> list[int]:
    """Panels per coordinate for the integrand's top frequency over ``Q``.

    The frequency bound for coordinate ``j`` is
    ``max|x_j| + max|x_n| * max|phi_j'| + bandwidth``.
    """
    bounds = _q_bounds(Q)
    out = []
    for j, (lo, hi) in enumerate(bounds):
        dlo, dhi = poly_range(surface.coordinate_poly(j).deriv(), lo, hi)
        slope = max(abs(dlo), abs(dhi))
        freq = xmax[j] + xmax[-1] * slope + bandwidth
        out.append(panels_needed(lo, hi, freq, cycles))
    return out


def plan_rules(
    Q: Box | Cap,
    surface: SurfaceSpec,
    lattice: Lattice,
    bandwidth: float = 0.0,
    order: int = DEFAULT_ORDER,
    refine: int = 1,
) -> tuple[Rule1D, ...]:
    """Default quadrature: enough Gauss-Legendre panels for ``lattice``."""
    panels = required_panels(Q, surface, lattice.max_abs(), bandwidth)
    bounds = _q_bounds(Q)
    return tuple(Rule1D(lo, hi, p * refine, order) for (lo, hi), p in zip(bounds, panels))


def _check_rules(rules, Q, surface, lattice, bandwidth) -> None:
    bounds = _q_bounds(Q)
    if len(rules) != surface.n - 1:
        raise ValueError("one quadrature rule per xi-coordinate is required")
    for r, (lo, hi) in zip(rules, bounds):
        if not (math.isclose(r.lo, lo, abs_tol=1e-15) and math.isclose(r.hi, hi, abs_tol=1e-15)):
            raise ValueError("quadrature rule does not match Q")
    need = required_panels(Q, surface, lattice.max_abs(), bandwidth)
    for j, (r, p) in enumerate(zip(rules, need)):
        if r.panels < p:
            raise NyquistError(
                f"coordinate {j}: {r.panels} panels resolve less than the {p} "
                f"needed for this lattice"
            )


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of ``g`` at the tensor quadrature nodes of ``rules``.

    ``bandwidth`` is a declared bound on the frequencies of ``g`` itself.
    """

    rules: tuple[Rule1D, ...]
    values: np.ndarray
    bandwidth: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        shape = tuple(r.size for r in self.rules)
        if v.shape != shape:
            raise ValueError(f"values have shape {v.shape}, expected {shape}")
        if any(s < 2 for s in shape):
            raise ValueError("need at least two nodes per coordinate")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "values", v)

    @property
    def box(self) -> Box:
        lo = np.array([r.lo for r in self.rules])
        hi = np.array([r.hi for r in self.rules])
        return Box(0.5 * (lo + hi), 0.5 * (hi - lo))

    @classmethod
    def from_callable(
        cls,
        func: Callable[..., np.ndarray] | complex,
        rules: Sequence[Rule1D],
    ) -> "GridFunction":
        grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
        vals = func(*grids) if callable(func) else np.full(grids[0].shape, func, dtype=complex)
        return cls(tuple(rules), np.broadcast_to(vals, grids[0].shape).astype(complex))


@dataclass(frozen=True, eq=False)
class SeparableFunction:
    """``g = sum_r prod_j g_{r,j}(xi_j)`` with every factor sampled on ``rules``."""

    rules: tuple[Rule1D, ...]
    terms: tuple[tuple[np.ndarray, ...], ...]
    bandwidth: float = 0.0

    def __post_init__(self):
        rules = tuple(self.rules)
        terms = tuple(tuple(np.asarray(f, dtype=complex) for f in t) for t in self.terms)
        if not terms:
            raise ValueError("need at least one rank-1 term")
        for t in terms:
            if len(t) != len(rules):
                raise ValueError("each term needs one factor per coordinate")
            for f, r in zip(t, rules):
                if f.shape != (r.size,):
                    raise ValueError("factor does not match its node grid")
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "terms", terms)

    @property
    def rank(self) -> int:
        return len(self.terms)

    @classmethod
    def from_callables(
        cls, terms: Sequence[Sequence[Callable | complex]], rules: Sequence[Rule1D], bandwidth: float = 0.0
    ) -> "SeparableFunction":
        def sample(f, r):
            return f(r.nodes) if callable(f) else np.full(r.size, f, dtype=complex)

        return cls(tuple(rules), tuple(tuple(sample(f, r) for f, r in zip(t, rules)) for t in terms), bandwidth)

    def expand(self) -> GridFunction:
        total = 0
        for t in self.terms:
            outer = t[0]
            for f in t[1:]:
                outer = np.multiply.outer(outer, f)
            total = total + outer
        return GridFunction(self.rules, total, self.bandwidth)


@dataclass(frozen=True, eq=False)
class SampledField:
    """Values of ``E_Q g`` aligned with ``lattice`` plus how they were made."""

    values: np.ndarray
    lattice: Lattice
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.size != self.lattice.size:
            raise ValueError("field and lattice sizes differ")

    def scaled(self, c: complex) -> "SampledField":
        return SampledField(self.values * c, self.lattice, dict(self.meta))

    def to_csv_rows(self):
        pts = self.lattice.coords()
        vals = self.values.ravel()
        for p, v in zip(pts, vals):
            yield [*(f"{x:.17g}" for x in p), f"{v.real:.17g}", f"{v.imag:.17g}"]


# -- evaluation ---------------------------------------------------------------


def _phase_on_nodes(surface: SurfaceSpec, rules) -> list[np.ndarray]:
    return [surface.coordinate_poly(j)(r.nodes) for j, r in enumerate(rules)]


def _meta(surface, Q, rules, method, **extra) -> dict:
    return {
        "surface": surface.surface_id,
        "Q": _q_bounds(Q).tolist(),
        "panels": [r.panels for r in rules],
        "order": rules[0].order,
        "method": method,
        **extra,
    }


def extend_direct(
    g: GridFunction, Q: Box | Cap, X: Lattice, surface: SurfaceSpec, check: bool = True
) -> SampledField:
    """Tensor quadrature summed point by point (the reference evaluator)."""
    if check:
        _check_rules(g.rules, Q, surface, X, g.bandwidth)
    nodes = np.meshgrid(*[r.nodes for r in g.rules], indexing="ij")
    xi = np.stack([a.ravel() for a in nodes], axis=-1)
    w = np.ones(xi.shape[0])
    for wj in np.meshgrid(*[r.weights for r in g.rules], indexing="ij"):
        w = w * wj.ravel()
    phase = sum(surface.coordinate_poly(j)(xi[:, j]) for j in range(xi.shape[1]))
    c = w * g.values.ravel()
    pts = X.coords()
    out = np.empty(pts.shape[0], dtype=complex)
    rows = max(1, 4_000_000 // max(xi.shape[0], 1))
    for s in range(0, pts.shape[0], rows):
        p = pts[s : s + rows]
        arg = p[:, :-1] @ xi.T + np.outer(p[:, -1], phase)
        out[s : s + rows] = np.exp(1j * TWO_PI * arg) @ c
    return SampledField(out.reshape(X.shape), X, _meta(surface, Q, g.rules, "direct"))


def extend_separable(
    g: SeparableFunction,
    Q: Box | Cap,
    X: Lattice,
    surface: SurfaceSpec,
    backend: str = "direct",
    eps: float = 1e-12,
    check: bool = True,
) -> SampledField:
    """Per-coordinate 1-D tables combined by pointwise products."""
    if not X.is_tensor:
        raise ValueError("the separable path needs a tensor lattice")
    if check:
        _check_rules(g.rules, Q, surface, X, g.bandwidth)
    axes = X.axes()
    xn = axes[-1]
    d = len(g.rules)
    phis = _phase_on_nodes(surface, g.rules)
    tables = []
    for j, r in enumerate(g.rules):
        c = np.stack([t[j] for t in g.terms]) * r.weights[None, :]
        tables.append(factor_table(r.nodes, c, phis[j], axes[j], xn, backend, eps))
    out = np.zeros(X.shape, dtype=complex)
    for t in range(g.rank):
        term = None
        for j in range(d):
            idx = [None] * d + [slice(None)]
            idx[j] = slice(None)
            piece = tables[j][t][tuple(idx)]
            term = piece if term is None else term * piece
        out += term
    return SampledField(out, X, _meta(surface, Q, g.rules, "separable", backend=backend, rank=g.rank))


def extend_at_points(
    g: SeparableFunction,
    Q: Box | Cap,
    X: Lattice,
    surface: SurfaceSpec,
    backend: str = "auto",
    eps: float = 1e-12,
    check: bool = True,
) -> SampledField:
    """Separable evaluation at scattered points (type-3 transforms)."""
    if check:
        _check_rules(g.rules, Q, surface, X, g.bandwidth)
    pts = X.coords()
    phis = _phase_on_nodes(surface, g.rules)
    out = np.zeros(pts.shape[0], dtype=complex)
    prod = np.ones((g.rank, pts.shape[0]), dtype=complex)
    for j, r in enumerate(g.rules):
        c = np.stack([t[j] for t in g.terms]) * r.weights[None, :]
        prod *= factor_at_points(r.nodes, c, phis[j], pts[:, j], pts[:, -1], backend, eps)
    out = prod.sum(axis=0)
    return SampledField(out.reshape(X.shape), X, _meta(surface, Q, g.rules, "points", backend=backend))


# -- weight ---------------------------------------------------------------------


def weight_exponent(n: int) -> float:
    return 100.0 * n


def weight_eval(x, center, R: float, n: int, exponent: float | None = None) -> np.ndarray | float:
    """``(1 + |x - center| / R) ** (-100 n)``; ``x`` may hold many points."""
    if R <= 0:
        raise ValueError("R must be positive")
    a = weight_exponent(n) if exponent is None else exponent
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(center, dtype=float), axis=-1)
    w = (1.0 + r / R) ** (-a)
    return float(w) if np.ndim(w) == 0 else w


def weight_integral(R: float, n: int, exponent: float | None = None) -> float:
    """Closed form of the integral of the weight over R^n."""
    from scipy.special import beta

    a = weight_exponent(n) if exponent is None else exponent
    if a <= n:
        return math.inf
    sphere = 2 * np.pi ** (n / 2) / gamma(n / 2)
    return float(sphere * R**n * beta(n, a - n))


def weight_radius(n: int, exponent: float | None = None, tol: float = 1e-12) -> float:
    """Radius (in units of R) outside which the weight carries a fraction
    ``tol`` of its total mass.

    With ``u = |x|/R`` the normalised weight is a BetaPrime(n, a - n)
    density in ``u``, so the radius is its upper ``tol`` quantile.
    """
    from scipy.stats import betaprime

    a = weight_exponent(n) if exponent is None else exponent
    if a <= n:
        return math.inf
    return float(betaprime.isf(tol, n, a - n))


def weight_lattice(
    center: Sequence[float],
    R: float,
    n: int,
    step: float = 0.5,
    mode: str = "tensor",
    count: int | None = None,
    seed: int | None = None,
    exponent: float | None = None,
    tol: float = 1e-12,
) -> Lattice:
    """Lattice for weighted norms around ``center``.

    Tensor mode covers the ball of radius ``weight_radius * R``.  Monte Carlo
    mode draws points from the weight density truncated to that ball, so
    every point carries the measure ``(truncated weight mass) / count``.
    """
    center = np.asarray(center, dtype=float)
    rho = weight_radius(n, exponent, tol)
    if not math.isfinite(rho):
        raise ValueError("weight is not integrable; give an explicit lattice")
    ball = Box.ball(center, rho * R)
    if mode == "tensor":
        # round the radius up to a whole number of steps so the lattice covers the ball
        return nyquist_lattice(Box.ball(center, math.ceil(rho * R / step - 1e-9) * step), step)
    if mode != "montecarlo":
        raise ValueError(f"unknown lattice mode {mode!r}")
    if count is None or seed is None:
        raise ValueError("Monte Carlo mode needs count and seed")
    from scipy.stats import betaprime

    a = weight_exponent(n) if exponent is None else exponent
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    top = betaprime.cdf(rho, n, a - n)
    u = betaprime.ppf(rng.random(count) * top, n, a - n)
    pts = center + d * (u * R)[:, None]
    mass = weight_integral(R, n, a) * top
    return Lattice(
        center, np.zeros(n), (), pts, seed, mass / count, ball, "weight", (tuple(center), float(R), float(a))
    )
