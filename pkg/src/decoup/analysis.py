"""L^p norms, decoupling ratios, trivial decoupling and slope fits.

Test functions are constant on each cap (times an optional smooth
separable profile), so a cap field is ``c_theta * E_theta(profile)``.  The
engine evaluates every cap field once per lattice chunk and accumulates

* ``sum |E_theta|^p mu`` for each cap (right-hand sides), and
* ``sum |sum_theta c_{t,theta} E_theta|^p mu`` for each trial ``t``,

for several exponents ``p`` in one pass.  Sums are taken over fixed blocks
of 4096 values and combined with ``math.fsum``, so results do not depend
on how work is split between threads.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .dyadic import pow2
from .extension import (
    Lattice,
    SampledField,
    nyquist_lattice,
    plan_rules,
    weight_eval,
    weight_exponent,
    weight_lattice,
    weight_radius,
)
from .geometry import Box, Cap, Curved, Interval
from .partition import cap_family, caps_in, scale_level
from .quadrature import DEFAULT_ORDER, factor_at_points, factor_table
from .surface import SurfaceSpec

__all__ = [
    "NormEstimate",
    "lp_norm",
    "lp_norm_estimate",
    "weighted_lp_norm",
    "weighted_lp_norm_estimate",
    "CapFunction",
    "random_phase",
    "focusing",
    "single_cap",
    "zero_function",
    "LatticeSpec",
    "RatioResult",
    "decoupling_ratios",
    "decoupling_ratio",
    "trivial_decoupling_check",
    "SlopeFit",
    "fit_slope",
    "sweep_and_fit",
    "SweepConfig",
    "sharpness_experiment",
    "SharpnessResult",
    "predicted_sharpness_exponent",
    "critical_exponent",
    "block_sum",
    "max_rows",
    "sweep_rows",
    "upper_caps",
    "sharpness_rows",
    "ball_lattice",
    "ball_parts",
    "weighted_lattice",
]

BLOCK = 4096


def block_sum(values: np.ndarray) -> list[float]:
    """Partial sums over consecutive blocks of ``BLOCK`` values."""
    v = np.ravel(values)
    pad = (-v.size) % BLOCK
    if pad:
        v = np.concatenate([v, np.zeros(pad, dtype=v.dtype)])
    return np.add.reduce(v.reshape(-1, BLOCK), axis=1).tolist()


class _Acc:
    """Order-independent accumulator of a sum and a sum of squares."""

    def __init__(self):
        self.parts: list[float] = []
        self.sq_parts: list[float] = []

    def add(self, y: np.ndarray) -> None:
        self.parts.extend(block_sum(y))
        self.sq_parts.extend(block_sum(y * y))

    @property
    def total(self) -> float:
        return math.fsum(self.parts)

    def variance(self, n_points: int) -> float:
        s = self.total
        return max(0.0, math.fsum(self.sq_parts) - s * s / max(n_points, 1))


# -- plain norms on sampled fields ---------------------------------------------


@dataclass(frozen=True)
class NormEstimate:
    value: float
    stderr: float
    points: int


def _mask(lattice: Lattice, pts: np.ndarray, domain: Box | None) -> np.ndarray:
    if domain is None:
        return np.ones(pts.shape[0], dtype=bool)
    if domain.dim != pts.shape[1]:
        raise ValueError("domain and lattice differ in dimension")
    return domain.contains_points(pts)


def _covers(lattice: Lattice, domain: Box, rtol: float = 1e-9) -> bool:
    lo_d = domain.center - domain.half_widths
    hi_d = domain.center + domain.half_widths
    if lattice.is_tensor:
        axes = lattice.axes()
        lo = np.array([a[0] for a in axes]) - 0.5 * lattice.steps
        hi = np.array([a[-1] for a in axes]) + 0.5 * lattice.steps
    else:
        reg = lattice.region
        if reg is None:
            return False
        lo, hi = reg.center - reg.half_widths, reg.center + reg.half_widths
        if reg.kind == "ball" and domain.kind == "ball":
            gap = np.linalg.norm(domain.center - reg.center)
            return gap + domain.half_widths.max() <= reg.half_widths.min() * (1 + rtol)
    slack = rtol * np.maximum(1.0, np.abs(hi_d - lo_d))
    return bool(np.all(lo <= lo_d + slack) and np.all(hi >= hi_d - slack))


def _point_measures(lattice: Lattice, pts: np.ndarray, domain: Box | None, weight=None) -> np.ndarray:
    """Measure carried by each point: cell size (or MC share) times mask and weight."""
    mu = np.full(pts.shape[0], lattice.cell_measure)
    mu *= _mask(lattice, pts, domain)
    if weight is not None:
        center, R, a = weight
        if lattice.sampling == "weight":
            w0 = lattice.weight
            if not (np.allclose(w0[0], center) and w0[1] == R and w0[2] == a):
                raise ValueError("lattice was sampled from a different weight")
        else:
            mu *= weight_eval(pts, center, R, len(center), a)
    elif lattice.sampling == "weight":
        raise ValueError("weight-sampled lattices only support weighted norms")
    return mu


def _norm_from_field(field: SampledField, p: float, mu: np.ndarray) -> NormEstimate:
    if p < 1:
        raise ValueError("p must be >= 1")
    y = np.abs(field.values.ravel()) ** p * mu
    acc = _Acc()
    acc.add(y)
    s = acc.total
    val = s ** (1.0 / p) if s > 0 else 0.0
    se = 0.0
    if not field.lattice.is_tensor and s > 0:
        se = val / p * math.sqrt(acc.variance(y.size)) / s
    return NormEstimate(val, se, y.size)


def lp_norm_estimate(field: SampledField, p: float, domain: Box | None = None) -> NormEstimate:
    if p < 1:
        raise ValueError("p must be >= 1")
    lat = field.lattice
    if domain is not None and not _covers(lat, domain):
        raise ValueError("lattice does not cover the domain")
    pts = lat.coords()
    return _norm_from_field(field, p, _point_measures(lat, pts, domain))


def lp_norm(field: SampledField, p: float, domain: Box | None = None) -> float:
    """``(sum |f|^p * measure)^(1/p)`` over the lattice points inside ``domain``."""
    return lp_norm_estimate(field, p, domain).value


def _weight_tuple(center, R, exponent, n) -> tuple:
    a = weight_exponent(n) if exponent is None else float(exponent)
    return (tuple(float(c) for c in center), float(R), a)


def weighted_lp_norm_estimate(
    field: SampledField, p: float, center, R: float, exponent: float | None = None, tol: float = 1e-12
) -> NormEstimate:
    lat = field.lattice
    n = lat.dim
    wt = _weight_tuple(center, R, exponent, n)
    rho = weight_radius(n, wt[2], tol)
    need = Box.ball(wt[0], (rho if math.isfinite(rho) else 1.0) * R)
    if lat.sampling != "weight" and not _covers(lat, need):
        raise ValueError(
            f"lattice too small: the weight needs radius {need.half_widths[0]:.6g} around the center"
        )
    pts = lat.coords()
    return _norm_from_field(field, p, _point_measures(lat, pts, None, wt))


def weighted_lp_norm(field: SampledField, p: float, center, R: float, exponent: float | None = None) -> float:
    """``(sum |f|^p w dx)^(1/p)`` with ``w = (1 + |x - center|/R)^(-exponent)``."""
    return weighted_lp_norm_estimate(field, p, center, R, exponent).value


# -- test functions -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CapFunction:
    """``g = c[t, theta] * profile(xi)`` on cap ``theta`` for trial ``t``.

    ``profile`` is one callable per coordinate (``None`` means 1) with a
    declared frequency ``bandwidth``.
    """

    caps: tuple[Cap, ...]
    coefficients: np.ndarray
    family: str = "custom"
    seeds: tuple[int, ...] = ()
    profile: tuple[Callable | None, ...] | None = None
    bandwidth: float = 0.0

    def __post_init__(self):
        caps = tuple(self.caps)
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=complex))
        if c.shape[1] != len(caps):
            raise ValueError("one coefficient per cap and trial is required")
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "coefficients", c)
        if not self.seeds:
            object.__setattr__(self, "seeds", tuple(-1 for _ in range(c.shape[0])))

    @property
    def trials(self) -> int:
        return self.coefficients.shape[0]

    def scaled(self, c: complex) -> "CapFunction":
        return replace(self, coefficients=self.coefficients * c)


def random_phase(caps: Sequence[Cap], trials: int = 1, seed: int = 0) -> CapFunction:
    """``g = e(omega_theta)`` with ``omega_theta`` uniform; trial ``t`` uses seed ``seed + t``."""
    rows, seeds = [], []
    for t in range(trials):
        rng = np.random.default_rng(seed + t)
        rows.append(np.exp(2j * np.pi * rng.random(len(caps))))
        seeds.append(seed + t)
    return CapFunction(tuple(caps), np.array(rows), "random_phase", tuple(seeds))


def focusing(caps: Sequence[Cap]) -> CapFunction:
    """``g = 1`` on every cap: all pieces in phase at the origin."""
    return CapFunction(tuple(caps), np.ones((1, len(caps))), "focusing", (0,))


def single_cap(caps: Sequence[Cap], index: int = 0) -> CapFunction:
    c = np.zeros((1, len(caps)))
    c[0, index] = 1.0
    return CapFunction(tuple(caps), c, "single_cap", (index,))


def zero_function(caps: Sequence[Cap]) -> CapFunction:
    return CapFunction(tuple(caps), np.zeros((1, len(caps))), "zero", (0,))


# -- the streaming engine ---------------------------------------------------------


class _CapEvaluator:
    """Evaluates cap fields chunk by chunk on one lattice.

    Caps share 1-D factors: a factor is identified by its coordinate and
    interval, and is computed once per chunk.
    """

    def __init__(self, surface, caps, lattice, profile, bandwidth, backend, eps, refine=1):
        self.surface = surface
        self.caps = caps
        self.lattice = lattice
        self.backend = backend
        self.eps = eps
        d = surface.n - 1
        self.keys: list[dict] = [dict() for _ in range(d)]
        self.cap_index = []
        for cap in caps:
            if cap.dim != d:
                raise ValueError("cap dimension does not match the surface")
            idx = []
            for j, iv in enumerate(cap.coords):
                key = iv.bounds()
                idx.append(self.keys[j].setdefault(key, len(self.keys[j])))
            self.cap_index.append(tuple(idx))
        xmax = lattice.max_abs()
        self.factors = []  # per coordinate: list of (nodes, c, phi)
        for j in range(d):
            row = []
            for (lo, hi), _ in sorted(self.keys[j].items(), key=lambda kv: kv[1]):
                q = Box(np.array([0.5 * (lo + hi)]), np.array([0.5 * (hi - lo)]))
                sub = SurfaceSpec(2, surface.m, 1 if j < surface.s else 0,
                                  (surface.phases[j],) if j < surface.s else ())
                lat1 = _Proj(np.array([xmax[j], xmax[-1]]))
                rule = plan_rules(q, sub, lat1, bandwidth, DEFAULT_ORDER, refine)[0]
                prof = profile[j] if profile is not None else None
                gv = prof(rule.nodes) if prof is not None else 1.0
                c = rule.weights * gv
                row.append((rule.nodes, np.asarray(c, dtype=complex), surface.coordinate_poly(j)(rule.nodes)))
            self.factors.append(row)

    def chunks(self, target: int = 1 << 20):
        """Yield ``(points, shape, cap_field)``; ``cap_field(i)`` returns the
        field of cap ``i`` on the chunk, already shaped like ``shape``."""
        lat = self.lattice
        d = self.surface.n - 1
        if lat.is_tensor:
            axes = lat.axes()
            inner = math.prod(len(a) for a in axes[:-1])
            b = max(1, target // max(inner, 1))
            for s in range(0, len(axes[-1]), b):
                xn = axes[-1][s : s + b]
                tabs = [
                    [factor_table(nd, c, ph, axes[j], xn, self.backend, self.eps) for nd, c, ph in self.factors[j]]
                    for j in range(d)
                ]
                grids = np.meshgrid(*axes[:-1], xn, indexing="ij")
                pts = np.stack([g.ravel() for g in grids], axis=-1)
                shape = tuple(len(a) for a in axes[:-1]) + (len(xn),)

                def field(i, tabs=tabs, shape=shape):
                    out = None
                    for j, u in enumerate(self.cap_index[i]):
                        sl = [None] * d + [slice(None)]
                        sl[j] = slice(None)
                        piece = tabs[j][u][tuple(sl)]
                        out = piece if out is None else out * piece
                    return np.broadcast_to(out, shape)

                yield pts, shape, field
        else:
            P = lat.points
            b = max(1, min(target, P.shape[0]))
            for s in range(0, P.shape[0], b):
                pts = P[s : s + b]
                fac = [
                    [factor_at_points(nd, c, ph, pts[:, j], pts[:, -1], self.backend, self.eps) for nd, c, ph in self.factors[j]]
                    for j in range(d)
                ]

                def field(i, fac=fac):
                    out = None
                    for j, u in enumerate(self.cap_index[i]):
                        out = fac[j][u] if out is None else out * fac[j][u]
                    return out

                yield pts, (pts.shape[0],), field


class _Proj:
    """Stand-in lattice exposing only ``max_abs`` for 1-D planning."""

    def __init__(self, xmax):
        self._x = xmax

    def max_abs(self):
        return self._x


@dataclass
class _Sums:
    cap: np.ndarray  # (caps, ps) sums of |E_theta|^p mu
    cap_var: np.ndarray
    trial: np.ndarray  # (trials, ps)
    trial_var: np.ndarray
    points: int


def _stream(
    evaluator: _CapEvaluator,
    ps: Sequence[float],
    coeffs: np.ndarray | None,
    per_cap: bool,
    domain: Box | None,
    weight,
    exclude: Box | None = None,
) -> _Sums:
    n_caps = len(evaluator.caps)
    T = 0 if coeffs is None else coeffs.shape[0]
    cap_acc = [[_Acc() for _ in ps] for _ in range(n_caps)] if per_cap else []
    trial_acc = [[_Acc() for _ in ps] for _ in range(T)]
    active = [i for i in range(n_caps) if per_cap or (coeffs is not None and np.any(coeffs[:, i] != 0))]
    npts = 0
    for pts, shape, field in evaluator.chunks():
        mu = _point_measures(evaluator.lattice, pts, domain, weight)
        if exclude is not None:
            mu *= ~exclude.contains_points(pts)
        mu = mu.reshape(shape)
        npts += mu.size
        S = np.zeros((T,) + shape, dtype=complex) if T else None
        for i in active:
            E = field(i)
            if per_cap:
                a = np.abs(E)
                for k, p in enumerate(ps):
                    cap_acc[i][k].add(a**p * mu)
            if T:
                for t in range(T):
                    if coeffs[t, i] != 0:
                        S[t] += coeffs[t, i] * E
        for t in range(T):
            a = np.abs(S[t])
            for k, p in enumerate(ps):
                trial_acc[t][k].add(a**p * mu)

    def pack(accs, rows):
        tot = np.array([[a.total for a in r] for r in accs]).reshape(rows, len(ps))
        var = np.array([[a.variance(npts) for a in r] for r in accs]).reshape(rows, len(ps))
        return tot, var

    cap_tot, cap_var = pack(cap_acc, n_caps if per_cap else 0)
    tr_tot, tr_var = pack(trial_acc, T)
    if evaluator.lattice.is_tensor:
        cap_var, tr_var = np.zeros_like(cap_var), np.zeros_like(tr_var)
    return _Sums(cap_tot, cap_var, tr_tot, tr_var, npts)


@dataclass(frozen=True)
class _Part:
    """One stratum of a ball: a lattice, its domain, and a region it skips."""

    lattice: Lattice
    domain: Box
    exclude: Box | None = None


def _stream_parts(parts, surface, g, ps, coeffs, per_cap, spec, weight=None) -> _Sums:
    """Sum the strata; variances come from the Monte Carlo strata only."""
    total = None
    for part in parts:
        ev = _CapEvaluator(surface, g.caps, part.lattice, g.profile, g.bandwidth, spec.backend, spec.eps)
        got = _stream(ev, ps, coeffs, per_cap, part.domain, weight, part.exclude)
        if total is None:
            total = got
        else:
            total = _Sums(total.cap + got.cap, total.cap_var + got.cap_var, total.trial + got.trial,
                          total.trial_var + got.trial_var, total.points + got.points)
    return total


def _parts_mode(parts) -> str:
    if len(parts) > 1:
        return "stratified"
    return parts[0].lattice.mode


def _parts_mc(parts) -> bool:
    return any(not p.lattice.is_tensor for p in parts)


# -- lattices for experiments ----------------------------------------------------


@dataclass(frozen=True)
class LatticeSpec:
    """How to sample ``B_R`` and the weight: tensor, Monte Carlo, or automatic.

    ``auto`` uses a tensor lattice while it has at most ``max_tensor_points``
    points and Monte Carlo otherwise.  Monte Carlo balls keep an exact
    tensor core of at most ``core_points`` points around the center (0
    turns the core off); random points inside the core are dropped.
    """

    mode: str = "auto"
    step: float = 0.5
    count: int = 1_000_000
    seed: int = 0
    max_tensor_points: int = 1 << 22
    core_points: int = 1 << 20
    weight_step_factor: float = 400.0
    eps: float = 1e-9
    backend: str = "auto"
    tol: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("auto", "tensor", "montecarlo"):
            raise ValueError(f"unknown lattice mode {self.mode!r}")


def _tensor_points(radius: float, step: float, n: int) -> int:
    return (2 * int(radius / step + 1e-9) + 1) ** n


def _pick_mode(spec: LatticeSpec, radius: float, step: float, n: int) -> str:
    if spec.mode != "auto":
        return spec.mode
    return "tensor" if _tensor_points(radius, step, n) <= spec.max_tensor_points else "montecarlo"


def ball_lattice(center, radius: float, n: int, spec: LatticeSpec, seed_offset: int = 0) -> Lattice:
    ball = Box.ball(center, radius)
    step = min(spec.step, 0.5)
    mode = _pick_mode(spec, radius, step, n)
    if mode == "tensor":
        return nyquist_lattice(ball, step)
    return nyquist_lattice(ball, step, "montecarlo", spec.count, spec.seed + seed_offset)


def _core_radius(spec: LatticeSpec, step: float, n: int, radius: float) -> float:
    if spec.core_points <= 0:
        return 0.0
    k = int((spec.core_points ** (1.0 / n) - 1) // 2)
    while (2 * (k + 1) + 1) ** n <= spec.core_points:
        k += 1
    while k > 0 and (2 * k + 1) ** n > spec.core_points:
        k -= 1
    return min(k * step, 0.5 * radius)


def ball_parts(center, radius: float, n: int, spec: LatticeSpec, seed_offset: int = 0) -> list[_Part]:
    """Strata for a norm over ``B(center, radius)``: one tensor lattice, or a
    tensor core plus Monte Carlo points outside it."""
    ball = Box.ball(center, radius)
    step = min(spec.step, 0.5)
    if _pick_mode(spec, radius, step, n) == "tensor":
        return [_Part(nyquist_lattice(ball, step), ball)]
    mc = nyquist_lattice(ball, step, "montecarlo", spec.count, spec.seed + seed_offset)
    r = _core_radius(spec, step, n, radius)
    if r <= 0:
        return [_Part(mc, ball)]
    core = Box.ball(center, r)
    return [_Part(nyquist_lattice(core, step), core), _Part(mc, ball, core)]


def weighted_lattice(center, R: float, n: int, spec: LatticeSpec, exponent=None, seed_offset: int = 1) -> Lattice:
    a = weight_exponent(n) if exponent is None else exponent
    step = min(spec.step, 0.5, R / (spec.weight_step_factor * n)) if a > 0 else min(spec.step, 0.5)
    rho = weight_radius(n, a, spec.tol)
    if not math.isfinite(rho):
        # non-decaying weight: sample B_R itself
        return ball_lattice(center, R, n, spec, seed_offset)
    mode = _pick_mode(spec, rho * R, step, n)
    if mode == "tensor":
        return weight_lattice(center, R, n, step, exponent=a, tol=spec.tol)
    return weight_lattice(center, R, n, step, "montecarlo", spec.count, spec.seed + seed_offset, a, spec.tol)


# -- ratios ---------------------------------------------------------------------


@dataclass
class RatioResult:
    R: int
    K: int | None
    p: float
    m: int
    n: int
    s: int
    lhs: float
    rhs: float
    ratio: float
    family: str
    trial_seed: int
    lattice_mode: str
    points: int
    runtime_ms: float
    lhs_stderr: float = 0.0
    rhs_stderr: float = 0.0
    row_kind: str = "trial"
    bound: float | None = None
    lattice_seed: int | None = None  # base seed of Monte Carlo lattices, None for tensor

    @property
    def ratio_stderr(self) -> float:
        if not (self.lhs > 0 and self.rhs > 0):
            return float("nan")
        return self.ratio * math.hypot(self.lhs_stderr / self.lhs, self.rhs_stderr / self.rhs)

    @property
    def defined(self) -> bool:
        return math.isfinite(self.ratio)


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0:
        return float("nan")
    return lhs / rhs


def _mode_label(*lats: Lattice) -> str:
    modes = {lat.mode for lat in lats}
    return modes.pop() if len(modes) == 1 else "mixed"


def _norm_and_se(total: float, var: float, p: float, mc: bool) -> tuple[float, float]:
    if total <= 0:
        return 0.0, 0.0
    val = total ** (1.0 / p)
    se = val / p * math.sqrt(var) / total if mc else 0.0
    return val, se


def decoupling_ratios(
    g: CapFunction,
    surface: SurfaceSpec,
    R: int,
    ps: Sequence[float],
    lattice: LatticeSpec = LatticeSpec(),
    center=None,
    weight_exponent_override: float | None = None,
    lhs_radius: float | None = None,
    K: int | None = None,
) -> list[RatioResult]:
    """Empirical decoupling ratios, one row per (trial, p).

    lhs = ||sum_theta E_theta g||_{L^p(B)} with ``B`` the ball of radius
    ``lhs_radius`` (default R); rhs = (sum_theta ||E_theta g||^2_{L^p(w_{B_R})})^{1/2}.
    """
    if not g.caps:
        raise ValueError("empty cap family")
    if any(p < 1 for p in ps):
        raise ValueError("p must be >= 1")
    t0 = time.perf_counter()
    n = surface.n
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    a = weight_exponent(n) if weight_exponent_override is None else weight_exponent_override
    radius = R if lhs_radius is None else lhs_radius
    step = min(lattice.step, 0.5, radius / 16)
    lhs_parts = ball_parts(center, radius, n, replace(lattice, step=step), 0)
    rhs_lat = weighted_lattice(center, R, n, lattice, a, 1)
    wt = _weight_tuple(center, R, a, n)
    lhs_sums = _stream_parts(lhs_parts, surface, g, ps, g.coefficients, False, lattice)
    ev_r = _CapEvaluator(surface, g.caps, rhs_lat, g.profile, g.bandwidth, lattice.backend, lattice.eps)
    # a non-decaying weight is read as the indicator of B_R
    rhs_dom = None if math.isfinite(weight_radius(n, a, lattice.tol)) else Box.ball(center, R)
    rhs_sums = _stream(ev_r, ps, None, True, rhs_dom, wt)
    elapsed = (time.perf_counter() - t0) * 1000.0
    rows = []
    mc_l, mc_r = _parts_mc(lhs_parts), not rhs_lat.is_tensor
    lhs_mode, rhs_mode = _parts_mode(lhs_parts), rhs_lat.mode
    mode = lhs_mode if lhs_mode == rhs_mode else f"{lhs_mode}+{rhs_mode}"
    n_points = sum(p.lattice.size for p in lhs_parts) + rhs_lat.size
    for t in range(g.trials):
        mod = np.abs(g.coefficients[t])
        for k, p in enumerate(ps):
            lhs, lhs_se = _norm_and_se(lhs_sums.trial[t, k], lhs_sums.trial_var[t, k], p, mc_l)
            sq, sq_var = 0.0, 0.0
            for i in range(len(g.caps)):
                if mod[i] == 0:
                    continue
                nv, nse = _norm_and_se(rhs_sums.cap[i, k], rhs_sums.cap_var[i, k], p, mc_r)
                sq += (mod[i] * nv) ** 2
                sq_var += (2 * mod[i] ** 2 * nv * nse) ** 2
            rhs = math.sqrt(sq)
            rhs_se = math.sqrt(sq_var) / (2 * rhs) if rhs > 0 else 0.0
            rows.append(
                RatioResult(
                    R, K, p, surface.m, n, surface.s, lhs, rhs, _ratio(lhs, rhs), g.family,
                    g.seeds[t], mode, n_points,
                    elapsed, lhs_se, rhs_se,
                    lattice_seed=lattice.seed if (mc_l or mc_r) else None,
                )
            )
    return rows


def decoupling_ratio(
    g: CapFunction, surface: SurfaceSpec, R: int, p: float, lattice: LatticeSpec = LatticeSpec(), **kw
) -> RatioResult:
    """Single-trial, single-p convenience wrapper."""
    if g.trials != 1:
        raise ValueError("use decoupling_ratios for several trials")
    return decoupling_ratios(g, surface, R, [p], lattice, **kw)[0]


def trivial_decoupling_check(
    g: CapFunction,
    surface: SurfaceSpec,
    K: int,
    ps: Sequence[float],
    c: float = 10.0,
    lattice: LatticeSpec = LatticeSpec(),
) -> list[RatioResult]:
    """Unweighted ratio on ``B_K`` over the coarse caps, with the bound
    ``c * K^((n-1)/4)`` stored on every row."""
    n = surface.n
    if not g.caps:
        raise ValueError("empty cap family")
    t0 = time.perf_counter()
    center = np.zeros(n)
    strata = ball_parts(center, K, n, lattice, 0)
    sums = _stream_parts(strata, surface, g, ps, g.coefficients, True, lattice)
    elapsed = (time.perf_counter() - t0) * 1000.0
    mc = _parts_mc(strata)
    bound = c * K ** ((n - 1) / 4)
    rows = []
    for t in range(g.trials):
        mod = np.abs(g.coefficients[t])
        for k, p in enumerate(ps):
            lhs, lse = _norm_and_se(sums.trial[t, k], sums.trial_var[t, k], p, mc)
            parts = [_norm_and_se(sums.cap[i, k], sums.cap_var[i, k], p, mc) for i in range(len(g.caps))]
            sq = sum((mod[i] * v) ** 2 for i, (v, _) in enumerate(parts))
            rhs = math.sqrt(sq)
            sq_var = sum((2 * mod[i] ** 2 * v * e) ** 2 for i, (v, e) in enumerate(parts))
            rse = math.sqrt(sq_var) / (2 * rhs) if rhs > 0 else 0.0
            rows.append(
                RatioResult(
                    K, K, p, surface.m, n, surface.s, lhs, rhs, _ratio(lhs, rhs), g.family,
                    g.seeds[t], _parts_mode(strata), sum(p.lattice.size for p in strata), elapsed, lse, rse,
                    "trial", bound,
                    lattice.seed if mc else None,
                )
            )
    return rows


# -- fits -----------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    log2_R: tuple[float, ...]
    log2_ratio: tuple[float, ...]
    slope: float
    intercept: float
    residual: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.log2_R, self.log2_ratio))


def fit_slope(Rs: Sequence[float], values: Sequence[float]) -> SlopeFit:
    """Least-squares line through ``(log2 R, log2 value)``; residual is the RMS misfit."""
    if len(Rs) < 3:
        raise ValueError("a slope fit needs at least three scales")
    x = np.log2(np.asarray(Rs, dtype=float))
    y = np.log2(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot fit non-positive or undefined ratios")
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ [slope, icpt] - y) ** 2)))
    return SlopeFit(tuple(x.tolist()), tuple(y.tolist()), float(slope), float(icpt), res)


@dataclass(frozen=True)
class SweepConfig:
    n: int = 2
    m: int = 4
    s: int = 0
    ps: tuple[float, ...] = (2.0, 4.0, 6.0)
    Rs: tuple[int, ...] = (2**4, 2**8, 2**12, 2**16)
    trials: int = 8
    seed: int = 0
    family: str = "random_phase"
    lattice: LatticeSpec = LatticeSpec()

    def validate(self) -> None:
        if len(self.Rs) < 3:
            raise ValueError("a sweep needs at least three scales")
        for R in self.Rs:
            scale_level(R, self.m)


def _family_for(name: str, caps, trials: int, seed: int) -> CapFunction:
    if name == "random_phase":
        return random_phase(caps, trials, seed)
    if name == "focusing":
        return focusing(caps)
    if name == "single_cap":
        return single_cap(caps, len(caps) // 2)
    raise ValueError(f"unknown test-function family {name!r}")


def sweep_rows(config: SweepConfig, R: int) -> list[RatioResult]:
    """All trial rows of ``config`` at one scale (an independent job)."""
    surf = SurfaceSpec.standard(config.n, config.m, config.s)
    caps = list(cap_family(R, config.m, config.s, config.n, surf.surface_id))
    g = _family_for(config.family, caps, config.trials, config.seed)
    return decoupling_ratios(g, surf, R, config.ps, config.lattice)


def max_rows(rows: Iterable[RatioResult]) -> list[RatioResult]:
    """Max over trials per (R, p), labelled as empirical lower estimates."""
    best: dict[tuple, RatioResult] = {}
    for r in rows:
        if not r.defined:
            continue
        key = (r.R, r.p)
        if key not in best or r.ratio > best[key].ratio:
            best[key] = r
    return [replace(best[k], row_kind="empirical_lower_estimate") for k in sorted(best)]


def sweep_and_fit(config: SweepConfig, rows: Sequence[RatioResult] | None = None) -> tuple[dict, list[RatioResult]]:
    """Fit ``log2(max ratio)`` against ``log2 R`` for every p.

    Returns ``({p: SlopeFit}, rows)``; pass precomputed ``rows`` to skip the
    evaluation.
    """
    config.validate()
    if rows is None:
        rows = [r for R in config.Rs for r in sweep_rows(config, R)]
    best = max_rows(rows)
    fits = {}
    for p in config.ps:
        pts = sorted((r.R, r.ratio) for r in best if r.p == p)
        fits[p] = fit_slope([a for a, _ in pts], [b for _, b in pts])
    return fits, list(rows)


# -- sharpness ----------------------------------------------------------------------


def critical_exponent(n: int) -> float:
    return 2.0 * (n + 1) / (n - 1)


def predicted_sharpness_exponent(n: int, p: float) -> float:
    """``(n-1)/4 - (n+1)/(2p)``: growth rate of the focusing ratio."""
    if n < 2 or p < 2:
        raise ValueError("need n >= 2 and p >= 2")
    return (n - 1) / 4 - (n + 1) / (2 * p)


@dataclass
class SharpnessResult:
    fits: dict
    rows: list[RatioResult]
    predicted: dict


def upper_caps(R: int, m: int, n: int) -> list[Cap]:
    """Caps of F_n(R, m, 0, n-1) inside [1/2, 1]^{n-1}."""
    half = Interval(pow2(-1), pow2(0), Curved())
    parent = Cap((half,) * (n - 1), R)
    return list(caps_in(parent, cap_family(R, m, 0, n)))


def sharpness_rows(n: int, m: int, ps: Sequence[float], R: int, lattice: LatticeSpec = LatticeSpec(),
                   lhs_radius: float = 0.01, lhs_step: float | None = None) -> list[RatioResult]:
    surf = SurfaceSpec.standard(n, m, 0)
    caps = upper_caps(R, m, n)
    g = focusing(caps)
    step = lhs_step if lhs_step is not None else lhs_radius / 16
    spec = replace(lattice, step=min(lattice.step, step))
    # lhs lattice uses the fine step; the weighted lattice keeps the default
    rows = _sharp_ratio(g, surf, R, ps, spec, lattice, lhs_radius)
    return rows


def _sharp_ratio(g, surf, R, ps, lhs_spec, rhs_spec, lhs_radius):
    t0 = time.perf_counter()
    n = surf.n
    center = np.zeros(n)
    lhs_lat = ball_lattice(center, lhs_radius, n, replace(lhs_spec, mode="tensor"), 0)
    rhs_lat = weighted_lattice(center, R, n, rhs_spec, None, 1)
    wt = _weight_tuple(center, R, None, n)
    ev_l = _CapEvaluator(surf, g.caps, lhs_lat, None, 0.0, rhs_spec.backend, rhs_spec.eps)
    ls = _stream(ev_l, ps, g.coefficients, False, Box.ball(center, lhs_radius), None)
    ev_r = _CapEvaluator(surf, g.caps, rhs_lat, None, 0.0, rhs_spec.backend, rhs_spec.eps)
    rs = _stream(ev_r, ps, None, True, None, wt)
    elapsed = (time.perf_counter() - t0) * 1000.0
    mc = not rhs_lat.is_tensor
    rows = []
    for k, p in enumerate(ps):
        lhs, _ = _norm_and_se(ls.trial[0, k], 0.0, p, False)
        parts = [_norm_and_se(rs.cap[i, k], rs.cap_var[i, k], p, mc) for i in range(len(g.caps))]
        rhs = math.sqrt(sum(v * v for v, _ in parts))
        rse = math.sqrt(sum((2 * v * e) ** 2 for v, e in parts)) / (2 * rhs) if rhs > 0 else 0.0
        rows.append(
            RatioResult(R, None, p, surf.m, n, 0, lhs, rhs, _ratio(lhs, rhs), "focusing", 0,
                        _mode_label(lhs_lat, rhs_lat), lhs_lat.size + rhs_lat.size, elapsed, 0.0, rse,
                        "sharpness", None, rhs_spec.seed if mc else None)
        )
    return rows


def sharpness_experiment(
    n: int, m: int, ps: Sequence[float], Rs: Sequence[int], lattice: LatticeSpec = LatticeSpec(),
    rows: Sequence[RatioResult] | None = None,
) -> SharpnessResult:
    """Focusing example: ``g = 1`` on every cap in [1/2,1]^{n-1}, lhs on
    ``B_{1/100}``, rhs the weighted cap square sum; slopes against ``log2 R``."""
    for R in Rs:
        scale_level(R, m)
    if rows is None:
        rows = [r for R in Rs for r in sharpness_rows(n, m, ps, R, lattice)]
    fits = {}
    for p in ps:
        pts = sorted((r.R, r.ratio) for r in rows if r.p == p)
        fits[p] = fit_slope([a for a, _ in pts], [b for _, b in pts])
    return SharpnessResult(fits, list(rows), {p: predicted_sharpness_exponent(n, p) for p in ps})
