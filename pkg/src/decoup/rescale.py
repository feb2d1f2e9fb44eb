"""Parabolic rescaling attached to a coarse cap tau.

For a coordinate with offset ``a`` and scale ``h`` the substitution
``xi = a + h*eta`` gives

    phi(a + h*eta) = phi(a) + phi'(a)*h*eta + psi(eta) / K,
    psi(eta) = K * [phi(a + h*eta) - phi(a) - phi'(a)*h*eta],

so ``E_tau g(x) = |det| * e(affine) * E_{[0,1]^{n-1}} g~(x~)`` with
``x~_j = h_j*(x_j + x_n*phi_j'(a_j))`` and ``x~_n = x_n / K``.

Coordinates of the rescaled surface are reordered so that cube-type
coordinates come first: old cubes, then the curved coordinates of tau
(which become cubes at scale R/K), then the flat ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .dyadic import Dyadic, pow2
from .geometry import Box, Cap, Cube, Curved, Flat, Interval
from .partition import ScaleError, cap_family, caps_in, coarse_caps, scale_level
from .surface import PhaseSpec, SurfaceSpec, check_m_nondegenerate, poly_range

__all__ = [
    "AffineChange",
    "affine_for_cap",
    "rescaled_phase",
    "rescale_surface",
    "rescale_cap",
    "forward_cap",
    "image_box",
    "MembershipReport",
    "verify_membership_claim",
    "phase_identity_error",
    "nondegeneracy_of",
]


@dataclass(frozen=True)
class AffineChange:
    """``xi_j = offsets[j] + scales[j] * eta_j`` with ``x_n`` normalised by K.

    ``kinds[j]`` is 'cube', 'curved' or 'flat' (the role of tau's
    coordinate ``j``); ``order`` lists old coordinate indices in the order
    they take in the rescaled surface.
    """

    offsets: tuple[Dyadic, ...]
    scales: tuple[Dyadic, ...]
    kinds: tuple[str, ...]
    K: int
    m: int
    tau: Cap
    surface: SurfaceSpec
    order: tuple[int, ...] = field(default=())

    @property
    def dim(self) -> int:
        return len(self.offsets)

    @property
    def xn_normalization(self) -> int:
        return self.K

    @property
    def s_new(self) -> int:
        return sum(k in ("cube", "curved") for k in self.kinds)

    def offsets_f(self) -> np.ndarray:
        return np.array([o.to_float() for o in self.offsets])

    def scales_f(self) -> np.ndarray:
        return np.array([h.to_float() for h in self.scales])

    def forward(self, eta: np.ndarray) -> np.ndarray:
        """Map [0,1]^{n-1} onto tau (float)."""
        return self.offsets_f() + self.scales_f() * np.asarray(eta, dtype=float)

    def slopes(self) -> np.ndarray:
        """``phi_j'(a_j)`` per coordinate."""
        return np.array(
            [self.surface.coordinate_poly(j).deriv()(self.offsets[j].to_float()) for j in range(self.dim)]
        )

    def affine(self, eta: np.ndarray) -> np.ndarray:
        """First-order Taylor part ``sum_j phi_j(a_j) + phi_j'(a_j) h_j eta_j``."""
        eta = np.asarray(eta, dtype=float)
        a, h = self.offsets_f(), self.scales_f()
        total = np.zeros(eta.shape[:-1])
        for j in range(self.dim):
            p = self.surface.coordinate_poly(j)
            total = total + p(a[j]) + p.deriv()(a[j]) * h[j] * eta[..., j]
        return total

    def map_x(self, x: np.ndarray) -> np.ndarray:
        """Dual map ``x -> x~`` (coordinates in the original order)."""
        x = np.asarray(x, dtype=float)
        h, sl = self.scales_f(), self.slopes()
        out = np.empty_like(x)
        out[..., :-1] = h * (x[..., :-1] + x[..., -1:] * sl)
        out[..., -1] = x[..., -1] / self.K
        return out


def _kind(iv: Interval) -> str:
    if isinstance(iv.role, Cube):
        return "cube"
    if isinstance(iv.role, Flat):
        return "flat"
    return "curved"


def affine_for_cap(tau: Cap, surface: SurfaceSpec) -> AffineChange:
    """Change of variables sending [0,1]^{n-1} onto ``tau``."""
    m, s = surface.m, surface.s
    K = tau.scale
    if tau.dim != surface.n - 1:
        raise ValueError("tau and surface differ in dimension")
    level = scale_level(K, m, min_level=0)
    cube_side = pow2(-m * level // 2)
    flat_side = pow2(-level)
    offsets, scales, kinds = [], [], []
    for j, iv in enumerate(tau.coords):
        kind = _kind(iv)
        if kind == "cube":
            if j >= s:
                raise ValueError(f"coordinate {j} is monomial but tau marks it as a cube")
            h = cube_side
        elif kind == "flat":
            if j < s:
                raise ValueError(f"coordinate {j} carries a phase, not a flat piece")
            if iv.lo != Dyadic(0):
                raise ValueError("flat pieces start at 0")
            h = flat_side
        else:
            if j < s:
                raise ValueError(f"coordinate {j} carries a phase, not a curved piece")
            lam = iv.role.lam
            if lam is None:
                raise ValueError("curved tau coordinates need a lam index")
            h = pow2(-lam.log2() * (m - 2) // 2 - m * level // 2)
        if iv.length != h:
            raise ValueError(f"coordinate {j} of tau has length {iv.length}, expected {h}")
        offsets.append(iv.lo)
        scales.append(h)
        kinds.append(kind)
    order = tuple(
        [j for j, k in enumerate(kinds) if k == "cube"]
        + [j for j, k in enumerate(kinds) if k == "curved"]
        + [j for j, k in enumerate(kinds) if k == "flat"]
    )
    return AffineChange(tuple(offsets), tuple(scales), tuple(kinds), K, m, tau, surface, order)


def _derivative_cap(p: Polynomial, m: int) -> float:
    """Largest value of any derivative of order 0..m on [0, 1]."""
    return max(poly_range(p.deriv(k) if k else p)[1] for k in range(m + 1))


def rescaled_phase(p: Polynomial, a: float, h: float, K: int) -> Polynomial:
    """``K * [p(a + h*eta) - p(a) - p'(a)*h*eta]`` as a polynomial in eta."""
    q = p(Polynomial([a, h]))
    coef = np.array(q.coef, dtype=float) * K
    coef[:2] = 0.0
    return Polynomial(coef)


def rescale_surface(change: AffineChange, surface: SurfaceSpec | None = None) -> SurfaceSpec:
    """The surface seen from tau after rescaling.

    Cube and curved coordinates get the phase ``psi``; flat coordinates keep
    ``eta**m`` exactly.  ``C`` of each new phase is the largest derivative
    value it attains on [0,1].
    """
    surface = surface or change.surface
    m = surface.m
    a, h = change.offsets_f(), change.scales_f()
    phases = []
    for j in change.order:
        if change.kinds[j] == "flat":
            continue
        if change.kinds[j] == "cube" and change.K == 1 and j < surface.s:
            phases.append(surface.phases[j])
            continue
        psi = rescaled_phase(surface.coordinate_poly(j), a[j], h[j], change.K)
        coefs = tuple(psi.coef[: m + 1]) + (0.0,) * max(0, m + 1 - len(psi.coef))
        phases.append(PhaseSpec(coefs, _derivative_cap(psi, m)))
    return SurfaceSpec(surface.n, m, len(phases), tuple(phases))


def _new_role(kind: str, iv: Interval):
    if kind in ("cube", "curved"):
        return Cube()
    return iv.role


def rescale_cap(theta: Cap, change: AffineChange, R: int | None = None) -> Cap:
    """Exact image of ``theta`` under the inverse map, coordinates reordered.

    Roles follow the rescaled family: cube and curved tau coordinates turn
    into cube sides at scale R/K, flat ones keep their (k, mu) tag.
    """
    if not change.tau.contains(theta):
        raise ValueError(f"cap {theta} is not inside tau {change.tau}")
    R = theta.scale if R is None else R
    coords = []
    for j in change.order:
        iv = theta.coords[j]
        a, h = change.offsets[j], change.scales[j]
        coords.append(Interval((iv.lo - a) / h, (iv.hi - a) / h, _new_role(change.kinds[j], iv)))
    return Cap(tuple(coords), R // change.K if R else 1, theta.surface_id)


def forward_cap(eta_cap: Cap, change: AffineChange) -> Cap:
    """Inverse of :func:`rescale_cap` on endpoints (roles are not restored)."""
    coords = [None] * change.dim
    for pos, j in enumerate(change.order):
        iv = eta_cap.coords[pos]
        a, h = change.offsets[j], change.scales[j]
        coords[j] = Interval(a + iv.lo * h, a + iv.hi * h, iv.role)
    return Cap(tuple(coords), eta_cap.scale * change.K, eta_cap.surface_id)


def image_box(ball: Box, change: AffineChange) -> Box:
    """Box containing the rescaled image of ``ball`` (original coordinate order).

    Half-widths are ``r*h_j`` in the frequency-dual coordinates and ``r/K``
    in the last one; the center follows the shear.
    """
    if ball.dim != change.dim + 1:
        raise ValueError("ball and change differ in dimension")
    center = change.map_x(ball.center)
    hw = np.empty(ball.dim)
    hw[:-1] = ball.half_widths[:-1] * change.scales_f()
    hw[-1] = ball.half_widths[-1] / change.K
    return Box(center, hw)


def phase_identity_error(change: AffineChange, eta: np.ndarray) -> float:
    """Max relative error of ``phi(a + h*eta) = affine(eta) + psi(eta)/K``."""
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    surf = change.surface
    new = rescale_surface(change)
    xi = change.forward(eta)
    lhs = sum(surf.coordinate_poly(j)(xi[:, j]) for j in range(change.dim))
    eta_new = eta[:, list(change.order)]
    psi = sum(new.coordinate_poly(p)(eta_new[:, p]) for p in range(change.dim))
    rhs = change.affine(eta) + psi / change.K
    return float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))))


@dataclass
class MembershipReport:
    ok: bool
    n_tau: int
    n_checked: int
    s_new_values: tuple[int, ...]
    exceptions: list[tuple[Cap, Cap, str]]
    lam_tilde_ok: bool
    per_tau: list[tuple[Cap, int, int]]  # (tau, checked, failures)

    def summary(self) -> str:
        state = "ok" if self.ok else "FAILED"
        return (
            f"membership {state}: {self.n_tau} tau, {self.n_checked} caps checked, "
            f"{len(self.exceptions)} exceptions"
        )


def verify_membership_claim(
    surface: SurfaceSpec,
    K: int,
    R: int,
    taus=None,
    fine_family=None,
    include_flat: bool = True,
    perturb=None,
) -> MembershipReport:
    """Check that rescaled fine caps land exactly in F_n(R/K, m, s_new, .).

    ``taus`` defaults to every coarse cap (with ``include_flat`` also the
    ones touching J_0).  ``perturb`` optionally maps each rescaled cap to a
    modified one before lookup, for negative controls.
    """
    m, s, n = surface.m, surface.s, surface.n
    scale_level(K, m)
    l_R = scale_level(R, m)
    l_K = scale_level(K, m)
    if l_R <= l_K:
        raise ScaleError(f"R={R} must exceed K={K} by a factor 2^(m*j), j >= 1")
    RK = R // K
    level_RK = l_R - l_K
    fine = fine_family if fine_family is not None else cap_family(R, m, s, n)
    default_taus = taus is None
    taus = taus if taus is not None else coarse_caps(K, m, s, n, include_flat=include_flat)
    targets: dict[int, set] = {}
    exceptions: list[tuple[Cap, Cap, str]] = []
    per_tau = []
    n_checked = 0
    lam_ok = True
    s_vals = set()
    lam_lo, lam_hi = pow2(-level_RK), pow2(-1)
    for tau in taus:
        change = affine_for_cap(tau, surface)
        s_new = change.s_new
        s_vals.add(s_new)
        if s_new not in targets:
            targets[s_new] = cap_family(RK, m, s_new, n).key_set()
        keys = targets[s_new]
        flat_pos = [p for p, j in enumerate(change.order) if change.kinds[j] == "flat"]
        bad = 0
        inside = caps_in(tau, fine)
        for theta in inside:
            img = rescale_cap(theta, change, R)
            if perturb is not None:
                img = perturb(img)
            n_checked += 1
            if img.coords not in keys:
                bad += 1
                exceptions.append((theta, img, f"not in F(R/K={RK}, s={s_new})"))
                continue
            for p in flat_pos:
                role = theta.coords[change.order[p]].role
                if isinstance(role, Curved):
                    # shell start lam at scale R, carried to K^{1/m} * lam
                    lam_t = pow2(role.k - 1 - l_R).mul_pow2(l_K)
                    iv = img.coords[p]
                    if not (
                        lam_t.is_power_of_two()
                        and lam_lo <= lam_t <= lam_hi
                        and lam_t <= iv.lo
                        and iv.hi <= lam_t * 2
                    ):
                        lam_ok = False
        per_tau.append((tau, len(inside), bad))
    ok = not exceptions and lam_ok
    if default_taus and include_flat:
        # the tau tile [0,1]^{n-1}, so every fine cap must be seen exactly once
        ok = ok and n_checked == len(fine)
    return MembershipReport(ok, len(per_tau), n_checked, tuple(sorted(s_vals)), exceptions, lam_ok, per_tau)


def nondegeneracy_of(change: AffineChange, ratio: float | None = None):
    """Nondegeneracy reports for every phase of the rescaled surface."""
    new = rescale_surface(change)
    return [check_m_nondegenerate(ph, new.m, ratio) for ph in new.phases]
