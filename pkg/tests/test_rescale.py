import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoup.dyadic import Dyadic, pow2
from decoup.geometry import Box, Cap, Cube, Curved, Flat, Interval
from decoup.partition import ScaleError, cap_family, caps_in, coarse_caps
from decoup.rescale import (
    affine_for_cap,
    forward_cap,
    image_box,
    nondegeneracy_of,
    phase_identity_error,
    rescale_cap,
    rescale_surface,
    verify_membership_claim,
)
from decoup.surface import SurfaceSpec, check_m_nondegenerate, default_ratio

HALF = pow2(-1)


def upper_tau(K=16):
    return Cap((Interval(HALF, Dyadic(1), Curved(lam=HALF, iota=1)),), K)


def flat_tau(K=16):
    return Cap((Interval(Dyadic(0), HALF, Flat()),), K)


def test_affine_for_cap_examples():
    surf = SurfaceSpec(2, 4, 0)
    ch = affine_for_cap(upper_tau(), surf)
    assert ch.offsets == (HALF,) and ch.scales == (HALF,)
    assert ch.kinds == ("curved",) and ch.xn_normalization == 16
    fl = affine_for_cap(flat_tau(), surf)
    assert fl.offsets == (Dyadic(0),) and fl.scales == (HALF,)
    full = Cap((Interval(Dyadic(0), Dyadic(1), Cube()),) * 2, 1)
    ident = affine_for_cap(full, SurfaceSpec.standard(3, 4, 2))
    assert ident.scales == (Dyadic(1), Dyadic(1)) and ident.offsets == (Dyadic(0), Dyadic(0))
    eta = np.random.default_rng(1).random((20, 2))
    assert np.array_equal(ident.forward(eta), eta)


def test_affine_rejects_mismatched_tau():
    with pytest.raises(ValueError):
        affine_for_cap(upper_tau(), SurfaceSpec(3, 4, 0))
    bad = Cap((Interval(HALF, Dyadic(1), Curved(lam=HALF, iota=1)),), 256)
    with pytest.raises(ValueError):
        affine_for_cap(bad, SurfaceSpec(2, 4, 0))


def test_rescale_surface_examples():
    surf = SurfaceSpec(2, 4, 0)
    new = rescale_surface(affine_for_cap(upper_tau(), surf))
    assert new.s == 1
    psi = new.phases[0]
    # 16[(1/2 + eta/2)^4 - 1/16 - eta/4] = 6 eta^2 + 4 eta^3 + eta^4
    assert psi.coefficients == (0.0, 0.0, 6.0, 4.0, 1.0)
    rep = check_m_nondegenerate(psi, 4, default_ratio(4))
    assert rep.ok and rep.second_range == (12.0, 48.0)
    flat = rescale_surface(affine_for_cap(flat_tau(), surf))
    assert flat.s == 0 and flat.phases == ()
    both = Cap((flat_tau().coords[0],) * 2, 16)
    assert rescale_surface(affine_for_cap(both, SurfaceSpec(3, 4, 0))) == SurfaceSpec(3, 4, 0)


@pytest.mark.parametrize("K", [2**4, 2**8, 2**12])
def test_flat_monomial_preserved_exactly(K):
    ch = affine_for_cap(Cap((Interval(Dyadic(0), pow2(-(K.bit_length() - 1) // 4), Flat()),), K),
                        SurfaceSpec(2, 4, 0))
    eta = np.linspace(0, 1, 33)[:, None]
    phi = ch.forward(eta)[:, 0] ** 4
    assert np.array_equal(K * phi, eta[:, 0] ** 4)


def test_rescale_cap_examples():
    surf = SurfaceSpec(2, 4, 0)
    ch = affine_for_cap(upper_tau(), surf)
    theta = Cap((Interval(HALF, Dyadic(5, -3), Curved(k=2, mu=1)),), 256)
    img = rescale_cap(theta, ch)
    assert (img.coords[0].lo, img.coords[0].hi) == (Dyadic(0), pow2(-2))
    assert isinstance(img.coords[0].role, Cube) and img.scale == 16
    fl = affine_for_cap(flat_tau(), surf)
    i0 = Cap((Interval(Dyadic(0), pow2(-2), Flat()),), 256)
    out = rescale_cap(i0, fl)
    assert (out.coords[0].lo, out.coords[0].hi) == (Dyadic(0), HALF)
    same = rescale_cap(upper_tau(), ch)
    assert (same.coords[0].lo, same.coords[0].hi) == (Dyadic(0), Dyadic(1))


def test_rescale_cap_outside_tau_is_an_error():
    ch = affine_for_cap(upper_tau(), SurfaceSpec(2, 4, 0))
    with pytest.raises(ValueError):
        rescale_cap(Cap((Interval(Dyadic(0), pow2(-2), Flat()),), 256), ch)


@pytest.mark.parametrize("n, s, K, R", [(2, 0, 2**4, 2**8), (3, 0, 2**4, 2**12), (3, 1, 2**4, 2**8)])
def test_round_trip_is_exact(n, s, K, R):
    surf = SurfaceSpec.standard(n, 4, s)
    fine = cap_family(R, 4, s, n)
    for tau in coarse_caps(K, 4, s, n, include_flat=True):
        ch = affine_for_cap(tau, surf)
        for theta in caps_in(tau, fine):
            assert forward_cap(rescale_cap(theta, ch, R), ch).key() == theta.key()


def test_membership_examples():
    assert verify_membership_claim(SurfaceSpec(2, 4, 0), 2**4, 2**8).ok
    rep = verify_membership_claim(SurfaceSpec(3, 4, 0), 2**4, 2**12)
    assert rep.ok and rep.n_checked == len(cap_family(2**12, 4, 0, 3))


def test_membership_negative_control():
    shift = pow2(-20)

    def nudge(cap):
        iv = cap.coords[0]
        return Cap((Interval(iv.lo + shift, iv.hi + shift, iv.role),) + cap.coords[1:], cap.scale)

    rep = verify_membership_claim(SurfaceSpec(2, 4, 0), 2**4, 2**8, perturb=nudge)
    assert not rep.ok
    assert len(rep.exceptions) == rep.n_checked > 0


def test_membership_rejects_bad_scales():
    with pytest.raises(ScaleError):
        verify_membership_claim(SurfaceSpec(2, 4, 0), 2**4, 2**6)
    with pytest.raises(ScaleError):
        verify_membership_claim(SurfaceSpec(2, 4, 0), 2**8, 2**8)


def test_image_box_examples():
    surf = SurfaceSpec(2, 4, 0)
    ball = Box.ball([0.0, 0.0], 256.0)
    box = image_box(ball, affine_for_cap(upper_tau(), surf))
    assert box.half_widths.tolist() == [128.0, 16.0]
    full = Cap((Interval(Dyadic(0), Dyadic(1), Cube()),), 1)
    ident = image_box(ball, affine_for_cap(full, SurfaceSpec.standard(2, 4, 1)))
    assert ident.half_widths.tolist() == [256.0, 256.0]
    cube = Cap((Interval(Dyadic(0), pow2(-2), Cube()),), 16)
    assert image_box(ball, affine_for_cap(cube, SurfaceSpec.standard(2, 4, 1))).half_widths[0] == 64.0


def test_dual_map_carries_the_phase():
    surf = SurfaceSpec.standard(3, 4, 1)
    tau = coarse_caps(2**8, 4, 1, 3)[7]
    ch = affine_for_cap(tau, surf)
    new = rescale_surface(ch)
    rng = np.random.default_rng(5)
    x = rng.normal(scale=50, size=(10, 3))
    eta = rng.random((10, 2))
    xi = ch.forward(eta)
    lhs = np.sum(x[:, :2] * xi, axis=1) + x[:, 2] * (
        surf.coordinate_poly(0)(xi[:, 0]) + surf.coordinate_poly(1)(xi[:, 1])
    )
    xt = ch.map_x(x)
    en = eta[:, list(ch.order)]
    rhs = np.sum(xt[:, list(ch.order)][:, :2] * en, axis=1) + xt[:, 2] * sum(
        new.coordinate_poly(p)(en[:, p]) for p in range(2)
    )
    # the remaining difference is independent of eta
    const = x[:, :2] @ ch.offsets_f() + x[:, 2] * sum(
        surf.coordinate_poly(j)(ch.offsets_f()[j]) for j in range(2)
    )
    assert np.allclose(lhs - rhs, const, rtol=0, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_phase_identity_on_random_tau(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    s = int(rng.integers(0, n))
    surf = SurfaceSpec.standard(n, 4, s)
    taus = list(coarse_caps(2**8, 4, s, n, include_flat=True))
    tau = taus[int(rng.integers(len(taus)))]
    ch = affine_for_cap(tau, surf)
    assert phase_identity_error(ch, rng.random((1000, n - 1))) <= 1e-12
    assert all(r.ok for r in nondegeneracy_of(ch))
