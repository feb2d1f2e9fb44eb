from fractions import Fraction as F

import pytest

from decoup.dyadic import Dyadic, pow2
from decoup.geometry import Box, Cap, Curved, Flat, Interval
from decoup.partition import (
    ScaleError,
    cap_family,
    caps_in,
    coarse_caps,
    interval_count,
    interval_family,
    omega_regions,
    verify_cover,
)


def d(q):
    return Dyadic.from_fraction(F(q))


def bounds(ivs):
    return [(i.lo.to_fraction(), i.hi.to_fraction()) for i in ivs]


def test_interval_family_examples():
    assert bounds(interval_family(2**4, 4)) == [(0, F(1, 2)), (F(1, 2), 1)]
    assert bounds(interval_family(2**8, 4)) == [
        (0, F(1, 4)),
        (F(1, 4), F(1, 2)),
        (F(1, 2), F(5, 8)),
        (F(5, 8), F(3, 4)),
        (F(3, 4), F(7, 8)),
        (F(7, 8), 1),
    ]
    assert len(interval_family(2**12, 4)) == 22


@pytest.mark.parametrize("m", [4, 6, 8])
@pytest.mark.parametrize("l", [1, 2, 3])
def test_count_formula(m, l):
    R = 2 ** (m * l)
    assert len(interval_family(R, m)) == interval_count(R, m)
    assert interval_count(R, m) == 1 + sum(2 ** (m * (k - 1) // 2) for k in range(1, l + 1))


def test_roles_and_lengths():
    fam = interval_family(2**12, 4)
    assert isinstance(fam[0].role, Flat)
    for iv in fam[1:]:
        k = iv.role.k
        assert iv.length == pow2(-(4 - 2) * (k - 1) // 2 - 3)


@pytest.mark.parametrize("R", [8, 2**5, 0, 3, 2**4 * 3])
def test_rejects_nonconforming_scales(R):
    with pytest.raises(ScaleError, match="2\\^\\(m\\*l\\)"):
        interval_family(R, 4)


def test_cap_family_examples():
    f = cap_family(2**8, 4, 0, 3)
    assert len(f) == 36
    assert sum((c.volume for c in f), Dyadic(0)) == Dyadic(1)
    assert len(cap_family(2**8, 4, 1, 3)) == 96
    assert len(cap_family(2**4, 4, 0, 2)) == 2
    assert [c.coords[0] for c in cap_family(2**8, 4, 0, 2)] == interval_family(2**8, 4)


def test_cap_family_indexing_matches_iteration():
    f = cap_family(2**8, 4, 1, 3)
    caps = list(f)
    assert f[0] == caps[0] and f[-1] == caps[-1] and f[37] == caps[37]
    assert caps[5] in f


def test_omega_regions_examples():
    regs = omega_regions(2**4, 4, 0, 3)
    assert len(regs) == 4
    assert regs[0].coords[0].hi == pow2(-1) and regs[3].coords[1].lo == pow2(-1)
    two = omega_regions(2**8, 4, 0, 2)
    assert [r.label for r in two] == [(0,), (1,)]
    assert two[0].coords[0].hi == pow2(-2)
    whole = omega_regions(2**4, 4, 2, 3)
    assert len(whole) == 1 and whole[0].label == ()
    assert whole[0].cap.volume == Dyadic(1)
    assert verify_cover([r.cap for r in omega_regions(2**8, 6 - 2, 0, 4)]).ok


def test_coarse_caps_examples():
    one = coarse_caps(2**4, 4, 0, 2)
    assert bounds([c.coords[0] for c in one]) == [(F(1, 2), 1)]
    five = coarse_caps(2**8, 4, 0, 2)
    assert bounds([c.coords[0] for c in five]) == [
        (F(1, 4), F(1, 2)),
        (F(1, 2), F(5, 8)),
        (F(5, 8), F(3, 4)),
        (F(3, 4), F(7, 8)),
        (F(7, 8), 1),
    ]
    assert len(coarse_caps(2**8, 4, 0, 3)) == 25


@pytest.mark.parametrize("m, K", [(4, 2**4), (4, 2**8), (4, 2**12), (6, 2**6), (6, 2**12)])
def test_coarse_caps_match_curved_fine_intervals(m, K):
    coarse = [c.coords[0] for c in coarse_caps(K, m, 0, 2)]
    fine = [iv for iv in interval_family(K, m) if isinstance(iv.role, Curved)]
    assert [(a.lo, a.hi) for a in coarse] == [(b.lo, b.hi) for b in fine]
    region = omega_regions(K, m, 0, 2)[1]
    assert verify_cover(list(coarse_caps(K, m, 0, 2)), region).ok


def test_coarse_caps_with_flat_tile_the_cube():
    assert verify_cover(coarse_caps(2**8, 4, 1, 3, include_flat=True)).ok


def test_caps_in_examples():
    fam = cap_family(2**8, 4, 0, 2)
    parent = Cap((Interval(pow2(-1), Dyadic(1)),))
    assert bounds([c.coords[0] for c in caps_in(parent, fam)]) == [
        (F(1, 2), F(5, 8)),
        (F(5, 8), F(3, 4)),
        (F(3, 4), F(7, 8)),
        (F(7, 8), 1),
    ]
    full = Cap((Interval(Dyadic(0), Dyadic(1)),))
    assert list(caps_in(full, fam)) == list(fam)
    low = Cap((Interval(Dyadic(0), pow2(-2)),))
    assert bounds([c.coords[0] for c in caps_in(low, fam)]) == [(0, F(1, 4))]
    # plain lists go through the same test
    assert len(caps_in(parent, list(fam))) == 4


def test_each_fine_cap_has_one_coarse_parent():
    parents = omega_regions(2**8, 4, 0, 3)
    fam = list(cap_family(2**12, 4, 0, 3))
    counts = {c.key(): 0 for c in fam}
    for tau in coarse_caps(2**8, 4, 0, 3, include_flat=True):
        for c in caps_in(tau, fam):
            counts[c.key()] += 1
    assert set(counts.values()) == {1}
    assert sum(len(caps_in(r, fam)) for r in parents) == len(fam)


@pytest.mark.parametrize("K, R", [(2**4, 2**8), (2**4, 2**12), (2**8, 2**12)])
def test_nesting_across_scales(K, R):
    coarse = list(cap_family(K, 4, 1, 3))
    for theta in cap_family(R, 4, 1, 3):
        assert sum(c.contains(theta) for c in coarse) == 1


def test_verify_cover_examples():
    fam = list(cap_family(2**8, 4, 0, 3))
    rep = verify_cover(fam, Box([0.5, 0.5], [0.5, 0.5]))
    assert rep.ok and rep.method == "sweep"
    missing = Cap((Interval(d(F(1, 2)), d(F(5, 8))), Interval(Dyadic(0), d(F(1, 4)))))
    short = [c for c in fam if c.key() != missing.key()]
    rep = verify_cover(short)
    assert not rep.ok and rep.deficit == pow2(-5) and rep.overlap is None
    rep = verify_cover(fam + [fam[7]])
    assert not rep.ok and rep.overlap is not None
    assert rep.overlap[0].key() == rep.overlap[1].key() == fam[7].key()


def test_verify_cover_structured_and_generic_agree():
    fam = cap_family(2**12, 6 - 2, 1, 3)
    assert verify_cover(fam).method == "factorwise"
    assert verify_cover(fam).ok and verify_cover(list(fam)).ok


def test_shifted_overlap_is_found_without_volume_change():
    fam = list(cap_family(2**4, 4, 0, 3))
    a = fam[0]
    moved = Cap((Interval(pow2(-2), pow2(-2) * 3), a.coords[1]))
    rep = verify_cover([moved] + fam[1:])
    assert not rep.ok and rep.overlap is not None
