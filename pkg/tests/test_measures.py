import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from simsafe.domain import KMH, GapError, RoadSection, Surface, VehicleType
from simsafe.measures import (
    ABSENT_NEIGHBOR,
    FrictionConfig,
    critical_lateral_acceleration,
    delta_a_lat,
    drac,
    lag_gap_variation,
    lateral_acceleration,
    lead_gap_variation,
    mu_lat,
    mu_long,
    ra_lim,
    ra_need,
    relative_gap,
    ttc,
)

from .conftest import make_obs, pair

STRAIGHT = RoadSection("S", 0, 1000)


def test_drac_examples():
    assert drac(*pair(25, 20, 10)) == pytest.approx(2.0)
    assert drac(*pair(25, 15, 15)) == 0.0
    assert drac(*pair(25, 10, 15)) == 0.0


def test_ttc_examples():
    assert ttc(*pair(25, 20, 10)) == pytest.approx(2.5)
    assert ttc(*pair(25, 12, 12)) is None
    assert ttc(*pair(1, 20, 10)) == pytest.approx(0.1)


def test_overlapping_pair_raises_gap_error():
    f, lead = pair(1, 20, 10)
    overlapped = make_obs("L", f.position + 2.0, 10.0)
    with pytest.raises(GapError):
        drac(f, overlapped)


def test_ra_need_examples():
    # drac 2.0 and ttc 2.5 from (gap 25, 20 vs 10 m/s)
    plus, minus = ra_need(*pair(25, 20, 10, a_follower=-3.0))
    assert (plus, minus) == (0.0, pytest.approx(-0.4))
    plus, minus = ra_need(*pair(25, 20, 10))
    assert (plus, minus) == (pytest.approx(0.8), 0.0)
    assert ra_need(*pair(25, 10, 20)) == (0.0, 0.0)


def test_friction_examples():
    assert mu_long(0.0, "car", "dry") == 0.85
    assert mu_long(130 * KMH, "car", "dry") == pytest.approx(0.75, abs=1e-15)
    assert mu_long(65 * KMH, "car", "dry") == pytest.approx(0.80)
    assert mu_long(0.0, "heavy", "dry") == pytest.approx(0.595)
    assert mu_long(0.0, "car", "wet") == 0.70
    assert mu_long(130 * KMH, "car", "wet") == pytest.approx(0.20)
    assert mu_long(0.0, "heavy", "wet") == 0.70
    assert mu_long(200 * KMH, "car", "dry") == pytest.approx(0.75)
    assert mu_lat(0.0, "car", "dry") == pytest.approx(0.935)


@given(st.floats(0, 60), st.sampled_from(list(VehicleType)), st.sampled_from(list(Surface)))
def test_mu_long_bounded_by_endpoints(v, vt, surface):
    mu = mu_long(v, vt, surface)
    assert 0.2 * 0.7 - 1e-12 <= mu <= 0.85


def test_ra_lim_example():
    # drac 9 and ttc 2 need closing speed 36 over a 72 m gap; flat 0.8 friction
    cfg = FrictionConfig(dry_long_at_0=0.8, dry_long_at_vmax=0.8)
    f, lead = pair(72, 36, 0)
    assert drac(f, lead) == pytest.approx(9.0) and ttc(f, lead) == pytest.approx(2.0)
    assert ra_lim(f, lead, STRAIGHT, "dry", cfg) == pytest.approx(0.576)
    uphill = RoadSection("U", 0, 1000, grade=0.05)
    assert ra_lim(f, lead, uphill, "dry", cfg) < ra_lim(f, lead, STRAIGHT, "dry", cfg)
    assert ra_lim(*pair(20, 10, 15), STRAIGHT, "dry") == 0.0


def test_relative_gap_examples():
    assert relative_gap(10, -2) == (0.0, pytest.approx(-0.2))
    assert relative_gap(10, 2) == (pytest.approx(0.2), 0.0)
    assert relative_gap(10, 0) == (0.0, 0.0)
    assert relative_gap(None, 3.0) is ABSENT_NEIGHBOR
    with pytest.raises(GapError):
        relative_gap(0.0, 1.0)


def test_neighbour_gap_variations():
    subj = make_obs("S", 100.0, 20.0, length=5.0)
    lead = make_obs("A", 115.0, 18.0, length=5.0)
    lag = make_obs("B", 85.0, 25.0)
    assert lead_gap_variation(subj, lead) == (0.0, pytest.approx(-0.2))
    assert lag_gap_variation(subj, lag) == (0.0, pytest.approx(-0.5))
    assert lead_gap_variation(subj, None) is ABSENT_NEIGHBOR


def test_lateral_acceleration_examples():
    curve = RoadSection("C", 0, 1000, radius=400.0)
    assert lateral_acceleration(make_obs(speed=20.0), curve) == pytest.approx(1.0)
    assert lateral_acceleration(make_obs(speed=20.0, lc_state="changing"), STRAIGHT) == pytest.approx(4.905)
    assert lateral_acceleration(make_obs(speed=20.0), STRAIGHT) == 0.0


def test_critical_lateral_acceleration_examples():
    # mu_lat 0.88 = 1.1 * 0.8 at 65 km/h on dry pavement
    banked = RoadSection("C", 0, 1000, radius=300.0, superelevation=0.06)
    obs = make_obs(speed=65 * KMH)
    assert critical_lateral_acceleration(obs, banked, "dry") == pytest.approx(9.2214)
    assert critical_lateral_acceleration(make_obs(speed=0.0), STRAIGHT, "dry") == pytest.approx(9.172350)


def test_delta_a_lat_examples():
    assert delta_a_lat(10, 9) == (1, 0)
    assert delta_a_lat(1, 9) == (0, -8)
    assert delta_a_lat(9, 9) == (0, 0)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_split_parts_reconstruct(x):
    plus, minus = delta_a_lat(x, 0.0)
    assert plus >= 0 and minus <= 0 and plus * minus == 0 and plus + minus == x


@given(st.floats(0.1, 200), st.floats(0, 40), st.floats(0, 40))
def test_drac_ttc_relation(gap, vf, vl):
    f, lead = pair(gap, vf, vl)
    t = ttc(f, lead)
    if vf > vl:
        assert math.isclose(drac(f, lead) * t * 2, vf - vl, rel_tol=1e-9)
    else:
        assert t is None and drac(f, lead) == 0.0
