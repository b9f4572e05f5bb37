import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simsafe.domain import FeatureVector, ModelParameters, RoadSection, paper_parameters
from simsafe.scores import (
    availability,
    scale_features,
    score_lc,
    score_matrix,
    score_re,
    score_ror,
    score_vector,
    effective_betas,
)

from .conftest import make_obs

PAPER = paper_parameters()


def test_score_re_example():
    f = FeatureVector(ra_need_pos=0.8, ra_lim=0.576, avail_re=True)
    assert score_re(f, PAPER) == pytest.approx(-9.587, abs=5e-4)
    assert score_re(FeatureVector(avail_re=True), PAPER) == -13.09


def test_score_re_linear_in_ra_need():
    f1 = FeatureVector(ra_need_pos=0.8, avail_re=True)
    f2 = FeatureVector(ra_need_pos=1.6, avail_re=True)
    assert score_re(f2, PAPER) - score_re(f1, PAPER) == pytest.approx(2.917 * 0.8)


def test_score_lc_example():
    # -2 after dividing by 10
    f = FeatureVector(rg_lag_neg=-20.0, avail_lc=True)
    assert score_lc(f, PAPER) == pytest.approx(-5.944)
    assert score_lc(FeatureVector(avail_lc=True), PAPER) == -7.08
    worse = FeatureVector(rg_lead_neg=-20.0, avail_lc=True)
    assert score_lc(worse, PAPER) > score_lc(FeatureVector(rg_lead_neg=-10.0, avail_lc=True), PAPER)


def test_score_lc_reduced_model_ignores_dropped_terms():
    f = FeatureVector(rg_lag_pos=5.0, rg_lead_pos=5.0, avail_lc=True)
    assert score_lc(f, PAPER) == -7.08
    assert score_lc(f, paper_parameters(reduced=False)) < -7.08


def test_score_ror_example():
    assert score_ror(FeatureVector(dalat_pos=1.0, avail_ror=True), PAPER) == pytest.approx(-12.22)
    assert score_ror(FeatureVector(avail_ror=True), PAPER) == -12.45
    a = score_ror(FeatureVector(dalat_neg=-1.0, avail_ror=True), PAPER)
    b = score_ror(FeatureVector(dalat_neg=-2.0, avail_ror=True), PAPER)
    assert b < a


def test_scale_features_examples():
    f = scale_features(FeatureVector(rg_lead_neg=-0.2, avail_lc=True, dalat_pos=1.0, avail_ror=True))
    assert f.rg_lead_neg == pytest.approx(-0.02) and f.dalat_pos == 10.0
    assert np.all(scale_features(FeatureVector()).as_array() == 0)


def test_availability_rules():
    ramp = RoadSection("R", 0, 100, n_lanes=1)
    curve = RoadSection("C", 0, 100, radius=300.0)
    straight = RoadSection("S", 0, 100, n_lanes=2)
    assert availability(make_obs(), ramp) == (False, False, False)
    assert availability(make_obs(leader_id="L"), curve) == (True, False, True)
    assert availability(make_obs(lc_state="changing"), straight) == (False, True, True)


def test_unavailable_scores_are_flagged():
    sv = score_vector(FeatureVector(avail_re=True), PAPER)
    assert sv.avail == (True, True, False, False)
    assert sv.v_re == -13.09 and sv.v_lc == 0.0


@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9), st.lists(st.floats(-3, 3), min_size=12, max_size=12))
def test_matrix_matches_scalar_scores(raw, betas):
    x = np.array(raw)
    for a, b in ((0, 1), (3, 4), (5, 6), (7, 8)):
        x[a], x[b] = max(x[a], 0.0), min(x[a], 0.0)
    f = FeatureVector.from_array(x, (True, True, True))
    p = ModelParameters(beta_re=betas[0:4], beta_lc=betas[4:9], beta_ror=betas[9:12])
    v = score_matrix(scale_features(f).as_array()[None, :], effective_betas(p))[0]
    assert v == pytest.approx([score_re(f, p), score_lc(f, p), score_ror(f, p)], rel=1e-12, abs=1e-12)
