import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from simsafe.domain import ModelParameters, Scaling, ValidationError
from simsafe.nested import (
    CellDataset,
    SamplingWeights,
    ZeroProbabilityError,
    aggregate_cell,
    cell_probabilities,
    mc_probability_oracle,
    nl_probabilities,
    nl_probabilities_batch,
    sampling_weights,
    wesml_loglik,
)
from simsafe.scores import ScoreVector

from .conftest import random_cells


def mnl(v, avail):
    e = np.where(avail, np.exp(v - v.max()), 0.0)
    return e / e.sum()


def test_singleton_nest_example():
    p = nl_probabilities(ScoreVector(0.0, -2.0, 0.0, 0.0, (True, True, False, False)), 1.622)
    assert p[1] == pytest.approx(math.exp(-2) / (1 + math.exp(-2)), abs=1e-15)
    assert p[1] == pytest.approx(0.1192, abs=5e-5)
    assert p[2] == 0.0 and p[3] == 0.0


def test_forced_no_accident():
    p = nl_probabilities(ScoreVector(0.0, 5.0, 5.0, 5.0, (True, False, False, False)), 2.0)
    assert list(p) == [1.0, 0.0, 0.0, 0.0]
    assert list(mc_probability_oracle(ScoreVector(avail=(True, False, False, False)), 2.0, 10, 0)) == [1, 0, 0, 0]


def test_mu_below_one_rejected():
    with pytest.raises(ValueError):
        nl_probabilities(ScoreVector(), 0.99)


@given(hnp.arrays(float, 4, elements=st.floats(-30, 30)), hnp.arrays(bool, 3))
def test_mu_one_is_multinomial_logit(v, a):
    avail = np.concatenate([[True], a])
    v = v.copy()
    v[0] = 0.0
    p = nl_probabilities(ScoreVector(*v, avail=tuple(avail)), 1.0)
    assert np.allclose(p, mnl(v, avail), atol=1e-12, rtol=0)


@given(hnp.arrays(float, (20, 4), elements=st.floats(-50, 50)), hnp.arrays(bool, (20, 4)),
       st.floats(1.0, 10.0))
def test_probabilities_normalised(v, a, mu):
    p = nl_probabilities_batch(v, a, mu)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p[:, 1:][~a[:, 1:]] == 0.0)


def test_shared_nest_raises_within_nest_concentration():
    sv = ScoreVector(0.0, -1.0, -2.0, -3.0)
    low, high = nl_probabilities(sv, 1.0), nl_probabilities(sv, 3.0)
    assert high[1] / high[2] > low[1] / low[2]


def test_monte_carlo_oracle_agrees():
    sv = ScoreVector(0.0, -0.5, -1.0, 0.3, (True, True, False, True))
    p = nl_probabilities(sv, 1.622)
    assert np.max(np.abs(mc_probability_oracle(sv, 1.622, 200_000, 3) - p)) < 0.005


def test_aggregate_cell_examples():
    assert list(aggregate_cell([[1, 0, 0, 0], [0.5, 0.5, 0, 0]])) == [0.75, 0.25, 0, 0]
    v = [0.1, 0.2, 0.3, 0.4]
    assert aggregate_cell([v]) == pytest.approx(v)
    assert aggregate_cell([v] * 7) == pytest.approx(v, abs=1e-15)


def test_sampling_weights_examples():
    pop = {"RE": 76, "LC": 41, "ROR": 56, "NA": 182600467}
    smp = {"RE": 61, "LC": 37, "ROR": 46, "NA": 6400}
    w = sampling_weights(pop, smp)
    assert w["NA"] == pytest.approx(1.0225, abs=5e-5)
    assert w["RE"] == pytest.approx(4.465e-5, rel=1e-3)
    assert sampling_weights([5, 1, 2, 3], [5, 1, 2, 3]).w == (1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        sampling_weights([5, 1, 2, 3], [5, 0, 2, 3])


def single_cell(label=0):
    # one member with only RE available, V_RE = beta0
    return CellDataset(np.zeros((1, 9)), [[True, False, False]], [0], [label])


def test_loglik_single_cell_example():
    # P(NA) = 0.9 when exp(V_RE) = 1/9
    p = ModelParameters(beta_re=(-math.log(9.0), 0, 0, 0))
    rep = wesml_loglik(p, single_cell(), SamplingWeights())
    assert rep.loglik == pytest.approx(math.log(0.9), abs=1e-14)
    assert rep.loglik == pytest.approx(-0.10536, abs=5e-6)


def test_zero_probability_names_the_cell():
    data = CellDataset(np.zeros((1, 9)), [[False, False, False]], [0], [1])
    with pytest.raises(ZeroProbabilityError, match="RE"):
        wesml_loglik(ModelParameters(), data)


def test_scaling_mismatch_rejected():
    data = single_cell()
    with pytest.raises(ValidationError):
        wesml_loglik(ModelParameters(scaling=Scaling(1.0, 1.0)), data)


def test_unit_weights_equal_unweighted():
    data = random_cells(100, 1)
    p = ModelParameters(beta_re=(-1, 0.5, 0.2, 0.1), beta_lc=(-1, 0, 0.1, 0, 0.2), beta_ror=(-1, 0.1, 0.1), mu=1.5)
    a = wesml_loglik(p, data, SamplingWeights())
    b = wesml_loglik(p, data, None)
    assert a.loglik == b.loglik and np.array_equal(a.gradient, b.gradient)


def theta_point(rng):
    return np.concatenate([rng.normal(0, 0.5, 12), [1.0 + rng.exponential(0.8)]])


def numeric_gradient(params, data, weights, step=1e-5):
    theta = params.vector()
    g = np.empty(theta.size)
    for j in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        h = step * max(1.0, abs(theta[j]))
        up[j] += h
        dn[j] -= h
        g[j] = (wesml_loglik(params.with_vector(up), data, weights, gradient=False).loglik
                - wesml_loglik(params.with_vector(dn), data, weights, gradient=False).loglik) / (2 * h)
    return g


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    data = random_cells(100, seed + 10)
    w = SamplingWeights((1.3, 0.2, 0.4, 0.7))
    params = ModelParameters(scaling=data.scaling).with_vector(theta_point(rng))
    analytic = wesml_loglik(params, data, w).gradient
    numeric = numeric_gradient(params, data, w)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-3)
    assert rel.max() < 1e-6


def test_masked_parameters_drop_out_of_gradient():
    data = random_cells(30, 2)
    mask = [True] * 13
    mask[5] = mask[7] = False
    p = ModelParameters(beta_lc=(0, 5.0, 0, 5.0, 0), free_mask=tuple(mask))
    rep = wesml_loglik(p, data)
    assert rep.gradient.shape == (11,)
    q = ModelParameters(free_mask=tuple(mask))
    assert rep.loglik == wesml_loglik(q, data).loglik


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_member_order_never_changes_loglik(seed):
    rng = np.random.default_rng(seed)
    data = random_cells(20, seed % 1000)
    perm = rng.permutation(data.n_members)
    shuffled = CellDataset(data.raw[perm], data.avail[perm], data.cell[perm], data.labels)
    p = ModelParameters().with_vector(theta_point(rng))
    a, b = wesml_loglik(p, data), wesml_loglik(p, shuffled)
    assert a.loglik == b.loglik and np.array_equal(a.gradient, b.gradient)


def test_cell_probabilities_are_member_means():
    data = random_cells(10, 5)
    theta = ModelParameters(mu=1.7).vector()
    theta[0] = -0.5
    cp = cell_probabilities(theta, data)
    from simsafe.nested import member_probabilities
    mp = member_probabilities(theta, data)
    for c in range(data.n_cells):
        assert cp[c] == pytest.approx(aggregate_cell(mp[data.cell == c]), abs=1e-15)


def test_subset_and_rescale():
    data = random_cells(10, 6)
    sub = data.subset([3, 1])
    assert sub.n_cells == 2 and list(sub.labels) == [data.labels[3], data.labels[1]]
    assert sub.n_members == data.counts[3] + data.counts[1]
    r = data.rescaled(Scaling(1.0, 1.0))
    assert np.array_equal(r.raw, data.raw)
