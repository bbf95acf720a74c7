import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prosf.behavior import (ProspectParams, prospect_utility, prospect_value, rational_utility,
                            reference_point, value_asym, weight_inverse_s, weight_prelec)
from prosf.model_core import CostModel, LinearClassifier

T4 = ProspectParams()


def test_value_examples():
    assert value_asym(9, 8, ProspectParams(alpha=1, beta=1, kappa=1.25)) == -1.0
    assert value_asym(0, 0, T4) == 0.0
    assert value_asym(0.5, 0.5, T4) == pytest.approx(-0.81069, abs=1e-5)
    with pytest.raises(ValueError):
        value_asym(-1, 0, T4)


def test_inverse_s_examples():
    assert weight_inverse_s(0.8, 0.6) == pytest.approx(0.5988, abs=1e-3)
    assert weight_inverse_s(0.5, 1.0) == 0.5
    w = weight_inverse_s(0.05, 0.6)
    assert w == pytest.approx(0.13412, abs=5e-4) and w > 0.05
    assert weight_inverse_s(0.0, 0.6) == 0.0 and weight_inverse_s(1.0, 0.6) == 1.0
    with pytest.raises(ValueError):
        weight_inverse_s(1.2, 0.6)


def test_prelec_examples():
    assert weight_prelec(1.0, 0.4, 2.0) == 1.0
    assert weight_prelec(np.exp(-1), 0.3, 1.0) == pytest.approx(np.exp(-1), abs=1e-12)
    assert weight_prelec(0.05, 0.65, 1.0) == pytest.approx(0.13002, abs=5e-4)
    assert weight_prelec(0.0, 0.65, 1.0) == 0.0
    with pytest.raises(ValueError):
        weight_prelec(-0.1, 0.65, 1.0)


def test_reference_point_examples():
    assert reference_point(0.73, 5) == pytest.approx(0.6)
    assert reference_point(1.0, 4) == 1.0
    grid = {reference_point(s, 5) for s in np.linspace(0, 1, 1001)}
    assert grid == {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}
    assert reference_point(0.37, None) == 0.37
    with pytest.raises(ValueError):
        reference_point(1.5, 5)


def test_prospect_value_example():
    v = prospect_value(0.9, 0.4, 0.2, T4, lam=1.0)
    assert v == pytest.approx(-0.4087, abs=1e-3)


def test_prospect_utility_zero_cost_zero_reference():
    f = LinearClassifier(np.array([1.0, -0.5]), 0.2)
    cm = CostModel.identity(2)
    x = np.array([0.3, 0.1])
    assert prospect_utility(x, x, 0.0, f, cm, T4) == pytest.approx(weight_inverse_s(f.score(x), 0.7))


def test_rational_utility_examples():
    f = LinearClassifier(np.array([1.0]), 0.0)
    cm = CostModel.identity(1)
    assert rational_utility([1.0], [1.0], f, cm) == 1
    assert rational_utility([-1.0], [-1.0], f, cm) == -1
    assert rational_utility([-0.5], [0.0], f, cm) == 0.5


def test_params_validation():
    with pytest.raises(ValueError):
        ProspectParams(kappa=0.9)
    with pytest.raises(ValueError):
        ProspectParams(alpha=1.2)
    with pytest.raises(ValueError):
        ProspectParams(weighting="prelec", prelec_shape=1.2)
    with pytest.raises(ValueError):
        ProspectParams(K=0)


def test_neutralized():
    n = T4.neutralized(loss=True, reference=True, probability=True)
    assert n.kappa == 1.0 and n.K is None and n.gamma == 1.0
    assert T4.neutralized() == T4


@pytest.mark.parametrize("gamma", [0.3, 0.5, 0.6, 0.7, 0.8, 1.0])
def test_inverse_s_strictly_increasing(gamma):
    p = np.linspace(0, 1, 1000)
    assert np.all(np.diff(weight_inverse_s(p, gamma)) > 0)


@pytest.mark.parametrize("gamma", [0.5, 0.6, 0.7, 0.8, 0.9])
def test_inverse_s_single_crossing(gamma):
    p = np.linspace(0.001, 0.999, 999)
    d = weight_inverse_s(p, gamma) - p
    signs = np.sign(d[np.abs(d) > 1e-12])
    assert signs[0] > 0 and signs[-1] < 0
    assert np.count_nonzero(np.diff(signs)) == 1


def test_identity_weight_exact():
    p = np.linspace(0, 1, 1000)
    assert np.array_equal(weight_inverse_s(p, 1.0), p)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 20))
def test_reference_quantization(s1, s2, K):
    r1, r2 = reference_point(s1, K), reference_point(s2, K)
    assert abs(r1 * K - round(r1 * K)) < 1e-9
    if s1 <= s2:
        assert r1 <= r2
    assert r1 <= s1 + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.sampled_from([0.0, 0.2, 0.4, 0.6, 0.8]), st.floats(0.0, 5.0),
       st.floats(0.01, 2.0), st.booleans())
def test_utility_decreasing_in_cost(q, r, c, dc, cil):
    p = ProspectParams(cost_in_loss=cil)
    assert prospect_value(q, r, c + dc, p, 1.3) < prospect_value(q, r, c, p, 1.3)


def test_neutral_prospect_matches_soft_rational_argmax():
    rng = np.random.default_rng(5)
    p = ProspectParams(alpha=1, beta=1, kappa=1, gamma=1, K=None, cost_in_loss=False)
    cm = CostModel.identity(3, lam=0.7)
    for _ in range(50):
        f = LinearClassifier(rng.normal(size=3), rng.normal())
        x = rng.normal(size=3)
        cands = x + rng.normal(size=(40, 3))
        r = f.score(x)
        u = prospect_utility(x, cands, r, f, cm, p)
        soft = f.score(cands) - cm.lam * cm.cost(x, cands)
        assert np.argmax(u) == np.argmax(soft)
        assert np.allclose(u, soft - r, atol=1e-12)
