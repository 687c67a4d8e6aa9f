import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idealdefer.baselines import (
    EXP_CLAMP,
    BaselineKind,
    conf_score,
    diff01_target,
    maxprob_decision,
    twostage_exp_loss,
    twostage_objective,
)


@pytest.mark.parametrize("probs, expected", [(np.eye(4)[2], 1.0), (np.full(5, 0.2), 0.2),
                                             ([0.6, 0.3, 0.1], 0.6)])
def test_conf_examples(probs, expected):
    assert conf_score(np.array(probs)) == pytest.approx(expected)


@pytest.mark.parametrize("pm, pe, y, expected", [
    ([0.9, 0.1], [0.8, 0.2], 0, 0), ([0.2, 0.8], [0.9, 0.1], 0, -1), ([0.9, 0.1], [0.2, 0.8], 0, 1),
])
def test_diff01_examples(pm, pe, y, expected):
    assert diff01_target(np.array(pm), np.array(pe), y) == expected


def test_diff01_expectation_is_delta(rng):
    eta = rng.dirichlet(np.ones(4), size=20)
    pm, pe = rng.dirichlet(np.ones(4), size=20), rng.dirichlet(np.ones(4), size=20)
    expected = np.array([sum(eta[i, y] * diff01_target(pm[i], pe[i], y) for y in range(4))
                         for i in range(20)])
    rows = np.arange(20)
    delta = eta[rows, pm.argmax(1)] - eta[rows, pe.argmax(1)]
    assert np.allclose(expected, delta)


@pytest.mark.parametrize("pm, g, expected", [([0.7, 0.3], 0.7, 0.0), ([0.9, 0.1], 0.4, 0.5),
                                             ([0.3, 0.3, 0.4 - 0.1, 0.1], 0.8, -0.5)])
def test_maxprob_examples(pm, g, expected):
    assert maxprob_decision(np.array(pm), g) == pytest.approx(expected)


def test_twostage_examples():
    pm = np.array([[0.7, 0.3]])
    assert twostage_exp_loss([0.7], pm, np.array([[0.9, 0.1]]), [0], 0.0) == pytest.approx(2.0)
    # both wrong and c = 0: nothing to pay
    for s in (-5.0, 0.0, 3.0):
        assert twostage_exp_loss([s], pm, np.array([[0.9, 0.1]]), [1], 0.0) == 0.0
    # model right, expert wrong, c = 0.2: minimiser runs to -inf and the clamp caps it
    val = twostage_exp_loss([-1e6], pm, np.array([[0.1, 0.9]]), [0], 0.2)
    assert np.isfinite(val) and val == pytest.approx(np.exp(-EXP_CLAMP) - 0.2 * np.exp(EXP_CLAMP))


def test_twostage_rejects():
    with pytest.raises(ValueError):
        twostage_exp_loss([0.0], np.array([[0.5, 0.5]]), np.array([[0.5, 0.5]]), [0], -0.1)
    with pytest.raises(ValueError):
        twostage_exp_loss([0.0, 1.0], np.array([[0.5, 0.5]]), np.array([[0.5, 0.5]]), [0], 0.0)
    with pytest.raises(ValueError):
        BaselineKind("twostage-exp", c=-1)
    with pytest.raises(ValueError):
        BaselineKind("oracle")


@given(st.floats(-3, 3), st.floats(0.1, 1.0), st.floats(0, 0.99))
def test_twostage_decreases_in_s_when_only_expert_right(s, m, c):
    conf, hm, he = np.array([m]), np.array([False]), np.array([True])
    lo, _ = twostage_objective(np.array([s]), conf, hm, he, c)
    hi, _ = twostage_objective(np.array([s + 1e-3]), conf, hm, he, c)
    assert hi < lo


def test_conf_order_invariant_to_monotone_transform(rng):
    p = rng.dirichlet(np.ones(5), size=50)
    a = np.argsort(conf_score(p), kind="stable")
    b = np.argsort(np.log(conf_score(p)) ** 3, kind="stable")
    assert np.array_equal(a, b)
