from __future__ import annotations

import math

import numpy as np
import pytest

from leapverify.verify import CRITERIA, Decision, decide


def test_criteria_names():
    assert CRITERIA == ("strict", "adaptive", "proximity")


def test_strict_is_a_strict_inequality():
    assert decide(0.9, 1.0, None, 0.05).strict is True
    assert decide(1.0, 1.0, None, 0.05).strict is False
    assert decide(1.1, 1.0, None, 0.05).strict is False


def test_adaptive_allows_one_sigma_slack_strictly():
    assert decide(1.05, 1.0, 0.1, 0.05).adaptive is True
    assert decide(1.1, 1.0, 0.1, 0.05).adaptive is False  # boundary rejects
    assert decide(1.2, 1.0, 0.1, 0.05).adaptive is False


def test_adaptive_without_sigma_is_not_evaluable():
    d = decide(0.5, 1.0, None, 0.05)
    assert d.adaptive is None
    assert d.strict is True


def test_adaptive_with_zero_sigma_matches_strict():
    for l_hat in (0.5, 1.0, 1.5, 0.9999999, 1.0000001):
        d = decide(l_hat, 1.0, 0.0, 0.05)
        assert d.adaptive == d.strict


def test_proximity_is_two_sided_and_strict():
    assert decide(1.04, 1.0, None, 0.05).proximity is True
    assert decide(0.96, 1.0, None, 0.05).proximity is True
    assert decide(1.05, 1.0, None, 0.05).proximity is False  # boundary rejects
    assert decide(0.95, 1.0, None, 0.05).proximity is False
    assert decide(1.2, 1.0, None, 0.05).proximity is False


def test_proximity_scales_with_current_loss():
    assert decide(207.0, 200.0, None, 0.05).proximity is True
    assert decide(214.0, 200.0, None, 0.05).proximity is False


def test_non_finite_prediction_fails_everything_with_reason():
    for bad in (float("nan"), float("inf"), float("-inf")):
        d = decide(bad, 1.0, 0.2, 0.05)
        assert d.strict is False
        assert d.adaptive is False
        assert d.proximity is False
        assert d.reason == "non-finite prediction"


def test_finite_decisions_have_no_reason():
    assert decide(0.9, 1.0, 0.1, 0.05).reason is None


def test_decide_validates_inputs():
    with pytest.raises(ValueError):
        decide(0.5, 0.0, None, 0.05)
    with pytest.raises(ValueError):
        decide(0.5, -1.0, None, 0.05)
    with pytest.raises(ValueError):
        decide(0.5, float("nan"), None, 0.05)
    with pytest.raises(ValueError):
        decide(0.5, 1.0, None, 0.0)
    with pytest.raises(ValueError):
        decide(0.5, 1.0, None, 1.0)
    with pytest.raises(ValueError):
        decide(0.5, 1.0, -0.1, 0.05)
    with pytest.raises(ValueError):
        decide(0.5, 1.0, float("inf"), 0.05)


def test_verdict_dispatch_and_unknown_criterion():
    d = decide(0.9, 1.0, 0.1, 0.05)
    assert d.verdict("strict") is d.strict
    assert d.verdict("adaptive") is d.adaptive
    assert d.verdict("proximity") is d.proximity
    with pytest.raises(ValueError):
        d.verdict("optimistic")


def test_strict_acceptance_implies_adaptive_acceptance():
    rng = np.random.default_rng(3)
    for _ in range(500):
        l_t = float(rng.uniform(0.01, 10.0))
        l_hat = float(rng.uniform(-1.0, 12.0))
        sigma = float(rng.uniform(0.0, 2.0))
        d = decide(l_hat, l_t, sigma, 0.05)
        if d.strict:
            assert d.adaptive is True


def test_decision_records_inputs():
    d = decide(0.75, 1.5, 0.25, 0.1)
    assert d.l_hat == 0.75
    assert d.l_t == 1.5
    assert d.sigma_l == 0.25
    assert d.epsilon == 0.1
    assert isinstance(d, Decision)
    assert math.isfinite(d.l_hat)
