import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldptrie.randomizer import (
    exact_output_prob,
    marginal_probs,
    max_privacy_ratio,
    ss_params,
    subset_select,
)


def test_params_small_epsilon():
    prm = ss_params(4, 1e-9)
    assert prm.d == 2
    assert prm.p == pytest.approx(0.5, abs=1e-8)


def test_params_exact_exp():
    prm = ss_params(10, math.log(9))
    assert prm.d == 1
    assert prm.p == pytest.approx(0.5, abs=1e-12)


def test_params_production_domain():
    # ceil(1000001 / (e^10 + 1)) evaluated with 60-digit mpmath
    assert ss_params(1_000_001, 10).d == 46


@pytest.mark.parametrize("s,eps", [(1, 1.0), (4, 0.0), (4, -1.0), (4, float("inf")), (4, float("nan"))])
def test_params_rejects(s, eps):
    with pytest.raises(ValueError):
        ss_params(s, eps)


@given(st.integers(2, 10**7), st.floats(1e-6, 50))
def test_params_invariants(s, eps):
    prm = ss_params(s, eps)
    assert 1 <= prm.d <= s
    assert 0 < prm.p <= 1
    assert -1e-12 <= prm.q <= 1
    p, q = marginal_probs(prm)
    assert abs(p + (s - 1) * q - prm.d) < 1e-9 * max(1, prm.d)


def test_marginals_examples():
    prm = ss_params(4, 1e-9)
    assert prm.q == pytest.approx(0.5, abs=1e-8)
    prm = ss_params(101, 2.0)
    p, q = marginal_probs(prm)
    assert p + 100 * q == pytest.approx(prm.d, abs=1e-12)


def test_exact_probs_normalized():
    prm = ss_params(6, 1.0)
    for z in range(6):
        total = sum(exact_output_prob(z, S, prm) for S in combinations(range(6), prm.d))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_exact_prob_example():
    prm = ss_params(4, 1e-9)
    assert exact_output_prob(0, {0, 2}, prm) == pytest.approx(0.5 / 3, abs=1e-9)
    with pytest.raises(ValueError):
        exact_output_prob(0, {0}, prm)


def test_ratio_equals_exp_eps():
    prm = ss_params(5, 0.7)
    # p/(1-p) * (s-d)/d is e^eps algebraically
    assert prm.p / (1 - prm.p) * (prm.s - prm.d) / prm.d == pytest.approx(math.exp(0.7), rel=1e-12)
    assert max_privacy_ratio(prm) == pytest.approx(math.exp(0.7), abs=1e-9)


@pytest.mark.parametrize("s", range(2, 9))
@pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
def test_exhaustive_ldp(s, eps):
    prm = ss_params(s, eps)
    ratio = max_privacy_ratio(prm)
    assert ratio <= math.exp(eps) + 1e-9
    if prm.d < s:
        assert ratio == pytest.approx(math.exp(eps), abs=1e-9)


def test_subset_select_cardinality_and_determinism():
    prm = ss_params(50, 1.0)
    for z in (0, 17, 49):
        a = subset_select(z, prm, np.random.default_rng(3))
        b = subset_select(z, prm, np.random.default_rng(3))
        assert len(set(a.tolist())) == prm.d
        assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        subset_select(50, prm, np.random.default_rng(0))


def test_subset_select_full_domain():
    prm = ss_params(3, 1e-9)
    assert prm.d == 2  # ceil(3/2)
    prm_full = type(prm)(s=3, epsilon=1e-9, d=3, p=1.0)
    out = subset_select(1, prm_full, np.random.default_rng(0))
    assert out.tolist() == [0, 1, 2]


def test_subset_select_binary_domain():
    prm = ss_params(2, 3.0)
    assert prm.d == 1
    rng = np.random.default_rng(7)
    trials = 100_000
    hits = sum(subset_select(0, prm, rng)[0] == 0 for _ in range(trials))
    sigma = math.sqrt(trials * prm.p * (1 - prm.p))
    assert abs(hits - trials * prm.p) <= 3 * sigma


def test_subset_select_singleton_histogram():
    prm = ss_params(4, math.log(3))
    assert prm.d == 1 and prm.p == pytest.approx(0.5)
    assert prm.q == pytest.approx(1 / 6)
    rng = np.random.default_rng(11)
    trials = 100_000
    hist = np.bincount([subset_select(2, prm, rng)[0] for _ in range(trials)], minlength=4)
    for idx, prob in enumerate([1 / 6, 1 / 6, 0.5, 1 / 6]):
        sigma = math.sqrt(trials * prob * (1 - prob))
        assert abs(hist[idx] - trials * prob) <= 3 * sigma
