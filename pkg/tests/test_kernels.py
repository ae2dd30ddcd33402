"""Both kernel backends against the exact Subset Selection distribution."""

import math
from itertools import combinations

import numpy as np
import pytest
from scipy import stats

from ldptrie import _kernels_py, kernels
from ldptrie.randomizer import exact_output_prob, ss_params

try:
    from ldptrie import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
BACKENDS.append(
    pytest.param(
        _kernels_c,
        id="cython",
        marks=pytest.mark.skipif(_kernels_c is None, reason="extension not built"),
    )
)

MASK = (1 << 64) - 1


def _splitmix(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


def reference_uniforms(seed, count):
    """splitmix64-seeded xoshiro256** written from the published algorithm."""
    s = []
    state = seed
    for _ in range(4):
        state, z = _splitmix(state)
        s.append(z)
    out = []
    for _ in range(count):
        result = (_rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        out.append((result >> 11) * 2.0**-53)
    return out


@pytest.mark.skipif(_kernels_c is None, reason="extension not built")
def test_compiled_rng_matches_reference():
    for seed in (0, 1, 2**63 + 12345):
        assert _kernels_c.raw_uniforms(seed, 50).tolist() == reference_uniforms(seed, 50)


def test_selected_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("backend", BACKENDS)
def test_vote_l1_and_determinism(backend):
    prm = ss_params(31, 1.5)
    targets = np.array([0, 5, 30, 30], dtype=np.int64)
    a = np.zeros(31, dtype=np.int64)
    b = np.zeros(31, dtype=np.int64)
    backend.ss_vote_accumulate(targets, prm.s, prm.d, prm.p, 99, a)
    backend.ss_vote_accumulate(targets, prm.s, prm.d, prm.p, 99, b)
    assert a.sum() == 4 * prm.d
    assert np.array_equal(a, b)


@pytest.mark.parametrize("backend", BACKENDS)
def test_vote_rejects_bad_input(backend):
    out = np.zeros(5, dtype=np.int64)
    with pytest.raises(ValueError):
        backend.ss_vote_accumulate(np.array([5], dtype=np.int64), 5, 2, 0.5, 0, out)
    with pytest.raises(ValueError):
        backend.ss_vote_accumulate(np.array([0], dtype=np.int64), 6, 2, 0.5, 0, out)


@pytest.mark.parametrize("backend", BACKENDS)
def test_vote_distribution_matches_exact(backend):
    """Chi-square of single-vote output subsets against exact probabilities."""
    prm = ss_params(6, 0.8)
    z = 2
    subsets = list(combinations(range(prm.s), prm.d))
    index = {S: i for i, S in enumerate(subsets)}
    trials = 20_000
    hist = np.zeros(len(subsets))
    out = np.zeros(prm.s, dtype=np.int64)
    target = np.array([z], dtype=np.int64)
    for t in range(trials):
        out[:] = 0
        backend.ss_vote_accumulate(target, prm.s, prm.d, prm.p, t, out)
        hist[index[tuple(np.flatnonzero(out))]] += 1
    expected = np.array([exact_output_prob(z, S, prm) for S in subsets]) * trials
    _, pval = stats.chisquare(hist, expected)
    assert pval > 1e-4


@pytest.mark.parametrize("backend", BACKENDS)
def test_uniform_subset_counts(backend):
    n, k, m = 40, 7, 20_000
    out = np.zeros(n, dtype=np.int64)
    backend.uniform_subset_counts(m, n, k, 5, out)
    assert out.sum() == m * k
    mean = m * k / n
    sigma = math.sqrt(m * (k / n) * (1 - k / n))
    assert np.all(np.abs(out - mean) < 5 * sigma)
    zero = np.zeros(n, dtype=np.int64)
    backend.uniform_subset_counts(m, n, 0, 5, zero)
    assert not zero.any()


@pytest.mark.parametrize("backend", BACKENDS)
def test_subset_counts_are_distinct(backend):
    # k = n forces every element exactly once per subset
    out = np.zeros(9, dtype=np.int64)
    backend.uniform_subset_counts(13, 9, 9, 1, out)
    assert (out == 13).all()


@pytest.mark.skipif(_kernels_c is None, reason="extension not built")
def test_large_domain_marginal_compiled():
    """s = 1,000,001 and eps = 10: empirical p and q over 10^6 votes."""
    prm = ss_params(1_000_001, 10.0)
    trials = 1_000_000
    out = np.zeros(prm.s, dtype=np.int64)
    _kernels_c.ss_vote_accumulate(np.zeros(trials, dtype=np.int64), prm.s, prm.d, prm.p, 2024, out)
    sigma_p = math.sqrt(trials * prm.p * (1 - prm.p))
    assert abs(out[0] - trials * prm.p) <= 3 * sigma_p
    # 1000 fixed non-input coordinates, each reported with probability q
    m = 1000
    others = out[1 : m + 1].sum()
    sigma_q = math.sqrt(m * trials * prm.q * (1 - prm.q))
    assert abs(others - m * trials * prm.q) <= 3 * sigma_q
