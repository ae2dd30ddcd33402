"""Subset Selection, an epsilon-LDP randomizer over an indexed finite domain.

Given a true index ``z`` in ``[0, s)``, the mechanism reports a size-``d``
subset that contains ``z`` with probability ``p``; the remaining members are
drawn uniformly from the other ``s - 1`` indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import mpmath
import numpy as np


@dataclass(frozen=True)
class SSParams:
    s: int
    epsilon: float
    d: int
    p: float

    @property
    def q(self) -> float:
        """Probability that a fixed non-input index is reported."""
        return (self.d - self.p) / (self.s - 1)


def ss_params(s: int, epsilon: float) -> SSParams:
    if int(s) != s or s < 2:
        raise ValueError(f"domain size must be an integer >= 2, got {s!r}")
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon!r}")
    s = int(s)
    with mpmath.workdps(50):
        exp_eps = mpmath.exp(mpmath.mpf(epsilon))
        d = int(mpmath.ceil(s / (exp_eps + 1)))
        d = min(max(d, 1), s)
        # d e^eps / (d e^eps + s - d), written to stay finite for large epsilon
        p = float(d / (d + (s - d) * mpmath.exp(-mpmath.mpf(epsilon))))
    return SSParams(s=s, epsilon=float(epsilon), d=d, p=p)


def marginal_probs(params: SSParams) -> tuple[float, float]:
    """Inclusion probabilities ``(p, q)`` of the true and of any other index."""
    return params.p, params.q


def _sample_others(z: int, k: int, s: int, rng: np.random.Generator) -> np.ndarray:
    # uniform k-subset of [0, s) \ {z}
    picks = rng.choice(s - 1, size=k, replace=False, shuffle=False)
    return picks + (picks >= z)


def subset_select(z: int, params: SSParams, rng: np.random.Generator) -> np.ndarray:
    """Randomize index ``z``; returns the ``d`` reported indices, sorted."""
    if not 0 <= z < params.s:
        raise ValueError(f"input index {z} outside [0, {params.s})")
    if rng.random() < params.p:
        others = _sample_others(z, params.d - 1, params.s, rng)
        out = np.append(others, z)
    else:
        out = _sample_others(z, params.d, params.s, rng)
    out.sort()
    return out


def exact_output_prob(z: int, subset, params: SSParams) -> float:
    """Probability that :func:`subset_select` on ``z`` reports exactly ``subset``."""
    subset = frozenset(int(i) for i in subset)
    if len(subset) != params.d:
        raise ValueError(f"subset must have exactly d={params.d} elements")
    if not all(0 <= i < params.s for i in subset) or not 0 <= z < params.s:
        raise ValueError("index out of range")
    s, d, p = params.s, params.d, params.p
    if z in subset:
        return p / math.comb(s - 1, d - 1)
    if d > s - 1:
        return 0.0
    return (1 - p) / math.comb(s - 1, d)


def max_privacy_ratio(params: SSParams) -> float:
    """Largest ratio P(S | z) / P(S | z') over all inputs and size-d outputs.

    Brute-force enumeration; only usable for small domains.
    """
    worst = 0.0
    for subset in combinations(range(params.s), params.d):
        probs = [exact_output_prob(z, subset, params) for z in range(params.s)]
        hi, lo = max(probs), min(probs)
        if lo == 0.0:
            return math.inf
        worst = max(worst, hi / lo)
    return worst
