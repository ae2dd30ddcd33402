"""Post-hoc privacy accounting.

Two reports are produced for a run:

* a closed-form central epsilon obtained by amplification through anonymous
  aggregation of ``n = N * B`` locally randomized contributions;
* a Monte Carlo estimate of the probability that an item contributed fewer
  than ``k`` times survives a saturated trie layer (approximate
  k-anonymity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import kernels
from .randomizer import SSParams, marginal_probs, ss_params

# Above this many contributions the threshold simulation switches to
# independent per-element binomial counts.
EXACT_TAU_LIMIT = 10**6


class InapplicableBound(ValueError):
    """The closed-form amplification bound does not cover these parameters."""


class DegenerateQuery(ValueError):
    pass


@dataclass(frozen=True)
class AmplificationQuery:
    epsilon_local: float
    delta: float
    n: int

    def __post_init__(self):
        if not self.epsilon_local > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def _precondition_margin(q: AmplificationQuery):
    with mpmath.workdps(50):
        arg = mpmath.mpf(q.n) / (8 * mpmath.log(2 / mpmath.mpf(q.delta))) - 1
        if arg <= 0:
            return None
        return mpmath.log(arg)


def amplification_precondition(q: AmplificationQuery) -> bool:
    """True iff ``eps <= ln(n / (8 ln(2/delta)) - 1)``."""
    limit = _precondition_margin(q)
    return limit is not None and mpmath.mpf(q.epsilon_local) <= limit


def central_epsilon_upper(q: AmplificationQuery) -> float:
    """Closed-form central epsilon after aggregating ``n`` eps-LDP reports.

    Raises:
        InapplicableBound: when the local epsilon is too large for ``n``.
    """
    if not amplification_precondition(q):
        raise InapplicableBound(
            f"no closed-form guarantee for eps={q.epsilon_local}, n={q.n}, delta={q.delta}"
        )
    with mpmath.workdps(50):
        eps = mpmath.mpf(q.epsilon_local)
        n = mpmath.mpf(q.n)
        delta = mpmath.mpf(q.delta)
        e = mpmath.exp(eps)
        term = 4 * mpmath.sqrt(2 * mpmath.log(4 / delta)) / mpmath.sqrt((e + 1) * n) + 4 / n
        return float(mpmath.log1p((e - 1) * term))


@dataclass(frozen=True)
class KAnonQuery:
    eta_max: int
    alphabet_size: int
    nb: int
    epsilon: float
    trials: int = 1000

    def __post_init__(self):
        if self.eta_max < 1 or self.alphabet_size < 1:
            raise ValueError("eta_max and alphabet_size must be >= 1")
        if self.nb < 1:
            raise ValueError("N * B must be >= 1")
        if self.trials < 100:
            raise ValueError("need at least 100 Monte Carlo trials")

    @property
    def s(self) -> int:
        return self.eta_max * self.alphabet_size + 1

    @property
    def params(self) -> SSParams:
        return ss_params(self.s, self.epsilon)

    @property
    def method(self) -> str:
        return "exact" if self.nb <= EXACT_TAU_LIMIT else "binomial-marginals"


def kanon_tau_sample(q: KAnonQuery, rng: np.random.Generator, method: str | None = None) -> int:
    """Vote count of the ``eta_max``-th largest of ``s - 1`` background elements.

    Background counts come from ``N * B`` independent uniform ``(d - 2)``-subsets
    of the ``s - 1`` elements. The ``binomial-marginals`` method draws each
    count independently from Binomial(NB, (d - 2)/(s - 1)) instead, ignoring
    the weak negative correlation between counts.
    """
    d = q.params.d
    n = q.s - 1
    if d < 2:
        raise DegenerateQuery(f"subset size d={d} < 2")
    if q.eta_max > n:
        raise DegenerateQuery(f"eta_max={q.eta_max} exceeds s - 1 = {n}")
    method = method or q.method
    if method == "exact":
        counts = np.zeros(n, dtype=np.int64)
        seed = int(rng.integers(0, 2**64, dtype=np.uint64))
        kernels.uniform_subset_counts(q.nb, n, d - 2, seed, counts)
    elif method == "binomial-marginals":
        counts = rng.binomial(q.nb, (d - 2) / n, size=n)
    else:
        raise ValueError(f"unknown method {method!r}")
    return int(np.partition(counts, n - q.eta_max)[n - q.eta_max])


def binomial_sum_tail(k: int, nb: int, p: float, q: float, tau: int) -> float:
    """P(X + Y >= tau) for X ~ Bin(k, p), Y ~ Bin(nb - k, q), summed in log space."""
    if tau <= 0:
        return 1.0
    if tau > nb:
        return 0.0
    j = np.arange(k + 1)
    log_terms = stats.binom.logpmf(j, k, p) + stats.binom.logsf(tau - j - 1, nb - k, q)
    return float(min(1.0, math.exp(logsumexp(log_terms))))


def kanon_f_tail(k: int, q: KAnonQuery, tau: int) -> float:
    """P(f(k) >= tau) where f(k) is the vote count of an item contributed k times."""
    if not 0 <= k <= q.nb:
        raise ValueError(f"k={k} outside [0, {q.nb}]")
    p_in, p_out = marginal_probs(q.params)
    return binomial_sum_tail(k, q.nb, p_in, p_out, tau)


def kanon_estimate(
    k: int, q: KAnonQuery, rng: np.random.Generator, method: str | None = None
) -> tuple[float, float]:
    """Rao-Blackwellized estimate of P(f(k) >= tau) and its 3-sigma halfwidth."""
    taus = np.array([kanon_tau_sample(q, rng, method) for _ in range(q.trials)])
    tail = lru_cache(maxsize=None)(lambda t: kanon_f_tail(k, q, t))
    values = np.array([tail(int(t)) for t in taus])
    halfwidth = 3.0 * values.std(ddof=1) / math.sqrt(values.size)
    return float(values.mean()), float(halfwidth)


@dataclass
class KAnonResult:
    certified: bool
    k: int
    alpha: float
    estimate: float
    halfwidth: float
    method: str
    degenerate: bool
    params: dict

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "alpha": self.alpha,
            "estimate": self.estimate,
            "halfwidth": self.halfwidth,
            "certified": self.certified,
            "method": self.method,
            "degenerate": self.degenerate,
            "params": self.params,
        }


def kanon_certify(
    k: int, alpha: float, q: KAnonQuery, rng: np.random.Generator, method: str | None = None
) -> KAnonResult:
    """Certify alpha-approximate k-anonymity when estimate + halfwidth <= 1 - alpha."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    params = q.params
    method = method or q.method
    estimate, halfwidth = kanon_estimate(k, q, rng, method)
    p_in, p_out = marginal_probs(params)
    return KAnonResult(
        certified=estimate + halfwidth <= 1 - alpha,
        k=k,
        alpha=alpha,
        estimate=estimate,
        halfwidth=halfwidth,
        method=method,
        # d == 2 makes every background count zero, so nothing is certifiable
        degenerate=params.d == 2,
        params={
            "s": params.s,
            "d": params.d,
            "p": p_in,
            "q": p_out,
            "nb": q.nb,
            "eta_max": q.eta_max,
            "alphabet_size": q.alphabet_size,
            "epsilon": q.epsilon,
            "trials": q.trials,
        },
    )


def accounting_report(
    epsilon: float,
    delta: float,
    n: int,
    kanon: KAnonResult | None = None,
    epsilon_central_external: float | None = None,
) -> dict:
    """JSON-ready accounting fragment embedded in discovery reports."""
    q = AmplificationQuery(epsilon, delta, n)
    ok = amplification_precondition(q)
    return {
        "epsilon_local": epsilon,
        "delta": delta,
        "n": n,
        "precondition_ok": ok,
        "epsilon_central_closed_form": central_epsilon_upper(q) if ok else None,
        "epsilon_central_external": epsilon_central_external,
        "kanon": kanon.to_dict() if kanon is not None else None,
    }
