"""NumPy fallback for the compiled voting kernels.

Same signatures and output distributions as ``_kernels.pyx``; the random
streams differ, so results only agree in distribution across backends.
"""

import numpy as np

BACKEND = "python"

# rows per argpartition block when sampling many subsets at once
_BLOCK_ELEMS = 1 << 22


def _check_out(out, n):
    if out.shape[0] != n:
        raise ValueError("output vector has the wrong length")


def ss_vote_accumulate(targets, s, d, p, seed, out):
    """Add the multi-hot Subset Selection output of every target into ``out``."""
    _check_out(out, s)
    if d < 1 or d > s:
        raise ValueError("subset size out of range")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= s):
        raise ValueError("target index out of range")
    rng = np.random.default_rng(seed)
    for z in targets:
        if rng.random() < p:
            out[z] += 1
            k = d - 1
        else:
            k = d
        if k:
            picks = rng.choice(s - 1, size=k, replace=False, shuffle=False)
            out[picks + (picks >= z)] += 1


def uniform_subset_counts(n_subsets, n, k, seed, out):
    """Add ``n_subsets`` independent uniform ``k``-subsets of ``[0, n)`` into ``out``."""
    _check_out(out, n)
    if k < 0 or k > n:
        raise ValueError("subset size out of range")
    if k == 0 or n_subsets <= 0:
        return
    rng = np.random.default_rng(seed)
    if 32 * k < n:
        for _ in range(n_subsets):
            out[rng.choice(n, size=k, replace=False, shuffle=False)] += 1
        return
    rows = max(1, _BLOCK_ELEMS // n)
    left = n_subsets
    while left:
        m = min(rows, left)
        picks = np.argpartition(rng.random((m, n)), k - 1, axis=1)[:, :k]
        out += np.bincount(picks.ravel(), minlength=n)
        left -= m
