"""Hot-loop kernels: the compiled extension when built, else the NumPy fallback.

Set ``LDPTRIE_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("LDPTRIE_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import BACKEND, ss_vote_accumulate, uniform_subset_counts
else:
    try:
        from ._kernels import BACKEND, ss_vote_accumulate, uniform_subset_counts
    except ImportError:
        from ._kernels_py import BACKEND, ss_vote_accumulate, uniform_subset_counts

__all__ = ["BACKEND", "ss_vote_accumulate", "uniform_subset_counts"]
