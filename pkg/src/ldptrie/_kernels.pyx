# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled voting kernels.

Random numbers come from xoshiro256** seeded through splitmix64, so a kernel
call is a pure function of its arguments. Bounded integers use rejection and
are exactly uniform.
"""

from libc.stdint cimport uint64_t, int64_t, uint8_t
from libc.stdlib cimport malloc, calloc, free

import numpy as np

BACKEND = "cython"


cdef struct Rng:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3


cdef inline uint64_t _splitmix(uint64_t *x) noexcept nogil:
    x[0] += 0x9E3779B97F4A7C15ULL
    cdef uint64_t z = x[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline void _seed(Rng *r, uint64_t seed) noexcept nogil:
    r.s0 = _splitmix(&seed)
    r.s1 = _splitmix(&seed)
    r.s2 = _splitmix(&seed)
    r.s3 = _splitmix(&seed)


cdef inline uint64_t _rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next(Rng *r) noexcept nogil:
    cdef uint64_t result = _rotl(r.s1 * 5, 7) * 9
    cdef uint64_t t = r.s1 << 17
    r.s2 ^= r.s0
    r.s3 ^= r.s1
    r.s1 ^= r.s2
    r.s0 ^= r.s3
    r.s2 ^= t
    r.s3 = _rotl(r.s3, 45)
    return result


cdef inline double _uniform(Rng *r) noexcept nogil:
    return (_next(r) >> 11) * (1.0 / 9007199254740992.0)


cdef inline uint64_t _below(Rng *r, uint64_t n) noexcept nogil:
    # uniform on [0, n) for n >= 1
    cdef uint64_t threshold = (0 - n) % n
    cdef uint64_t x = _next(r)
    while x < threshold:
        x = _next(r)
    return x % n


cdef inline void _floyd(Rng *r, int64_t n, int64_t k, uint8_t *mark, int64_t *chosen) noexcept nogil:
    # uniform k-subset of [0, n) into chosen[0:k]; marks left set
    cdef int64_t j, t, c = 0
    for j in range(n - k, n):
        t = <int64_t>_below(r, <uint64_t>(j + 1))
        if mark[t]:
            t = j
        mark[t] = 1
        chosen[c] = t
        c += 1


def ss_vote_accumulate(const int64_t[::1] targets, int64_t s, int64_t d, double p,
                       uint64_t seed, int64_t[::1] out):
    """Add the multi-hot Subset Selection output of every target into ``out``."""
    if out.shape[0] != s:
        raise ValueError("output vector must have length s")
    if d < 1 or d > s:
        raise ValueError("subset size out of range")
    cdef Py_ssize_t m = targets.shape[0], i
    cdef int64_t z, k, c, t
    for i in range(m):
        if targets[i] < 0 or targets[i] >= s:
            raise ValueError("target index out of range")
    cdef Rng rng
    _seed(&rng, seed)
    cdef uint8_t *mark = <uint8_t *>calloc(s, 1)
    cdef int64_t *chosen = <int64_t *>malloc(d * sizeof(int64_t))
    if mark == NULL or chosen == NULL:
        free(mark)
        free(chosen)
        raise MemoryError()
    with nogil:
        for i in range(m):
            z = targets[i]
            if _uniform(&rng) < p:
                out[z] += 1
                k = d - 1
            else:
                k = d
            _floyd(&rng, s - 1, k, mark, chosen)
            for c in range(k):
                t = chosen[c]
                mark[t] = 0
                out[t + (t >= z)] += 1
    free(mark)
    free(chosen)


def uniform_subset_counts(int64_t n_subsets, int64_t n, int64_t k, uint64_t seed,
                          int64_t[::1] out):
    """Add ``n_subsets`` independent uniform ``k``-subsets of ``[0, n)`` into ``out``."""
    if out.shape[0] != n:
        raise ValueError("output vector must have length n")
    if k < 0 or k > n:
        raise ValueError("subset size out of range")
    if k == 0 or n_subsets <= 0:
        return
    cdef Rng rng
    _seed(&rng, seed)
    cdef uint8_t *mark = <uint8_t *>calloc(n, 1)
    cdef int64_t *chosen = <int64_t *>malloc(k * sizeof(int64_t))
    cdef int64_t i, c, t
    if mark == NULL or chosen == NULL:
        free(mark)
        free(chosen)
        raise MemoryError()
    with nogil:
        for i in range(n_subsets):
            _floyd(&rng, n, k, mark, chosen)
            for c in range(k):
                t = chosen[c]
                mark[t] = 0
                out[t] += 1
    free(mark)
    free(chosen)


def raw_uniforms(uint64_t seed, Py_ssize_t count):
    """First ``count`` doubles of the stream for ``seed`` (for tests)."""
    cdef Rng rng
    _seed(&rng, seed)
    res = np.empty(count, dtype=np.float64)
    cdef double[::1] view = res
    cdef Py_ssize_t i
    for i in range(count):
        view[i] = _uniform(&rng)
    return res
