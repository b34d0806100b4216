# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled random-walk kernel for approximate personalized PageRank.

Must stay stream-compatible with ``_walks_py.walk_counts``: every walker
owns a splitmix64 stream seeded from (source key, walk index), so both
backends produce identical counts.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double next_unit(uint64_t *state) noexcept nogil:
    state[0] += GOLDEN
    return <double>(mix64(state[0]) >> 11) * INV53


cdef enum:
    LANES = 8


def walk_counts(const int64_t[::1] indptr, const int64_t[::1] indices,
                const int64_t[::1] sources, const uint64_t[::1] keys,
                int64_t n_walks, double alpha):
    """Termination counts, shape (len(sources), n), of geometric-length walks.

    LANES walkers advance in lockstep so their dependency chains overlap;
    a finished lane is refilled with the next walk index.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = sources.shape[0]
    out = np.zeros((m, n), dtype=np.int64)
    cdef int64_t[:, ::1] counts = out
    cdef Py_ssize_t s
    cdef int lane, live
    cdef int64_t next_walk, src, deg, pick, c
    cdef uint64_t key
    cdef uint64_t state[LANES]
    cdef int64_t cur[LANES]
    cdef bint busy[LANES]
    cdef double u, scale = 1.0 / (1.0 - alpha)
    with nogil:
        for s in range(m):
            src = sources[s]
            key = keys[s]
            next_walk = 0
            live = 0
            for lane in range(LANES):
                busy[lane] = next_walk < n_walks
                if busy[lane]:
                    state[lane] = mix64(key + GOLDEN * <uint64_t>(next_walk + 1))
                    cur[lane] = src
                    next_walk += 1
                    live += 1
            while live > 0:
                for lane in range(LANES):
                    if not busy[lane]:
                        continue
                    c = cur[lane]
                    u = next_unit(&state[lane])
                    if u < alpha:
                        counts[s, c] += 1
                        if next_walk < n_walks:
                            state[lane] = mix64(key + GOLDEN * <uint64_t>(next_walk + 1))
                            cur[lane] = src
                            next_walk += 1
                        else:
                            busy[lane] = False
                            live -= 1
                        continue
                    deg = indptr[c + 1] - indptr[c]
                    if deg == 0:
                        continue
                    # u is uniform on [alpha, 1) here; rescale it to choose the neighbor
                    pick = <int64_t>((u - alpha) * scale * deg)
                    if pick >= deg:
                        pick = deg - 1
                    cur[lane] = indices[indptr[c] + pick]
    return out
