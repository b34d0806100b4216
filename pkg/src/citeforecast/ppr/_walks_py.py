"""Pure numpy random-walk kernel; the fallback when the extension is unavailable.

All walkers of one source advance together. Each walker keeps its own
splitmix64 state and only draws when the scalar kernel would, so the counts
match the compiled kernel exactly.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _next_unit(states):
    states += GOLDEN
    return (mix64(states) >> np.uint64(11)).astype(np.float64) * _INV53


def walk_counts(indptr, indices, sources, keys, n_walks, alpha):
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    n = len(indptr) - 1
    out = np.zeros((len(sources), n), dtype=np.int64)
    walk_no = np.arange(1, n_walks + 1, dtype=np.uint64)
    deg_all = np.diff(indptr)
    scale = 1.0 / (1.0 - alpha)
    with np.errstate(over="ignore"):
        for s, (src, key) in enumerate(zip(sources, keys)):
            states = mix64(np.uint64(key) + GOLDEN * walk_no)
            cur = np.full(n_walks, src, dtype=np.int64)
            while len(cur):
                u = _next_unit(states)
                stop = u < alpha
                if stop.any():
                    out[s] += np.bincount(cur[stop], minlength=n)
                    keep = ~stop
                    cur, states, u = cur[keep], states[keep], u[keep]
                deg = deg_all[cur]
                move = deg > 0
                if move.any():
                    d = deg[move]
                    pick = ((u[move] - alpha) * scale * d).astype(np.int64)
                    pick = np.minimum(pick, d - 1)
                    cur[move] = indices[indptr[cur[move]] + pick]
    return out
