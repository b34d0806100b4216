"""Compare the compiled and numpy random-walk kernels on random paper graphs.

    python3 benchmarks/bench_ppr.py --sizes 100 200 400 --repeat 3
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from citeforecast.graph import PaperGraph
from citeforecast.ppr import PPRConfig, approx_ppr, available_backends


def random_graph(n, avg_degree, rng):
    m = int(n * avg_degree / 2)
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    keep = src != dst
    a = sp.coo_matrix((np.ones(keep.sum()), (src[keep], dst[keep])), shape=(n, n)).tocsr()
    a = ((a + a.T) > 0).astype(np.float64)
    return PaperGraph(np.arange(n), a.tocsr(), 0, "PAP")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400])
    parser.add_argument("--degree", type=float, default=6.0)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--epsilon", type=float, default=0.05)
    args = parser.parse_args()

    backends = available_backends()
    cfg = PPRConfig(epsilon=args.epsilon)
    rng = np.random.default_rng(0)
    print(f"{'n':>6} {'walks/src':>10} " + " ".join(f"{b + ' s':>12}" for b in backends) + "   speedup  identical")
    for n in args.sizes:
        g = random_graph(n, args.degree, rng)
        times, rows = {}, {}
        for b in backends:
            best = np.inf
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                rows[b] = approx_ppr(g, cfg, seed=0, backend=b)
                best = min(best, time.perf_counter() - t0)
            times[b] = best
        same = len({id(r) for r in rows.values()}) == 1 or all(rows[b] == rows[backends[0]] for b in backends)
        speed = times.get("python", np.nan) / times.get("compiled", np.nan)
        print(f"{n:>6} {cfg.n_walks(n):>10} " + " ".join(f"{times[b]:>12.4f}" for b in backends) + f"   {speed:7.1f}x  {same}")


if __name__ == "__main__":
    main()
