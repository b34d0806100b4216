"""Personalized PageRank: dense resolvent, sampled top-k rows, caching.

The random-walk kernel is compiled with Cython when available
(``citeforecast.ppr._walks``); otherwise a numpy implementation with the
same random streams is used. ``BACKEND`` reports which one was loaded.
"""
from .engine import (
    BACKEND,
    PPRCache,
    PPRConfig,
    PPRRows,
    approx_ppr,
    available_backends,
    cache_key,
    graph_fingerprint,
    exact_ppr,
    kernel,
    load_rows,
    ppr_feature,
    ppr_features,
    save_rows,
    source_keys,
    truncate_top_k,
)

__all__ = [
    "BACKEND",
    "PPRCache",
    "PPRConfig",
    "PPRRows",
    "approx_ppr",
    "available_backends",
    "cache_key",
    "graph_fingerprint",
    "exact_ppr",
    "kernel",
    "load_rows",
    "ppr_feature",
    "ppr_features",
    "save_rows",
    "source_keys",
    "truncate_top_k",
]
