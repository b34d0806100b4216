"""Exact and sampled personalized PageRank over paper subgraphs."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _walks_py

try:
    if os.environ.get("CITEFORECAST_PURE_PYTHON"):
        raise ImportError("compiled kernel disabled by environment")
    from . import _walks as _compiled
except ImportError:
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_MASK64 = (1 << 64) - 1


def available_backends() -> list[str]:
    return (["compiled"] if _compiled is not None else []) + ["python"]


def kernel(backend: str | None = None):
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled PPR kernel is not built")
        return _compiled.walk_counts
    if backend == "python":
        return _walks_py.walk_counts
    raise ValueError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class PPRConfig:
    alpha_teleport: float = 0.15
    epsilon: float = 0.05
    k: int = 32
    walk_budget_constant: float = 16.0

    def __post_init__(self):
        if not 0 < self.alpha_teleport < 1:
            raise ValueError("alpha_teleport must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.walk_budget_constant <= 0:
            raise ValueError("walk_budget_constant must be positive")

    def n_walks(self, n: int) -> int:
        # ln(2) floor keeps single-node graphs from getting a zero budget
        return math.ceil(self.walk_budget_constant * math.log(max(n, 2)) / self.epsilon**2)


@dataclass
class PPRRows:
    """Top-k PPR entries per source; ``targets`` is padded with -1."""

    sources: np.ndarray  # (m,) node ids
    targets: np.ndarray  # (m, k) node ids
    scores: np.ndarray  # (m, k) descending

    def __post_init__(self):
        self._pos = {int(s): i for i, s in enumerate(self.sources)}

    @property
    def k(self) -> int:
        return self.scores.shape[1]

    def row(self, node_id: int) -> list[tuple[int, float]]:
        i = self._pos.get(int(node_id))
        if i is None:
            return []
        keep = self.targets[i] >= 0
        return list(zip(self.targets[i][keep].tolist(), self.scores[i][keep].tolist()))

    def dense(self, ids: np.ndarray) -> np.ndarray:
        """Rows scattered into a dense (m, len(ids)) matrix aligned to ``ids``."""
        out = np.zeros((len(self.sources), len(ids)))
        for i in range(len(self.sources)):
            keep = self.targets[i] >= 0
            cols = np.searchsorted(ids, self.targets[i][keep])
            out[i, cols] = self.scores[i][keep]
        return out

    def __eq__(self, other):
        if not isinstance(other, PPRRows):
            return NotImplemented
        return (
            np.array_equal(self.sources, other.sources)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.scores, other.scores)
        )


def _patch_isolated(adj: np.ndarray) -> np.ndarray:
    adj = np.array(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if (adj < 0).any():
        raise ValueError("adjacency must be nonnegative")
    deg = adj.sum(axis=1)
    lonely = deg == 0
    adj[lonely, lonely] = 1.0
    return adj


def exact_ppr(adjacency, alpha_teleport: float) -> np.ndarray:
    """Dense resolvent ``alpha * (I - (1 - alpha) D^-1 A)^-1``; zero-degree rows get a self-loop."""
    if sp.issparse(adjacency):
        adjacency = adjacency.toarray()
    adj = _patch_isolated(adjacency)
    if not 0 < alpha_teleport < 1:
        raise ValueError("alpha_teleport must lie in (0, 1)")
    n = adj.shape[0]
    trans = adj / adj.sum(axis=1, keepdims=True)
    system = np.eye(n) - (1.0 - alpha_teleport) * trans
    try:
        return alpha_teleport * np.linalg.solve(system, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise ValueError("PPR system is singular") from exc


def source_keys(node_ids, seed: int) -> np.ndarray:
    """Per-source stream keys; a node keeps its stream whatever graph it sits in."""
    with np.errstate(over="ignore"):
        base = _walks_py.mix64(np.uint64(seed & _MASK64))
        ids = np.asarray(node_ids, dtype=np.int64).astype(np.uint64)
        return _walks_py.mix64(base ^ _walks_py.mix64(ids))


def _as_csr(graph):
    from ..graph import PaperGraph

    if isinstance(graph, PaperGraph):
        return graph.adjacency.tocsr(), np.asarray(graph.ids)
    if sp.issparse(graph):
        csr = graph.tocsr()
    else:
        csr = sp.csr_matrix(np.asarray(graph))
    return csr, np.arange(csr.shape[0])


def truncate_top_k(counts: np.ndarray, k: int):
    """Column positions and values of the k largest entries per row, ties to the lower index."""
    m, n = counts.shape
    kk = min(k, n)
    cols = np.argsort(-counts, axis=1, kind="stable")[:, :kk]
    vals = np.take_along_axis(counts, cols, axis=1)
    return cols, vals


def approx_ppr(
    graph,
    cfg: PPRConfig = PPRConfig(),
    seed: int = 0,
    n_walks: int | None = None,
    backend: str | None = None,
    chunk: int = 256,
) -> PPRRows:
    """Monte Carlo PPR rows for every node of ``graph``, truncated to top ``cfg.k``.

    ``graph`` is a :class:`~citeforecast.graph.PaperGraph`, a scipy sparse
    matrix or a dense array; nonzero entries are unweighted edges.
    """
    csr, ids = _as_csr(graph)
    n = csr.shape[0]
    if n == 0:
        raise ValueError("graph is empty")
    if n_walks is None:
        n_walks = cfg.n_walks(n)
    if n_walks <= 0:
        raise ValueError("walk budget must be positive")
    indptr = csr.indptr.astype(np.int64)
    indices = csr.indices.astype(np.int64)
    walk = kernel(backend)
    keys = source_keys(ids, seed)
    k = min(cfg.k, n)
    targets = np.full((n, cfg.k), -1, dtype=np.int64)
    scores = np.zeros((n, cfg.k))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sources = np.arange(start, stop, dtype=np.int64)
        counts = walk(indptr, indices, sources, keys[start:stop], int(n_walks), float(cfg.alpha_teleport))
        cols, vals = truncate_top_k(counts, k)
        hit = vals > 0
        targets[start:stop, :k] = np.where(hit, ids[cols], -1)
        scores[start:stop, :k] = np.where(hit, vals / n_walks, 0.0)
    return PPRRows(np.asarray(ids, dtype=np.int64), targets, scores)


def ppr_feature(rows: PPRRows, node_id: int, k: int) -> np.ndarray:
    """Node's top-k PPR scores, descending, zero-padded to length k."""
    out = np.zeros(k)
    vals = sorted((s for _, s in rows.row(node_id)), reverse=True)[:k]
    out[: len(vals)] = vals
    return out


def ppr_features(rows: PPRRows, ids, k: int) -> np.ndarray:
    """Stacked :func:`ppr_feature` for many nodes."""
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros((len(ids), k))
    pos = np.searchsorted(rows.sources, ids)
    pos = np.clip(pos, 0, max(len(rows.sources) - 1, 0))
    found = rows.sources[pos] == ids if len(rows.sources) else np.zeros(len(ids), bool)
    kk = min(k, rows.k)
    vals = -np.sort(-rows.scores[pos[found]], axis=1)[:, :kk]
    out[found, :kk] = vals
    return out


# --
# Cache


def graph_fingerprint(graph) -> str:
    """Short content hash of a paper graph, so caches never mix datasets."""
    adj = graph.adjacency.tocsr()
    h = hashlib.sha256()
    for arr in (np.asarray(graph.ids, dtype=np.int64), adj.indptr.astype(np.int64), adj.indices.astype(np.int64)):
        h.update(arr.tobytes())
    return h.hexdigest()[:12]


def cache_key(year, metapath, cfg: PPRConfig, seed: int, fingerprint: str = "") -> str:
    key = f"ppr_{year}_{metapath}_a{cfg.alpha_teleport:g}_k{cfg.k}_e{cfg.epsilon:g}_c{cfg.walk_budget_constant:g}_s{seed}"
    return f"{key}_{fingerprint}" if fingerprint else key


def save_rows(rows: PPRRows, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "meta": meta or {},
        "sources": rows.sources.tolist(),
        "targets": rows.targets.tolist(),
        "scores": rows.scores.tolist(),
    }
    path.write_text(json.dumps(payload, sort_keys=True))
    return path


def load_rows(path) -> PPRRows:
    payload = json.loads(Path(path).read_text())
    k = len(payload["targets"][0]) if payload["targets"] else 0
    return PPRRows(
        np.asarray(payload["sources"], dtype=np.int64),
        np.asarray(payload["targets"], dtype=np.int64).reshape(-1, k),
        np.asarray(payload["scores"], dtype=np.float64).reshape(-1, k),
    )


class PPRCache:
    """Memoizes rows keyed by (year, metapath, config, seed, graph content); optionally on disk."""

    def __init__(self, cfg: PPRConfig = PPRConfig(), seed: int = 0, directory=None):
        self.cfg = cfg
        self.seed = seed
        self.directory = Path(directory) if directory else None
        self._rows: dict[str, PPRRows] = {}

    def get(self, graph) -> PPRRows:
        key = cache_key(graph.year, graph.metapath, self.cfg, self.seed, graph_fingerprint(graph))
        rows = self._rows.get(key)
        if rows is not None:
            return rows
        path = self.directory / f"{key}.json" if self.directory else None
        if path is not None and path.exists():
            rows = load_rows(path)
        else:
            rows = approx_ppr(graph, self.cfg, seed=self.seed)
            if path is not None:
                meta = {"year": graph.year, "metapath": graph.metapath, "seed": self.seed, **asdict(self.cfg)}
                save_rows(rows, path, meta)
        self._rows[key] = rows
        return rows
