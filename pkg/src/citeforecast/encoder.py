"""Type-aware multi-head attention encoder for yearly snapshots.

One :class:`HeteroEncoder` is shared by every year. Edges are used in both
directions, each direction with its own attention and message transforms
(the relation's "meta edge"). Node kinds get their own key/query/value and
output projections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .graph import NODE_KINDS, RELATIONS, GraphError, Snapshot

EDGE_TYPES = tuple(f"{rel}{suffix}" for rel in RELATIONS for suffix in ("", "_rev"))


@dataclass
class SnapshotTensors:
    """Index view of a snapshot: global node rows, kind codes, typed local edges."""

    year: int
    node_index: torch.Tensor  # (n,) rows into the feature table
    ids: np.ndarray  # (n,) node ids, sorted
    kinds: torch.Tensor  # (n,) index into NODE_KINDS
    edges: dict[str, tuple[torch.Tensor, torch.Tensor]]  # edge type -> (src, dst) local

    @property
    def n(self) -> int:
        return len(self.ids)


def snapshot_tensors(snap: Snapshot, id_to_row: dict[int, int]) -> SnapshotTensors:
    for kind in snap.nodes:
        if kind not in NODE_KINDS:
            raise GraphError(f"unknown node kind {kind!r} in snapshot")
    for rel in snap.edges:
        if rel not in RELATIONS:
            raise GraphError(f"unknown relation {rel!r} in snapshot")
    ids = snap.node_ids()
    kind_code = {}
    for code, kind in enumerate(NODE_KINDS):
        for nid in snap.nodes[kind].tolist():
            kind_code[nid] = code
    kinds = torch.tensor([kind_code[i] for i in ids.tolist()], dtype=torch.long)
    rows = torch.tensor([id_to_row[i] for i in ids.tolist()], dtype=torch.long)
    edges = {}
    for rel, (src, dst) in snap.edges.items():
        s = torch.from_numpy(np.searchsorted(ids, src).astype(np.int64))
        d = torch.from_numpy(np.searchsorted(ids, dst).astype(np.int64))
        edges[rel] = (s, d)
        edges[f"{rel}_rev"] = (d, s)
    return SnapshotTensors(snap.year, rows, ids, kinds, edges)


def segment_softmax(scores: torch.Tensor, index: torch.Tensor, n: int) -> torch.Tensor:
    """Softmax of ``scores`` (E, H) within groups sharing ``index`` (E,)."""
    if scores.numel() == 0:
        return scores
    expanded = index.unsqueeze(-1).expand_as(scores)
    peak = torch.full((n, scores.shape[1]), -math.inf, dtype=scores.dtype)
    peak = peak.scatter_reduce(0, expanded, scores.detach(), reduce="amax", include_self=True)
    ex = torch.exp(scores - peak[index])
    total = torch.zeros((n, scores.shape[1]), dtype=scores.dtype).index_add_(0, index, ex)
    return ex / total[index]


def by_kind(mods, h, kinds, width):
    """Apply ``mods[c]`` to the rows of ``h`` whose kind code is ``c``."""
    out = h.new_zeros(h.shape[0], width)
    for code, mod in enumerate(mods):
        mask = kinds == code
        if mask.any():
            out = out.index_put((mask,), mod(h[mask]))
    return out


class TypedAttentionLayer(nn.Module):
    def __init__(self, dim: int, heads: int, layer_norm: bool = True):
        super().__init__()
        if dim % heads:
            raise ValueError("heads must divide dim")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        nk, ne = len(NODE_KINDS), len(EDGE_TYPES)
        self.key = nn.ModuleList(nn.Linear(dim, dim) for _ in range(nk))
        self.query = nn.ModuleList(nn.Linear(dim, dim) for _ in range(nk))
        self.value = nn.ModuleList(nn.Linear(dim, dim) for _ in range(nk))
        self.update = nn.ModuleList(nn.Linear(dim, dim, bias=False) for _ in range(nk))
        self.norm = nn.ModuleList(
            nn.LayerNorm(dim) if layer_norm else nn.Identity() for _ in range(nk)
        )
        eye = torch.eye(self.head_dim).expand(ne, heads, -1, -1)
        self.rel_att = nn.Parameter(eye.clone())
        self.rel_msg = nn.Parameter(eye.clone())
        self.rel_prior = nn.Parameter(torch.ones(ne, heads))

    def forward(self, h, kinds, edges):
        n, H, dh = h.shape[0], self.heads, self.head_dim
        k = by_kind(self.key, h, kinds, self.dim).view(n, H, dh)
        q = by_kind(self.query, h, kinds, self.dim).view(n, H, dh)
        v = by_kind(self.value, h, kinds, self.dim).view(n, H, dh)
        scores, msgs, targets = [], [], []
        for e, etype in enumerate(EDGE_TYPES):
            if etype not in edges:
                continue
            src, dst = edges[etype]
            if len(src) == 0:
                continue
            ks = torch.einsum("ehd,hdf->ehf", k[src], self.rel_att[e])
            s = (ks * q[dst]).sum(-1) * self.rel_prior[e] / math.sqrt(dh)
            scores.append(s)
            msgs.append(torch.einsum("ehd,hdf->ehf", v[src], self.rel_msg[e]))
            targets.append(dst)
        if scores:
            scores = torch.cat(scores)
            msgs = torch.cat(msgs)
            targets = torch.cat(targets)
            att = segment_softmax(scores, targets, n)
            agg = torch.zeros(n, H, dh, dtype=h.dtype).index_add_(0, targets, att.unsqueeze(-1) * msgs)
            agg = agg.reshape(n, self.dim)
            h = h + by_kind(self.update, F.gelu(agg), kinds, self.dim)
        return by_kind(self.norm, h, kinds, self.dim)


class HeteroEncoder(nn.Module):
    """Shared snapshot encoder: per-kind input projection then typed attention layers."""

    def __init__(self, dim: int = 32, heads: int = 4, layers: int = 2, layer_norm: bool = True):
        super().__init__()
        self.dim, self.heads = dim, heads
        self.input_proj = nn.ModuleList(nn.Linear(dim, dim) for _ in NODE_KINDS)
        self.layers = nn.ModuleList(TypedAttentionLayer(dim, heads, layer_norm) for _ in range(layers))

    def project(self, x, kinds):
        return by_kind(self.input_proj, x, kinds, self.dim)

    def self_path(self, x, kinds):
        """Output for nodes with no incident edges: projection plus per-layer norms only."""
        h = self.project(x, kinds)
        for layer in self.layers:
            h = by_kind(layer.norm, h, kinds, self.dim)
        return h

    def forward(self, x, st: SnapshotTensors):
        """Encode snapshot ``st`` given its node input features ``x`` (n, dim)."""
        if x.shape[-1] != self.dim:
            raise ValueError(f"feature width {x.shape[-1]} != encoder width {self.dim}")
        h = self.project(x, st.kinds)
        for layer in self.layers:
            h = layer(h, st.kinds, st.edges)
        return h


@dataclass
class YearEmbeddings:
    year: int
    ids: np.ndarray  # sorted node ids
    table: torch.Tensor  # (len(ids), dim)

    def rows(self, node_ids) -> torch.Tensor:
        pos = np.searchsorted(self.ids, np.asarray(node_ids, dtype=np.int64))
        return self.table[torch.from_numpy(pos)]

    def as_dict(self) -> dict[int, torch.Tensor]:
        return {int(i): self.table[j] for j, i in enumerate(self.ids)}


def encode_snapshot(snap: Snapshot, encoder: HeteroEncoder, features: nn.Embedding, id_to_row) -> YearEmbeddings:
    st = snapshot_tensors(snap, id_to_row)
    x = features(st.node_index)
    return YearEmbeddings(snap.year, st.ids, encoder(x, st))


def temporal_aligned_loss(years: list[YearEmbeddings], restrict=None) -> torch.Tensor:
    """Mean over adjacent year pairs of the mean squared drift of shared nodes.

    ``restrict`` optionally limits the shared sets to the given node ids. A
    pair with no shared nodes contributes zero.
    """
    if len(years) < 2:
        raise ValueError("need at least two years")
    years = sorted(years, key=lambda y: y.year)
    keep = None if restrict is None else np.asarray(sorted(set(int(i) for i in restrict)), dtype=np.int64)
    total = years[0].table.new_zeros(())
    for a, b in zip(years[:-1], years[1:]):
        shared = np.intersect1d(a.ids, b.ids, assume_unique=True)
        if keep is not None:
            shared = np.intersect1d(shared, keep, assume_unique=True)
        if len(shared) == 0:
            continue
        diff = a.rows(shared) - b.rows(shared)
        total = total + (diff * diff).sum(-1).mean()
    return total / (len(years) - 1)
