"""Node-importance embeddings from metapath subgraphs.

Within each metapath subgraph a GATv2-style layer scores neighbor pairs
from the projected features and the PPR features of both endpoints; a
semantic attention then mixes the per-metapath embeddings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .encoder import segment_softmax
from .graph import PaperGraph

SLOPE = 0.2


def attention_score(h_i, h_j, ppr_i, ppr_j, W, a, slope: float = SLOPE):
    """Unnormalized score ``a . LeakyReLU([W h_i || W h_j || ppr_i || ppr_j])``."""
    h_i, h_j = torch.as_tensor(h_i), torch.as_tensor(h_j)
    ppr_i, ppr_j = torch.as_tensor(ppr_i, dtype=h_i.dtype), torch.as_tensor(ppr_j, dtype=h_i.dtype)
    W, a = torch.as_tensor(W), torch.as_tensor(a)
    if W.shape[1] != h_i.shape[-1] or h_i.shape != h_j.shape or ppr_i.shape != ppr_j.shape:
        raise ValueError("dimension mismatch")
    joint = torch.cat([W @ h_i, W @ h_j, ppr_i, ppr_j], dim=-1)
    if a.shape[-1] != joint.shape[-1]:
        raise ValueError(f"attention vector has length {a.shape[-1]}, expected {joint.shape[-1]}")
    return a @ F.leaky_relu(joint, slope)


@dataclass
class SubgraphInput:
    """Edges of one metapath subgraph (target <- source) plus PPR features per node."""

    src: torch.Tensor
    dst: torch.Tensor
    ppr: torch.Tensor  # (n, k)
    n: int


def subgraph_input(graph: PaperGraph, ppr: np.ndarray, self_edges: bool = True) -> SubgraphInput:
    coo = graph.adjacency.tocoo()
    src, dst = coo.col.astype(np.int64), coo.row.astype(np.int64)
    if self_edges:
        loop = np.arange(graph.n, dtype=np.int64)
        src, dst = np.concatenate([src, loop]), np.concatenate([dst, loop])
    return SubgraphInput(torch.from_numpy(src), torch.from_numpy(dst), torch.as_tensor(ppr), graph.n)


class MetapathAttention(nn.Module):
    """One attention layer for one metapath; heads are concatenated and projected."""

    def __init__(self, dim: int, k: int, heads: int = 4):
        super().__init__()
        self.dim, self.k, self.heads = dim, k, heads
        self.W = nn.Parameter(torch.empty(heads, dim, dim))
        self.a = nn.Parameter(torch.empty(heads, 2 * dim + 2 * k))
        for h in range(heads):
            nn.init.xavier_uniform_(self.W.data[h])
        nn.init.xavier_uniform_(self.a.data)
        # no bias: a node without neighbors must come out as exactly zero
        self.combine = nn.Linear(heads * dim, dim, bias=False) if heads > 1 else None

    def weights(self, h, sub: SubgraphInput):
        """Projected features (n, H, dim) and normalized edge weights (E, H)."""
        d, k = self.dim, self.k
        Wh = torch.einsum("nd,hed->nhe", h, self.W)
        act_h = F.leaky_relu(Wh, SLOPE)
        act_p = F.leaky_relu(sub.ppr.to(h.dtype), SLOPE)
        # LeakyReLU of a concatenation splits into per-block terms
        left = (act_h * self.a[:, :d]).sum(-1) + act_p @ self.a[:, 2 * d : 2 * d + k].T
        right = (act_h * self.a[:, d : 2 * d]).sum(-1) + act_p @ self.a[:, 2 * d + k :].T
        e = left[sub.dst] + right[sub.src]
        return Wh, segment_softmax(F.leaky_relu(e, SLOPE), sub.dst, sub.n)

    def forward(self, h, sub: SubgraphInput):
        Wh, alpha = self.weights(h, sub)
        agg = torch.zeros_like(Wh).index_add_(0, sub.dst, alpha.unsqueeze(-1) * Wh[sub.src])
        z = F.leaky_relu(agg, SLOPE)
        if self.combine is None:
            return z[:, 0]
        return self.combine(z.reshape(h.shape[0], -1))


class SemanticFusion(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.W = nn.Linear(dim, dim, bias=False)
        self.q = nn.Parameter(nn.init.xavier_uniform_(torch.empty(1, dim))[0])

    def forward(self, zs: list[torch.Tensor]):
        """Fused embeddings (n, dim) and metapath weights (P,)."""
        if not zs:
            raise ValueError("need at least one metapath")
        logits = torch.stack([self.q @ F.relu(self.W(z)).mean(0) for z in zs])
        weights = torch.softmax(logits, 0)
        fused = sum(w * z for w, z in zip(weights, zs))
        return fused, weights


def semantic_fusion(zs, fusion: SemanticFusion):
    return fusion(list(zs))


class ImportanceEncoder(nn.Module):
    def __init__(self, metapaths, dim: int = 32, k: int = 32, heads: int = 4, layers: int = 2):
        super().__init__()
        self.metapaths = list(metapaths)
        self.stacks = nn.ModuleDict(
            {m: nn.ModuleList(MetapathAttention(dim, k, heads) for _ in range(layers)) for m in self.metapaths}
        )
        self.fusion = SemanticFusion(dim)

    def per_metapath(self, h, subs: dict[str, SubgraphInput]) -> list[torch.Tensor]:
        zs = []
        for m in self.metapaths:
            z = h
            for layer in self.stacks[m]:
                z = layer(z, subs[m])
            zs.append(z)
        return zs

    def forward(self, h, subs: dict[str, SubgraphInput]):
        """Fused importance embeddings, per-metapath embeddings, metapath weights."""
        zs = self.per_metapath(h, subs)
        fused, weights = self.fusion(zs)
        return fused, zs, weights


def aggregate_metapath(layer: MetapathAttention, h, sub: SubgraphInput):
    return layer(h, sub)
