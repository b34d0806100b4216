"""Pre-publication ("fake") embeddings for new papers and their recurrent encoding."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .encoder import YearEmbeddings
from .graph import RELATIONS, DynamicNetwork, Snapshot, neighbor_set

log = logging.getLogger(__name__)


class ImputerParams(nn.Module):
    """One square transform per relation, shared by all years."""

    def __init__(self, dim: int = 32, relations=tuple(RELATIONS)):
        super().__init__()
        self.dim = dim
        self.weight = nn.ParameterDict(
            {r: nn.Parameter(nn.init.xavier_uniform_(torch.empty(dim, dim))) for r in relations}
        )

    @property
    def relations(self) -> list[str]:
        return list(self.weight.keys())


@dataclass
class FakeTrajectory:
    paper: int
    years: list[int]
    vectors: torch.Tensor  # (len(years), dim)

    @property
    def start_year(self) -> int:
        return self.years[0]

    def __len__(self):
        return len(self.years)


def publication_neighbors(snap: Snapshot, paper_id: int, relations=tuple(RELATIONS)) -> dict[str, np.ndarray]:
    """Metadata neighbors of a paper in its publication-year snapshot, per relation."""
    return {r: np.array(sorted(neighbor_set(snap, paper_id, r)), dtype=np.int64) for r in relations}


def impute_embedding(neighbors: dict[str, np.ndarray], emb: YearEmbeddings, params: ImputerParams):
    """Sum over relations of W_r applied to the mean embedding of that relation's
    neighbors present in ``emb``. Returns None when no neighbor is present."""
    total = None
    for rel in params.relations:
        ids = np.intersect1d(neighbors.get(rel, ()), emb.ids)
        if len(ids) == 0:
            continue
        term = emb.rows(ids).mean(0) @ params.weight[rel].T
        total = term if total is None else total + term
    return total


def history_years(pub_year: int, network: DynamicNetwork, window: int | None) -> list[int]:
    first = network.first_year if window is None else max(network.first_year, pub_year - window)
    return list(range(first, pub_year))


def build_trajectory(
    paper_id: int,
    network: DynamicNetwork,
    embeddings: dict[int, YearEmbeddings],
    params: ImputerParams,
    window: int | None = None,
) -> FakeTrajectory | None:
    """Imputed vectors for every history year in which a metadata neighbor is observed.

    Neighbor identity comes from the publication-year snapshot; embeddings come
    only from earlier years. Returns None (and logs) for papers with no
    observed neighbor.
    """
    pub = network.year_of(paper_id)
    nbrs = publication_neighbors(network.snapshot(pub), paper_id, params.relations)
    years, vecs = [], []
    for year in history_years(pub, network, window):
        if year not in embeddings:
            continue
        v = impute_embedding(nbrs, embeddings[year], params)
        if v is not None:
            years.append(year)
            vecs.append(v)
    if not vecs:
        log.info("paper %d has no observed metadata neighbors; untrainable", paper_id)
        return None
    return FakeTrajectory(paper_id, years, torch.stack(vecs))


def neighbor_pairs(neighbors: list[dict[str, np.ndarray]], ids: np.ndarray, relations):
    """Averaging pairs for a batch in one year.

    Returns ``{relation: (paper_pos, row_pos, weight)}`` for neighbors present
    in ``ids`` and a boolean mask of papers with at least one such neighbor.
    """
    out = {}
    seen = np.zeros(len(neighbors), dtype=bool)
    for rel in relations:
        p_pos, r_pos, wts = [], [], []
        for i, nb in enumerate(neighbors):
            present = np.intersect1d(nb.get(rel, ()), ids)
            if len(present) == 0:
                continue
            seen[i] = True
            p_pos.append(np.full(len(present), i))
            r_pos.append(np.searchsorted(ids, present))
            wts.append(np.full(len(present), 1.0 / len(present)))
        if p_pos:
            out[rel] = (
                torch.from_numpy(np.concatenate(p_pos).astype(np.int64)),
                torch.from_numpy(np.concatenate(r_pos).astype(np.int64)),
                torch.from_numpy(np.concatenate(wts)),
            )
    return out, seen


def impute_batch(pairs, table: torch.Tensor, n_papers: int, params: ImputerParams) -> torch.Tensor:
    """Vectorized :func:`impute_embedding` for one year; rows without neighbors are zero."""
    out = table.new_zeros(n_papers, params.dim)
    for rel, (p_pos, r_pos, w) in pairs.items():
        mean = table.new_zeros(n_papers, table.shape[1]).index_add_(0, p_pos, table[r_pos] * w.to(table.dtype)[:, None])
        out = out + mean @ params.weight[rel].T
    return out


class TrajectoryEncoder(nn.Module):
    """Stacked gated recurrent encoder; returns the top layer's final hidden state."""

    def __init__(self, dim: int = 32, hidden: int = 32, layers: int = 3, cell: str = "gru"):
        super().__init__()
        rnn = {"gru": nn.GRU, "lstm": nn.LSTM}.get(cell)
        if rnn is None:
            raise ValueError(f"unknown cell {cell!r}")
        self.cell = cell
        self.hidden = hidden
        self.rnn = rnn(dim, hidden, num_layers=layers, batch_first=True)

    def forward(self, padded: torch.Tensor, lengths) -> torch.Tensor:
        lengths = torch.as_tensor(lengths, dtype=torch.long)
        if (lengths < 1).any():
            raise ValueError("trajectories must be nonempty")
        packed = pack_padded_sequence(padded, lengths, batch_first=True, enforce_sorted=False)
        _, state = self.rnn(packed)
        if self.cell == "lstm":
            state = state[0]
        return state[-1]


def encode_trajectory(traj: FakeTrajectory, enc: TrajectoryEncoder) -> torch.Tensor:
    if traj is None or len(traj) == 0:
        raise ValueError("empty trajectory")
    return enc(traj.vectors.unsqueeze(0), [len(traj)])[0]
