"""The full forecasting model and the per-dataset index structures it reads."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import RunConfig
from .encoder import HeteroEncoder, SnapshotTensors, YearEmbeddings, snapshot_tensors, temporal_aligned_loss
from .generator import CurveMLPs, Fusion, curve_values
from .graph import Dataset, MetapathSpec, metapath_subgraph
from .importance import ImportanceEncoder, SubgraphInput, subgraph_input
from .imputer import ImputerParams, TrajectoryEncoder, history_years, impute_batch, neighbor_pairs, publication_neighbors
from .ppr import PPRCache, ppr_features

log = logging.getLogger(__name__)


@dataclass
class PubYearGroup:
    """Everything needed to predict the papers published in one year."""

    year: int
    ids: np.ndarray  # papers published this year, sorted
    neighbors: list[dict[str, np.ndarray]]
    years: list[int]  # history years, ascending
    pairs: dict[int, dict]  # year -> neighbor_pairs output
    seq_index: torch.Tensor  # (N, max_len) position into ``years`` per step
    lengths: torch.Tensor  # (N,) observed history years per paper
    sub_ids: np.ndarray  # papers in the publication-year snapshot
    new_pos: torch.Tensor  # positions of ``ids`` inside ``sub_ids``
    old_pos: torch.Tensor  # positions of earlier papers inside ``sub_ids``
    old_rows: torch.Tensor  # their positions inside the previous year's encoding
    subs: dict[str, SubgraphInput]

    @property
    def trainable(self) -> np.ndarray:
        return self.lengths.numpy() > 0


class GraphContext:
    """Cached snapshot tensors, neighbor indices and PPR features for one dataset.

    Every snapshot year handed out is recorded in ``accessed`` so tests can
    check that predictions never read the future.
    """

    def __init__(self, dataset: Dataset, cfg: RunConfig, ppr_cache: PPRCache | None = None, cache_dir=None):
        self.dataset = dataset
        self.network = dataset.network
        self.cfg = cfg
        self.row_of = {int(i): r for r, i in enumerate(self.network.node_ids.tolist())}
        self.ppr = ppr_cache or PPRCache(cfg.ppr, seed=cfg.train.ppr_seed, directory=cache_dir)
        self.metapaths = [MetapathSpec.parse(m) for m in cfg.train.metapaths]
        self.accessed: list[tuple[str, int]] = []
        self._tensors: dict[int, SnapshotTensors] = {}
        self._groups: dict[int, PubYearGroup] = {}

    @property
    def n_nodes(self) -> int:
        return len(self.row_of)

    def snapshot(self, year: int, purpose: str):
        self.accessed.append((purpose, year))
        return self.network.snapshot(year)

    def tensors(self, year: int) -> SnapshotTensors:
        st = self._tensors.get(year)
        if st is None:
            st = snapshot_tensors(self.snapshot(year, "encode"), self.row_of)
            self._tensors[year] = st
        else:
            self.accessed.append(("encode", year))
        return st

    def group(self, year: int) -> PubYearGroup:
        g = self._groups.get(year)
        if g is not None:
            self.accessed.append(("neighbors", year))
            return g
        snap = self.snapshot(year, "neighbors")
        relations = list(self.dataset.network.edges)
        ids = np.asarray(self.dataset.papers_published(year, with_truth=False), dtype=np.int64)
        neighbors = [publication_neighbors(snap, int(p), relations) for p in ids]
        years = history_years(year, self.network, self.cfg.train.history_window)
        pairs, seen = {}, []
        for y in years:
            st = self.tensors(y)
            pairs[y], s = neighbor_pairs(neighbors, st.ids, relations)
            seen.append(s)
        seen = np.stack(seen, axis=1) if seen else np.zeros((len(ids), 0), bool)
        lengths = seen.sum(1)
        width = max(int(lengths.max()) if len(lengths) else 0, 1)
        seq = np.zeros((len(ids), width), dtype=np.int64)
        for i in range(len(ids)):
            obs = np.flatnonzero(seen[i])
            seq[i, : len(obs)] = obs
        sub_ids = snap.nodes["paper"]
        new_pos = np.searchsorted(sub_ids, ids)
        old_mask = np.ones(len(sub_ids), bool)
        old_mask[new_pos] = False
        old_pos = np.flatnonzero(old_mask)
        if years and years[-1] == year - 1:
            old_rows = np.searchsorted(self.tensors(year - 1).ids, sub_ids[old_pos])
        else:
            old_pos = old_pos[:0]
            old_rows = old_pos
        subs = {}
        for mp in self.metapaths:
            graph = metapath_subgraph(snap, mp)
            feats = ppr_features(self.ppr.get(graph), graph.ids, self.cfg.ppr.k)
            subs[mp.name] = subgraph_input(graph, feats, self.cfg.train.self_edges)
        g = PubYearGroup(
            year,
            ids,
            neighbors,
            years,
            pairs,
            torch.from_numpy(seq),
            torch.from_numpy(lengths.astype(np.int64)),
            sub_ids,
            torch.from_numpy(new_pos.astype(np.int64)),
            torch.from_numpy(old_pos.astype(np.int64)),
            torch.from_numpy(np.asarray(old_rows, dtype=np.int64)),
            subs,
        )
        self._groups[year] = g
        return g


# checkpoint segment -> attribute names
SEGMENTS = {
    "encoder": ("features", "encoder"),
    "imputer": ("imputer",),
    "trajectory_encoder": ("trajectory_encoder",),
    "importance": ("importance",),
    "fusion": ("fusion",),
    "mlps": ("mlps",),
}


@dataclass
class Forward:
    paper_ids: np.ndarray  # predicted papers (trainable subset, batch order)
    preds: torch.Tensor  # (N, L) log-scale cumulative citations
    time_loss: torch.Tensor
    mu: torch.Tensor
    sigma: torch.Tensor
    eta: torch.Tensor
    h: torch.Tensor  # fused paper embeddings
    semantic_weights: dict[int, torch.Tensor]
    skipped: list[int]


class CitationModel(nn.Module):
    def __init__(self, n_nodes: int, cfg: RunConfig):
        super().__init__()
        t = cfg.train
        self.cfg = cfg
        self.features = nn.Embedding(n_nodes, t.dim)
        nn.init.xavier_uniform_(self.features.weight)
        self.encoder = HeteroEncoder(t.dim, t.encoder_heads, t.encoder_layers, t.layer_norm)
        self.imputer = ImputerParams(t.dim)
        self.trajectory_encoder = TrajectoryEncoder(t.dim, t.rnn_hidden, t.rnn_layers, t.rnn_cell)
        self.importance = ImportanceEncoder(t.metapaths, t.dim, cfg.ppr.k, t.importance_heads, t.importance_layers)
        self.fusion = Fusion(t.dim)
        self.mlps = CurveMLPs(t.dim, t.mlp_hidden)
        if t.rnn_hidden != t.dim:
            raise ValueError("rnn_hidden must equal dim so trend and importance vectors can be fused")

    def segment_state(self) -> dict[str, dict]:
        full = self.state_dict()
        out = {}
        for seg, attrs in SEGMENTS.items():
            out[seg] = {k: v for k, v in full.items() if k.split(".", 1)[0] in attrs}
        return out

    def load_segments(self, segments: dict[str, dict]):
        merged = {}
        for seg in SEGMENTS:
            merged.update(segments[seg])
        self.load_state_dict(merged)

    def encode_year(self, ctx: GraphContext, year: int) -> YearEmbeddings:
        st = ctx.tensors(year)
        return YearEmbeddings(year, st.ids, self.encoder(self.features(st.node_index), st))

    def forward(self, ctx: GraphContext, paper_ids) -> Forward:
        paper_ids = np.asarray(paper_ids, dtype=np.int64)
        net = ctx.network
        pub = np.array([net.year_of(p) for p in paper_ids], dtype=np.int64)
        groups = {int(y): ctx.group(int(y)) for y in np.unique(pub)}
        years = sorted({y for g in groups.values() for y in g.years})
        enc = {y: self.encode_year(ctx, y) for y in years}
        dtype = self.features.weight.dtype
        dim = self.cfg.train.dim
        L, scale = self.cfg.generator.horizon, self.cfg.generator.alpha_scale

        out_ids, preds, mus, sigmas, etas, hs = [], [], [], [], [], []
        weights, skipped, induced = {}, [], set()
        for year, g in groups.items():
            want = paper_ids[pub == year]
            pos = np.searchsorted(g.ids, want)
            ok = g.trainable[pos]
            skipped.extend(int(p) for p in want[~ok])
            N = len(g.ids)
            if g.years:
                V = torch.stack([impute_batch(g.pairs[y], enc[y].table, N, self.imputer) for y in g.years], 1)
            else:
                V = torch.zeros(N, 0, dim, dtype=dtype)
            train_mask = torch.from_numpy(g.trainable)
            h_g = torch.zeros(N, self.trajectory_encoder.hidden, dtype=dtype)
            last_v = torch.zeros(N, dim, dtype=dtype)
            if train_mask.any():
                rows = torch.arange(N)[train_mask]
                padded = V[rows[:, None], g.seq_index[train_mask]]
                lengths = g.lengths[train_mask]
                h_g = h_g.index_put((rows,), self.trajectory_encoder(padded, lengths))
                last_v = last_v.index_put((rows,), padded[torch.arange(len(rows)), lengths - 1])
            feats = torch.zeros(len(g.sub_ids), dim, dtype=dtype)
            if len(g.old_pos):
                feats = feats.index_put((g.old_pos,), enc[year - 1].table[g.old_rows])
            feats = feats.index_put((g.new_pos,), last_v)
            h_c_all, _, w = self.importance(feats, g.subs)
            weights[year] = w
            sel = torch.from_numpy(pos[ok].astype(np.int64))
            if len(sel) == 0:
                continue
            h, _, _ = self.fusion(h_g[sel], h_c_all[g.new_pos[sel]])
            mu, sigma, eta = self.mlps(h)
            preds.append(curve_values(mu, sigma, eta, scale, L))
            out_ids.append(want[ok])
            mus.append(mu), sigmas.append(sigma), etas.append(eta), hs.append(h)
            for i in pos[ok]:
                for nb in g.neighbors[i].values():
                    induced.update(nb.tolist())

        if len(enc) >= 2:
            time_loss = temporal_aligned_loss(list(enc.values()), restrict=induced)
        else:
            time_loss = torch.zeros((), dtype=dtype)
        if skipped:
            log.info("skipped %d papers with no observed metadata neighbors", len(skipped))
        cat = lambda xs, shape: torch.cat(xs) if xs else torch.zeros(shape, dtype=dtype)  # noqa: E731
        return Forward(
            np.concatenate(out_ids) if out_ids else np.zeros(0, np.int64),
            cat(preds, (0, L)),
            time_loss,
            cat(mus, (0,)),
            cat(sigmas, (0,)),
            cat(etas, (0,)),
            cat(hs, (0, dim)),
            weights,
            skipped,
        )
