"""Dynamic heterogeneous academic networks.

A network is stored once as flat node and edge tables; a :class:`Snapshot`
is the cumulative view of everything observed up to a given year.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import scipy.sparse as sp

NODE_KINDS = ("paper", "author", "venue", "keyword")

# relation -> (src kind, dst kind)
RELATIONS = {
    "writes": ("author", "paper"),
    "publishes": ("paper", "venue"),
    "contains": ("paper", "keyword"),
    "cites": ("paper", "paper"),
}

# accepted aliases for the node kind the literature also calls "field"
_KIND_ALIASES = {"field": "keyword"}


class GraphError(ValueError):
    pass


class IngestError(GraphError):
    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.source = source
        self.line = line


@dataclass(frozen=True)
class NodeRef:
    id: int
    kind: str

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise GraphError(f"unknown node kind {self.kind!r}")


@dataclass(frozen=True)
class Edge:
    src: NodeRef
    dst: NodeRef
    relation: str
    year: int

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise GraphError(f"unknown relation {self.relation!r}")
        want = RELATIONS[self.relation]
        if (self.src.kind, self.dst.kind) != want:
            raise GraphError(
                f"{self.relation} edge needs {want[0]}->{want[1]}, "
                f"got {self.src.kind}->{self.dst.kind}"
            )


@dataclass(frozen=True)
class MetapathSpec:
    name: str
    kinds: tuple[str, ...]

    def __post_init__(self):
        kinds = tuple(self.kinds)
        object.__setattr__(self, "kinds", kinds)
        if len(kinds) < 3 or len(kinds) % 2 == 0:
            raise GraphError(f"metapath {self.name}: needs an odd length >= 3")
        if kinds[0] != "paper" or kinds[-1] != "paper":
            raise GraphError(f"metapath {self.name}: must start and end at paper")
        for kind in kinds:
            if kind not in NODE_KINDS:
                raise GraphError(f"metapath {self.name}: unknown kind {kind!r}")
        self.relations()

    def relations(self) -> list[str]:
        """Relation used by each hop of the path."""
        out = []
        for a, b in zip(self.kinds[:-1], self.kinds[1:]):
            rel = relation_between(a, b)
            if rel is None:
                raise GraphError(f"metapath {self.name}: no relation links {a} and {b}")
            out.append(rel)
        return out

    @classmethod
    def parse(cls, name: str) -> "MetapathSpec":
        letters = {"P": "paper", "A": "author", "V": "venue", "K": "keyword", "F": "keyword"}
        try:
            kinds = tuple(letters[c] for c in name.upper())
        except KeyError as exc:
            raise GraphError(f"cannot parse metapath {name!r}") from exc
        return cls(name.upper(), kinds)


def relation_between(a: str, b: str) -> str | None:
    for rel, pair in RELATIONS.items():
        if pair == (a, b) or pair == (b, a):
            return rel
    return None


DEFAULT_METAPATHS = (
    MetapathSpec("PAP", ("paper", "author", "paper")),
    MetapathSpec("PVP", ("paper", "venue", "paper")),
    MetapathSpec("PKP", ("paper", "keyword", "paper")),
)


@dataclass
class Snapshot:
    """Cumulative typed graph as of ``year``.

    ``nodes`` maps kind to a sorted id array; ``edges`` maps relation to a
    ``(src_ids, dst_ids)`` pair in the relation's declared orientation.
    """

    year: int
    nodes: dict[str, np.ndarray]
    edges: dict[str, tuple[np.ndarray, np.ndarray]]

    def node_ids(self) -> np.ndarray:
        return np.sort(np.concatenate([self.nodes[k] for k in NODE_KINDS]))

    def num_nodes(self) -> int:
        return int(sum(len(v) for v in self.nodes.values()))

    def has_node(self, node_id: int, kind: str | None = None) -> bool:
        kinds = [kind] if kind else NODE_KINDS
        for k in kinds:
            arr = self.nodes[k]
            pos = np.searchsorted(arr, node_id)
            if pos < len(arr) and arr[pos] == node_id:
                return True
        return False


class DynamicNetwork:
    """Node and edge tables plus cached cumulative yearly snapshots."""

    def __init__(self, node_ids, node_kinds, node_years, edges, first_year, last_year):
        order = np.argsort(node_ids, kind="stable")
        self.node_ids = np.asarray(node_ids, dtype=np.int64)[order]
        self.node_kinds = np.asarray(node_kinds, dtype=object)[order]
        self.node_years = np.asarray(node_years, dtype=np.int64)[order]
        self.edges = {}
        for rel in RELATIONS:
            src, dst, yr = edges.get(rel, ([], [], []))
            src = np.asarray(src, dtype=np.int64)
            dst = np.asarray(dst, dtype=np.int64)
            yr = np.asarray(yr, dtype=np.int64)
            eorder = np.lexsort((dst, src, yr))
            self.edges[rel] = (src[eorder], dst[eorder], yr[eorder])
        if last_year < first_year:
            raise GraphError("network needs at least one year")
        self.first_year = int(first_year)
        self.last_year = int(last_year)
        self._kind_of = dict(zip(self.node_ids.tolist(), self.node_kinds.tolist()))
        self._cache: dict[int, Snapshot] = {}

    @property
    def years(self) -> list[int]:
        return list(range(self.first_year, self.last_year + 1))

    @property
    def horizon(self) -> int:
        return self.last_year - self.first_year + 1

    def kind_of(self, node_id: int) -> str:
        return self._kind_of[int(node_id)]

    def year_of(self, node_id: int) -> int:
        pos = np.searchsorted(self.node_ids, node_id)
        return int(self.node_years[pos])

    def papers(self) -> np.ndarray:
        return self.node_ids[self.node_kinds == "paper"]

    def snapshot(self, year: int) -> Snapshot:
        if not self.first_year <= year <= self.last_year:
            raise GraphError(f"no snapshot for year {year}")
        snap = self._cache.get(year)
        if snap is None:
            present = self.node_years <= year
            nodes = {k: self.node_ids[present & (self.node_kinds == k)] for k in NODE_KINDS}
            edges = {}
            for rel, (src, dst, yr) in self.edges.items():
                keep = yr <= year
                edges[rel] = (src[keep], dst[keep])
            snap = Snapshot(year, nodes, edges)
            self._cache[year] = snap
        return snap

    @property
    def snapshots(self) -> list[Snapshot]:
        return [self.snapshot(y) for y in self.years]

    def __eq__(self, other):
        if not isinstance(other, DynamicNetwork):
            return NotImplemented
        if (self.first_year, self.last_year) != (other.first_year, other.last_year):
            return False
        if not (
            np.array_equal(self.node_ids, other.node_ids)
            and np.array_equal(self.node_kinds, other.node_kinds)
            and np.array_equal(self.node_years, other.node_years)
        ):
            return False
        return all(
            all(np.array_equal(a, b) for a, b in zip(self.edges[r], other.edges[r]))
            for r in RELATIONS
        )


@dataclass
class Dataset:
    """A network plus raw cumulative citation counts for papers with ground truth."""

    network: DynamicNetwork
    # paper id -> cumulative raw counts for years 1..L after publication
    citations: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        lengths = {len(c) for c in self.citations.values()}
        return lengths.pop() if lengths else 0

    def pub_year(self, paper_id: int) -> int:
        return self.network.year_of(paper_id)

    def papers_published(self, year: int, with_truth: bool = True) -> list[int]:
        net = self.network
        ids = net.node_ids[(net.node_kinds == "paper") & (net.node_years == year)]
        if with_truth:
            ids = [i for i in ids.tolist() if i in self.citations]
        return [int(i) for i in ids]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.network == other.network and self.citations == other.citations


# --
# Ingestion


def _read_jsonl(records, source: str) -> Iterator[tuple[int, dict]]:
    for lineno, raw in enumerate(records, start=1):
        if isinstance(raw, dict):
            yield lineno, raw
            continue
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"malformed JSON ({exc.msg})", source, lineno) from None
        if not isinstance(rec, dict):
            raise IngestError("record is not an object", source, lineno)
        yield lineno, rec


def _req_int(rec, key, source, lineno, optional=False):
    val = rec.get(key)
    if val is None:
        if optional:
            return None
        raise IngestError(f"missing field {key!r}", source, lineno)
    if isinstance(val, bool) or not isinstance(val, int):
        raise IngestError(f"field {key!r} must be an integer", source, lineno)
    return val


def ingest(node_records: Iterable, edge_records: Iterable, citation_records: Iterable = ()) -> Dataset:
    """Build a :class:`Dataset` from JSONL lines (or already-decoded dicts)."""
    kinds: dict[int, str] = {}
    declared_year: dict[int, int | None] = {}
    for lineno, rec in _read_jsonl(node_records, "nodes"):
        nid = _req_int(rec, "id", "nodes", lineno)
        kind = rec.get("kind")
        kind = _KIND_ALIASES.get(kind, kind)
        if kind not in NODE_KINDS:
            raise IngestError(f"unknown node kind {rec.get('kind')!r}", "nodes", lineno)
        year = _req_int(rec, "year", "nodes", lineno, optional=True)
        if kind == "paper" and year is None:
            raise IngestError(f"paper {nid} has no publication year", "nodes", lineno)
        if nid in kinds:
            if kinds[nid] != kind:
                raise IngestError(
                    f"node {nid} declared as {kinds[nid]} and {kind}", "nodes", lineno
                )
            if year is not None and declared_year[nid] not in (None, year):
                raise IngestError(f"node {nid} declared with two years", "nodes", lineno)
            declared_year[nid] = declared_year[nid] if year is None else year
            continue
        kinds[nid] = kind
        declared_year[nid] = year

    edges: dict[str, tuple[list, list, list]] = {r: ([], [], []) for r in RELATIONS}
    first_edge_year: dict[int, int] = {}
    seen = set()
    for lineno, rec in _read_jsonl(edge_records, "edges"):
        src = _req_int(rec, "src", "edges", lineno)
        dst = _req_int(rec, "dst", "edges", lineno)
        rel = rec.get("relation")
        if rel not in RELATIONS:
            raise IngestError(f"unknown relation {rel!r}", "edges", lineno)
        year = _req_int(rec, "year", "edges", lineno)
        for end in (src, dst):
            if end not in kinds:
                raise IngestError(f"edge references unknown node {end}", "edges", lineno)
        want = RELATIONS[rel]
        if (kinds[src], kinds[dst]) != want:
            raise IngestError(
                f"{rel} edge needs {want[0]}->{want[1]}, got {kinds[src]}->{kinds[dst]}",
                "edges",
                lineno,
            )
        if rel == "cites" and src == dst:
            raise IngestError(f"paper {src} cites itself", "edges", lineno)
        for end in (src, dst):
            dy = declared_year[end]
            if dy is not None and year < dy:
                raise IngestError(
                    f"edge dated {year} precedes node {end} (year {dy})", "edges", lineno
                )
            first_edge_year[end] = min(year, first_edge_year.get(end, year))
        key = (rel, src, dst)
        if key in seen:
            continue
        seen.add(key)
        edges[rel][0].append(src)
        edges[rel][1].append(dst)
        edges[rel][2].append(year)

    all_years = [y for y in declared_year.values() if y is not None]
    all_years += [y for rel in edges.values() for y in rel[2]]
    if not all_years:
        raise IngestError("no dated records; cannot determine the year range")
    first, last = min(all_years), max(all_years)

    ids = sorted(kinds)
    node_years = []
    for nid in ids:
        y = declared_year[nid]
        if y is None:
            y = first_edge_year.get(nid, first)
        node_years.append(y)

    network = DynamicNetwork(ids, [kinds[i] for i in ids], node_years, edges, first, last)

    citations: dict[int, tuple[int, ...]] = {}
    length = None
    for lineno, rec in _read_jsonl(citation_records, "citations"):
        pid = _req_int(rec, "paper", "citations", lineno)
        pub = _req_int(rec, "pub_year", "citations", lineno)
        counts = rec.get("counts")
        if kinds.get(pid) != "paper":
            raise IngestError(f"citation record for unknown paper {pid}", "citations", lineno)
        if pub != declared_year[pid]:
            raise IngestError(
                f"paper {pid}: pub_year {pub} disagrees with node year {declared_year[pid]}",
                "citations",
                lineno,
            )
        if (
            not isinstance(counts, list)
            or not counts
            or any(isinstance(c, bool) or not isinstance(c, int) or c < 0 for c in counts)
        ):
            raise IngestError("counts must be a nonempty list of nonnegative ints", "citations", lineno)
        if length is None:
            length = len(counts)
        elif len(counts) != length:
            raise IngestError(f"counts length {len(counts)} != {length}", "citations", lineno)
        if pid in citations:
            raise IngestError(f"duplicate citation record for paper {pid}", "citations", lineno)
        citations[pid] = tuple(counts)
    return Dataset(network, citations)


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    cit = d / "citations.jsonl"
    with open(d / "nodes.jsonl") as fn, open(d / "edges.jsonl") as fe:
        if cit.exists():
            with open(cit) as fc:
                return ingest(fn, fe, fc)
        return ingest(fn, fe, ())


def emit(dataset: Dataset) -> tuple[list[str], list[str], list[str]]:
    """Serialize a dataset to JSONL lines (nodes, edges, citations)."""
    net = dataset.network
    nodes = [
        json.dumps({"id": int(i), "kind": str(k), "year": int(y)})
        for i, k, y in zip(net.node_ids, net.node_kinds, net.node_years)
    ]
    edges = []
    for rel in RELATIONS:
        src, dst, yr = net.edges[rel]
        edges.extend(
            json.dumps({"src": int(s), "dst": int(d), "relation": rel, "year": int(y)})
            for s, d, y in zip(src, dst, yr)
        )
    cits = [
        json.dumps({"paper": pid, "pub_year": net.year_of(pid), "counts": list(c)})
        for pid, c in sorted(dataset.citations.items())
    ]
    return nodes, edges, cits


def save_dataset(dataset: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, lines in zip(("nodes", "edges", "citations"), emit(dataset)):
        (d / f"{name}.jsonl").write_text("".join(line + "\n" for line in lines))
    return d


# --
# Queries


def _incidence(snap: Snapshot, a: str, b: str) -> sp.csr_matrix:
    """Boolean incidence between kind ``a`` rows and kind ``b`` columns."""
    rel = relation_between(a, b)
    rows_ids, cols_ids = snap.nodes[a], snap.nodes[b]
    src, dst = snap.edges[rel]
    if RELATIONS[rel] == (a, b):
        r, c = src, dst
    else:
        r, c = dst, src
    if a == b:
        # cites is treated as undirected inside metapaths
        r, c = np.concatenate([src, dst]), np.concatenate([dst, src])
    ri = np.searchsorted(rows_ids, r)
    ci = np.searchsorted(cols_ids, c)
    data = np.ones(len(ri), dtype=np.int64)
    mat = sp.csr_matrix((data, (ri, ci)), shape=(len(rows_ids), len(cols_ids)))
    mat.data[:] = 1
    return mat


@dataclass
class PaperGraph:
    """Homogeneous undirected graph over a snapshot's papers."""

    ids: np.ndarray
    adjacency: sp.csr_matrix
    year: int | None = None
    metapath: str | None = None

    @property
    def n(self) -> int:
        return len(self.ids)

    def index_of(self, node_id: int) -> int:
        pos = int(np.searchsorted(self.ids, node_id))
        if pos >= len(self.ids) or self.ids[pos] != node_id:
            raise KeyError(node_id)
        return pos

    def edge_set(self) -> set[tuple[int, int]]:
        coo = self.adjacency.tocoo()
        return {(int(self.ids[i]), int(self.ids[j])) for i, j in zip(coo.row, coo.col)}


def metapath_subgraph(snap: Snapshot, metapath: MetapathSpec | str) -> PaperGraph:
    if isinstance(metapath, str):
        metapath = MetapathSpec.parse(metapath)
    for kind in metapath.kinds:
        if kind not in snap.nodes:
            raise GraphError(f"snapshot has no node kind {kind!r}")
    kinds = metapath.kinds
    reach = _incidence(snap, kinds[0], kinds[1])
    for a, b in zip(kinds[1:-1], kinds[2:]):
        reach = reach @ _incidence(snap, a, b)
        reach.data[:] = 1
    adj = (reach + reach.T).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    adj.data[:] = 1
    adj = adj.astype(np.float64)
    adj.sort_indices()
    return PaperGraph(snap.nodes["paper"], adj, snap.year, metapath.name)


def neighbor_set(snap: Snapshot, paper: NodeRef | int, relation: str) -> set[int]:
    """Ids adjacent to ``paper`` through ``relation`` (either direction) in ``snap``."""
    if isinstance(paper, NodeRef):
        if paper.kind != "paper":
            raise GraphError(f"node {paper.id} is a {paper.kind}, not a paper")
        pid = paper.id
    else:
        pid = int(paper)
        if not snap.has_node(pid, "paper"):
            raise GraphError(f"node {pid} is not a paper in the {snap.year} snapshot")
    if relation not in RELATIONS:
        raise GraphError(f"unknown relation {relation!r}")
    src, dst = snap.edges[relation]
    out = set(dst[src == pid].tolist()) | set(src[dst == pid].tolist())
    out.discard(pid)
    return out
