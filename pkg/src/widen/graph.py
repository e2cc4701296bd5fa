"""Typed heterogeneous graph loaded from TSV node/edge files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNLABELED = "-"
SELF_LOOP_PREFIX = "selfloop:"

TRAIN = "train"
VALIDATION = "validation"
TEST = "test"
UNTAGGED = "unlabeled"
HOLDOUT = "inductive-holdout"


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class HeteroGraph:
    """Immutable node/edge store.

    Nodes are stored contiguously (0-based here; the 1-based global index of
    the literature is ``index + 1``). Self-loop edge types, one per node type,
    live in the edge-type table but never in the adjacency lists.
    """

    node_ids: tuple[str, ...]
    node_types: np.ndarray  # (N,) int
    features: np.ndarray  # (N, d0) float64
    labels: np.ndarray  # (N,) int, -1 when unlabeled
    adjacency: tuple[tuple[tuple[int, int], ...], ...]
    node_type_names: tuple[str, ...]
    edge_type_names: tuple[str, ...]
    class_names: tuple[str, ...]
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self._index:
            self._index.update({nid: i for i, nid in enumerate(self.node_ids)})

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_type_names)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency)

    def index_of(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def neighbors(self, t: int) -> tuple[tuple[int, int], ...]:
        if not 0 <= t < self.num_nodes:
            raise IndexError(f"node index {t} out of range [0, {self.num_nodes})")
        return self.adjacency[t]

    def self_loop_type(self, node_type: int) -> int:
        if not 0 <= node_type < len(self.node_type_names):
            raise KeyError(f"unknown node type id {node_type}")
        return self.edge_type_names.index(SELF_LOOP_PREFIX + self.node_type_names[node_type])

    def without(self, drop: set[int]) -> "HeteroGraph":
        """Subgraph with ``drop`` nodes and their incident edges removed.

        Node and edge types left without members are dropped from the type
        tables, so a model trained on the subgraph only knows the types it
        actually saw. The class table is kept whole to keep label ids stable.
        """
        keep = [i for i in range(self.num_nodes) if i not in drop]
        remap = {old: new for new, old in enumerate(keep)}
        edges = [[(remap[j], et) for j, et in self.adjacency[i] if j in remap] for i in keep]

        live_ntypes = sorted({int(self.node_types[i]) for i in keep})
        ntype_map = {old: new for new, old in enumerate(live_ntypes)}
        live_names = {self.node_type_names[k] for k in live_ntypes}
        used = {et for adj in edges for _, et in adj}
        live_etypes = [
            k
            for k, name in enumerate(self.edge_type_names)
            if k in used or (name.startswith(SELF_LOOP_PREFIX) and name[len(SELF_LOOP_PREFIX):] in live_names)
        ]
        etype_map = {old: new for new, old in enumerate(live_etypes)}
        return HeteroGraph(
            node_ids=tuple(self.node_ids[i] for i in keep),
            node_types=np.array([ntype_map[int(self.node_types[i])] for i in keep], dtype=self.node_types.dtype),
            features=self.features[keep],
            labels=self.labels[keep],
            adjacency=tuple(tuple((j, etype_map[et]) for j, et in adj) for adj in edges),
            node_type_names=tuple(self.node_type_names[k] for k in live_ntypes),
            edge_type_names=tuple(self.edge_type_names[k] for k in live_etypes),
            class_names=self.class_names,
        )


def _lines(path: Path):
    text = Path(path).read_text(encoding="utf-8").replace("\r\n", "\n").replace("\r", "\n")
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line


def _class_sort_key(name: str):
    return (0, int(name), "") if name.lstrip("-").isdigit() else (1, 0, name)


def ingest(nodes_path, edges_path, undirected: bool = True) -> HeteroGraph:
    node_ids: list[str] = []
    index: dict[str, int] = {}
    type_of: list[str] = []
    label_of: list[str] = []
    rows: list[list[float]] = []
    d0 = None
    for lineno, line in _lines(nodes_path):
        parts = line.split("\t")
        if len(parts) != 4:
            raise IngestError(f"{nodes_path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        nid, ntype, label, feats = parts
        if nid in index:
            raise IngestError(f"{nodes_path}:{lineno}: duplicate node id {nid!r}")
        try:
            vec = [float(v) for v in feats.split(",")] if feats.strip() else []
        except ValueError as exc:
            raise IngestError(f"{nodes_path}:{lineno}: bad feature value ({exc})") from None
        if d0 is None:
            d0 = len(vec)
        elif len(vec) != d0:
            raise IngestError(
                f"{nodes_path}:{lineno}: ragged feature row, {len(vec)} values where {d0} expected"
            )
        index[nid] = len(node_ids)
        node_ids.append(nid)
        type_of.append(ntype)
        label_of.append(label.strip())
        rows.append(vec)

    node_type_names = tuple(dict.fromkeys(type_of))
    type_id = {name: i for i, name in enumerate(node_type_names)}
    class_names = tuple(sorted({l for l in label_of if l != UNLABELED}, key=_class_sort_key))
    class_id = {name: i for i, name in enumerate(class_names)}

    adjacency: list[list[tuple[int, int]]] = [[] for _ in node_ids]
    edge_types: list[str] = []
    edge_type_id: dict[str, int] = {}
    for lineno, line in _lines(edges_path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise IngestError(f"{edges_path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        src, dst, etype = parts
        for nid in (src, dst):
            if nid not in index:
                raise IngestError(f"{edges_path}:{lineno}: unknown node id {nid!r}")
        if etype not in edge_type_id:
            edge_type_id[etype] = len(edge_types)
            edge_types.append(etype)
        et = edge_type_id[etype]
        s, d = index[src], index[dst]
        adjacency[s].append((d, et))
        if undirected:
            adjacency[d].append((s, et))
    edge_types.extend(SELF_LOOP_PREFIX + name for name in node_type_names)

    return HeteroGraph(
        node_ids=tuple(node_ids),
        node_types=np.array([type_id[t] for t in type_of], dtype=np.int64),
        features=np.array(rows, dtype=np.float64).reshape(len(node_ids), d0 or 0),
        labels=np.array([class_id.get(l, -1) for l in label_of], dtype=np.int64),
        adjacency=tuple(tuple(a) for a in adjacency),
        node_type_names=node_type_names,
        edge_type_names=tuple(edge_types),
        class_names=class_names,
    )


def split(
    g: HeteroGraph,
    train: float = 0.6,
    validation: float = 0.2,
    test: float = 0.2,
    label_fraction: float = 1.0,
    seed: int = 0,
    exclude: set[int] | frozenset[int] = frozenset(),
) -> list[str]:
    """Assigns a split tag to every node.

    Labeled nodes are shuffled by ``seed`` and cut into train/validation/test
    blocks; the train block is then cut down to ``label_fraction`` of its
    size. Nodes in ``exclude`` are tagged as inductive holdouts.
    """
    if train + validation + test > 1.0 + 1e-12:
        raise ValueError("split fractions sum to more than 1")
    if not 0.0 < label_fraction <= 1.0:
        raise ValueError("label_fraction must lie in (0, 1]")
    tags = [UNTAGGED] * g.num_nodes
    for i in exclude:
        tags[i] = HOLDOUT
    labeled = np.array([i for i in range(g.num_nodes) if g.labels[i] >= 0 and i not in exclude])
    if labeled.size == 0:
        raise ValueError("graph has no labeled nodes to split")
    order = np.random.default_rng(seed).permutation(labeled)
    n_train = int(train * labeled.size)
    n_val = int(validation * labeled.size)
    n_test = int(test * labeled.size)
    train_ids = order[:n_train]
    keep = int(label_fraction * n_train)
    for i in train_ids[:keep]:
        tags[i] = TRAIN
    for i in order[n_train : n_train + n_val]:
        tags[i] = VALIDATION
    for i in order[n_train + n_val : n_train + n_val + n_test]:
        tags[i] = TEST
    return tags


def pick_holdout(g: HeteroGraph, fraction: float, seed: int) -> set[int]:
    labeled = np.array([i for i in range(g.num_nodes) if g.labels[i] >= 0])
    if labeled.size == 0:
        raise ValueError("graph has no labeled nodes to hold out")
    order = np.random.default_rng([seed, 0x1D]).permutation(labeled)
    return {int(i) for i in order[: int(round(fraction * labeled.size))]}


def write_tsv(g: HeteroGraph, nodes_path, edges_path) -> None:
    """Writes every stored adjacency entry; re-ingest with ``undirected=False``."""
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for i, nid in enumerate(g.node_ids):
            label = g.class_names[g.labels[i]] if g.labels[i] >= 0 else UNLABELED
            feats = ",".join(repr(float(v)) for v in g.features[i])
            fh.write(f"{nid}\t{g.node_type_names[g.node_types[i]]}\t{label}\t{feats}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for i, adj in enumerate(g.adjacency):
            for j, et in adj:
                fh.write(f"{g.node_ids[i]}\t{g.node_ids[j]}\t{g.edge_type_names[et]}\n")
