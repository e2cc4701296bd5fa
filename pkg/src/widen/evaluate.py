"""Micro-F1 scoring, transductive/inductive protocols and embedding export."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SELF_LOOP_PREFIX, TEST, HeteroGraph
from .model import ModelOptions, ModelParams, embed_nodes, predict
from .sampler import DeepWalk, KlSlot, NeighborCache, WideSet, sample_all, sample_node


class TypeTableError(ValueError):
    pass


@dataclass
class EvalResult:
    micro_f1: float
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    count: int

    def summary(self) -> str:
        return f"micro-F1 {self.micro_f1:.4f} over {self.count} nodes"


def confusion_counts(preds, labels, n_classes: int | None = None):
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"{preds.size} predictions for {labels.size} labels")
    if preds.size == 0:
        raise ValueError("cannot score an empty prediction set")
    c = int(max(preds.max(), labels.max()) + 1) if n_classes is None else n_classes
    tp = np.bincount(labels[preds == labels], minlength=c)
    fp = np.bincount(preds[preds != labels], minlength=c)
    fn = np.bincount(labels[preds != labels], minlength=c)
    return tp, fp, fn


def micro_f1(preds, labels) -> float:
    tp, fp, fn = confusion_counts(preds, labels)
    TP = tp.sum()
    return float(TP / (TP + 0.5 * (fp.sum() + fn.sum())))


def score(preds, labels, n_classes: int | None = None) -> EvalResult:
    tp, fp, fn = confusion_counts(preds, labels, n_classes)
    f1 = float(tp.sum() / (tp.sum() + 0.5 * (fp.sum() + fn.sum())))
    accuracy = float(np.mean(np.asarray(preds) == np.asarray(labels)))
    assert abs(f1 - accuracy) < 1e-12, "micro-F1 must equal accuracy for single-label data"
    return EvalResult(f1, tp, fp, fn, len(labels))


def evaluate_nodes(nodes, g: HeteroGraph, cache: NeighborCache, params: ModelParams, options=None) -> EvalResult:
    nodes = list(nodes)
    if not nodes:
        raise ValueError("no nodes to evaluate")
    emb = embed_nodes(nodes, cache, g, params, options)
    return score(predict(emb, params), g.labels[nodes], params.num_classes)


def evaluate_transductive(g, cache, params, tags, which: str = TEST, options=None) -> EvalResult:
    nodes = [i for i, tag in enumerate(tags) if tag == which]
    return evaluate_nodes(nodes, g, cache, params, options)


def align_types(g: HeteroGraph, params: ModelParams) -> HeteroGraph:
    """Re-indexes ``g``'s edge types to the checkpoint's table.

    Edge types unknown to the checkpoint get ids past its table so any use
    of them is caught by :func:`check_types`.
    """
    if not params.edge_type_names or g.edge_type_names == params.edge_type_names:
        return g
    known = {name: i for i, name in enumerate(params.edge_type_names)}
    table = list(params.edge_type_names)
    remap = {}
    for old, name in enumerate(g.edge_type_names):
        if name not in known:
            known[name] = len(table)
            table.append(name)
        remap[old] = known[name]
    adjacency = tuple(tuple((j, remap[e]) for j, e in adj) for adj in g.adjacency)
    return HeteroGraph(
        node_ids=g.node_ids,
        node_types=g.node_types,
        features=g.features,
        labels=g.labels,
        adjacency=adjacency,
        node_type_names=g.node_type_names,
        edge_type_names=tuple(table),
        class_names=g.class_names,
    )


def check_types(g: HeteroGraph, params: ModelParams, cache: NeighborCache, nodes) -> None:
    known_nodes = set(params.node_type_names) if params.node_type_names else set(g.node_type_names)
    limit = params.num_edge_types
    for t in nodes:
        type_name = g.node_type_names[g.node_types[t]]
        if type_name not in known_nodes or SELF_LOOP_PREFIX + type_name not in g.edge_type_names[:limit]:
            raise TypeTableError(f"node {g.node_ids[t]!r} has node type {type_name!r} unseen in training")
        used = list(cache.wide[t].edge_types) + [e for w in cache.deep[t] for e in w.edge_types]
        for e in used:
            if e >= limit:
                raise TypeTableError(
                    f"node {g.node_ids[t]!r} reaches edge type {g.edge_type_names[e]!r} unseen in training"
                )


def evaluate_inductive(
    full_graph: HeteroGraph,
    holdout,
    params: ModelParams,
    n_wide: int,
    n_deep: int,
    phi: int,
    seed: int,
    options: ModelOptions | None = None,
) -> EvalResult:
    """Classifies holdout nodes from fresh neighbor samples on the full graph."""
    g = align_types(full_graph, params)
    if params.class_names and g.class_names != params.class_names:
        raise TypeTableError("class table of the graph differs from the checkpoint")
    holdout = sorted(int(i) for i in holdout)
    # only holdout entries are read; every other node keeps empty sets
    wide = [WideSet(t) for t in range(g.num_nodes)]
    deep = [[DeepWalk(t) for _ in range(phi)] for t in range(g.num_nodes)]
    for t in holdout:
        wide[t], deep[t] = sample_node(g, t, n_wide, n_deep, phi, seed)
    cache = NeighborCache(wide, deep, [KlSlot() for _ in wide], [[KlSlot() for _ in range(phi)] for _ in wide])
    check_types(g, params, cache, holdout)
    return evaluate_nodes(holdout, g, cache, params, options)


def export_embeddings(g: HeteroGraph, cache: NeighborCache, params: ModelParams, out_path, options=None) -> None:
    emb = embed_nodes(range(g.num_nodes), cache, g, params, options)
    lines = [f"{nid}\t{','.join(repr(float(x)) for x in row)}\n" for nid, row in zip(g.node_ids, emb)]
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def fresh_cache(g: HeteroGraph, n_wide: int, n_deep: int, phi: int, seed: int) -> NeighborCache:
    return sample_all(g, n_wide, n_deep, phi, seed)
