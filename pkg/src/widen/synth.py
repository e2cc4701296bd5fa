"""Synthetic typed graphs written in the node/edge TSV formats."""

from __future__ import annotations

import numpy as np


def _write(nodes_path, edges_path, node_rows, edge_rows) -> None:
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for nid, ntype, label, feats in node_rows:
            fh.write(f"{nid}\t{ntype}\t{label}\t{','.join(f'{x:.6f}' for x in feats)}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for src, dst, etype in edge_rows:
            fh.write(f"{src}\t{dst}\t{etype}\n")


def block_graph(
    nodes_path,
    edges_path,
    n_nodes: int = 200,
    n_node_types: int = 2,
    n_edge_types: int = 3,
    n_classes: int = 2,
    homophily: float = 0.9,
    seed: int = 0,
    feature_dim: int = 16,
    separation: float = 1.0,
    degree: int = 4,
) -> None:
    """Stochastic-block style graph.

    Classes are balanced and shuffled independently of the round-robin node
    types. Each node starts ``degree`` edges whose far end shares its class
    with probability ``homophily``. Features are a class centroid scaled by
    ``separation`` plus unit Gaussian noise.
    """
    if min(n_nodes, n_node_types, n_edge_types, n_classes) < 1:
        raise ValueError("all counts must be at least 1")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n_nodes) % n_classes)
    centroids = rng.normal(size=(n_classes, feature_dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    feats = separation * centroids[labels] + rng.normal(size=(n_nodes, feature_dim))
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    node_rows = [(f"n{i}", f"type{i % n_node_types}", str(labels[i]), feats[i]) for i in range(n_nodes)]
    edge_rows = []
    for i in range(n_nodes):
        for _ in range(degree):
            same = rng.random() < homophily or n_classes == 1
            if same:
                pool = by_class[labels[i]]
            else:
                other = rng.choice([c for c in range(n_classes) if c != labels[i]])
                pool = by_class[other]
            j = int(rng.choice(pool))
            if j == i:
                continue
            edge_rows.append((f"n{i}", f"n{j}", f"rel{len(edge_rows) % n_edge_types}"))
    _write(nodes_path, edges_path, node_rows, edge_rows)


def two_hop_graph(
    nodes_path,
    edges_path,
    n_targets: int = 200,
    n_sources: int = 80,
    n_classes: int = 2,
    seed: int = 0,
    feature_dim: int = 16,
    separation: float = 2.0,
    degree: int = 4,
) -> None:
    """Labels visible only two hops away.

    Each labeled ``target`` node (pure-noise features) owns ``degree``
    private ``relay`` nodes, also pure noise. Every relay links to
    ``degree`` ``source`` nodes of its target's class, and source features
    encode that class. First-order context is uninformative and never shared
    between targets; second-order context is informative.
    """
    rng = np.random.default_rng(seed)
    centroids = rng.normal(size=(n_classes, feature_dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    t_lab = rng.permutation(np.arange(n_targets) % n_classes)
    s_lab = np.arange(n_sources) % n_classes
    sources = [np.flatnonzero(s_lab == c) for c in range(n_classes)]
    node_rows, edge_rows = [], []
    for i in range(n_targets):
        node_rows.append((f"t{i}", "target", str(t_lab[i]), rng.normal(size=feature_dim)))
    for i in range(n_sources):
        x = separation * centroids[s_lab[i]] + rng.normal(size=feature_dim)
        node_rows.append((f"s{i}", "source", "-", x))
    for i in range(n_targets):
        pool = sources[t_lab[i]]
        for r in range(degree):
            rid = f"r{i}_{r}"
            node_rows.append((rid, "relay", "-", rng.normal(size=feature_dim)))
            edge_rows.append((f"t{i}", rid, "links"))
            for k in rng.choice(pool, size=min(degree, pool.size), replace=False):
                edge_rows.append((rid, f"s{k}", "cites"))
    _write(nodes_path, edges_path, node_rows, edge_rows)
