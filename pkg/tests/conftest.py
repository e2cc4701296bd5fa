import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from widen import graph, sampler  # noqa: E402


def write_graph(tmp_path, nodes, edges, name="g"):
    """``nodes``: (id, type, label, features); ``edges``: (src, dst, type)."""
    npath = tmp_path / f"{name}_nodes.tsv"
    epath = tmp_path / f"{name}_edges.tsv"
    npath.write_text(
        "".join(f"{i}\t{t}\t{l}\t{','.join(str(x) for x in f)}\n" for i, t, l, f in nodes),
        encoding="utf-8",
    )
    epath.write_text("".join(f"{s}\t{d}\t{t}\n" for s, d, t in edges), encoding="utf-8")
    return npath, epath


def ten_node_rows(seed=0, d0=3):
    rng = np.random.default_rng(seed)
    nodes = [(f"n{i}", "AB"[i % 2], str(i % 2 if i < 8 else "-"), rng.normal(size=d0).round(6)) for i in range(10)]
    edges = []
    for i in range(10):
        edges.append((f"n{i}", f"n{(i + 1) % 10}", f"r{i % 3}"))
        if i % 3 == 0:
            edges.append((f"n{i}", f"n{(i + 4) % 10}", f"r{(i + 1) % 3}"))
    return nodes, edges


@pytest.fixture
def ten_node_graph(tmp_path):
    nodes, edges = ten_node_rows()
    return graph.ingest(*write_graph(tmp_path, nodes, edges))


@pytest.fixture
def ten_node_cache(ten_node_graph):
    return sampler.sample_all(ten_node_graph, 3, 3, 2, seed=1)


@pytest.fixture
def block_files(tmp_path):
    from widen import synth

    n, e = tmp_path / "block_nodes.tsv", tmp_path / "block_edges.tsv"
    synth.block_graph(n, e, 200, 2, 3, 2, 0.9, seed=0, separation=1.0)
    return n, e


def random_fixture(rng, tmp_path, name="rand"):
    """Small random heterograph with 3-6 nodes, 1-3 node types and 1-4 edge types."""
    n = int(rng.integers(3, 7))
    n_types = int(rng.integers(1, 4))
    n_etypes = int(rng.integers(1, 5))
    d0 = int(rng.integers(1, 5))
    nodes = [(f"v{i}", f"T{i % n_types}", str(i % 2), rng.normal(size=d0).round(8)) for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.5:
                edges.append((f"v{i}", f"v{j}", f"e{int(rng.integers(n_etypes))}"))
    return graph.ingest(*write_graph(tmp_path, nodes, edges, name=name))


def oracle_inputs(g, cache, t):
    """Arguments for ``oracles.forward`` describing target ``t``."""
    walks = [(w.nodes, w.edge_types, w.relays) for w in cache.deep[t]]
    self_loop = [g.self_loop_type(k) for k in range(len(g.node_type_names))]
    return dict(
        target=t,
        wide_nodes=cache.wide[t].nodes,
        wide_types=cache.wide[t].edge_types,
        walks=walks,
        features=g.features,
        node_type=[int(x) for x in g.node_types],
        self_loop=self_loop,
    )
