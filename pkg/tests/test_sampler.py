from collections import Counter

import numpy as np

from conftest import write_graph
from widen import graph, sampler


def star(tmp_path, degree):
    nodes = [("c", "A", "0", [0.0])] + [(f"l{i}", "B", "1", [1.0]) for i in range(degree)]
    edges = [("c", f"l{i}", "r") for i in range(degree)]
    return graph.ingest(*write_graph(tmp_path, nodes, edges, name=f"star{degree}"))


def test_wide_takes_whole_small_neighborhood(tmp_path):
    g = star(tmp_path, 2)
    ws = sampler.sample_wide(g, 0, 20, np.random.default_rng(0))
    assert sorted(ws.nodes) == [1, 2]
    assert [m[0] for m in ws.members] == [1, 2]


def test_wide_isolated_and_determinism(tmp_path):
    g = graph.ingest(*write_graph(tmp_path, [("a", "A", "0", [0.0])], []))
    assert len(sampler.sample_wide(g, 0, 5, np.random.default_rng(0))) == 0
    big = star(tmp_path, 100)
    a = sampler.sample_wide(big, 0, 20, sampler.node_rng(4, 0, 0))
    b = sampler.sample_wide(big, 0, 20, sampler.node_rng(4, 0, 0))
    assert a.nodes == b.nodes and len(a) == 20 and len(set(a.nodes)) == 20


def test_wide_members_are_neighbors_and_exclude_target(tmp_path):
    nodes = [(x, "A", "0", [0.0]) for x in "abc"]
    g = graph.ingest(*write_graph(tmp_path, nodes, [("a", "a", "self"), ("a", "b", "r"), ("a", "c", "r")]))
    ws = sampler.sample_wide(g, 0, 10, np.random.default_rng(0))
    assert 0 not in ws.nodes
    assert set(ws.nodes) <= {j for j, _ in g.neighbors(0)}


def test_wide_sampling_is_uniform(tmp_path):
    g = star(tmp_path, 4)
    rng = np.random.default_rng(123)
    counts = Counter()
    trials = 100_000
    for _ in range(trials):
        counts.update(sampler.sample_wide(g, 0, 2, rng).nodes)
    for leaf in range(1, 5):
        assert abs(counts[leaf] / trials - 0.5) < 0.01


def test_deep_walk_on_path(tmp_path):
    nodes = [(x, "A", "0", [0.0]) for x in "abc"]
    g = graph.ingest(*write_graph(tmp_path, nodes, [("a", "b", "ab"), ("b", "c", "bc")]), undirected=True)
    # from a the only move is to b; from b the walk may return to a (skipped) before reaching c
    walk = sampler.sample_deep(g, 0, 2, np.random.default_rng(0))
    assert walk.nodes[0] == 1
    assert walk.edge_types[0] == g.edge_type_names.index("ab")
    directed = graph.ingest(*write_graph(tmp_path, nodes, [("a", "b", "ab"), ("b", "c", "bc")], name="d"), undirected=False)
    walk = sampler.sample_deep(directed, 0, 2, np.random.default_rng(0))
    assert [(s, i) for s, i, _, _ in walk.steps] == [(1, 1), (2, 2)]
    assert walk.edge_types == [directed.edge_type_names.index("ab"), directed.edge_type_names.index("bc")]


def test_deep_walk_isolated_and_deterministic(tmp_path, ten_node_graph):
    g = graph.ingest(*write_graph(tmp_path, [("a", "A", "0", [0.0])], []))
    assert len(sampler.sample_deep(g, 0, 5, np.random.default_rng(0))) == 0
    a = sampler.sample_deep(ten_node_graph, 3, 20, sampler.node_rng(2, 3, 1))
    b = sampler.sample_deep(ten_node_graph, 3, 20, sampler.node_rng(2, 3, 1))
    assert a.nodes == b.nodes and a.edge_types == b.edge_types


def test_deep_walk_structure(ten_node_graph):
    g = ten_node_graph
    for t in range(g.num_nodes):
        walk = sampler.sample_deep(g, t, 8, sampler.node_rng(0, t, 1))
        assert 0 < len(walk) <= 8
        assert t not in walk.nodes
        assert (walk.nodes[0], walk.edge_types[0]) in g.neighbors(t)
        for s in range(1, len(walk)):
            prev, cur = walk.nodes[s - 1], walk.nodes[s]
            direct = (cur, walk.edge_types[s]) in g.neighbors(prev)
            via_target = (cur, walk.edge_types[s]) in g.neighbors(t)
            assert direct or via_target


def test_sample_all_counts_and_determinism(ten_node_graph):
    one = sampler.sample_all(ten_node_graph, 3, 3, 1, seed=0)
    assert all(len(w) == 1 for w in one.deep)
    three = sampler.sample_all(ten_node_graph, 3, 3, 3, seed=0)
    assert sum(len(w) for w in three.deep) == 30
    again = sampler.sample_all(ten_node_graph, 3, 3, 3, seed=0)
    assert three.fingerprint() == again.fingerprint()
    assert sampler.sample_all(ten_node_graph, 3, 3, 3, seed=1).fingerprint() != three.fingerprint()


def test_sampling_is_order_independent(ten_node_graph):
    cache = sampler.sample_all(ten_node_graph, 3, 4, 2, seed=5)
    w, walks = sampler.sample_node(ten_node_graph, 7, 3, 4, 2, seed=5)
    assert w.nodes == cache.wide[7].nodes
    assert [x.nodes for x in walks] == [x.nodes for x in cache.deep[7]]


def test_fingerprint_sensitivity():
    base = sampler.fingerprint([3, 1, 2])
    assert base == sampler.fingerprint([3, 1, 2])
    assert base != sampler.fingerprint([1, 3, 2])
    assert base != sampler.fingerprint([3, 1])
