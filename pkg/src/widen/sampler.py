"""Wide neighbor sets and deep random walks, sampled once before training."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .graph import HeteroGraph

ROLE_WIDE = 0
ROLE_DEEP = 1


def fingerprint(nodes) -> str:
    """Order-sensitive digest of a member list."""
    data = np.asarray(list(nodes), dtype="<i8").tobytes()
    return hashlib.blake2b(data, digest_size=12).hexdigest()


@dataclass
class WideSet:
    target: int
    nodes: list[int] = field(default_factory=list)
    edge_types: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def members(self) -> list[tuple[int, int, int]]:
        """``(local index, global index, edge type)`` with 1-based local indexes."""
        return [(n + 1, i, e) for n, (i, e) in enumerate(zip(self.nodes, self.edge_types))]

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.nodes)


@dataclass
class DeepWalk:
    """A walk from ``target``; ``relays[s]`` overrides step s's edge embedding."""

    target: int
    nodes: list[int] = field(default_factory=list)
    edge_types: list[int] = field(default_factory=list)
    relays: list[np.ndarray | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def steps(self) -> list[tuple[int, int, int, np.ndarray | None]]:
        return [
            (s + 1, i, e, r)
            for s, (i, e, r) in enumerate(zip(self.nodes, self.edge_types, self.relays))
        ]

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.nodes)


@dataclass
class KlSlot:
    """Attention distribution seen for a set in an earlier epoch."""

    distribution: np.ndarray | None = None
    fingerprint: str | None = None
    epoch: int = 0


@dataclass
class NeighborCache:
    wide: list[WideSet]
    deep: list[list[DeepWalk]]
    wide_slots: list[KlSlot]
    deep_slots: list[list[KlSlot]]

    @property
    def phi(self) -> int:
        return len(self.deep[0]) if self.deep else 0

    def wide_members(self) -> int:
        return sum(len(w) for w in self.wide)

    def deep_members(self) -> int:
        return sum(len(w) for walks in self.deep for w in walks)

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for w, walks in zip(self.wide, self.deep):
            h.update(w.fingerprint.encode())
            h.update(np.asarray(w.edge_types, dtype="<i8").tobytes())
            for walk in walks:
                h.update(walk.fingerprint.encode())
                h.update(np.asarray(walk.edge_types, dtype="<i8").tobytes())
        return h.hexdigest()


def node_rng(seed: int, node: int, role: int, phi: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, node, role, phi])


def sample_wide(g: HeteroGraph, t: int, n_wide: int, rng: np.random.Generator) -> WideSet:
    """Uniform draw without replacement of up to ``n_wide`` neighbor entries."""
    adj = [(j, e) for j, e in g.neighbors(t) if j != t]
    ws = WideSet(t)
    if not adj:
        return ws
    take = min(len(adj), n_wide)
    for pos in rng.choice(len(adj), size=take, replace=False):
        j, e = adj[pos]
        ws.nodes.append(j)
        ws.edge_types.append(e)
    return ws


def sample_deep(g: HeteroGraph, t: int, n_deep: int, rng: np.random.Generator) -> DeepWalk:
    """Random walk from ``t`` emitting up to ``n_deep`` non-target steps.

    Passing back through ``t`` is allowed but never emitted; the next emitted
    step records the edge it was reached by. Dead ends stop the walk.
    """
    walk = DeepWalk(t)
    current = t
    moves = 0
    while len(walk.nodes) < n_deep and moves < 4 * n_deep:
        adj = g.neighbors(current)
        if current == t:
            adj = [(j, e) for j, e in adj if j != t]
        if not adj:
            break
        j, e = adj[rng.integers(len(adj))]
        moves += 1
        current = j
        if j == t:
            continue
        walk.nodes.append(j)
        walk.edge_types.append(e)
        walk.relays.append(None)
    return walk


def sample_node(g: HeteroGraph, t: int, n_wide: int, n_deep: int, phi: int, seed: int):
    wide = sample_wide(g, t, n_wide, node_rng(seed, t, ROLE_WIDE))
    walks = [sample_deep(g, t, n_deep, node_rng(seed, t, ROLE_DEEP, p)) for p in range(phi)]
    return wide, walks


def sample_all(g: HeteroGraph, n_wide: int, n_deep: int, phi: int, seed: int) -> NeighborCache:
    if phi < 1:
        raise ValueError("phi must be at least 1")
    wide, deep = [], []
    for t in range(g.num_nodes):
        w, walks = sample_node(g, t, n_wide, n_deep, phi, seed)
        wide.append(w)
        deep.append(walks)
    return NeighborCache(
        wide=wide,
        deep=deep,
        wide_slots=[KlSlot() for _ in range(g.num_nodes)],
        deep_slots=[[KlSlot() for _ in range(phi)] for _ in range(g.num_nodes)],
    )
