"""Attention-driven shrinking of wide sets and pruning of deep walks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numeric import ContractError, DimensionError
from .sampler import DeepWalk, KlSlot, WideSet

MODES = ("on", "off", "literal-kl")


@dataclass
class DownsampleConfig:
    r_wide: float = 0.001
    r_deep: float = 0.001
    k_wide: int = 5
    k_deep: int = 5
    mode: str = "on"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"downsampling mode must be one of {MODES}, not {self.mode!r}")
        if self.r_wide < 0 or self.r_deep < 0:
            raise ValueError("downsampling thresholds must be non-negative")
        if self.k_wide < 1 or self.k_deep < 1:
            raise ValueError("downsampling lower bounds must be at least 1")

    @property
    def enabled(self) -> bool:
        return self.mode != "off"


def kl_divergence(prev, curr, same_set: bool = True, literal: bool = False) -> float:
    """KL(prev || curr) over two attention distributions of one set.

    A changed set gives +inf. With ``literal`` the sum uses ln(curr/prev),
    i.e. the negated divergence.
    """
    if not same_set:
        return math.inf
    p = np.asarray(prev, dtype=np.float64)
    q = np.asarray(curr, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"kl_divergence: lengths {p.shape} and {q.shape} differ")
    total = 0.0
    for pi, qi in zip(p, q):
        # each term is p*ln(p/q) - p + q, which stays >= 0 under rounding;
        # the extra -p + q terms cancel because both inputs sum to one
        if pi == 0.0:
            total += qi
            continue
        if qi == 0.0:
            return -math.inf if literal else math.inf
        u = qi / pi - 1.0
        total += pi * (u - math.log1p(u))
    return -total if literal else total


def _argmin_neighbor(attention, size: int) -> int:
    a = np.asarray(attention, dtype=np.float64)
    if a.shape != (size + 1,):
        raise DimensionError(f"expected {size + 1} attention weights, got {a.shape}")
    # np.argmin returns the first minimum
    return int(np.argmin(a[1:]))


def shrink_wide(ws: WideSet, attention) -> WideSet:
    """Drops the member with the smallest attention (self weight excluded)."""
    if len(ws) == 0:
        raise ContractError("cannot shrink an empty wide set")
    drop = _argmin_neighbor(attention, len(ws))
    return WideSet(
        ws.target,
        ws.nodes[:drop] + ws.nodes[drop + 1 :],
        ws.edge_types[:drop] + ws.edge_types[drop + 1 :],
    )


def prune_deep(walk: DeepWalk, attention, packs, edges) -> DeepWalk:
    """Removes the least-attended step of a walk.

    ``packs`` and ``edges`` are the walk's message packs and effective edge
    vectors from the same forward pass, row 0 being the target. When the
    removed step has a successor, the successor's edge is replaced by the
    relay ``max(edge of successor, pack of removed step)``.
    """
    if len(walk) == 0:
        raise ContractError("cannot prune an empty walk")
    drop = _argmin_neighbor(attention, len(walk))
    relays = list(walk.relays)
    if drop + 1 < len(walk):
        row = drop + 1  # message-matrix row of the removed step
        relays[drop + 1] = np.maximum(np.asarray(edges[row + 1]), np.asarray(packs[row])).copy()
    return DeepWalk(
        walk.target,
        walk.nodes[:drop] + walk.nodes[drop + 1 :],
        walk.edge_types[:drop] + walk.edge_types[drop + 1 :],
        relays[:drop] + relays[drop + 1 :],
    )


def should_downsample(
    slot: KlSlot,
    curr,
    curr_fingerprint: str,
    epoch: int,
    threshold: float,
    lower_bound: int,
    size: int,
    literal: bool = False,
) -> bool:
    """Trigger test for one set; records ``curr`` in ``slot`` either way."""
    fire = False
    if epoch > 1 and slot.distribution is not None and size > lower_bound:
        same = slot.fingerprint == curr_fingerprint
        kl = kl_divergence(slot.distribution, curr, same_set=same, literal=literal) if same else math.inf
        fire = kl < threshold
    slot.distribution = np.array(curr, dtype=np.float64)
    slot.fingerprint = curr_fingerprint
    slot.epoch = epoch
    return fire
