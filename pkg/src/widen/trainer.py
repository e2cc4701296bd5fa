"""Mini-batch training over labeled nodes with KL-triggered downsampling."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import numeric as nx
from .downsample import DownsampleConfig, prune_deep, should_downsample, shrink_wide
from .evaluate import evaluate_nodes
from .graph import TRAIN, VALIDATION, HeteroGraph
from .model import ModelOptions, ModelParams, bind, forward_batch, init_params, message_count
from .numeric import Tape
from .sampler import NeighborCache

log = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-5
CONVERGENCE_EPOCHS = 3


@dataclass
class TrainConfig:
    d: int = 128
    n_wide: int = 20
    n_deep: int = 20
    phi: int = 10
    batch_size: int = 32
    lr: float = 1e-4
    epochs: int = 100
    l2: float = 0.01
    downsample: DownsampleConfig = field(default_factory=DownsampleConfig)
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 0
    threads: int = 1
    model: ModelOptions = field(default_factory=ModelOptions)

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.d < 1:
            raise ValueError("batch_size, epochs and d must all be at least 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.phi < 1:
            raise ValueError("phi must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_f1: float
    seconds: float
    wide_members: int
    deep_members: int
    messages: int
    wide_prunes: int = 0
    deep_prunes: int = 0


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    checkpoint: str | None = None
    stop_reason: str = ""

    def to_tsv(self, header: dict | None = None, timing: bool = True) -> str:
        """Tab-separated per-epoch trace; ``timing=False`` drops wall-clock
        seconds so repeated runs produce identical bytes."""
        lines = [f"# {k} = {v}\n" for k, v in (header or {}).items()]
        cols = ["epoch", "loss", "val_f1", *(["seconds"] if timing else []), "wide_members", "deep_members"]
        lines.append("\t".join(cols) + "\n")
        for r in self.epochs:
            row = [str(r.epoch), repr(r.loss), repr(r.val_f1)]
            if timing:
                row.append(f"{r.seconds:.6f}")
            row += [str(r.wide_members), str(r.deep_members)]
            lines.append("\t".join(row) + "\n")
        return "".join(lines)


@dataclass
class OptimizerState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def loss(embeddings, labels, P, l2: float, divisor: float | None = None, regularize: bool = True):
    labels = np.asarray(labels, dtype=np.int64)
    if (labels < 0).any():
        raise nx.ContractError("loss called on a batch containing unlabeled nodes")
    logits = nx.matmul(embeddings, P["classifier"])
    out = nx.cross_entropy(logits, labels, divisor)
    if l2 > 0 and regularize:
        reg = None
        for name in sorted(P):
            sq = nx.sum_squares(P[name])
            reg = sq if reg is None else nx.add(reg, sq)
        out = nx.add(out, nx.scale(reg, l2))
    return out


def step(params: ModelParams, grads: dict[str, np.ndarray], config: TrainConfig, state: OptimizerState) -> None:
    """In-place parameter update."""
    for name, g in grads.items():
        if g.shape != params.tensors[name].shape:
            raise nx.DimensionError(f"gradient for {name} has shape {g.shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in tensor {name}")
    state.step += 1
    if config.optimizer == "sgd":
        for name, g in grads.items():
            params.tensors[name] = params.tensors[name] - config.lr * g
        return
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        m = state.m.get(name, 0.0) * b1 + (1.0 - b1) * g
        v = state.v.get(name, 0.0) * b2 + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        params.tensors[name] = params.tensors[name] - config.lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)


def batch_gradients(targets, g: HeteroGraph, cache: NeighborCache, params: ModelParams, config: TrainConfig, pool=None):
    """Loss, merged gradients and forward records for one batch.

    With ``threads > 1`` the batch is cut into contiguous chunks, each on a
    private tape; gradients are summed in chunk order.
    """
    keep = config.downsample.enabled
    B = len(targets)
    parts = max(1, min(config.threads, B))
    bounds = np.linspace(0, B, parts + 1).astype(int)
    chunks = [targets[bounds[i] : bounds[i + 1]] for i in range(parts)]

    def run(i):
        tape = Tape()
        P = bind(params, tape)
        fwd = forward_batch(chunks[i], cache, g, P, config.model, keep_internals=keep)
        out = loss(fwd.embeddings, g.labels[chunks[i]], P, config.l2, divisor=B, regularize=(i == 0))
        tape.backward(out)
        grads = {k: (P[k].grad if P[k].grad is not None else np.zeros_like(P[k].value)) for k in P}
        return out.value.item(), grads, fwd

    results = list(pool.map(run, range(parts))) if pool is not None and parts > 1 else [run(i) for i in range(parts)]
    total = math.fsum(r[0] for r in results)
    grads = nx.merge_gradients(r[1] for r in results)
    return total, grads, [r[2] for r in results]


def apply_downsampling(fwd, cache: NeighborCache, epoch: int, cfg: DownsampleConfig) -> tuple[int, int]:
    literal = cfg.mode == "literal-kl"
    wide_hits = deep_hits = 0
    for b, t in enumerate(fwd.targets):
        ws = cache.wide[t]
        a = fwd.wide_attention[b]
        if should_downsample(cache.wide_slots[t], a, ws.fingerprint, epoch, cfg.r_wide, cfg.k_wide, len(ws), literal):
            cache.wide[t] = shrink_wide(ws, a)
            wide_hits += 1
        for p, walk in enumerate(cache.deep[t]):
            a = fwd.deep_attention[b][p]
            slot = cache.deep_slots[t][p]
            if should_downsample(slot, a, walk.fingerprint, epoch, cfg.r_deep, cfg.k_deep, len(walk), literal):
                cache.deep[t][p] = prune_deep(walk, a, fwd.deep_packs[b][p], fwd.deep_edges[b][p])
                deep_hits += 1
    return wide_hits, deep_hits


def _converged(losses: list[float]) -> bool:
    if len(losses) <= CONVERGENCE_EPOCHS:
        return False
    recent = losses[-(CONVERGENCE_EPOCHS + 1) :]
    return all(
        abs(b - a) <= CONVERGENCE_TOL * max(abs(a), 1e-300) for a, b in zip(recent[:-1], recent[1:])
    )


def train(
    g: HeteroGraph,
    cache: NeighborCache,
    config: TrainConfig,
    tags,
    params: ModelParams | None = None,
    on_epoch=None,
) -> tuple[ModelParams, TrainReport]:
    train_nodes = np.array([i for i, tag in enumerate(tags) if tag == TRAIN], dtype=np.int64)
    val_nodes = [i for i, tag in enumerate(tags) if tag == VALIDATION]
    if train_nodes.size == 0:
        raise ValueError("no training nodes")
    if (g.labels[train_nodes] < 0).any():
        raise nx.ContractError("training nodes must be labeled")
    params = params or init_params(g, config.d, config.seed)
    state = OptimizerState()
    report = TrainReport()
    losses: list[float] = []
    best_f1, stale = -1.0, 0
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            messages = message_count(cache, train_nodes)
            order = np.random.default_rng([config.seed, epoch, 0x7E]).permutation(train_nodes)
            start = time.perf_counter()
            epoch_loss = 0.0
            wide_hits = deep_hits = 0
            for pos in range(0, order.size, config.batch_size):
                batch = [int(t) for t in order[pos : pos + config.batch_size]]
                value, grads, fwds = batch_gradients(batch, g, cache, params, config, pool)
                step(params, grads, config, state)
                epoch_loss += value * len(batch)
                if config.downsample.enabled:
                    for fwd in fwds:
                        w, d = apply_downsampling(fwd, cache, epoch, config.downsample)
                        wide_hits += w
                        deep_hits += d
            seconds = time.perf_counter() - start
            epoch_loss /= order.size
            val_f1 = (
                evaluate_nodes(val_nodes, g, cache, params, config.model).micro_f1 if val_nodes else float("nan")
            )
            record = EpochRecord(
                epoch,
                epoch_loss,
                val_f1,
                seconds,
                cache.wide_members(),
                cache.deep_members(),
                messages,
                wide_hits,
                deep_hits,
            )
            report.epochs.append(record)
            log.info(
                "epoch %d loss %.6f val_f1 %.4f %.3fs wide %d deep %d",
                epoch, epoch_loss, val_f1, seconds, record.wide_members, record.deep_members,
            )
            if on_epoch is not None:
                on_epoch(record)
            losses.append(epoch_loss)
            if _converged(losses):
                report.stop_reason = "converged"
                break
            if config.patience > 0 and val_nodes:
                if val_f1 > best_f1:
                    best_f1, stale = val_f1, 0
                else:
                    stale += 1
                    if stale >= config.patience:
                        report.stop_reason = "patience"
                        break
        else:
            report.stop_reason = "max-epochs"
    finally:
        if pool is not None:
            pool.shutdown()
    return params, report


def config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
