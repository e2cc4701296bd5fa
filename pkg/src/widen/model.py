"""Message packaging, wide/deep attentive passing and fusion.

All passing functions accept stacks of message matrices ``(..., n, d)`` so a
whole mini-batch runs through one set of numpy calls. Sets of unequal size
are right-padded; padded columns are masked out of every softmax.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numeric as nx
from .graph import HeteroGraph
from .numeric import Tape, Tensor
from .sampler import DeepWalk, NeighborCache, WideSet

PARAM_NAMES = (
    "node_proj",
    "edge_emb",
    "wide_q",
    "wide_k",
    "wide_v",
    "deep_q",
    "deep_k",
    "deep_v",
    "deep_out_q",
    "deep_out_k",
    "deep_out_v",
    "fuse_w",
    "fuse_b",
    "classifier",
)

MAGIC = b"WIDN"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelOptions:
    deep_values: str = "packs"  # "packs" keeps values from the raw deep packs, "refined" uses H
    use_wide: bool = True
    use_deep: bool = True
    strict_norm: bool = False
    layers: int = 1

    def __post_init__(self):
        if self.deep_values not in ("packs", "refined"):
            raise ValueError(f"deep_values must be 'packs' or 'refined', not {self.deep_values!r}")
        if self.layers != 1:
            raise NotImplementedError("only a single message-passing step is supported")


@dataclass
class ModelParams:
    tensors: dict[str, np.ndarray]
    node_type_names: tuple[str, ...] = ()
    edge_type_names: tuple[str, ...] = ()
    class_names: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.tensors["node_proj"].shape[1]

    @property
    def feature_dim(self) -> int:
        return self.tensors["node_proj"].shape[0]

    @property
    def num_edge_types(self) -> int:
        return self.tensors["edge_emb"].shape[0]

    @property
    def num_classes(self) -> int:
        return self.tensors["classifier"].shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: v.copy() for k, v in self.tensors.items()},
            self.node_type_names,
            self.edge_type_names,
            self.class_names,
        )


def param_shapes(d: int, d0: int, n_edge_types: int, n_classes: int) -> dict[str, tuple[int, int]]:
    shapes = {"node_proj": (d0, d), "edge_emb": (n_edge_types, d)}
    for name in PARAM_NAMES[2:11]:
        shapes[name] = (d, d)
    shapes["fuse_w"] = (2 * d, d)
    shapes["fuse_b"] = (1, d)
    shapes["classifier"] = (d, n_classes)
    return shapes


def init_params(g: HeteroGraph, d: int, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero fusion bias."""
    rng = np.random.default_rng([seed, 0xC0FFEE])
    tensors = {}
    for name, (rows, cols) in param_shapes(d, g.feature_dim, g.num_edge_types, g.num_classes).items():
        if name == "fuse_b":
            tensors[name] = np.zeros((rows, cols))
        else:
            bound = math.sqrt(6.0 / (rows + cols))
            tensors[name] = rng.uniform(-bound, bound, size=(rows, cols))
    return ModelParams(tensors, g.node_type_names, g.edge_type_names, g.class_names)


def bind(params: ModelParams, tape: Tape | None = None) -> dict[str, Tensor]:
    if tape is None:
        return {k: Tensor(v) for k, v in params.tensors.items()}
    return {k: tape.leaf(params.tensors[k], k) for k in PARAM_NAMES}


# ---------------------------------------------------------------- embeddings


def node_embedding(x, P: dict[str, Tensor]) -> Tensor:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[-1] != P["node_proj"].shape[0]:
        raise nx.DimensionError(
            f"feature length {x.shape[-1]} does not match projection input {P['node_proj'].shape[0]}"
        )
    return nx.matmul(Tensor(x), P["node_proj"])


def edge_embedding(edge_type, P: dict[str, Tensor]) -> Tensor:
    idx = np.asarray(edge_type, dtype=np.int64)
    n = P["edge_emb"].shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"edge type out of range [0, {n})")
    return nx.gather_rows(P["edge_emb"], idx.reshape(1) if idx.ndim == 0 else idx)


# ---------------------------------------------------------------- packaging


@dataclass
class PackBatch:
    """Index arrays describing a stack of padded message matrices."""

    nodes: np.ndarray  # (B, n) global indexes; padding repeats the target
    edge_types: np.ndarray  # (B, n)
    lengths: np.ndarray  # (B,) valid rows, self pack included
    relay: np.ndarray | None = None  # (B, n, d) override vectors
    relay_on: np.ndarray | None = None  # (B, n, 1) 1.0 where an override applies

    @property
    def width(self) -> int:
        return self.nodes.shape[1]


def wide_rows(g: HeteroGraph, ws: WideSet):
    t = ws.target
    return [t, *ws.nodes], [g.self_loop_type(int(g.node_types[t])), *ws.edge_types], None


def deep_rows(g: HeteroGraph, walk: DeepWalk):
    t = walk.target
    return (
        [t, *walk.nodes],
        [g.self_loop_type(int(g.node_types[t])), *walk.edge_types],
        [None, *walk.relays],
    )


def make_pack_batch(rows, d: int) -> PackBatch:
    lengths = np.array([len(r[0]) for r in rows], dtype=np.int64)
    n = int(lengths.max())
    B = len(rows)
    nodes = np.empty((B, n), dtype=np.int64)
    etypes = np.empty((B, n), dtype=np.int64)
    relay = relay_on = None
    for b, (ns, es, rs) in enumerate(rows):
        L = len(ns)
        nodes[b, :L] = ns
        nodes[b, L:] = ns[0]
        etypes[b, :L] = es
        etypes[b, L:] = es[0]
        if rs is not None and any(r is not None for r in rs):
            if relay is None:
                relay = np.zeros((B, n, d))
                relay_on = np.zeros((B, n, 1))
            for s, r in enumerate(rs):
                if r is None:
                    continue
                r = np.asarray(r, dtype=np.float64)
                if r.shape != (d,):
                    raise nx.ContractError(f"relay override has shape {r.shape}, expected ({d},)")
                relay[b, s] = r
                relay_on[b, s] = 1.0
    return PackBatch(nodes, etypes, lengths, relay, relay_on)


def effective_edges(batch: PackBatch, P: dict[str, Tensor]) -> Tensor:
    e = nx.gather_rows(P["edge_emb"], batch.edge_types)
    if batch.relay is not None:
        e = nx.add(nx.elementwise_mul(e, 1.0 - batch.relay_on), batch.relay * batch.relay_on)
    return e


def pack(batch: PackBatch, features: np.ndarray, P: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Returns the message stack (B, n, d) and the effective edge stack."""
    v = nx.matmul(Tensor(features[batch.nodes]), P["node_proj"])
    e = effective_edges(batch, P)
    return nx.elementwise_mul(v, e), e


def pack_wide(ws: WideSet, g: HeteroGraph, P: dict[str, Tensor]) -> Tensor:
    batch = make_pack_batch([wide_rows(g, ws)], P["node_proj"].shape[1])
    M, _ = pack(batch, g.features, P)
    return nx.reshape(M, M.shape[1:])


def pack_deep(walk: DeepWalk, g: HeteroGraph, P: dict[str, Tensor]) -> Tensor:
    batch = make_pack_batch([deep_rows(g, walk)], P["node_proj"].shape[1])
    M, _ = pack(batch, g.features, P)
    return nx.reshape(M, M.shape[1:])


# ---------------------------------------------------------------- attention


def build_mask(n: int) -> np.ndarray:
    """0 on and above the diagonal, -inf strictly below."""
    if n < 1:
        raise ValueError("mask size must be at least 1")
    rows, cols = np.indices((n, n))
    return np.where(rows <= cols, 0.0, -np.inf)


def padding_mask(lengths: np.ndarray, width: int) -> np.ndarray:
    """(B, 1, n) additive mask hiding padded columns."""
    cols = np.arange(width)
    return np.where(cols[None, :] < lengths[:, None], 0.0, -np.inf)[:, None, :]


def successive_mask(lengths: np.ndarray, width: int) -> np.ndarray:
    """(B, n, n) causal mask; padded rows may only see themselves."""
    base = build_mask(width)
    out = np.broadcast_to(base, (len(lengths), width, width)).copy()
    cols = np.arange(width)
    for b, L in enumerate(lengths):
        if L < width:
            out[b, :, L:] = -np.inf
            out[b, L:, :] = -np.inf
            out[b, cols[L:], cols[L:]] = 0.0
    return out


def attend(query: Tensor, keys: Tensor, values: Tensor, mask=None) -> tuple[Tensor, Tensor]:
    d = query.shape[-1]
    scores = nx.scale(nx.matmul(query, nx.transpose(keys)), 1.0 / math.sqrt(d))
    weights = nx.softmax_rows(scores, mask)
    return nx.matmul(weights, values), weights


def pass_wide(M: Tensor, P: dict[str, Tensor], mask=None) -> tuple[Tensor, Tensor]:
    """Target pack queries every wide pack; returns (h, attention row)."""
    q = nx.matmul(nx.take_row(M, 0), P["wide_q"])
    return attend(q, nx.matmul(M, P["wide_k"]), nx.matmul(M, P["wide_v"]), mask)


def successive_attention(M: Tensor, P: dict[str, Tensor], mask=None) -> tuple[Tensor, Tensor]:
    if mask is None:
        mask = build_mask(M.shape[-2])
    q = nx.matmul(M, P["deep_q"])
    return attend(q, nx.matmul(M, P["deep_k"]), nx.matmul(M, P["deep_v"]), mask)


def pass_deep(
    H: Tensor, M: Tensor, P: dict[str, Tensor], mask=None, deep_values: str = "packs"
) -> tuple[Tensor, Tensor]:
    if H.shape != M.shape:
        raise nx.DimensionError(f"pass_deep: H {H.shape} and M {M.shape} differ")
    q = nx.matmul(nx.take_row(M, 0), P["deep_out_q"])
    source = M if deep_values == "packs" else H
    return attend(q, nx.matmul(H, P["deep_out_k"]), nx.matmul(source, P["deep_out_v"]), mask)


def fuse(h_wide: Tensor, h_deep: list[Tensor] | Tensor, P: dict[str, Tensor], strict: bool = False) -> Tensor:
    """Mean-pools deep vectors, concatenates with the wide vector, then
    affine -> ReLU -> L2 normalisation.

    ``h_deep`` is a list of (..., 1, d) tensors or one (..., Phi, d) stack.
    """
    if isinstance(h_deep, list):
        if not h_deep:
            raise ValueError("fuse needs at least one deep vector")
        acc = h_deep[0]
        for h in h_deep[1:]:
            acc = nx.add(acc, h)
        deep = nx.scale(acc, 1.0 / len(h_deep))
    else:
        deep = nx.mean_axis(h_deep, -2)
    if deep.value.ndim == h_wide.value.ndim - 1:
        h_wide = nx.reshape(h_wide, deep.shape)
    pre = nx.add(nx.matmul(nx.concat_cols(h_wide, deep), P["fuse_w"]), P["fuse_b"])
    return nx.l2_normalize_row(nx.relu(pre), strict=strict)


# ---------------------------------------------------------------- full forward


@dataclass
class BatchForward:
    targets: list[int]
    embeddings: Tensor  # (B, d)
    wide_attention: list[np.ndarray]
    deep_attention: list[list[np.ndarray]]
    deep_packs: list[list[np.ndarray]] = field(default_factory=list)
    deep_edges: list[list[np.ndarray]] = field(default_factory=list)
    successive_weights: list[list[np.ndarray]] = field(default_factory=list)


def forward_batch(
    targets,
    cache: NeighborCache,
    g: HeteroGraph,
    P: dict[str, Tensor],
    options: ModelOptions | None = None,
    keep_internals: bool = False,
) -> BatchForward:
    opts = options or ModelOptions()
    targets = [int(t) for t in targets]
    B = len(targets)
    phi = cache.phi
    d = P["node_proj"].shape[1]

    wb = make_pack_batch([wide_rows(g, cache.wide[t]) for t in targets], d)
    Mw, _ = pack(wb, g.features, P)
    h_wide, a_wide = pass_wide(Mw, P, padding_mask(wb.lengths, wb.width))

    walks = [w for t in targets for w in cache.deep[t]]
    db = make_pack_batch([deep_rows(g, w) for w in walks], d)
    Md, Ed = pack(db, g.features, P)
    H, S = successive_attention(Md, P, successive_mask(db.lengths, db.width))
    h_deep, a_deep = pass_deep(H, Md, P, padding_mask(db.lengths, db.width), opts.deep_values)

    h_wide = nx.reshape(h_wide, (B, d))
    h_deep = nx.reshape(h_deep, (B, phi, d))
    if not opts.use_wide:
        h_wide = Tensor(np.zeros((B, d)))
    if not opts.use_deep:
        h_deep = Tensor(np.zeros((B, phi, d)))
    v = fuse(h_wide, h_deep, P, strict=opts.strict_norm)

    wide_attention = [a_wide.value[b, 0, : wb.lengths[b]].copy() for b in range(B)]
    deep_attention = [
        [a_deep.value[b * phi + p, 0, : db.lengths[b * phi + p]].copy() for p in range(phi)]
        for b in range(B)
    ]
    out = BatchForward(targets, v, wide_attention, deep_attention)
    if keep_internals:
        for b in range(B):
            packs, edges, succ = [], [], []
            for p in range(phi):
                k = b * phi + p
                L = db.lengths[k]
                packs.append(Md.value[k, :L].copy())
                edges.append(Ed.value[k, :L].copy())
                succ.append(S.value[k, :L, :L].copy())
            out.deep_packs.append(packs)
            out.deep_edges.append(edges)
            out.successive_weights.append(succ)
    return out


@dataclass
class ForwardResult:
    embedding: np.ndarray  # (d,)
    wide_attention: np.ndarray
    deep_attention: list[np.ndarray]


def forward(t: int, cache: NeighborCache, g: HeteroGraph, params: ModelParams, options=None) -> ForwardResult:
    res = forward_batch([t], cache, g, bind(params), options)
    return ForwardResult(res.embeddings.value[0].copy(), res.wide_attention[0], res.deep_attention[0])


def message_count(cache: NeighborCache, targets) -> int:
    """Message packs propagated when forwarding ``targets`` once."""
    return sum(
        len(cache.wide[t]) + 1 + sum(len(w) + 1 for w in cache.deep[t]) for t in targets
    )


def embed_nodes(
    targets, cache: NeighborCache, g: HeteroGraph, params: ModelParams, options=None, batch_size: int = 256
) -> np.ndarray:
    P = bind(params)
    targets = list(targets)
    out = np.zeros((len(targets), params.dim))
    for start in range(0, len(targets), batch_size):
        chunk = targets[start : start + batch_size]
        out[start : start + len(chunk)] = forward_batch(chunk, cache, g, P, options).embeddings.value
    return out


def predict(embeddings: np.ndarray, params: ModelParams) -> np.ndarray:
    # argmax keeps the first maximum, i.e. the lowest class id on ties
    return np.argmax(embeddings @ params.tensors["classifier"], axis=1)


# ---------------------------------------------------------------- checkpoint


def _encode_names(names) -> np.ndarray:
    raw = "\n".join(names).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float64).reshape(1, -1)


def _decode_names(arr: np.ndarray) -> tuple[str, ...]:
    raw = bytes(arr.astype(np.uint8).reshape(-1).tolist()).decode("utf-8")
    return tuple(raw.split("\n")) if raw else ()


def save_checkpoint(path, params: ModelParams) -> None:
    meta = {
        "meta/dims": np.array(
            [[params.dim, params.feature_dim, params.num_edge_types, params.num_classes]], dtype=np.float64
        ),
        "meta/node_types": _encode_names(params.node_type_names),
        "meta/edge_types": _encode_names(params.edge_type_names),
        "meta/classes": _encode_names(params.class_names),
    }
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in [*((k, params.tensors[k]) for k in PARAM_NAMES), *meta.items()]:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        if arr.ndim != 2:
            raise CheckpointError(f"tensor {name} is not a matrix")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<II", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    if len(data) < 8:
        raise CheckpointError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    found: dict[str, np.ndarray] = {}
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            rows, cols = struct.unpack_from("<II", data, pos)
            pos += 8
            size = rows * cols * 8
            if pos + size > len(data):
                raise CheckpointError(f"{path}: tensor {name} is truncated")
            found[name] = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).copy()
            pos += size
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated record ({exc})") from None
    missing = [k for k in (*PARAM_NAMES, "meta/dims") if k not in found]
    if missing:
        raise CheckpointError(f"{path}: missing tensors {missing}")
    params = ModelParams(
        {k: found[k] for k in PARAM_NAMES},
        _decode_names(found.get("meta/node_types", np.zeros((1, 0)))),
        _decode_names(found.get("meta/edge_types", np.zeros((1, 0)))),
        _decode_names(found.get("meta/classes", np.zeros((1, 0)))),
    )
    d, d0, d0e, c = (int(x) for x in found["meta/dims"][0])
    expected = param_shapes(d, d0, d0e, c)
    for k, shape in expected.items():
        if params.tensors[k].shape != shape:
            raise CheckpointError(f"{path}: tensor {k} has shape {params.tensors[k].shape}, expected {shape}")
    return params
