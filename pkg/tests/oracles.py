"""Scalar-loop references, deliberately free of numpy linear algebra."""

import math


def to_lists(m):
    return [[float(x) for x in row] for row in m]


def matmul(a, b):
    n, k, m = len(a), len(b), len(b[0]) if b else 0
    assert all(len(r) == k for r in a)
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for p in range(k):
                s += a[i][p] * b[p][j]
            out[i][j] = s
    return out


def vecmat(v, m):
    return matmul([v], m)[0]


def dot(u, v):
    return sum(x * y for x, y in zip(u, v))


def softmax(xs):
    top = max(xs)
    e = [math.exp(x - top) for x in xs]
    s = sum(e)
    return [x / s for x in e]


def attention_row(query, keys, values):
    d = len(query)
    scores = [dot(query, k) / math.sqrt(d) for k in keys]
    w = softmax(scores)
    out = [0.0] * len(values[0])
    for wi, v in zip(w, values):
        for j in range(len(v)):
            out[j] += wi * v[j]
    return out, w


def packs(target, nodes, etypes, relays, features, node_type, self_loop, P):
    """Rows [target, *nodes] of node-embedding times edge-embedding."""
    G = to_lists(P["node_proj"])
    E = to_lists(P["edge_emb"])
    rows = []
    all_nodes = [target, *nodes]
    all_types = [self_loop[node_type[target]], *etypes]
    all_relays = [None, *(relays or [None] * len(nodes))]
    for n, e, r in zip(all_nodes, all_types, all_relays):
        v = vecmat([float(x) for x in features[n]], G)
        edge = [float(x) for x in r] if r is not None else E[e]
        rows.append([a * b for a, b in zip(v, edge)])
    return rows


def forward(target, wide_nodes, wide_types, walks, features, node_type, self_loop, P, deep_values="packs"):
    """One target through packaging, wide/deep attention and fusion.

    ``walks`` is a list of (nodes, edge_types, relays) triples.
    """
    L = {k: to_lists(v) for k, v in P.items()}
    Mw = packs(target, wide_nodes, wide_types, None, features, node_type, self_loop, P)
    q = vecmat(Mw[0], L["wide_q"])
    h_wide, a_wide = attention_row(q, [vecmat(m, L["wide_k"]) for m in Mw], [vecmat(m, L["wide_v"]) for m in Mw])

    deep_vecs, deep_attn, succ = [], [], []
    for nodes, etypes, relays in walks:
        M = packs(target, nodes, etypes, relays, features, node_type, self_loop, P)
        n = len(M)
        Q = [vecmat(m, L["deep_q"]) for m in M]
        K = [vecmat(m, L["deep_k"]) for m in M]
        V = [vecmat(m, L["deep_v"]) for m in M]
        H, weights = [], []
        for r in range(n):
            cols = list(range(r, n))  # only later positions are visible
            h, w = attention_row(Q[r], [K[c] for c in cols], [V[c] for c in cols])
            H.append(h)
            weights.append([0.0] * r + w)
        q2 = vecmat(M[0], L["deep_out_q"])
        src = M if deep_values == "packs" else H
        h, a = attention_row(q2, [vecmat(hr, L["deep_out_k"]) for hr in H], [vecmat(s, L["deep_out_v"]) for s in src])
        deep_vecs.append(h)
        deep_attn.append(a)
        succ.append(weights)

    d = len(h_wide)
    mean = [sum(v[j] for v in deep_vecs) / len(deep_vecs) for j in range(d)]
    pre = vecmat(h_wide + mean, L["fuse_w"])
    pre = [max(0.0, x + b) for x, b in zip(pre, L["fuse_b"][0])]
    norm = math.sqrt(sum(x * x for x in pre))
    out = [x / (norm + 1e-12) for x in pre]
    return out, a_wide, deep_attn, succ


def kl(p, q):
    s = 0.0
    for a, b in zip(p, q):
        if a > 0:
            s += a * math.log(a / b)
    return s


def confusion_f1(preds, labels):
    classes = sorted(set(preds) | set(labels))
    tp = fp = fn = 0
    for c in classes:
        for p, y in zip(preds, labels):
            if p == c and y == c:
                tp += 1
            elif p == c and y != c:
                fp += 1
            elif p != c and y == c:
                fn += 1
    return tp / (tp + 0.5 * (fp + fn))
