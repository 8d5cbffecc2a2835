"""Forward and analytic-backward numerics for the linking scorer.

The score path: relation-aware graph attention over the enclosing subgraph
(per-edge logit = attention-vector dot concat of relation-transformed source
and destination states, softmax over each node's incoming edges, leaky-ReLU
of bias plus attention-weighted messages), then a cross-graph update of the
schema-side rows gated by a sigmoid relevance against the mean-pooled query
embedding, and finally a sigmoid over the grand sum of all node embeddings.

Backward passes mirror the forward caches exactly; gradients cover every
parameter (both embedding tables, relation embeddings, every layer's
transforms/attention/bias, and the three cross-graph matrices), which the
finite-difference suite checks end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StructSqlError
from ..question.graph import QueryRelation
from ..question.tokens import Token
from ..schema_graph import schema_label
from .model import LEAKY_SLOPE, REL_INDEX, LinkerModel, bucket_of
from .subgraph import EnclosingSubgraph

_QREL_NAME = {
    QueryRelation.FORWARD_SYNTAX: "forward_syntax",
    QueryRelation.BACKWARD_SYNTAX: "backward_syntax",
    QueryRelation.NONE_SYNTAX: "none_syntax",
}


@dataclass
class GraphTensors:
    """Edge/node arrays for one enclosing subgraph, edges sorted by
    destination so softmax segments are contiguous."""

    n_nodes: int
    src: np.ndarray  # (E,) int
    dst: np.ndarray  # (E,) int
    rel: np.ndarray  # (E,) int
    seg_starts: np.ndarray  # (n_nodes + 1,) edge segment boundaries per dst
    emb_table: np.ndarray  # (n,) 0 = token table, 1 = label table
    emb_bucket: np.ndarray  # (n,) bucket index
    query_idx: np.ndarray  # indices of query rows
    schema_idx: np.ndarray  # indices of schema rows
    schema_adj: np.ndarray  # (p, p) 0/1 neighbor matrix within the schema part

    @classmethod
    def from_subgraph(cls, esg: EnclosingSubgraph, buckets: int) -> "GraphTensors":
        qg = esg.query_graph
        m = len(qg.nodes)
        n = esg.n_nodes

        edges: list[tuple[int, int, int]] = []
        linked_pairs = set()
        for e in qg.edges:
            edges.append((e.source, e.target, REL_INDEX[_QREL_NAME[e.relation]]))
            linked_pairs.add((e.source, e.target))
        none_rel = REL_INDEX["none_syntax"]
        for i in range(m):
            for j in range(m):
                if i != j and (i, j) not in linked_pairs:
                    edges.append((i, j, none_rel))
        for e in esg.schema_edges:
            rel = REL_INDEX[e.relation.value]
            edges.append((e.source, e.target, rel))
            edges.append((e.target, e.source, rel))
        bridge_rel = REL_INDEX["candidate_link"]
        a, c = esg.bridge
        edges.append((a, c, bridge_rel))
        edges.append((c, a, bridge_rel))
        self_rel = REL_INDEX["self_loop"]
        for i in range(n):
            edges.append((i, i, self_rel))

        edges.sort(key=lambda t: (t[1], t[0], t[2]))
        src = np.array([e[0] for e in edges], dtype=np.int64)
        dst = np.array([e[1] for e in edges], dtype=np.int64)
        rel = np.array([e[2] for e in edges], dtype=np.int64)
        seg_starts = np.zeros(n + 1, dtype=np.int64)
        np.add.at(seg_starts, dst + 1, 1)
        seg_starts = np.cumsum(seg_starts)

        emb_table = np.zeros(n, dtype=np.int64)
        emb_bucket = np.zeros(n, dtype=np.int64)
        for i, tok in enumerate(qg.nodes):
            emb_table[i] = 0
            emb_bucket[i] = bucket_of(tok.lemma, buckets)
        for local in esg.schema_local_ids:
            _side, orig = esg.to_original[local]
            node = esg.schema_graph.nodes[orig]
            emb_table[local] = 1
            emb_bucket[local] = bucket_of(schema_label(node), buckets)

        p = len(esg.schema_local_ids)
        adj = np.zeros((p, p), dtype=np.float64)
        base = esg.schema_local_ids[0]
        for e in esg.schema_edges:
            ji, li = e.source - base, e.target - base
            adj[ji, li] = 1.0
            adj[li, ji] = 1.0
        np.fill_diagonal(adj, 0.0)

        return cls(
            n_nodes=n,
            src=src,
            dst=dst,
            rel=rel,
            seg_starts=seg_starts,
            emb_table=emb_table,
            emb_bucket=emb_bucket,
            query_idx=np.arange(m, dtype=np.int64),
            schema_idx=np.array(list(esg.schema_local_ids), dtype=np.int64),
            schema_adj=adj,
        )


def _segment_softmax(logits: np.ndarray, seg_starts: np.ndarray) -> np.ndarray:
    alpha = np.empty_like(logits)
    for i in range(len(seg_starts) - 1):
        lo, hi = seg_starts[i], seg_starts[i + 1]
        if lo == hi:
            continue
        seg = logits[lo:hi]
        shifted = np.exp(seg - seg.max())
        alpha[lo:hi] = shifted / shifted.sum()
    return alpha


@dataclass
class _LayerCache:
    H_in: np.ndarray
    S: np.ndarray  # (E, d) relation-transformed sources
    D: np.ndarray  # (E, d) relation-transformed destinations
    alpha: np.ndarray  # (E,)
    msgs: np.ndarray  # (E, d)
    z: np.ndarray  # (n, d) pre-activation


@dataclass
class ScorePath:
    """One forward evaluation with everything needed for backward."""

    tensors: GraphTensors
    layer_caches: list[_LayerCache] = field(default_factory=list)
    H_rgat: np.ndarray | None = None
    # cross-aggregation caches
    h_g: np.ndarray | None = None
    u: np.ndarray | None = None
    alphas: np.ndarray | None = None
    K: np.ndarray | None = None
    q_vec: np.ndarray | None = None
    updated: np.ndarray | None = None
    logit: float = 0.0
    score: float = 0.0


def _rel_groups(rel: np.ndarray):
    groups = []
    for r in np.unique(rel):
        groups.append((int(r), np.nonzero(rel == r)[0]))
    return groups


def rgat_forward(model: LinkerModel, tensors: GraphTensors, path: ScorePath) -> np.ndarray:
    d = model.embedding_dim
    n = tensors.n_nodes
    H = np.empty((n, d), dtype=np.float64)
    tok_rows = tensors.emb_table == 0
    H[tok_rows] = model.tok_emb[tensors.emb_bucket[tok_rows]]
    H[~tok_rows] = model.lab_emb[tensors.emb_bucket[~tok_rows]]

    groups = _rel_groups(tensors.rel)
    E = len(tensors.src)
    for layer in model.layers:
        S = np.empty((E, d))
        D = np.empty((E, d))
        logits = np.empty(E)
        msgs = np.empty((E, d))
        a1, a2 = layer.a[:d], layer.a[d:]
        for r, idx in groups:
            Wr = layer.W[r]
            S[idx] = H[tensors.src[idx]] @ Wr.T
            D[idx] = H[tensors.dst[idx]] @ Wr.T
            msgs[idx] = S[idx] + model.rel_emb[r]
        logits = S @ a1 + D @ a2
        alpha = _segment_softmax(logits, tensors.seg_starts)
        z = np.tile(layer.b, (n, 1)).astype(np.float64)
        np.add.at(z, tensors.dst, alpha[:, None] * msgs)
        H_next = np.where(z > 0, z, LEAKY_SLOPE * z)
        path.layer_caches.append(
            _LayerCache(H_in=H, S=S, D=D, alpha=alpha, msgs=msgs, z=z)
        )
        H = H_next
    path.H_rgat = H
    return H


def cross_forward(model: LinkerModel, tensors: GraphTensors, path: ScorePath):
    H = path.H_rgat
    Hq = H[tensors.query_idx]
    Hk = H[tensors.schema_idx]
    h_g = Hq.mean(axis=0)
    u = model.W_g.T @ h_g
    pre = Hk @ u
    alphas = 1.0 / (1.0 + np.exp(-pre))
    K = Hk @ model.W_k.T
    q_vec = model.W_q @ h_g
    M = tensors.schema_adj + np.eye(len(tensors.schema_idx))
    updated = M @ (alphas[:, None] * K) + (1.0 - alphas)[:, None] * q_vec[None, :]
    path.h_g, path.u, path.alphas, path.K, path.q_vec, path.updated = (
        h_g,
        u,
        alphas,
        K,
        q_vec,
        updated,
    )
    return updated


def score_forward(model: LinkerModel, tensors: GraphTensors) -> ScorePath:
    """Score = sigmoid of the summed key-side embeddings after the cross
    update. Summing only the key side keeps the logit sign-balanced (the
    rectified query rows would bias it positive and saturate the sigmoid);
    the query structure still enters through message passing and the pooled
    gate."""
    path = ScorePath(tensors=tensors)
    rgat_forward(model, tensors, path)
    cross_forward(model, tensors, path)
    logit = float(path.updated.sum())
    path.logit = logit
    path.score = 1.0 / (1.0 + math.exp(-logit))
    return path


def score_backward(
    model: LinkerModel,
    path: ScorePath,
    dscore: float,
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate d(score)/d(params) * dscore into ``grads``."""
    tensors = path.tensors
    d = model.embedding_dim
    n = tensors.n_nodes
    s = path.score
    dlogit = dscore * s * (1.0 - s)

    dH = np.zeros((n, d))
    dupdated = np.full_like(path.updated, dlogit)

    # ---- cross-aggregation backward ----
    Hq = path.H_rgat[tensors.query_idx]
    Hk = path.H_rgat[tensors.schema_idx]
    m = len(tensors.query_idx)
    M = tensors.schema_adj + np.eye(len(tensors.schema_idx))

    dweighted = M.T @ dupdated
    dalphas = np.einsum("jd,jd->j", dweighted, path.K)
    dK = dweighted * path.alphas[:, None]
    dq = ((1.0 - path.alphas)[:, None] * dupdated).sum(axis=0)
    dalphas -= dupdated @ path.q_vec

    grads["W_k"] += dK.T @ Hk
    dHk = dK @ model.W_k

    grads["W_q"] += np.outer(dq, path.h_g)
    dh_g = model.W_q.T @ dq

    dpre = dalphas * path.alphas * (1.0 - path.alphas)
    du = Hk.T @ dpre
    dHk += dpre[:, None] * path.u[None, :]
    grads["W_g"] += np.outer(path.h_g, du)
    dh_g += model.W_g @ du

    dHq = np.tile(dh_g / m, (m, 1))
    dH[tensors.query_idx] += dHq
    dH[tensors.schema_idx] += dHk

    # ---- RGAT backward ----
    groups = _rel_groups(tensors.rel)
    for layer_index in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[layer_index]
        cache = path.layer_caches[layer_index]
        a1, a2 = layer.a[:d], layer.a[d:]

        dz = dH * np.where(cache.z > 0, 1.0, LEAKY_SLOPE)
        grads[f"layer{layer_index}.b"] += dz.sum(axis=0)

        dz_dst = dz[tensors.dst]  # (E, d)
        dalpha = np.einsum("ed,ed->e", dz_dst, cache.msgs)
        dmsgs = cache.alpha[:, None] * dz_dst

        # softmax backward per destination segment
        dlogits = np.empty_like(dalpha)
        for i in range(len(tensors.seg_starts) - 1):
            lo, hi = tensors.seg_starts[i], tensors.seg_starts[i + 1]
            if lo == hi:
                continue
            seg_alpha = cache.alpha[lo:hi]
            seg_dalpha = dalpha[lo:hi]
            inner = (seg_alpha * seg_dalpha).sum()
            dlogits[lo:hi] = seg_alpha * (seg_dalpha - inner)

        dS = dmsgs + dlogits[:, None] * a1[None, :]
        dD = dlogits[:, None] * a2[None, :]
        da = np.concatenate([cache.S.T @ dlogits, cache.D.T @ dlogits])
        grads[f"layer{layer_index}.a"] += da

        dH_in = np.zeros_like(cache.H_in)
        for r, idx in groups:
            Wr = layer.W[r]
            H_src = cache.H_in[tensors.src[idx]]
            H_dst = cache.H_in[tensors.dst[idx]]
            grads[f"layer{layer_index}.W"][r] += dS[idx].T @ H_src + dD[idx].T @ H_dst
            np.add.at(dH_in, tensors.src[idx], dS[idx] @ Wr)
            np.add.at(dH_in, tensors.dst[idx], dD[idx] @ Wr)
            grads["rel_emb"][r] += dmsgs[idx].sum(axis=0)
        dH = dH_in

    # ---- embedding backward ----
    tok_rows = tensors.emb_table == 0
    np.add.at(grads["tok_emb"], tensors.emb_bucket[tok_rows], dH[tok_rows])
    np.add.at(grads["lab_emb"], tensors.emb_bucket[~tok_rows], dH[~tok_rows])


# --------------------------------------------------------------------------
# Public operation surfaces
# --------------------------------------------------------------------------


def rgat_encode(esg: EnclosingSubgraph, model: LinkerModel) -> np.ndarray:
    """Final-layer node embedding matrix for an enclosing subgraph."""
    tensors = GraphTensors.from_subgraph(esg, model.buckets)
    path = ScorePath(tensors=tensors)
    H = rgat_forward(model, tensors, path)
    if not np.all(np.isfinite(H)):
        raise ConfigError("non-finite values in encoder output")
    return H


def cross_aggregate(
    query_embeddings: np.ndarray,
    candidate_embeddings: np.ndarray,
    model: LinkerModel,
    neighbor_matrix: np.ndarray | None = None,
) -> np.ndarray:
    """Update candidate-side rows from the pooled query embedding.

    ``neighbor_matrix`` is the 0/1 adjacency among the candidate-side rows
    (no diagonal); omitted means isolated rows.
    """
    if query_embeddings.size == 0 or candidate_embeddings.size == 0:
        raise ValueError("embeddings must be non-empty")
    p = candidate_embeddings.shape[0]
    A = neighbor_matrix if neighbor_matrix is not None else np.zeros((p, p))
    h_g = query_embeddings.mean(axis=0)
    alphas = 1.0 / (1.0 + np.exp(-(candidate_embeddings @ (model.W_g.T @ h_g))))
    K = candidate_embeddings @ model.W_k.T
    q_vec = model.W_q @ h_g
    M = A + np.eye(p)
    return M @ (alphas[:, None] * K) + (1.0 - alphas)[:, None] * q_vec[None, :]


def cross_aggregate_query_side(
    query_embeddings: np.ndarray,
    candidate_embeddings: np.ndarray,
    model: LinkerModel,
    neighbor_matrix: np.ndarray | None = None,
) -> np.ndarray:
    """Symmetric counterpart: update query rows from the pooled candidate
    side (roles swapped). Off the score path by default; the matching score
    consumes only the key-side update."""
    return cross_aggregate(candidate_embeddings, query_embeddings, model, neighbor_matrix)


def matching_score(esg: EnclosingSubgraph, model: LinkerModel) -> float:
    """Compatibility of (anchor, candidate) in (0, 1); deterministic."""
    tensors = GraphTensors.from_subgraph(esg, model.buckets)
    return score_forward(model, tensors).score


def contrastive_loss(positive_score: float, negative_scores: list[float]) -> float:
    """-log(pos / (pos + sum(neg))) for one anchor; non-negative."""
    if not negative_scores:
        raise ValueError("need at least one negative score")
    for s in [positive_score, *negative_scores]:
        if not 0.0 < s < 1.0:
            raise StructSqlError(f"score {s} outside the open interval (0, 1)")
    total = positive_score + sum(negative_scores)
    return -math.log(positive_score / total)


def contrastive_loss_grad(
    positive_score: float, negative_scores: list[float]
) -> tuple[float, float, list[float]]:
    """(loss, d/dpos, [d/dneg...]) for one anchor."""
    loss = contrastive_loss(positive_score, negative_scores)
    total = positive_score + sum(negative_scores)
    dpos = -1.0 / positive_score + 1.0 / total
    dnegs = [1.0 / total for _ in negative_scores]
    return loss, dpos, dnegs
