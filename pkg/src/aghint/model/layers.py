"""AGHINT building blocks on top of :mod:`aghint.ndiff`.

All functions take parameters as ``Tensor`` objects and precomputed index
structures as plain numpy arrays, and return ``Tensor`` results so they can
be composed under a gradient tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import ndiff as nd
from ..hin.graph import HeteroGraph
from ..ndiff import Tensor


class Dropout:
    """Supplies (seed, counter) pairs to successive dropout calls of one forward pass."""

    def __init__(self, rate: float = 0.0, seed: int = 0, step: int = 0, training: bool = False):
        self.rate = rate
        self.seed = seed
        self.step = step
        self.training = training
        self._op = 0

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.rate <= 0:
            return x
        counter = self.step * 4096 + self._op
        self._op += 1
        return nd.dropout(x, self.rate, self.seed, counter, training=True)


NO_DROPOUT = Dropout()


@dataclass(frozen=True)
class MessageGraph:
    """Directed message edges ``src -> dst`` sorted by (dst, src, slot).

    ``slot`` maps each message edge to its directed slot in the graph, or -1
    for a self-loop added to a node without in-neighbours.
    """

    src: np.ndarray
    dst: np.ndarray
    slot: np.ndarray
    num_nodes: int

    @classmethod
    def from_graph(cls, graph: HeteroGraph) -> "MessageGraph":
        n = graph.node_count
        src, dst = graph.edge_src, graph.edge_dst
        slot = np.arange(graph.edge_count, dtype=np.int64)
        lonely = np.flatnonzero(np.bincount(dst, minlength=n) == 0)
        src = np.concatenate([src, lonely])
        dst = np.concatenate([dst, lonely])
        slot = np.concatenate([slot, np.full(lonely.size, -1, dtype=np.int64)])
        order = np.lexsort((slot, src, dst))
        return cls(src[order], dst[order], slot[order], n)

    def edge_weights(self, message_weights: Optional[np.ndarray]) -> np.ndarray:
        """Per message-edge weight; self-loops carry 1."""
        w = np.ones(self.src.size)
        if message_weights is not None:
            real = self.slot >= 0
            w[real] = message_weights[self.slot[real]]
        return w


@dataclass(frozen=True)
class SequenceBatch:
    """Flattened token layout for a set of variable-length sequences.

    ``pair_q``/``pair_k`` enumerate every (query, key) token pair inside a
    sequence, grouped by query.  ``first_*`` arrays hold the pairs whose
    query is a sequence's first token, grouped by sequence.
    """

    token_node: np.ndarray
    first_token: np.ndarray
    pair_q: np.ndarray
    pair_k: np.ndarray
    first_pair_k: np.ndarray
    first_pair_seq: np.ndarray

    @property
    def num_tokens(self) -> int:
        return int(self.token_node.size)

    @property
    def num_sequences(self) -> int:
        return int(self.first_token.size)

    @classmethod
    def from_sequences(cls, sequences: Sequence[np.ndarray]) -> "SequenceBatch":
        lengths = np.array([len(s) for s in sequences], dtype=np.int64)
        if np.any(lengths == 0):
            raise ValueError("every sequence must contain at least its target")
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
        token_node = (np.concatenate([np.asarray(s, dtype=np.int64) for s in sequences])
                      if len(sequences) else np.zeros(0, np.int64))
        # all pairs within a sequence: q-major so queries are contiguous
        seq_rep = np.repeat(np.arange(lengths.size), lengths ** 2)
        within = np.arange(seq_rep.size) - np.repeat(np.cumsum(lengths ** 2) - lengths ** 2, lengths ** 2)
        L = lengths[seq_rep]
        pair_q = starts[seq_rep] + within // L
        pair_k = starts[seq_rep] + within % L
        first_pair_seq = np.repeat(np.arange(lengths.size), lengths)
        first_pair_k = np.arange(token_node.size, dtype=np.int64)
        return cls(token_node, starts, pair_q, pair_k, first_pair_k, first_pair_seq)


# -- type-specific projection ---------------------------------------------

def project_features(features: Sequence[Tensor], type_nodes: Sequence[np.ndarray],
                     weights: Sequence[Tensor], biases: Sequence[Tensor], num_nodes: int) -> Tensor:
    """``h_i = x_i W_type(i) + b_type(i)`` assembled into a |V| x d0 matrix."""
    out = None
    for x, idx, W, b in zip(features, type_nodes, weights, biases):
        if x.shape[1] != W.shape[0]:
            raise ValueError(f"attribute dim {x.shape[1]} does not match projection {W.shape}")
        h = nd.add(nd.matmul(x, W), b)
        placed = nd.scatter_weighted_sum(h, None, idx, num_nodes)
        out = placed if out is None else nd.add(out, placed)
    return out


# -- attribute-guided message weighting ---------------------------------------

def agm_layer(H: Tensor, mg: MessageGraph, edge_w: np.ndarray, W: Tensor, a_dst: Tensor,
              a_src: Tensor, slope: float = 0.2, dropout: Dropout = NO_DROPOUT) -> Tensor:
    """One attention layer whose pre-softmax logits are scaled by message weights.

    For a message ``j -> i``: ``logit = (a_dst . s_i + a_src . s_j) * w_ij`` with
    ``s = leaky_relu(H W)``; coefficients are softmax-normalised over the
    in-neighbours of ``i``; heads (columns of ``a_*``) average their
    coefficients; output ``elu(sum_j coef_ij * (W h_j))``.
    """
    if edge_w.shape != mg.src.shape:
        raise ValueError("one weight per message edge is required")
    heads = a_dst.shape[1]
    WH = nd.matmul(H, W)
    S = nd.leaky_relu(WH, slope)
    logits = nd.add(nd.gather_rows(nd.matmul(S, a_dst), mg.dst),
                    nd.gather_rows(nd.matmul(S, a_src), mg.src))
    w = Tensor(edge_w.reshape(-1, 1), dtype=WH.data.dtype)
    logits = nd.mul(logits, w)
    att = nd.segment_softmax(logits, mg.dst)
    coef = nd.sum_last(att)
    if heads > 1:
        coef = nd.scale(coef, 1.0 / heads)
    coef = dropout(coef)
    msg = nd.scatter_weighted_sum(nd.gather_rows(WH, mg.src), coef, mg.dst, mg.num_nodes)
    return nd.elu(msg)


# -- attribute-guided transformer -------------------------------------------

@dataclass
class AGTLayerParams:
    Wq: list[Tensor]
    Wk: list[Tensor]
    Wv: list[Tensor]
    Wo: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    ffn: Optional[tuple[Tensor, Tensor, Tensor, Tensor, Tensor, Tensor]] = None


def _attend(Xq: Tensor, Xk: Tensor, p: AGTLayerParams, q_index: np.ndarray, k_index: np.ndarray,
            segments: np.ndarray, num_queries: int, dropout: Dropout) -> Tensor:
    heads = []
    for Wq, Wk, Wv in zip(p.Wq, p.Wk, p.Wv):
        dk = Wk.shape[1]
        Q = nd.matmul(Xq, Wq)
        K = nd.matmul(Xk, Wk)
        V = nd.matmul(Xk, Wv)
        scores = nd.sum_last(nd.mul(nd.gather_rows(Q, q_index), nd.gather_rows(K, k_index)))
        att = nd.segment_softmax(nd.scale(scores, 1.0 / np.sqrt(dk)), segments)
        att = dropout(att)
        heads.append(nd.scatter_weighted_sum(nd.gather_rows(V, k_index), att, segments, num_queries))
    M = heads[0] if len(heads) == 1 else nd.concat(heads)
    return nd.matmul(M, p.Wo)


def _agt_block(X_res: Tensor, msa: Tensor, p: AGTLayerParams, eps: float) -> Tensor:
    X = nd.layer_norm(nd.add(msa, X_res), p.ln_gain, p.ln_bias, eps)
    if p.ffn is not None:
        W1, b1, W2, b2, g2, bb2 = p.ffn
        F = nd.add(nd.matmul(nd.elu(nd.add(nd.matmul(X, W1), b1)), W2), b2)
        X = nd.layer_norm(nd.add(F, X), g2, bb2, eps)
    return X


def agt_forward(H_prime: Tensor, batch: SequenceBatch, layers: Sequence[AGTLayerParams],
                eps: float = 1e-5, dropout: Dropout = NO_DROPOUT) -> Tensor:
    """Self-attention over each sequence; returns the first position of the last layer.

    Each layer is ``LN(MSA(X) + X)`` with scaled dot-product attention
    restricted to tokens of the same sequence.  The last layer evaluates
    queries only at first positions, which is all the output needs.
    """
    X = nd.gather_rows(H_prime, batch.token_node)
    for p in layers[:-1]:
        msa = _attend(X, X, p, batch.pair_q, batch.pair_k, batch.pair_q, batch.num_tokens, dropout)
        X = _agt_block(X, msa, p, eps)
    p = layers[-1]
    X_first = nd.gather_rows(X, batch.first_token)
    q_index = batch.first_pair_seq
    msa = _attend(X_first, X, p, q_index, batch.first_pair_k, batch.first_pair_seq,
                  batch.num_sequences, dropout)
    return _agt_block(X_first, msa, p, eps)


# -- classifier ----------------------------------------------------------------

def masked_loss(logits: Tensor, labels: np.ndarray, mask: np.ndarray,
                multi_label: bool = False) -> Tensor:
    """Mean cross-entropy (softmax, or per-class sigmoid if multi-label) over masked rows."""
    rows = np.flatnonzero(np.asarray(mask, dtype=bool))
    if rows.size == 0:
        raise ValueError("loss mask selects zero nodes")
    picked = nd.gather_rows(logits, rows)
    if multi_label:
        return nd.binary_cross_entropy_with_logits(picked, labels[rows])
    return nd.cross_entropy_with_logits(picked, labels[rows])


def classify_and_loss(H_final: Tensor, W: Tensor, b: Tensor, labels: np.ndarray,
                      mask: np.ndarray, multi_label: bool = False):
    """Linear classifier; returns ``(logits, predictions, loss over masked rows)``."""
    logits = nd.add(nd.matmul(H_final, W), b)
    loss = masked_loss(logits, labels, mask, multi_label)
    return logits, predict(logits.data, multi_label), loss


def predict(logits: np.ndarray, multi_label: bool = False) -> np.ndarray:
    if multi_label:
        return (logits > 0).astype(np.int8)  # sigmoid(z) > 0.5
    return logits.argmax(axis=-1)
