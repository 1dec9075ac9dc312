"""Attribute-guided neighbour selection and shortest-path sampling.

For every target node this builds

* ``top_k``    the most attribute-disparate same-type nodes within ``r_top`` hops,
* ``bottom_k`` the least disparate same-type nodes within ``r_btm`` hops,
* a per-edge message weight vector, decayed by ``alpha`` along the shortest
  path from each target to each of its ``top_k`` nodes,
* an attribute-sampled sequence: the target followed by the nodes on the
  shortest paths to its ``bottom_k`` nodes, truncated to ``n``,
* a hop-ordered context sequence (BFS order) used by the unguided variant.

Shortest paths are BFS paths with neighbours explored in ascending id order,
so exactly one path exists per (source, destination) pair.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import numpy as np

from .disparity import DisparityMatrix, disparity_matrix, disparity_rows
from .hin.graph import HeteroGraph

log = logging.getLogger(__name__)

CACHE_VERSION = 1


class RowSource(Protocol):
    def row(self, i: int) -> np.ndarray: ...


class LazyDisparity:
    """Row-on-demand disparities for target sets too large for a dense matrix."""

    def __init__(self, graph: HeteroGraph):
        self.graph = graph
        self.kind = graph.target_kind

    def row(self, i: int) -> np.ndarray:
        return disparity_rows(self.graph, [i])[0].astype(np.float32)


def disparity_source(graph: HeteroGraph, dense_limit: int = 20000):
    if graph.num_targets > dense_limit:
        log.info("%d targets exceed dense limit %d; computing rows on demand",
                 graph.num_targets, dense_limit)
        return LazyDisparity(graph)
    return disparity_matrix(graph)


@dataclass(frozen=True)
class GuidanceParams:
    k_top: int = 5
    k_btm: int = 5
    n: int = 8
    alpha: float = 0.8
    r_top: int = 4
    r_btm: int = 6
    w_min: float = 1e-3

    def validate(self) -> None:
        if self.k_top < 0 or self.k_btm < 0:
            raise ValueError("k_top and k_btm must be >= 0")
        if self.n < 1:
            raise ValueError("sequence length n must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.r_top < 1 or self.r_btm < 1:
            raise ValueError("hop caps must be >= 1")
        if not 0 < self.w_min <= 1:
            raise ValueError("w_min must lie in (0, 1]")


@dataclass
class GuidanceSets:
    """Per-target guidance; node lists hold global node ids."""

    top_k: list[np.ndarray]
    bottom_k: list[np.ndarray]
    attr_sequences: list[np.ndarray]
    hop_sequences: list[np.ndarray]
    message_weights: np.ndarray
    params: GuidanceParams
    graph_hash: str
    stats: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return guidance_key(self.graph_hash, self.params)

    def to_json(self) -> dict:
        as_lists = lambda seqs: [s.tolist() for s in seqs]  # noqa: E731
        return {
            "graph_hash": self.graph_hash,
            "params": asdict(self.params),
            "stats": self.stats,
            "top_k": as_lists(self.top_k),
            "bottom_k": as_lists(self.bottom_k),
            "attr_sequences": as_lists(self.attr_sequences),
            "hop_sequences": as_lists(self.hop_sequences),
            "message_weights": self.message_weights.tolist(),
        }


def guidance_key(graph_hash: str, params: GuidanceParams) -> str:
    blob = json.dumps({"graph": graph_hash, **asdict(params)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- paths -------------------------------------------------------------------

def shortest_path(graph: HeteroGraph, u: int, v: int, cap: int) -> Optional[list[int]]:
    """One unweighted shortest path ``[u, ..., v]`` with at most ``cap`` edges, or None."""
    graph.check_node(u)
    graph.check_node(v)
    if u == v:
        raise ValueError("shortest_path needs two distinct nodes")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    parent = {int(u): -1}
    depth = {int(u): 0}
    queue = deque([int(u)])
    while queue:
        x = queue.popleft()
        if depth[x] >= cap:
            continue
        for y in graph.neighbors(x).tolist():
            if y in parent:
                continue
            parent[y] = x
            depth[y] = depth[x] + 1
            if y == v:
                return _walk_back(parent, v)
            queue.append(y)
    return None


def _walk_back(parent, v: int) -> list[int]:
    path = [int(v)]
    while parent[path[-1]] != -1:
        path.append(int(parent[path[-1]]))
    path.reverse()
    return path


class _Tree:
    """BFS tree from one source, computed once and queried for many paths."""

    __slots__ = ("source", "depth", "parent", "order")

    def __init__(self, graph: HeteroGraph, source: int):
        self.source = int(source)
        self.order, self.depth, self.parent = graph.bfs_tree(source)

    def path(self, v: int, cap: int) -> Optional[list[int]]:
        d = self.depth[v]
        if d < 0 or d > cap:
            return None
        path = [int(v)]
        while path[-1] != self.source:
            path.append(int(self.parent[path[-1]]))
        path.reverse()
        return path


# -- per-target selection ----------------------------------------------------

def _select(row: np.ndarray, depth_local: np.ndarray, self_local: int, k: int, radius: int,
            largest: bool) -> np.ndarray:
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    cand = np.flatnonzero((depth_local >= 1) & (depth_local <= radius))
    cand = cand[cand != self_local]
    if cand.size == 0:
        return cand
    vals = row[cand].astype(np.float64)
    order = np.lexsort((cand, -vals if largest else vals))
    return cand[order[:k]]


def select_top_bottom(D, graph: HeteroGraph, k_top: int, k_btm: int, r_top: int, r_btm: int):
    """Most / least disparate same-type nodes per target, restricted by hop radius.

    Ties break towards the smaller node id.  Returns two lists of global-id
    arrays indexed by target within-type id.
    """
    if k_top < 0 or k_btm < 0:
        raise ValueError("k_top and k_btm must be >= 0")
    targets = graph.targets
    top, btm = [], []
    for i, v in enumerate(targets.tolist()):
        tree = _Tree(graph, v)
        depth_local = tree.depth[targets]
        row = D.row(i)
        top.append(targets[_select(row, depth_local, i, k_top, r_top, largest=True)])
        btm.append(targets[_select(row, depth_local, i, k_btm, r_btm, largest=False)])
    return top, btm


def _edge_between(graph: HeteroGraph, a: int, b: int) -> int:
    lo, hi = graph.indptr[a], graph.indptr[a + 1]
    pos = lo + int(np.searchsorted(graph.nbr[lo:hi], b))
    return int(graph.nbr_edge[pos])


def _decay_counts(graph: HeteroGraph, tree: _Tree, partners, cap: int, counts: np.ndarray) -> int:
    skipped = 0
    for j in partners.tolist():
        path = tree.path(j, cap)
        if path is None:
            skipped += 1
            continue
        for a, b in zip(path[:-1], path[1:]):
            counts[graph.edge_uid[_edge_between(graph, a, b)]] += 1
    return skipped


def _weights_from_counts(graph: HeteroGraph, counts: np.ndarray, alpha: float,
                         w_min: float) -> np.ndarray:
    per_uid = np.maximum(np.power(float(alpha), counts.astype(np.float64)), w_min)
    if alpha == 1:
        per_uid = np.ones_like(per_uid)
    return per_uid[graph.edge_uid]


def build_message_weights(graph: HeteroGraph, top_k, alpha: float, cap: int = 4,
                          w_min: float = 1e-3) -> np.ndarray:
    """Per directed slot weights: ``max(alpha ** c, w_min)`` where ``c`` counts the
    (target, top-k partner) shortest paths crossing the slot's undirected edge."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    counts = np.zeros(int(graph.edge_uid.max()) + 1 if graph.edge_count else 0, dtype=np.int64)
    for i, v in enumerate(graph.targets.tolist()):
        if len(top_k[i]) == 0:
            continue
        _decay_counts(graph, _Tree(graph, v), np.asarray(top_k[i]), cap, counts)
    return _weights_from_counts(graph, counts, alpha, w_min)


def _attr_sequence(tree: _Tree, partners, n: int, cap: int) -> np.ndarray:
    seq = [tree.source]
    seen = {tree.source}
    for j in partners.tolist():
        if len(seq) >= n:
            break
        path = tree.path(j, cap)
        if path is None:
            continue
        for node in path:
            if node not in seen:
                seen.add(node)
                seq.append(node)
    return np.asarray(seq[:n], dtype=np.int64)


def build_attr_sequences(graph: HeteroGraph, bottom_k, n: int, cap: int = 6) -> list[np.ndarray]:
    """Target first, then nodes along shortest paths to each bottom-k partner."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [_attr_sequence(_Tree(graph, v), np.asarray(bottom_k[i]), n, cap)
            for i, v in enumerate(graph.targets.tolist())]


def hop_sequence(tree: _Tree, n: int, cap: int) -> np.ndarray:
    order = tree.order[tree.depth[tree.order] <= cap]
    return order[:n].astype(np.int64)


def build_hop_sequences(graph: HeteroGraph, n: int, cap: int = 6) -> list[np.ndarray]:
    """BFS-ordered context (nearest nodes of any type first), target first."""
    return [hop_sequence(_Tree(graph, v), n, cap) for v in graph.targets.tolist()]


def build_guidance(graph: HeteroGraph, params: GuidanceParams, D=None) -> GuidanceSets:
    """All guidance structures in one pass (one BFS tree per target)."""
    params.validate()
    if D is None:
        D = disparity_source(graph)
    targets = graph.targets
    n_uid = int(graph.edge_uid.max()) + 1 if graph.edge_count else 0
    counts = np.zeros(n_uid, dtype=np.int64)
    top, btm, seqs, hops = [], [], [], []
    skipped = {"top_pairs_skipped": 0, "bottom_pairs_skipped": 0}
    # canonical order: ascending target id
    for i, v in enumerate(targets.tolist()):
        tree = _Tree(graph, v)
        depth_local = tree.depth[targets]
        row = D.row(i)
        t = targets[_select(row, depth_local, i, params.k_top, params.r_top, largest=True)]
        b = targets[_select(row, depth_local, i, params.k_btm, params.r_btm, largest=False)]
        skipped["top_pairs_skipped"] += _decay_counts(graph, tree, t, params.r_top, counts)
        skipped["bottom_pairs_skipped"] += sum(
            1 for j in b.tolist() if tree.path(j, params.r_btm) is None)
        top.append(t)
        btm.append(b)
        seqs.append(_attr_sequence(tree, b, params.n, params.r_btm))
        hops.append(hop_sequence(tree, params.n, params.r_btm))
    w = _weights_from_counts(graph, counts, params.alpha, params.w_min)
    stats = dict(skipped)
    stats["decayed_edges"] = int(np.count_nonzero(counts))
    stats["mean_sequence_length"] = float(np.mean([s.size for s in seqs])) if seqs else 0.0
    return GuidanceSets(top, btm, seqs, hops, w, params, graph.content_hash(), stats)


# -- cache -------------------------------------------------------------------

def _pack(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.concatenate([[0], np.cumsum([s.size for s in seqs])]).astype(np.int64)
    values = np.concatenate(seqs).astype(np.int64) if seqs else np.zeros(0, np.int64)
    return indptr, values


def _unpack(indptr: np.ndarray, values: np.ndarray) -> list[np.ndarray]:
    return [values[indptr[i]:indptr[i + 1]].copy() for i in range(indptr.size - 1)]


_RAGGED = ("top_k", "bottom_k", "attr_sequences", "hop_sequences")


def save_guidance(guidance: GuidanceSets, path: str | os.PathLike) -> Path:
    """Write a binary (npz) cache; the header records graph hash and params."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"version": CACHE_VERSION, "graph_hash": guidance.graph_hash,
              "params": asdict(guidance.params), "stats": guidance.stats, "key": guidance.key}
    arrays = {"header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
              "message_weights": guidance.message_weights}
    for name in _RAGGED:
        arrays[f"{name}_indptr"], arrays[f"{name}_values"] = _pack(getattr(guidance, name))
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)
    return path


def load_guidance(path: str | os.PathLike) -> GuidanceSets:
    with np.load(path) as z:
        header = json.loads(z["header"].tobytes().decode())
        if header.get("version") != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported guidance cache version {header.get('version')}")
        ragged = {name: _unpack(z[f"{name}_indptr"], z[f"{name}_values"]) for name in _RAGGED}
        weights = z["message_weights"].copy()
    return GuidanceSets(message_weights=weights, params=GuidanceParams(**header["params"]),
                        graph_hash=header["graph_hash"], stats=header.get("stats", {}), **ragged)


def cache_path(cache_dir: str | os.PathLike, graph_hash: str, params: GuidanceParams) -> Path:
    return Path(cache_dir) / f"guidance-{guidance_key(graph_hash, params)}.npz"


def cached_guidance(graph: HeteroGraph, params: GuidanceParams,
                    cache_dir: str | os.PathLike | None) -> GuidanceSets:
    """Load guidance from ``cache_dir`` when present, otherwise build and store it."""
    if cache_dir is None:
        return build_guidance(graph, params)
    path = cache_path(cache_dir, graph.content_hash(), params)
    if path.is_file():
        return load_guidance(path)
    guidance = build_guidance(graph, params)
    save_guidance(guidance, path)
    return guidance
