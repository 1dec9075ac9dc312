"""In-memory heterogeneous graph and neighbourhood queries."""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

DISCRETE = "discrete"
CONTINUOUS = "continuous"
SPLIT_NAMES = ("train", "val", "test")


class GraphError(ValueError):
    """Base class for graph construction and validation failures."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class MissingFileError(GraphError):
    pass


class DanglingEdgeError(GraphError):
    pass


class AttributeDimensionError(GraphError):
    pass


class UnknownTypeError(GraphError):
    pass


@dataclass(frozen=True)
class NodeTypeInfo:
    name: str
    attr_kind: str = CONTINUOUS
    attr_dim: int = 0
    # False when the attribute matrix was synthesised by the fill policy
    has_attributes: bool = True


@dataclass(eq=False)
class HeteroGraph:
    """Typed nodes and edges with per-type attribute matrices.

    Every undirected input edge occupies two directed slots (``src[e] ->
    dst[e]``) that share ``edge_uid[e]``.  Out-neighbour lists are stored in
    CSR form sorted by neighbour id.  Labels cover the target type only,
    indexed by within-type id; ``labeled`` flags which targets carry one.
    """

    node_types: list[NodeTypeInfo]
    edge_type_names: list[str]
    node_type_of: np.ndarray
    local_id: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_type_of: np.ndarray
    edge_uid: np.ndarray
    attributes: list[np.ndarray]
    target_type: int
    num_classes: int
    labels: np.ndarray
    labeled: np.ndarray
    multi_label: bool = False
    split: Optional[np.ndarray] = None
    name: str = "graph"
    indptr: np.ndarray = field(init=False, repr=False)
    nbr: np.ndarray = field(init=False, repr=False)
    nbr_edge: np.ndarray = field(init=False, repr=False)
    type_nodes: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = self.node_type_of.size
        order = np.lexsort((np.arange(self.edge_src.size), self.edge_dst, self.edge_src))
        counts = np.bincount(self.edge_src, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.nbr = self.edge_dst[order].astype(np.int64)
        self.nbr_edge = order.astype(np.int64)
        self.type_nodes = []
        for t in range(len(self.node_types)):
            members = np.flatnonzero(self.node_type_of == t)
            members = members[np.argsort(self.local_id[members], kind="stable")]
            self.type_nodes.append(members)
        self._csr: Optional[csr_matrix] = None
        self._hash: Optional[str] = None
        self.validate()

    # -- sizes ---------------------------------------------------------------
    @property
    def node_count(self) -> int:
        return int(self.node_type_of.size)

    @property
    def edge_count(self) -> int:
        return int(self.edge_src.size)

    @property
    def num_node_types(self) -> int:
        return len(self.node_types)

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_type_names)

    @property
    def targets(self) -> np.ndarray:
        """Global ids of target nodes in within-type order."""
        return self.type_nodes[self.target_type]

    @property
    def num_targets(self) -> int:
        return int(self.targets.size)

    @property
    def target_kind(self) -> str:
        return self.node_types[self.target_type].attr_kind

    @property
    def target_attributes(self) -> np.ndarray:
        return self.attributes[self.target_type]

    def stats(self) -> dict:
        info = self.node_types[self.target_type]
        return {
            "name": self.name,
            "nodes": self.node_count,
            "edges": self.edge_count,
            "node_types": self.num_node_types,
            "edge_types": self.num_edge_types,
            "target": info.name,
            "classes": self.num_classes,
            "target_attributes": int(self.target_attributes.shape[1]),
            "labeled_targets": int(self.labeled.sum()),
        }

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        n = self.node_count
        if self.num_node_types + self.num_edge_types <= 2:
            raise GraphError("not heterogeneous: need |node types| + |edge types| > 2")
        for arr in (self.edge_src, self.edge_dst):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise DanglingEdgeError("edge endpoint outside node range")
        if self.edge_type_of.size and (self.edge_type_of.min() < 0
                                       or self.edge_type_of.max() >= self.num_edge_types):
            raise UnknownTypeError("edge type id outside declared edge types")
        if self.node_type_of.size and (self.node_type_of.min() < 0
                                       or self.node_type_of.max() >= self.num_node_types):
            raise UnknownTypeError("node type id outside declared node types")
        # the two slots of every undirected edge must mirror each other
        by_uid = np.argsort(self.edge_uid, kind="stable")
        uids = self.edge_uid[by_uid]
        if uids.size % 2 or np.any(uids[0::2] != uids[1::2]):
            raise GraphError("every undirected edge id must own exactly two directed slots")
        a, b = by_uid[0::2], by_uid[1::2]
        if np.any(self.edge_src[a] != self.edge_dst[b]) or np.any(self.edge_dst[a] != self.edge_src[b]):
            raise GraphError("paired directed slots are not reverses of each other")
        for t, info in enumerate(self.node_types):
            x = self.attributes[t]
            if x.shape[0] != self.type_nodes[t].size:
                raise AttributeDimensionError(
                    f"type {info.name!r}: {x.shape[0]} attribute rows for {self.type_nodes[t].size} nodes")
            if x.shape[1] != info.attr_dim:
                raise AttributeDimensionError(
                    f"type {info.name!r}: attribute dim {x.shape[1]} != declared {info.attr_dim}")
            if not np.isfinite(x).all():
                raise GraphError(f"type {info.name!r}: non-finite attribute values")
        nt = self.num_targets
        if self.labeled.shape != (nt,):
            raise GraphError("labeled mask must cover every target node")
        if self.multi_label:
            if self.labels.shape != (nt, self.num_classes):
                raise GraphError("multi-label labels must be a targets x classes matrix")
        else:
            if self.labels.shape != (nt,):
                raise GraphError("labels must be one class index per target")
            lab = self.labels[self.labeled]
            if lab.size and (lab.min() < 0 or lab.max() >= self.num_classes):
                raise GraphError("class index outside [0, num_classes)")
        if self.split is not None and self.split.shape != (nt,):
            raise GraphError("split must cover every target node")

    # -- neighbourhoods --------------------------------------------------------
    def neighbors(self, v: int) -> np.ndarray:
        return self.nbr[self.indptr[v]:self.indptr[v + 1]]

    def check_node(self, v: int) -> None:
        if not (0 <= int(v) < self.node_count):
            raise IndexError(f"node id {v} outside [0, {self.node_count})")

    def csr(self) -> csr_matrix:
        if self._csr is None:
            data = np.ones(self.nbr.size, dtype=np.int8)
            self._csr = csr_matrix((data, self.nbr, self.indptr),
                                   shape=(self.node_count, self.node_count))
        return self._csr

    def bfs(self, source: int, max_depth: int | None = None) -> dict[int, tuple[int, int]]:
        """Breadth-first search from ``source``.

        Returns ``{node: (depth, parent)}`` for every reached node.  Neighbours
        are explored in ascending id order, so each node's parent is the first
        dequeued node adjacent to it.
        """
        self.check_node(source)
        found = {int(source): (0, -1)}
        queue = deque([int(source)])
        while queue:
            x = queue.popleft()
            depth = found[x][0]
            if max_depth is not None and depth >= max_depth:
                continue
            for y in self.neighbors(x):
                y = int(y)
                if y not in found:
                    found[y] = (depth + 1, x)
                    queue.append(y)
        return found

    def bfs_tree(self, source: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full BFS (same exploration order as :meth:`bfs`), vectorised.

        Returns ``(order, depth, parent)``; ``depth`` and ``parent`` are -1 for
        unreached nodes (``parent[source]`` is -1 as well).
        """
        order, pred = breadth_first_order(self.csr(), int(source), directed=True,
                                          return_predecessors=True)
        pred = pred.astype(np.int64)
        pred[pred < 0] = -1
        depth = np.full(self.node_count, -1, dtype=np.int64)
        depth[source] = 0
        # BFS order lists each node after its parent
        pending = order[1:]
        while pending.size:
            known = depth[pred[pending]] >= 0
            depth[pending[known]] = depth[pred[pending[known]]] + 1
            pending = pending[~known]
        return order.astype(np.int64), depth, pred

    def k_hop_same_type(self, v: int, k: int) -> np.ndarray:
        """Sorted ids of nodes ``u != v`` sharing ``v``'s type within ``k`` hops."""
        self.check_node(v)
        if k < 1:
            raise ValueError("k must be >= 1")
        t = self.node_type_of[v]
        reached = self.bfs(v, max_depth=k)
        out = [u for u in reached if u != v and self.node_type_of[u] == t]
        return np.array(sorted(out), dtype=np.int64)

    # -- identity ----------------------------------------------------------------
    def _hash_parts(self) -> Iterator[bytes]:
        meta = {
            "node_types": [vars(t) for t in self.node_types],
            "edge_types": self.edge_type_names,
            "target_type": self.target_type,
            "num_classes": self.num_classes,
            "multi_label": self.multi_label,
        }
        yield json.dumps(meta, sort_keys=True).encode()
        for arr in (self.node_type_of, self.local_id, self.edge_src, self.edge_dst,
                    self.edge_type_of, self.edge_uid, self.labels, self.labeled,
                    *self.attributes):
            a = np.ascontiguousarray(arr)
            yield str(a.dtype).encode() + str(a.shape).encode()
            yield a.tobytes()
        if self.split is not None:
            yield np.ascontiguousarray(self.split).tobytes()

    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            for part in self._hash_parts():
                h.update(part)
            self._hash = h.hexdigest()[:16]
        return self._hash

    def equals(self, other: "HeteroGraph") -> bool:
        """Structural equality including attributes at full precision."""
        if self.node_types != other.node_types or self.edge_type_names != other.edge_type_names:
            return False
        if (self.target_type, self.num_classes, self.multi_label) != (
                other.target_type, other.num_classes, other.multi_label):
            return False
        pairs = [(self.node_type_of, other.node_type_of), (self.local_id, other.local_id),
                 (self.labels, other.labels), (self.labeled, other.labeled)]
        pairs += list(zip(self.attributes, other.attributes))
        if not all(np.array_equal(a, b) for a, b in pairs):
            return False
        if (self.split is None) != (other.split is None):
            return False
        if self.split is not None and not np.array_equal(self.split, other.split):
            return False
        return _edge_multiset(self) == _edge_multiset(other)


def _edge_multiset(g: HeteroGraph) -> list[tuple[int, int, int]]:
    return sorted(zip(g.edge_src.tolist(), g.edge_dst.tolist(), g.edge_type_of.tolist()))


def pair_edges(src: np.ndarray, dst: np.ndarray, etype: np.ndarray):
    """Turn input rows into paired directed slots.

    A row ``(u, v)`` is paired with a later or earlier unmatched row ``(v, u)``
    (whatever its type) so that datasets listing both directions keep one
    slot per row; rows with no reverse partner get a mirrored slot carrying
    the same edge type.  Returns ``(src, dst, type, uid)`` slot arrays.
    """
    pending: dict[tuple[int, int], deque] = {}
    partner = np.full(src.size, -1, dtype=np.int64)
    for r, (u, v) in enumerate(zip(src.tolist(), dst.tolist())):
        q = pending.get((v, u))
        if q:
            p = q.popleft()
            partner[r] = p
            partner[p] = r
        else:
            pending.setdefault((u, v), deque()).append(r)
    out_src, out_dst, out_type, out_uid = [], [], [], []
    uid = 0
    for r in range(src.size):
        p = partner[r]
        if p >= 0 and p < r:
            continue
        out_src.append(src[r]); out_dst.append(dst[r]); out_type.append(etype[r])
        if p >= 0:
            out_src.append(src[p]); out_dst.append(dst[p]); out_type.append(etype[p])
        else:
            out_src.append(dst[r]); out_dst.append(src[r]); out_type.append(etype[r])
        out_uid += [uid, uid]
        uid += 1
    as_i = lambda xs: np.asarray(xs, dtype=np.int64)  # noqa: E731
    return as_i(out_src), as_i(out_dst), as_i(out_type), as_i(out_uid)


def fill_attributes(type_id: int, count: int, dim: int, num_types: int) -> np.ndarray:
    """One-hot type indicator padded with zeros, for types without attributes."""
    if dim < num_types:
        raise AttributeDimensionError(
            f"filled attribute dim {dim} cannot hold a one-hot over {num_types} types")
    x = np.zeros((count, dim))
    x[:, type_id] = 1.0
    return x
