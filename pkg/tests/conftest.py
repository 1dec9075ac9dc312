from __future__ import annotations

from collections import deque

import numpy as np
import pytest

from aghint import ndiff as nd
from aghint.hin import DISCRETE, HeteroGraph, NodeTypeInfo
from aghint.hin.graph import fill_attributes, pair_edges


def make_graph(node_types, edges, target_attrs=None, labels=None, num_node_types=2,
               num_edge_types=2, kind=DISCRETE, num_classes=2, name="test"):
    """Small graph from per-node type ids and undirected ``(u, v, type)`` triples.

    Type 0 is the target type.  ``target_attrs`` defaults to a random binary
    matrix; non-target types get the one-hot type fill.
    """
    node_types = np.asarray(node_types, dtype=np.int64)
    local = np.zeros_like(node_types)
    for t in range(num_node_types):
        members = np.flatnonzero(node_types == t)
        local[members] = np.arange(members.size)
    n_target = int(np.sum(node_types == 0))
    if target_attrs is None:
        rng = np.random.default_rng(0)
        target_attrs = (rng.random((n_target, 6)) < 0.5).astype(float)
    target_attrs = np.asarray(target_attrs, dtype=float)
    infos = [NodeTypeInfo("t0", kind, target_attrs.shape[1], True)]
    attributes = [target_attrs]
    for t in range(1, num_node_types):
        infos.append(NodeTypeInfo(f"t{t}", DISCRETE, num_node_types, False))
        attributes.append(fill_attributes(t, int(np.sum(node_types == t)), num_node_types, num_node_types))
    if edges:
        e = np.asarray(edges, dtype=np.int64)
        src, dst, et, uid = pair_edges(e[:, 0], e[:, 1], e[:, 2])
    else:
        src = dst = et = uid = np.zeros(0, dtype=np.int64)
    if labels is None:
        labels = np.arange(n_target) % num_classes
    labels = np.asarray(labels, dtype=np.int64)
    return HeteroGraph(
        node_types=infos, edge_type_names=[f"r{r}" for r in range(num_edge_types)],
        node_type_of=node_types, local_id=local, edge_src=src, edge_dst=dst,
        edge_type_of=et, edge_uid=uid, attributes=attributes, target_type=0,
        num_classes=num_classes, labels=labels, labeled=np.ones(n_target, dtype=bool), name=name,
    )


def random_hin(seed: int, n: int = 30, p: float = 0.12, attr_dim: int = 8, kind=DISCRETE,
               num_classes: int = 2):
    """Random two-type graph with at least two targets and a few aux nodes."""
    rng = np.random.default_rng(seed)
    types = (rng.random(n) < 0.4).astype(np.int64)
    types[:2] = 0
    types[2] = 1
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v, int(types[u] != types[v])))
    n_target = int(np.sum(types == 0))
    if kind == DISCRETE:
        attrs = (rng.random((n_target, attr_dim)) < 0.4).astype(float)
        attrs[attrs.sum(axis=1) == 0, 0] = 1.0
    else:
        attrs = rng.normal(size=(n_target, attr_dim))
    labels = rng.integers(0, num_classes, n_target)
    return make_graph(types, edges, attrs, labels, kind=kind, num_classes=num_classes)


def bfs_distances(graph, source: int) -> np.ndarray:
    """Independent oracle: hop distance from ``source`` (-1 unreachable), via a dense adjacency."""
    n = graph.node_count
    adj = np.zeros((n, n), dtype=bool)
    adj[graph.edge_src, graph.edge_dst] = True
    dist = np.full(n, -1)
    dist[source] = 0
    frontier = deque([source])
    while frontier:
        x = frontier.popleft()
        for y in np.flatnonzero(adj[x]):
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                frontier.append(y)
    return dist


@pytest.fixture
def f64():
    with nd.precision(64):
        yield


@pytest.fixture
def toy3():
    # target 0 linked to aux 1 and aux 2
    return make_graph([0, 1, 1], [(0, 1, 0), (0, 2, 0)], target_attrs=[[1.0, 0.0]],
                      labels=[0], num_classes=2)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
