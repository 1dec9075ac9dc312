"""Dataset directory format.

A dataset directory holds::

    meta.json            type names, target type, attribute kinds/dims, classes
    nodes.tsv            global-id <TAB> type-id <TAB> within-type-id
    edges.tsv            src-global-id <TAB> dst-global-id <TAB> edge-type-id
    features_<type>.csv  dense attribute rows in within-type order
    labels.tsv           target within-type-id <TAB> class | c1,c2,...
    split.tsv            (optional) target within-type-id <TAB> train|val|test

Files are headerless, UTF-8, newline-delimited.  A node type declared with
``"attributes": false`` (or whose features file is absent) is filled with a
one-hot type indicator padded to its declared dimension.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .graph import (
    CONTINUOUS,
    DISCRETE,
    SPLIT_NAMES,
    AttributeDimensionError,
    DanglingEdgeError,
    GraphError,
    HeteroGraph,
    MissingFileError,
    NodeTypeInfo,
    UnknownTypeError,
    fill_attributes,
    pair_edges,
)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingFileError("required file not found", str(path))
    return path


def _read_int_table(path: Path, ncols: int) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != ncols:
                raise GraphError(f"expected {ncols} tab-separated fields, got {len(parts)}",
                                 str(path), lineno)
            try:
                rows.append([int(p) for p in parts])
            except ValueError:
                raise GraphError(f"non-integer field in {line!r}", str(path), lineno) from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, ncols)


def _parse_meta(path: Path) -> dict:
    with open(_require(path), encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"invalid JSON: {exc}", str(path), exc.lineno) from None
    for key in ("node_types", "edge_types", "target_type", "num_classes"):
        if key not in meta:
            raise GraphError(f"missing key {key!r}", str(path))
    return meta


def load_graph(path: str | os.PathLike) -> HeteroGraph:
    """Load and validate a dataset directory."""
    root = Path(path)
    if not root.is_dir():
        raise MissingFileError("dataset directory not found", str(root))
    meta_path = root / "meta.json"
    meta = _parse_meta(meta_path)

    type_specs = meta["node_types"]
    type_names = [t["name"] for t in type_specs]
    if meta["target_type"] not in type_names:
        raise UnknownTypeError(f"target type {meta['target_type']!r} not declared", str(meta_path))
    target_type = type_names.index(meta["target_type"])
    for spec in type_specs:
        if spec.get("attr_kind", CONTINUOUS) not in (DISCRETE, CONTINUOUS):
            raise GraphError(f"attr_kind of {spec['name']!r} must be discrete or continuous",
                             str(meta_path))
    edge_type_names = list(meta["edge_types"])
    num_classes = int(meta["num_classes"])
    multi_label = bool(meta.get("multi_label", False))

    # nodes
    nodes_path = _require(root / "nodes.tsv")
    nodes = _read_int_table(nodes_path, 3)
    n = nodes.shape[0]
    node_type_of = np.full(n, -1, dtype=np.int64)
    local_id = np.full(n, -1, dtype=np.int64)
    for row, (gid, tid, lid) in enumerate(nodes.tolist(), start=1):
        if not 0 <= gid < n or node_type_of[gid] >= 0:
            raise GraphError(f"global id {gid} is out of range or repeated", str(nodes_path), row)
        if not 0 <= tid < len(type_names):
            raise UnknownTypeError(f"unknown node type id {tid}", str(nodes_path), row)
        node_type_of[gid] = tid
        local_id[gid] = lid
    counts = np.bincount(node_type_of, minlength=len(type_names)) if n else np.zeros(len(type_names), int)
    for t in range(len(type_names)):
        ids = np.sort(local_id[node_type_of == t])
        if not np.array_equal(ids, np.arange(counts[t])):
            raise GraphError(f"within-type ids of {type_names[t]!r} are not 0..{counts[t] - 1}",
                             str(nodes_path))

    # edges
    edges_path = _require(root / "edges.tsv")
    edges = _read_int_table(edges_path, 3)
    if edges.size:
        bad = np.flatnonzero((edges[:, :2] < 0).any(axis=1) | (edges[:, :2] >= n).any(axis=1))
        if bad.size:
            r = int(bad[0])
            raise DanglingEdgeError(f"edge endpoint not among {n} nodes: {edges[r, :2].tolist()}",
                                    str(edges_path), r + 1)
        bad = np.flatnonzero((edges[:, 2] < 0) | (edges[:, 2] >= len(edge_type_names)))
        if bad.size:
            r = int(bad[0])
            raise UnknownTypeError(f"unknown edge type id {edges[r, 2]}", str(edges_path), r + 1)
        bad = np.flatnonzero(edges[:, 0] == edges[:, 1])
        if bad.size:
            raise GraphError("self-loop edges are not accepted", str(edges_path), int(bad[0]) + 1)
    src, dst, etype, uid = pair_edges(edges[:, 0], edges[:, 1], edges[:, 2])

    # attributes
    infos, attributes = [], []
    for t, spec in enumerate(type_specs):
        dim = int(spec.get("attr_dim", 0))
        kind = spec.get("attr_kind", CONTINUOUS)
        fpath = root / f"features_{spec['name']}.csv"
        declared = spec.get("attributes", True)
        if declared and fpath.is_file():
            x = _read_features(fpath, int(counts[t]), dim)
            has = True
        elif t == target_type:
            raise MissingFileError("target type requires an attribute file", str(fpath))
        else:
            dim = dim or len(type_names)
            x = fill_attributes(t, int(counts[t]), dim, len(type_names))
            has = False
        if kind == DISCRETE and has and not np.isin(x, (0.0, 1.0)).all():
            raise GraphError("discrete attributes must be 0/1", str(fpath))
        infos.append(NodeTypeInfo(spec["name"], kind, dim, has))
        attributes.append(x)

    # labels
    nt = int(counts[target_type])
    labels_path = _require(root / "labels.tsv")
    labels, labeled = _read_labels(labels_path, nt, num_classes, multi_label)

    split = None
    split_path = root / "split.tsv"
    if split_path.is_file():
        split = _read_split(split_path, nt)

    return HeteroGraph(
        node_types=infos, edge_type_names=edge_type_names, node_type_of=node_type_of,
        local_id=local_id, edge_src=src, edge_dst=dst, edge_type_of=etype, edge_uid=uid,
        attributes=attributes, target_type=target_type, num_classes=num_classes,
        labels=labels, labeled=labeled, multi_label=multi_label, split=split,
        name=meta.get("name", root.name),
    )


def _read_features(path: Path, rows: int, dim: int) -> np.ndarray:
    out = np.zeros((rows, dim))
    count = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if count >= rows:
                raise AttributeDimensionError(f"more attribute rows than the {rows} nodes of this type",
                                              str(path), lineno)
            vals = np.fromstring(line, sep=",") if line else np.zeros(0)
            if vals.size != dim:
                raise AttributeDimensionError(f"row has {vals.size} values, declared dim is {dim}",
                                              str(path), lineno)
            out[count] = vals
            count += 1
    if count != rows:
        raise AttributeDimensionError(f"{count} attribute rows for {rows} nodes", str(path))
    if not np.isfinite(out).all():
        raise GraphError("non-finite attribute value", str(path))
    return out


def _read_labels(path: Path, nt: int, num_classes: int, multi_label: bool):
    labeled = np.zeros(nt, dtype=bool)
    labels = np.zeros((nt, num_classes), dtype=np.int8) if multi_label else np.full(nt, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            try:
                tid = int(parts[0])
                classes = [int(c) for c in parts[1].split(",") if c != ""] if len(parts) > 1 else []
            except ValueError:
                raise GraphError(f"malformed label line {line!r}", str(path), lineno) from None
            if not 0 <= tid < nt:
                raise DanglingEdgeError(f"label for unknown target {tid}", str(path), lineno)
            if any(not 0 <= c < num_classes for c in classes):
                raise GraphError(f"class index outside [0, {num_classes})", str(path), lineno)
            if multi_label:
                labels[tid, classes] = 1
            else:
                if len(classes) != 1:
                    raise GraphError("multi-class labels need exactly one class", str(path), lineno)
                labels[tid] = classes[0]
            labeled[tid] = True
    return labels, labeled


def _read_split(path: Path, nt: int) -> np.ndarray:
    split = np.full(nt, -1, dtype=np.int8)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in SPLIT_NAMES:
                raise GraphError(f"malformed split line {line!r}", str(path), lineno)
            tid = int(parts[0])
            if not 0 <= tid < nt:
                raise DanglingEdgeError(f"split entry for unknown target {tid}", str(path), lineno)
            split[tid] = SPLIT_NAMES.index(parts[1])
    return split


def save_graph(graph: HeteroGraph, path: str | os.PathLike) -> Path:
    """Write ``graph`` in the directory format; attributes round-trip exactly."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": graph.name,
        "node_types": [
            {"name": t.name, "attr_kind": t.attr_kind, "attr_dim": t.attr_dim,
             "attributes": t.has_attributes}
            for t in graph.node_types
        ],
        "edge_types": graph.edge_type_names,
        "target_type": graph.node_types[graph.target_type].name,
        "num_classes": graph.num_classes,
        "multi_label": graph.multi_label,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    nodes = np.column_stack([np.arange(graph.node_count), graph.node_type_of, graph.local_id])
    np.savetxt(root / "nodes.tsv", nodes, fmt="%d", delimiter="\t")

    # both directions are written, so every row pairs with its reverse on load
    by_uid = np.argsort(graph.edge_uid, kind="stable")
    rows = np.column_stack([graph.edge_src[by_uid], graph.edge_dst[by_uid], graph.edge_type_of[by_uid]])
    np.savetxt(root / "edges.tsv", rows.reshape(-1, 3), fmt="%d", delimiter="\t")

    for t, info in enumerate(graph.node_types):
        fpath = root / f"features_{info.name}.csv"
        if info.has_attributes:
            fmt = "%d" if info.attr_kind == DISCRETE else "%.17g"
            np.savetxt(fpath, graph.attributes[t], fmt=fmt, delimiter=",")
        elif fpath.exists():
            fpath.unlink()

    with open(root / "labels.tsv", "w", encoding="utf-8") as fh:
        for tid in np.flatnonzero(graph.labeled).tolist():
            if graph.multi_label:
                cls = ",".join(str(c) for c in np.flatnonzero(graph.labels[tid]))
            else:
                cls = str(int(graph.labels[tid]))
            fh.write(f"{tid}\t{cls}\n")

    split_path = root / "split.tsv"
    if graph.split is not None:
        with open(split_path, "w", encoding="utf-8") as fh:
            for tid in np.flatnonzero(graph.split >= 0).tolist():
                fh.write(f"{tid}\t{SPLIT_NAMES[graph.split[tid]]}\n")
    elif split_path.exists():
        split_path.unlink()
    return root

