"""Attribute disparities between target nodes.

Discrete attributes use the Jaccard distance ``1 - |A & B| / |A | B|`` over
the supports of the binary vectors; continuous attributes use ``1 - cos``
clamped to [0, 1].  Larger always means more disparate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hin.graph import CONTINUOUS, DISCRETE, HeteroGraph


class DisparityError(ValueError):
    pass


def disparity_discrete(x_i, x_j) -> float:
    a = np.asarray(x_i)
    b = np.asarray(x_j)
    if a.shape != b.shape:
        raise DisparityError(f"dimension mismatch {a.shape} vs {b.shape}")
    if not (np.isin(a, (0, 1)).all() and np.isin(b, (0, 1)).all()):
        raise DisparityError("discrete disparity needs 0/1 vectors")
    a = a.astype(bool)
    b = b.astype(bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return 1.0 - np.count_nonzero(a & b) / union


def disparity_continuous(x_i, x_j) -> float:
    a = np.asarray(x_i, dtype=np.float64)
    b = np.asarray(x_j, dtype=np.float64)
    if a.shape != b.shape:
        raise DisparityError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DisparityError("cosine disparity is undefined for a zero vector")
    return float(np.clip(1.0 - a.dot(b) / (na * nb), 0.0, 1.0))


def disparity(x_i, x_j, kind: str) -> float:
    if kind == DISCRETE:
        return disparity_discrete(x_i, x_j)
    if kind == CONTINUOUS:
        return disparity_continuous(x_i, x_j)
    raise DisparityError(f"unknown attribute kind {kind!r}")


@dataclass(frozen=True)
class DisparityMatrix:
    values: np.ndarray  # float32, |targets| x |targets|
    kind: str

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


def _rows_discrete(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    xb = (x != 0).astype(np.float64)
    counts = xb.sum(axis=1)
    inter = xb[rows] @ xb.T
    union = counts[rows][:, None] + counts[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        d = 1.0 - np.where(union > 0, inter / np.where(union > 0, union, 1), 1.0)
    return d


def _rows_continuous(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise DisparityError(f"target {bad} has an all-zero continuous attribute vector")
    xn = x / norms[:, None]
    return np.clip(1.0 - xn[rows] @ xn.T, 0.0, 1.0)


def disparity_rows(graph: HeteroGraph, rows) -> np.ndarray:
    """Disparity of the given target rows (within-type ids) against all targets."""
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    x = graph.target_attributes
    kind = graph.target_kind
    if kind == DISCRETE:
        if not np.isin(x, (0, 1)).all():
            raise DisparityError("discrete target attributes must be 0/1")
        d = _rows_discrete(x, rows)
    elif kind == CONTINUOUS:
        d = _rows_continuous(x, rows)
    else:
        raise DisparityError(f"unknown attribute kind {kind!r}")
    d[np.arange(rows.size), rows] = 0.0
    return d


def disparity_matrix(graph: HeteroGraph, chunk: int = 2048) -> DisparityMatrix:
    """Dense symmetric disparity matrix over all target pairs (float32)."""
    n = graph.num_targets
    out = np.empty((n, n), dtype=np.float32)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(n, start + chunk))
        out[rows] = disparity_rows(graph, rows)
    # exact symmetry regardless of rounding in the block products
    out = np.minimum(out, out.T)
    np.fill_diagonal(out, 0.0)
    return DisparityMatrix(out, graph.target_kind)


@dataclass(frozen=True)
class NeighborhoodDisparity:
    values: np.ndarray        # normalised, NaN where undefined
    raw_values: np.ndarray    # mean disparity, NaN where undefined
    defined_mask: np.ndarray
    k: int


def min_max(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a zero range maps everything to 0."""
    lo, hi = values.min(), values.max()
    if hi - lo <= 0:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def neighborhood_disparity(graph: HeteroGraph, k: int,
                           matrix: DisparityMatrix | None = None) -> NeighborhoodDisparity:
    """Mean disparity of each target to its same-type k-hop neighbours, min-max scaled."""
    if k < 1:
        raise ValueError("k must be >= 1")
    targets = graph.targets
    to_local = np.full(graph.node_count, -1, dtype=np.int64)
    to_local[targets] = np.arange(targets.size)
    raw = np.full(targets.size, np.nan)
    for i, v in enumerate(targets.tolist()):
        nbrs = to_local[graph.k_hop_same_type(v, k)]
        if nbrs.size == 0:
            continue
        if matrix is not None:
            d = matrix.values[i, nbrs].astype(np.float64)
        else:
            d = disparity_rows(graph, [i])[0, nbrs]
        raw[i] = d.mean()
    defined = ~np.isnan(raw)
    if not defined.any():
        raise DisparityError(f"no target node has a same-type neighbour within {k} hops")
    norm = np.full(targets.size, np.nan)
    norm[defined] = min_max(raw[defined])
    return NeighborhoodDisparity(norm, raw, defined, k)


@dataclass(frozen=True)
class BucketAssignment:
    bucket_of: np.ndarray   # -1 for undefined nodes
    boundaries: np.ndarray

    @property
    def num_buckets(self) -> int:
        return self.boundaries.size - 1

    def counts(self) -> np.ndarray:
        b = self.bucket_of[self.bucket_of >= 0]
        return np.bincount(b, minlength=self.num_buckets)


def bucketize(nd: NeighborhoodDisparity | np.ndarray, num_buckets: int = 5) -> BucketAssignment:
    """Equal-width buckets over [0, 1]; the last bucket is closed on the right."""
    if num_buckets < 2:
        raise ValueError("need at least 2 buckets")
    values = nd.values if isinstance(nd, NeighborhoodDisparity) else np.asarray(nd, dtype=float)
    bucket = np.full(values.size, -1, dtype=np.int64)
    ok = ~np.isnan(values)
    b = np.floor(values[ok] * num_buckets).astype(np.int64)
    bucket[ok] = np.clip(b, 0, num_buckets - 1)
    return BucketAssignment(bucket, np.linspace(0.0, 1.0, num_buckets + 1))
