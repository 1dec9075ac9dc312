"""Per-bucket comparison of two trained models along neighborhood disparity."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..disparity import BucketAssignment, bucketize, neighborhood_disparity
from ..hin.graph import HeteroGraph
from ..model import predict
from .metrics import accuracy, f1_scores
from .splits import TEST


@dataclass
class BucketRow:
    bucket: int
    lower: float
    upper: float
    count: int
    micro_a: Optional[float]
    micro_b: Optional[float]
    delta: Optional[float]


@dataclass
class CaseStudy:
    rows: list
    k: int
    num_buckets: int
    meta: dict = field(default_factory=dict)

    @property
    def deltas(self) -> list:
        return [r.delta for r in self.rows]

    def extreme_deltas(self) -> tuple[Optional[float], Optional[float]]:
        """Delta of the lowest and highest non-empty buckets."""
        filled = [r for r in self.rows if r.count > 0]
        if not filled:
            return None, None
        return filled[0].delta, filled[-1].delta

    def to_dict(self) -> dict:
        return {"k": self.k, "num_buckets": self.num_buckets, "rows": [asdict(r) for r in self.rows],
                "meta": self.meta}

    def write(self, csv_path, json_path=None) -> None:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bucket", "lower", "upper", "count", "micro_f1_a", "micro_f1_b", "delta"])
            for r in self.rows:
                w.writerow([r.bucket, r.lower, r.upper, r.count,
                            "" if r.micro_a is None else r.micro_a,
                            "" if r.micro_b is None else r.micro_b,
                            "" if r.delta is None else r.delta])
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.to_dict(), indent=2))


def held_out_buckets(graph: HeteroGraph, split: np.ndarray, k: int = 2,
                     num_buckets: int = 5) -> tuple[np.ndarray, BucketAssignment]:
    """Test-split targets with defined neighborhood disparity and their bucket assignment."""
    nd_ = neighborhood_disparity(graph, k)
    assign = bucketize(nd_, num_buckets)
    rows = np.flatnonzero((split == TEST) & (assign.bucket_of >= 0))
    return rows, assign


def bucket_accuracy(predictions: np.ndarray, labels: np.ndarray, rows: np.ndarray,
                    assign: BucketAssignment) -> list:
    """Accuracy per bucket over ``rows``; None for empty buckets."""
    out = []
    for b in range(len(assign.boundaries) - 1):
        sel = rows[assign.bucket_of[rows] == b]
        out.append(None if sel.size == 0 else accuracy(predictions[sel], labels[sel]))
    return out


def case_study(graph: HeteroGraph, logits_a: np.ndarray, logits_b: np.ndarray,
               split: np.ndarray, k: int = 2, num_buckets: int = 5,
               meta: Optional[dict] = None) -> CaseStudy:
    """Test Micro-F1 of two models per disparity bucket; ``delta = a - b``.

    Both models are scored on the same split and bucketization.  Buckets
    without test nodes yield a row with count 0 and null metrics.
    """
    if logits_a.shape != logits_b.shape:
        raise ValueError("the two models produce logits of different shapes")
    rows, assign = held_out_buckets(graph, split, k, num_buckets)
    pred_a = predict(logits_a, graph.multi_label)
    pred_b = predict(logits_b, graph.multi_label)
    out = []
    for b in range(num_buckets):
        sel = rows[assign.bucket_of[rows] == b]
        lo, hi = float(assign.boundaries[b]), float(assign.boundaries[b + 1])
        if sel.size == 0:
            out.append(BucketRow(b, lo, hi, 0, None, None, None))
            continue
        true = graph.labels[sel]
        ma = f1_scores(pred_a[sel], true, graph.num_classes)[0]
        mb = f1_scores(pred_b[sel], true, graph.num_classes)[0]
        out.append(BucketRow(b, lo, hi, int(sel.size), ma, mb, ma - mb))
    return CaseStudy(out, k, num_buckets, dict(meta or {}))
