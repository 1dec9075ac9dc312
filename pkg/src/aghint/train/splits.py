from __future__ import annotations

import logging

import numpy as np

from ..hin.graph import HeteroGraph
from ..rng import stream

log = logging.getLogger(__name__)

TRAIN, VAL, TEST = 0, 1, 2
UNLABELED = -1


class SplitError(ValueError):
    pass


def split_nodes(graph: HeteroGraph, ratios=(24, 6, 70), seed: int = 0) -> np.ndarray:
    """Assign each target to train (0), val (1), test (2); -1 for unlabeled.

    A split stored with the dataset takes precedence over ``ratios``.
    Otherwise labeled targets are shuffled with the seed's "shuffle" stream
    and cut by rounding ``ratios`` (percentages summing to 100).
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 100) > 1e-9:
        raise SplitError(f"split ratios must be three non-negative numbers summing to 100, got {ratios}")
    labeled = np.flatnonzero(graph.labeled)
    if labeled.size < 3:
        raise SplitError(f"need at least 3 labeled targets to split, have {labeled.size}")
    out = np.full(graph.num_targets, UNLABELED, dtype=np.int8)
    if graph.split is not None:
        out[labeled] = graph.split[labeled]
        if np.any(out[labeled] < 0):
            raise SplitError("stored split leaves some labeled targets unassigned")
    else:
        order = labeled.copy()
        stream(seed, "shuffle").shuffle(order)
        m = order.size
        n_train = int(round(m * ratios[0] / 100))
        n_val = int(round(m * ratios[1] / 100))
        n_val = min(n_val, m - n_train)
        out[order[:n_train]] = TRAIN
        out[order[n_train:n_train + n_val]] = VAL
        out[order[n_train + n_val:]] = TEST
    if not np.any(out == TRAIN):
        raise SplitError("training split is empty")
    if not np.any(out == VAL):
        log.warning("validation split is empty; early stopping disabled")
    return out
