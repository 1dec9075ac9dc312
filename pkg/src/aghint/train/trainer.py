"""Full-graph semi-supervised training with early stopping on validation Macro-F1."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import ndiff as nd
from ..hin.graph import HeteroGraph
from ..model import AGHINT, ModelConfig, load_checkpoint, predict, save_checkpoint
from ..model.layers import masked_loss
from ..pathsample import GuidanceSets
from .metrics import accuracy, f1_scores
from .optim import Adam
from .splits import TEST, TRAIN, VAL, split_nodes

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 300
    patience: int = 50
    seed: int = 0
    split_seed: int = 0
    ratios: tuple = (24, 6, 70)
    precision: int = 32

    def validate(self) -> None:
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 100) > 1e-9:
            raise ValueError("split ratios must sum to 100")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        return d


@dataclass
class MetricsReport:
    micro_f1: float
    macro_f1: float
    accuracy: float
    val_micro_f1: Optional[float] = None
    val_macro_f1: Optional[float] = None
    best_epoch: int = -1
    epochs_run: int = 0
    loss_history: list = field(default_factory=list)
    val_macro_history: list = field(default_factory=list)
    bucket_accuracy: Optional[list] = None
    wall_clock_s: float = 0.0
    model_config: dict = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)
    graph_hash: str = ""
    guidance_key: str = ""
    num_test: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Checkpoint:
    state: dict
    config: ModelConfig
    meta: dict

    def save(self, path) -> Path:
        return save_checkpoint(path, self.state, self.config, self.meta)

    @classmethod
    def load(cls, path, expected: Optional[ModelConfig] = None) -> "Checkpoint":
        state, config, meta = load_checkpoint(path, expected)
        return cls(state, config, meta)


def evaluate_logits(logits: np.ndarray, graph: HeteroGraph, mask: np.ndarray) -> dict:
    """Micro/Macro-F1 and accuracy of ``logits`` on the targets selected by ``mask``."""
    rows = np.flatnonzero(mask)
    pred = predict(logits[rows], graph.multi_label)
    true = graph.labels[rows]
    micro, macro = f1_scores(pred, true, graph.num_classes)
    return {"micro_f1": micro, "macro_f1": macro, "accuracy": accuracy(pred, true), "count": int(rows.size)}


def train(graph: HeteroGraph, guidance: GuidanceSets, model_config: ModelConfig,
          train_config: TrainConfig, split: Optional[np.ndarray] = None):
    """Train with Adam; restore the best-validation parameters; score the test split once.

    Returns ``(checkpoint, report, model)``.
    """
    train_config.validate()
    model_config.validate()
    start = time.perf_counter()
    with nd.precision(train_config.precision):
        if split is None:
            split = split_nodes(graph, train_config.ratios, train_config.split_seed)
        train_mask, val_mask, test_mask = (split == TRAIN), (split == VAL), (split == TEST)
        model = AGHINT(graph, guidance, model_config, seed=train_config.seed)
        opt = Adam(model.parameters(), lr=train_config.lr, weight_decay=train_config.weight_decay)
        labels = graph.labels
        use_val = bool(val_mask.any())

        best_state = model.state()
        best_val, best_val_micro, best_epoch = -np.inf, None, -1
        losses, val_hist = [], []
        bad = 0
        epoch = -1
        for epoch in range(train_config.max_epochs):
            opt.zero_grad()
            with nd.Tape() as tape:
                logits = model.forward(training=True, step=epoch)
                loss = masked_loss(logits, labels, train_mask, graph.multi_label)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch} (lr={train_config.lr}, "
                                   f"max|grad|={opt.max_abs_grad():.3g})")
            tape.backward(loss)
            grad_max = opt.max_abs_grad()
            if not np.isfinite(grad_max):
                raise NumericError(f"non-finite gradient at epoch {epoch} (lr={train_config.lr}, "
                                   f"max|grad|={grad_max})")
            opt.step()
            losses.append(value)

            if not use_val:
                continue
            scores = evaluate_logits(model.forward().data, graph, val_mask)
            val_hist.append(scores["macro_f1"])
            if scores["macro_f1"] > best_val:
                best_val, best_val_micro, best_epoch = scores["macro_f1"], scores["micro_f1"], epoch
                best_state = model.state()
                bad = 0
            else:
                bad += 1
                if bad >= train_config.patience:
                    break
        if use_val:
            model.load_state(best_state)
        else:
            best_epoch = epoch
        final_logits = model.forward().data
        test = evaluate_logits(final_logits, graph, test_mask) if test_mask.any() else None

    report = MetricsReport(
        micro_f1=test["micro_f1"] if test else float("nan"),
        macro_f1=test["macro_f1"] if test else float("nan"),
        accuracy=test["accuracy"] if test else float("nan"),
        val_micro_f1=best_val_micro, val_macro_f1=best_val if use_val else None,
        best_epoch=best_epoch, epochs_run=epoch + 1, loss_history=losses,
        val_macro_history=val_hist, wall_clock_s=time.perf_counter() - start,
        model_config=model_config.to_dict(), train_config=train_config.to_dict(),
        graph_hash=graph.content_hash(), guidance_key=guidance.key,
        num_test=int(test_mask.sum()),
        notes=["repeat runs vary the initialisation/dropout seed; the split is fixed by split_seed"],
    )
    if not use_val:
        report.notes.append("validation split empty: early stopping disabled")
    meta = {"train_config": train_config.to_dict(), "graph_hash": graph.content_hash(),
            "guidance_key": guidance.key, "best_epoch": best_epoch}
    return Checkpoint(model.state(), model_config, meta), report, model


def model_from_checkpoint(graph: HeteroGraph, guidance: GuidanceSets, ckpt: Checkpoint,
                          precision: int = 64) -> AGHINT:
    with nd.precision(precision):
        model = AGHINT(graph, guidance, ckpt.config, seed=0)
        model.load_state(ckpt.state)
    return model


__all__ = ["Checkpoint", "MetricsReport", "NumericError", "TrainConfig", "evaluate_logits",
           "model_from_checkpoint", "train"]
