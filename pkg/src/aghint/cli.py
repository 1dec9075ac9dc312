"""Command-line interface: ``aghint <command> [options]``.

Commands: synth, profile, precompute, train, eval, case-study, sweep.
Each command resolves a :class:`~aghint.runconfig.RunConfig` from
``--config`` plus per-field flags (``--model.d0 64``) and ``--set
key=value`` assignments, writes JSON/CSV/PNG artifacts carrying that
resolved config and the input hashes, and ends with a single-line JSON
status record on stderr.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ndiff as nd
from .disparity import bucketize, neighborhood_disparity
from .hin import GraphError, load_graph, save_graph, synth_hin
from .model import predict
from .pathsample import build_guidance, cache_path, cached_guidance, save_guidance
from .runconfig import SCALARS, SECTIONS, ConfigError, RunConfig, field_names, load_run_config
from .train import (
    Checkpoint,
    NumericError,
    bucket_accuracy,
    case_study,
    evaluate_logits,
    held_out_buckets,
    model_from_checkpoint,
    split_nodes,
    train,
)
from .train.splits import TEST, TRAIN, VAL

log = logging.getLogger("aghint")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SPLIT_LABEL = {TRAIN: "train", VAL: "val", TEST: "test", -1: ""}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- artifact helpers ------------------------------------------------------

class Run:
    """Collects the resolved config, input hashes and written artifacts of one command."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.inputs: dict[str, str] = {}
        self.artifacts: list[str] = []
        self.summary: dict = {}

    def record(self) -> dict:
        return {"command": self.command, "config": self.cfg.to_dict(),
                "config_hash": self.cfg.hash(), "inputs": dict(self.inputs)}

    def short_record(self) -> dict:
        return {"command": self.command, "config_hash": self.cfg.hash(), "inputs": dict(self.inputs)}

    def _track(self, path: Path) -> Path:
        self.artifacts.append(str(path))
        return path

    def json(self, path, payload: dict) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = dict(payload)
        body["run"] = self.record()
        path.write_text(json.dumps(body, indent=2, default=_jsonable))
        return self._track(path)

    def csv(self, path, header: Sequence[str], rows) -> Path:
        """CSV whose first line is a ``#``-prefixed JSON run record."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.short_record(), sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        return self._track(path)

    def figure(self, plot, path, *args, **kwargs) -> Path:
        return self._track(plot(*args, path=path, **kwargs))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def read_csv_rows(path) -> list[dict]:
    """Rows of a CSV written by this tool (skips the ``#`` record line)."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(run: Run):
    graph = load_graph(run.cfg.paths.data)
    run.inputs["graph_hash"] = graph.content_hash()
    return graph


def _label_text(value) -> str:
    value = np.asarray(value)
    if value.ndim == 0:
        return str(int(value))
    return " ".join(str(c) for c in np.flatnonzero(value))


# -- commands ----------------------------------------------------------------

def cmd_synth(run: Run, args) -> None:
    graph = synth_hin(run.cfg.synth)
    out = save_graph(graph, run.cfg.paths.data)
    run.inputs["graph_hash"] = graph.content_hash()
    run.artifacts.append(str(out))
    run.json(Path(out) / "synth_summary.json", {"stats": graph.stats(), "spec": run.cfg.synth.to_dict()})
    run.summary = graph.stats()


def cmd_profile(run: Run, args) -> None:
    cfg = run.cfg
    graph = _load(run)
    nd_ = neighborhood_disparity(graph, cfg.k)
    assign = bucketize(nd_, cfg.buckets)
    out = _out_dir(cfg)
    rows = []
    for i in range(graph.num_targets):
        defined = bool(nd_.defined_mask[i])
        rows.append([i, f"{nd_.raw_values[i]:.10g}" if defined else "",
                     f"{nd_.values[i]:.10g}" if defined else "", int(assign.bucket_of[i])])
    run.csv(out / "profile.csv", ["target_id", "raw_disparity", "normalized_disparity", "bucket"], rows)
    counts = assign.counts().tolist()
    summary = {"k": cfg.k, "buckets": cfg.buckets, "boundaries": assign.boundaries.tolist(),
               "counts": counts, "defined": int(nd_.defined_mask.sum()),
               "undefined": int((~nd_.defined_mask).sum())}
    acc = None
    if args.predictions:
        preds = read_csv_rows(args.predictions)
        run.inputs["predictions_hash"] = _file_hash(args.predictions)
        acc, used = _profile_accuracy(graph, preds, assign)
        summary["bucket_accuracy"] = acc
        summary["bucket_evaluated"] = used
    run.json(out / "profile.json", summary)
    from .plotting import plot_profile
    run.figure(plot_profile, out / "profile.png", counts, assign.boundaries, accuracy=acc)
    run.summary = {"counts": counts}


def _profile_accuracy(graph, preds: list[dict], assign):
    """Per-bucket accuracy of a predictions file (test rows only if it carries a split)."""
    if not preds or "target_id" not in preds[0] or "prediction" not in preds[0]:
        raise ValueError("predictions file needs target_id and prediction columns")
    has_split = "split" in preds[0]
    ids, values = [], []
    for row in preds:
        if has_split and row["split"] != "test":
            continue
        ids.append(int(row["target_id"]))
        values.append(row["prediction"])
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= graph.num_targets):
        raise ValueError("prediction target_id out of range")
    if graph.multi_label:
        pred = np.zeros((graph.num_targets, graph.num_classes), dtype=np.int8)
        for i, v in zip(ids, values):
            pred[i, [int(c) for c in v.split()]] = 1
    else:
        pred = np.full(graph.num_targets, -1, dtype=np.int64)
        pred[ids] = [int(v) for v in values]
    keep = ids[graph.labeled[ids] & (assign.bucket_of[ids] >= 0)]
    acc = bucket_accuracy(pred, graph.labels, keep, assign)
    used = [int(np.sum(assign.bucket_of[keep] == b)) for b in range(assign.num_buckets)]
    return acc, used


def _guidance(run: Run, graph, params):
    cache_dir = run.cfg.paths.cache
    guidance = cached_guidance(graph, params, cache_dir)
    run.inputs["guidance_key"] = guidance.key
    return guidance


def cmd_precompute(run: Run, args) -> None:
    graph = _load(run)
    params = run.cfg.model.guidance_params()
    start = time.perf_counter()
    path = cache_path(run.cfg.paths.cache, graph.content_hash(), params)
    guidance = build_guidance(graph, params)
    save_guidance(guidance, path)
    run.artifacts.append(str(path))
    run.inputs["guidance_key"] = guidance.key
    if args.json_export:
        export = Path(args.json_export)
        export.parent.mkdir(parents=True, exist_ok=True)
        export.write_text(json.dumps(guidance.to_json()))
        run.artifacts.append(str(export))
    run.summary = {"cache": str(path), "seconds": round(time.perf_counter() - start, 3), **guidance.stats}
    run.json(Path(path).with_suffix(".json"), {"stats": guidance.stats, "params": asdict(guidance.params)})


def _write_predictions(run: Run, path, graph, logits: np.ndarray, split: np.ndarray) -> Path:
    pred = predict(logits, graph.multi_label)
    rows = []
    for i in range(graph.num_targets):
        label = _label_text(graph.labels[i]) if graph.labeled[i] else ""
        rows.append([i, label, _label_text(pred[i]), SPLIT_LABEL[int(split[i])]])
    return run.csv(path, ["target_id", "label", "prediction", "split"], rows)


def _train_one(run: Run, graph, model_cfg, out: Path, tag: str = ""):
    guidance = _guidance(run, graph, model_cfg.guidance_params())
    split = split_nodes(graph, run.cfg.train.ratios, run.cfg.train.split_seed)
    ckpt, report, model = train(graph, guidance, model_cfg, run.cfg.train, split=split)
    with nd.precision(run.cfg.train.precision):
        logits = model.forward().data
    rows, assign = held_out_buckets(graph, split, run.cfg.k, run.cfg.buckets)
    report.bucket_accuracy = bucket_accuracy(predict(logits, graph.multi_label), graph.labels, rows, assign)
    ckpt.meta["run"] = run.record()
    ckpt_path = ckpt.save(out / f"checkpoint{tag}.ckpt")
    run.artifacts.append(str(ckpt_path))
    run.json(out / f"metrics{tag}.json", report.to_dict())
    val = report.val_macro_history + [None] * (len(report.loss_history) - len(report.val_macro_history))
    run.csv(out / f"loss{tag}.csv", ["epoch", "train_loss", "val_macro_f1"],
            [[e, l, "" if v is None else v] for e, (l, v) in enumerate(zip(report.loss_history, val))])
    _write_predictions(run, out / f"predictions{tag}.csv", graph, logits, split)
    from .plotting import plot_training
    run.figure(plot_training, out / f"training{tag}.png", report.loss_history,
               report.val_macro_history, best_epoch=report.best_epoch)
    return report


def cmd_train(run: Run, args) -> None:
    graph = _load(run)
    report = _train_one(run, graph, run.cfg.model, _out_dir(run.cfg))
    run.summary = {"micro_f1": report.micro_f1, "macro_f1": report.macro_f1,
                   "best_epoch": report.best_epoch, "seconds": round(report.wall_clock_s, 2)}


def _restore(run: Run, graph, path, tag: str):
    ckpt = Checkpoint.load(path)
    run.inputs[f"checkpoint{tag}_hash"] = _file_hash(path)
    stored = ckpt.meta.get("graph_hash")
    if stored and stored != graph.content_hash():
        raise ValueError(f"{path}: checkpoint was trained on graph {stored}, "
                         f"not {graph.content_hash()}")
    tc = ckpt.meta.get("train_config", {})
    split = split_nodes(graph, tc.get("ratios", run.cfg.train.ratios),
                        tc.get("split_seed", run.cfg.train.split_seed))
    precision = tc.get("precision", run.cfg.train.precision)
    guidance = _guidance(run, graph, ckpt.config.guidance_params())
    model = model_from_checkpoint(graph, guidance, ckpt, precision=precision)
    with nd.precision(precision):
        logits = model.forward().data
    return ckpt, split, logits


def cmd_eval(run: Run, args) -> None:
    graph = _load(run)
    ckpt, split, logits = _restore(run, graph, args.checkpoint, "")
    out = _out_dir(run.cfg)
    result = {name: evaluate_logits(logits, graph, split == code)
              for name, code in (("train", TRAIN), ("val", VAL), ("test", TEST)) if np.any(split == code)}
    rows, assign = held_out_buckets(graph, split, run.cfg.k, run.cfg.buckets)
    result["bucket_accuracy"] = bucket_accuracy(predict(logits, graph.multi_label), graph.labels, rows, assign)
    result["model_config"] = ckpt.config.to_dict()
    run.json(out / "eval.json", result)
    _write_predictions(run, out / "eval_predictions.csv", graph, logits, split)
    run.summary = {k: result[k]["micro_f1"] for k in ("train", "val", "test") if k in result}


def cmd_case_study(run: Run, args) -> None:
    graph = _load(run)
    _, split_a, logits_a = _restore(run, graph, args.checkpoint_a, "_a")
    _, split_b, logits_b = _restore(run, graph, args.checkpoint_b, "_b")
    if not np.array_equal(split_a, split_b):
        raise ValueError("the two checkpoints were trained on different splits")
    labels = (args.label_a, args.label_b)
    study = case_study(graph, logits_a, logits_b, split_a, run.cfg.k, run.cfg.buckets,
                       meta={"labels": list(labels)})
    out = _out_dir(run.cfg)
    run.csv(out / "case_study.csv",
            ["bucket", "lower", "upper", "count", f"micro_f1_{labels[0]}", f"micro_f1_{labels[1]}", "delta"],
            [[r.bucket, r.lower, r.upper, r.count] +
             ["" if x is None else x for x in (r.micro_a, r.micro_b, r.delta)] for r in study.rows])
    run.json(out / "case_study.json", study.to_dict())
    from .plotting import plot_case_study
    run.figure(plot_case_study, out / "case_study.png", study, labels=labels)
    lo, hi = study.extreme_deltas()
    run.summary = {"lowest_bucket_delta": lo, "highest_bucket_delta": hi}


def _grid(text: str, cast):
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from exc


def cmd_sweep(run: Run, args) -> None:
    import copy

    graph = _load(run)
    base = run.cfg.model
    grid = {
        "alpha": _grid(args.alpha, float) if args.alpha else [base.alpha],
        "L_M": _grid(args.layers_m, int) if args.layers_m else [base.L_M],
        "L_T": _grid(args.layers_t, int) if args.layers_t else [base.L_T],
        "d": _grid(args.dim, int) if args.dim else [base.d_hidden],
    }
    out = _out_dir(run.cfg)
    cells = []
    for i, (alpha, lm, lt, d) in enumerate(itertools.product(*grid.values())):
        cfg = copy.deepcopy(base)
        cfg.alpha, cfg.L_M, cfg.L_T, cfg.d0, cfg.d_hidden = alpha, lm, lt, d, d
        cfg.validate()
        log.info("sweep cell %d: alpha=%s L_M=%s L_T=%s d=%s", i, alpha, lm, lt, d)
        report = _train_one(run, graph, cfg, out / f"cell{i:03d}")
        cells.append({"cell": i, "params": {"alpha": alpha, "L_M": lm, "L_T": lt, "d": d},
                      "micro_f1": report.micro_f1, "macro_f1": report.macro_f1,
                      "best_epoch": report.best_epoch, "seconds": report.wall_clock_s})
    run.csv(out / "sweep.csv", ["cell", "alpha", "L_M", "L_T", "d", "micro_f1", "macro_f1", "best_epoch"],
            [[c["cell"], *c["params"].values(), c["micro_f1"], c["macro_f1"], c["best_epoch"]] for c in cells])
    run.json(out / "sweep.json", {"grid": grid, "cells": cells})
    from .plotting import plot_sweep
    run.figure(plot_sweep, out / "sweep.png", cells)
    best = max(cells, key=lambda c: c["micro_f1"])
    run.summary = {"cells": len(cells), "best": best["params"], "best_micro_f1": best["micro_f1"]}


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic dataset directory"),
    "profile": (cmd_profile, "neighborhood disparity per target, bucket counts and accuracy"),
    "precompute": (cmd_precompute, "build and cache the guidance sets"),
    "train": (cmd_train, "train one model and score the test split"),
    "eval": (cmd_eval, "re-score a checkpoint"),
    "case-study": (cmd_case_study, "per-bucket comparison of two checkpoints"),
    "sweep": (cmd_sweep, "grid over alpha, L_M, L_T and d"),
}


# -- argument parsing -----------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field, e.g. --set model.d0=64 (repeatable)")
    p.add_argument("--data", help="dataset directory (paths.data)")
    p.add_argument("--out", help="output directory (paths.out)")
    p.add_argument("--cache", help="guidance cache directory (paths.cache)")
    p.add_argument("--threads", type=int, help="cap numeric worker threads (env AGHINT_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    group = p.add_argument_group("config fields", "every field of the run configuration")
    for section in SECTIONS:
        for name in field_names(section):
            group.add_argument(f"--{section}.{name}", dest=f"field:{section}.{name}",
                               metavar="V", default=argparse.SUPPRESS)
    for name in SCALARS:
        group.add_argument(f"--{name}", dest=f"field:{name}", metavar="V", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aghint", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        if name == "synth":
            p.add_argument("--seed", type=int, help="synthesis seed (synth.seed)")
        if name in ("train", "sweep"):
            p.add_argument("--seed", type=int, help="initialisation/dropout seed (train.seed)")
            p.add_argument("--variant", help="model variant (model.variant)")
        if name == "profile":
            p.add_argument("--predictions", help="predictions CSV (target_id, prediction[, split])")
        if name == "precompute":
            p.add_argument("--json-export", help="also write the guidance sets as JSON")
        if name in ("eval",):
            p.add_argument("--checkpoint", required=True)
        if name == "case-study":
            p.add_argument("--checkpoint-a", required=True)
            p.add_argument("--checkpoint-b", required=True)
            p.add_argument("--label-a", default="a")
            p.add_argument("--label-b", default="b")
        if name == "sweep":
            p.add_argument("--alpha", help="comma-separated decay rates")
            p.add_argument("--layers-m", help="comma-separated AGM depths")
            p.add_argument("--layers-t", help="comma-separated transformer depths")
            p.add_argument("--dim", help="comma-separated hidden sizes (d0 = d_hidden)")
        _add_common(p)
    return parser


def resolve_config(args) -> RunConfig:
    overrides = []
    for key, value in vars(args).items():
        if key.startswith("field:"):
            overrides.append(f"{key[6:]}={value}")
    overrides.extend(args.set)
    shortcuts = {"data": "paths.data", "out": "paths.out", "cache": "paths.cache"}
    for attr, key in shortcuts.items():
        if getattr(args, attr, None) is not None:
            overrides.append(f"{key}={json.dumps(getattr(args, attr))}")
    seed = getattr(args, "seed", None)
    if seed is not None:
        overrides.append(f"{'synth' if args.command == 'synth' else 'train'}.seed={seed}")
    if getattr(args, "variant", None):
        overrides.append(f"model.variant={json.dumps(args.variant)}")
    return load_run_config(args.config, overrides)


def _limit_threads(threads: Optional[int]):
    if threads is None:
        env = os.environ.get("AGHINT_THREADS")
        threads = int(env) if env else None
    if threads is None:
        return None
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl not installed; --threads has no effect")
        return None
    return threadpool_limits(limits=threads)


def _status(record: dict) -> None:
    sys.stderr.write(json.dumps(record, sort_keys=True, default=_jsonable) + "\n")
    sys.stderr.flush()


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command = next((a for a in argv if a in COMMANDS), None)
    start = time.perf_counter()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _status({"status": "error", "code": EXIT_USAGE, "command": command,
                 "error": "UsageError", "message": str(exc)})
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        code = exc.code if isinstance(exc.code, int) else 0
        _status({"status": "ok" if code == 0 else "error", "code": code, "command": command})
        return code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    code, err = EXIT_OK, None
    run = None
    try:
        limiter = _limit_threads(args.threads)
        cfg = resolve_config(args)
        run = Run(args.command, cfg)
        COMMANDS[args.command][0](run, args)
        if limiter is not None:
            limiter.restore_original_limits()
    except UsageError as exc:
        code, err = EXIT_USAGE, exc
    except (NumericError, FloatingPointError) as exc:
        code, err = EXIT_NUMERIC, exc
    except (ConfigError, GraphError, ValueError, OSError, KeyError) as exc:
        code, err = EXIT_DATA, exc
    except Exception as exc:  # keep the final status record even for unexpected failures
        log.debug("unexpected failure", exc_info=True)
        code, err = EXIT_DATA, exc
    record = {"status": "ok" if code == EXIT_OK else "error", "code": code, "command": args.command,
              "elapsed_s": round(time.perf_counter() - start, 3)}
    if run is not None:
        record["artifacts"] = run.artifacts
        if code == EXIT_OK:
            record["summary"] = run.summary
    if err is not None:
        record["error"] = type(err).__name__
        record["message"] = str(err)
        path = getattr(err, "path", None) or getattr(err, "filename", None)
        if path:
            record["path"] = str(path)
    _status(record)
    return code


if __name__ == "__main__":
    sys.exit(main())
