"""The sliding-window drift protocol: train on each window's pooled train
splits, evaluate on the window's final bin and every later eval bin, repeat,
and aggregate with bootstrap intervals.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import classifier as bow
from .adapter import ExternalModelSpec, predict_external, train_external
from .ingest import LabeledExample, format_timestamp
from .labels import CLASS_NAMES, label_from_probs
from .metrics import EvalResult, IntervalEstimate, bootstrap_ci, score
from .seeds import STREAM_BOOTSTRAP, STREAM_MODEL, mix64
from .timeline import (
    ExperimentPlan,
    TimeBin,
    WindowSpec,
    build_bins,
    build_windows,
    sample_splits,
)

# metric codes for bootstrap seed derivation; class codes are added per class
_BOOT_F1_MACRO = 0
_BOOT_REL_MACRO = 1
_BOOT_F1_CLASS = 10
_BOOT_REL_CLASS = 20


class ExperimentError(RuntimeError):
    """Failure inside the grid, annotated with its cell coordinates."""


@dataclass(frozen=True)
class CellResult:
    window_id: int
    eval_bin: int
    repeat_index: int
    eval_result: EvalResult
    is_training_time: bool


@dataclass(frozen=True)
class SummaryRow:
    window_id: int
    eval_bin: int
    class_name: str  # negative/neutral/positive/macro
    metric: str  # "f1" or "rel_f1"
    mean: float | None
    lower: float | None
    upper: float | None
    n: int
    is_training_time: bool


@dataclass
class DriftResults:
    plan: ExperimentPlan
    bins: list[TimeBin]
    windows: list[WindowSpec]
    cells: list[CellResult]
    summaries: list[SummaryRow]
    classifier_tag: str


def classifier_tag(classifier) -> str:
    if isinstance(classifier, bow.ClassifierConfig):
        c = classifier
        return (
            f"builtin:dim={c.dim},epochs={c.epochs},lr0={c.lr0},"
            f"word_ngrams={c.word_ngrams},bucket_count={c.bucket_count},"
            f"min_token_count={c.min_token_count}"
        )
    if isinstance(classifier, ExternalModelSpec):
        digest = hashlib.sha256(
            (classifier.train_command + "\x00" + classifier.predict_command).encode()
        ).hexdigest()[:12]
        return f"external:{digest}"
    raise TypeError(f"unsupported classifier: {type(classifier).__name__}")


def model_seed(plan: ExperimentPlan, repeat_index: int, window_id: int) -> int:
    return mix64(plan.master_seed, STREAM_MODEL, repeat_index, window_id)


def _resolve_train_counts(
    plan: ExperimentPlan, per_bin_train_counts: Sequence[int] | None
) -> list[int]:
    if per_bin_train_counts is None:
        return [plan.n_train_per_bin] * plan.window_bins
    counts = list(per_bin_train_counts)
    if len(counts) != plan.window_bins:
        raise ValueError(
            f"need {plan.window_bins} per-bin train counts, got {len(counts)}"
        )
    if any(c < 1 for c in counts):
        raise ValueError("per-bin train counts must be positive")
    return counts


def _run_one_repeat(
    repeat_index: int,
    plan: ExperimentPlan,
    bins: list[TimeBin],
    windows: list[WindowSpec],
    by_id: dict[str, LabeledExample],
    tokens_by_id: dict[str, list[str]] | None,
    classifier,
    train_counts: list[int],
    skip_windows: frozenset[int] = frozenset(),
) -> list[CellResult]:
    """All cells of one repeat.  Only derived seeds are used, so repeats
    (and windows within them) are independent work units."""
    max_train = max(train_counts)
    splits = {}
    for b in bins:
        try:
            splits[b.index] = sample_splits(b, plan, repeat_index, n_train=max_train)
        except ValueError as exc:
            raise ExperimentError(f"repeat {repeat_index}, bin {b.index}: {exc}") from exc

    eval_cache: dict[int, tuple[list, list[str]]] = {}

    def eval_data(bin_index: int):
        if bin_index not in eval_cache:
            ids = splits[bin_index].eval_ids
            golds = [by_id[i].label for i in ids]
            texts = [by_id[i].text for i in ids]
            eval_cache[bin_index] = (golds, texts)
        return eval_cache[bin_index]

    cells: list[CellResult] = []
    for w in windows:
        if w.window_id in skip_windows:
            continue
        train_ids: list[str] = []
        for pos, b in enumerate(w.bin_indices):
            train_ids.extend(splits[b].train_ids[: train_counts[pos]])
        seed = model_seed(plan, repeat_index, w.window_id)
        try:
            if isinstance(classifier, bow.ClassifierConfig):
                config = replace(classifier, seed=seed)
                examples = [(tokens_by_id[i], by_id[i].label) for i in train_ids]
                model = bow.train(examples, config)

                def predict_probs(texts: list[str]) -> np.ndarray:
                    return bow.predict_batch(model, texts)

            else:
                handle = train_external(
                    classifier,
                    [(by_id[i].label, by_id[i].text) for i in train_ids],
                    tag=f"w{w.window_id:02d}-r{repeat_index:03d}",
                    seed=seed,
                )

                def predict_probs(texts: list[str]) -> np.ndarray:
                    probs = predict_external(handle, texts)
                    return np.asarray([p.as_tuple() for p in probs])

        except ExperimentError:
            raise
        except Exception as exc:
            raise ExperimentError(
                f"window {w.window_id}, repeat {repeat_index}: training failed: {exc}"
            ) from exc

        for b in range(w.window_id, len(bins)):
            golds, texts = eval_data(b)
            try:
                probs = predict_probs(texts)
            except Exception as exc:
                raise ExperimentError(
                    f"window {w.window_id}, eval bin {b}, repeat {repeat_index}: "
                    f"prediction failed: {exc}"
                ) from exc
            preds = [label_from_probs(*row) for row in probs]
            cells.append(
                CellResult(
                    window_id=w.window_id,
                    eval_bin=b,
                    repeat_index=repeat_index,
                    eval_result=score(golds, preds),
                    is_training_time=b == w.window_id,
                )
            )
    return cells


_WORKER_STATE: dict = {}


def _worker_init(payload) -> None:
    _WORKER_STATE["payload"] = payload


def _worker_run(repeat_index: int) -> list[CellResult]:
    p = _WORKER_STATE["payload"]
    return _run_one_repeat(repeat_index, *p)


def run_drift(
    plan: ExperimentPlan,
    corpus: Sequence[LabeledExample],
    classifier,
    per_bin_train_counts: Sequence[int] | None = None,
    workers: int = 1,
    store_path=None,
) -> DriftResults:
    """Execute the full grid and aggregate.

    classifier is either a ClassifierConfig (in-process training) or an
    ExternalModelSpec (command protocol).  Per-cell seeds derive from
    (master_seed, repeat, window), so results do not depend on execution
    order or worker count.  With store_path set, completed (window,
    repeat) groups are appended there and skipped on rerun.
    """
    train_counts = _resolve_train_counts(plan, per_bin_train_counts)
    tag = classifier_tag(classifier)
    bins = build_bins(corpus, plan)
    windows = build_windows(bins, plan)
    by_id = {ex.item_id: ex for ex in corpus}
    if len(by_id) != len(corpus):
        raise ValueError("duplicate item_ids in corpus")
    tokens_by_id = None
    if isinstance(classifier, bow.ClassifierConfig):
        tokens_by_id = {ex.item_id: bow.preprocess(ex.text) for ex in corpus}

    stored = _load_store(store_path, tag) if store_path else {}
    cells: list[CellResult] = []
    pending_repeats = []
    for r in range(plan.repeats):
        done = {w.window_id for w in windows if (w.window_id, r) in stored}
        for w_id in done:
            cells.extend(stored[(w_id, r)])
        if len(done) < len(windows):
            pending_repeats.append((r, frozenset(done)))

    args = (plan, bins, windows, by_id, tokens_by_id, classifier, train_counts)
    fresh: list[list[CellResult]] = []
    if workers > 1 and len(pending_repeats) > 1:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_worker_init,
            initargs=((*args, frozenset()),),
        ) as pool:
            # skip sets differ per repeat only on resumed runs; recompute
            # those few inline instead of complicating the pool payload
            parallel = [r for r, skip in pending_repeats if not skip]
            serial = [(r, skip) for r, skip in pending_repeats if skip]
            fresh.extend(pool.map(_worker_run, parallel))
            for r, skip in serial:
                fresh.append(_run_one_repeat(r, *args, skip))
    else:
        for r, skip in pending_repeats:
            fresh.append(_run_one_repeat(r, *args, skip))
    for group in fresh:
        cells.extend(group)
    if store_path:
        _append_store(store_path, tag, fresh, stored)

    cells.sort(key=lambda c: (c.window_id, c.eval_bin, c.repeat_index))
    summaries = aggregate(plan, cells)
    return DriftResults(
        plan=plan,
        bins=bins,
        windows=windows,
        cells=cells,
        summaries=summaries,
        classifier_tag=tag,
    )


def aggregate(plan: ExperimentPlan, cells: Sequence[CellResult]) -> list[SummaryRow]:
    """Bootstrap summaries per (window, eval bin): absolute and relative
    macro F1 plus per-class variants.

    Relative change is computed per repeat against that repeat's own
    training-time score, so the training-time relative series is exactly
    0.  Repeats whose per-class base is 0 are left out of that class's
    relative summary (the macro base is never 0 in practice); a summary
    with no surviving repeats keeps empty statistics.
    """
    by_cell: dict[tuple[int, int], list[CellResult]] = {}
    for c in cells:
        by_cell.setdefault((c.window_id, c.eval_bin), []).append(c)
    base_by_repeat: dict[tuple[int, int], EvalResult] = {}
    for c in cells:
        if c.is_training_time:
            base_by_repeat[(c.window_id, c.repeat_index)] = c.eval_result

    def interval(values: list[float], seed: int) -> tuple[float | None, float | None, float | None, int]:
        if not values:
            return None, None, None, 0
        if len(values) == 1:
            v = values[0]
            return v, v, v, 1
        est = bootstrap_ci(values, seed=seed)
        return est.mean, est.lower, est.upper, len(values)

    rows: list[SummaryRow] = []
    for (w, b), group in sorted(by_cell.items()):
        group = sorted(group, key=lambda c: c.repeat_index)
        is_tt = group[0].is_training_time

        def boot_seed(code: int) -> int:
            return mix64(plan.master_seed, STREAM_BOOTSTRAP, w, b, code)

        macro = [c.eval_result.f1_macro for c in group]
        mean, lo, hi, n = interval(macro, boot_seed(_BOOT_F1_MACRO))
        rows.append(SummaryRow(w, b, "macro", "f1", mean, lo, hi, n, is_tt))

        rel = []
        for c in group:
            base = base_by_repeat[(w, c.repeat_index)].f1_macro
            if base > 0:
                rel.append((c.eval_result.f1_macro - base) / base)
        mean, lo, hi, n = interval(rel, boot_seed(_BOOT_REL_MACRO))
        rows.append(SummaryRow(w, b, "macro", "rel_f1", mean, lo, hi, n, is_tt))

        for k, cname in enumerate(CLASS_NAMES):
            vals = [c.eval_result.f1[k] for c in group]
            mean, lo, hi, n = interval(vals, boot_seed(_BOOT_F1_CLASS + k))
            rows.append(SummaryRow(w, b, cname, "f1", mean, lo, hi, n, is_tt))
            rel_k = []
            for c in group:
                base = base_by_repeat[(w, c.repeat_index)].f1[k]
                if base > 0:
                    rel_k.append((c.eval_result.f1[k] - base) / base)
            mean, lo, hi, n = interval(rel_k, boot_seed(_BOOT_REL_CLASS + k))
            rows.append(SummaryRow(w, b, cname, "rel_f1", mean, lo, hi, n, is_tt))
    return rows


def summary_interval(
    results: DriftResults, window_id: int, eval_bin: int, class_name: str, metric: str
) -> IntervalEstimate:
    for row in results.summaries:
        if (
            row.window_id == window_id
            and row.eval_bin == eval_bin
            and row.class_name == class_name
            and row.metric == metric
        ):
            if row.mean is None:
                raise ValueError(f"summary {window_id}/{eval_bin}/{class_name}/{metric} is empty")
            return IntervalEstimate(mean=row.mean, lower=row.lower, upper=row.upper, level=0.95)
    raise KeyError(f"no summary row {window_id}/{eval_bin}/{class_name}/{metric}")


# --- ablations --------------------------------------------------------------


def run_size_ablation(
    plan: ExperimentPlan,
    corpus: Sequence[LabeledExample],
    classifier,
    sizes: Sequence[int],
    **kwargs,
) -> dict[int, DriftResults]:
    """One full run per total train-set size, holding everything else fixed."""
    out = {}
    for size in sizes:
        if size % plan.window_bins:
            raise ValueError(
                f"size {size} not divisible by window_bins={plan.window_bins}"
            )
        sized = replace(plan, n_train_per_bin=size // plan.window_bins)
        out[size] = run_drift(sized, corpus, classifier, **kwargs)
    return out


def split_train_total(total: int, n_bins: int) -> list[int]:
    """Spread a total train count over n_bins: floor per bin, remainder to
    the most recent bins (counts align with a window's bins oldest first)."""
    if total < n_bins:
        raise ValueError(f"cannot spread {total} examples over {n_bins} bins")
    base = total // n_bins
    remainder = total - base * n_bins
    return [base] * (n_bins - remainder) + [base + 1] * remainder


def run_window_ablation(
    plan: ExperimentPlan,
    corpus: Sequence[LabeledExample],
    classifier,
    window_day_lengths: Sequence[int],
    total_train: int | None = None,
    **kwargs,
) -> dict[int, DriftResults]:
    """One run per training-window length in days, holding the total train
    count fixed (see split_train_total for the rounding rule)."""
    total = (
        plan.n_train_per_bin * plan.window_bins if total_train is None else total_train
    )
    out = {}
    for length in window_day_lengths:
        if length % plan.bin_days:
            raise ValueError(
                f"window length {length} not a multiple of bin_days={plan.bin_days}"
            )
        wb = length // plan.bin_days
        counts = split_train_total(total, wb)
        varied = replace(plan, window_bins=wb, n_train_per_bin=max(counts))
        out[length] = run_drift(
            varied, corpus, classifier, per_bin_train_counts=counts, **kwargs
        )
    return out


# --- incremental cell store -------------------------------------------------


def _cell_to_obj(c: CellResult) -> dict:
    return {
        "eval_bin": c.eval_bin,
        "precision": list(c.eval_result.precision),
        "recall": list(c.eval_result.recall),
        "f1": list(c.eval_result.f1),
        "f1_macro": c.eval_result.f1_macro,
        "confusion": c.eval_result.confusion.tolist(),
    }


def _cell_from_obj(window_id: int, repeat_index: int, obj: dict) -> CellResult:
    res = EvalResult(
        precision=tuple(obj["precision"]),
        recall=tuple(obj["recall"]),
        f1=tuple(obj["f1"]),
        f1_macro=obj["f1_macro"],
        confusion=np.asarray(obj["confusion"], dtype=np.int64),
    )
    return CellResult(
        window_id=window_id,
        eval_bin=obj["eval_bin"],
        repeat_index=repeat_index,
        eval_result=res,
        is_training_time=obj["eval_bin"] == window_id,
    )


def _load_store(store_path, tag: str) -> dict[tuple[int, int], list[CellResult]]:
    stored: dict[tuple[int, int], list[CellResult]] = {}
    if not os.path.exists(store_path):
        return stored
    with open(store_path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("tag") != tag:
                continue
            key = (obj["window"], obj["repeat"])
            stored[key] = [
                _cell_from_obj(obj["window"], obj["repeat"], c) for c in obj["cells"]
            ]
    return stored


def _append_store(store_path, tag, fresh_groups, already_stored) -> None:
    with open(store_path, "a", encoding="utf-8") as f:
        for group in fresh_groups:
            by_wr: dict[tuple[int, int], list[CellResult]] = {}
            for c in group:
                by_wr.setdefault((c.window_id, c.repeat_index), []).append(c)
            for (w, r), cs in sorted(by_wr.items()):
                if (w, r) in already_stored:
                    continue
                obj = {
                    "tag": tag,
                    "window": w,
                    "repeat": r,
                    "cells": [_cell_to_obj(c) for c in sorted(cs, key=lambda c: c.eval_bin)],
                }
                f.write(json.dumps(obj) + "\n")


# --- CSV export -------------------------------------------------------------


def _fnum(x: float | None) -> str:
    return "" if x is None else str(float(x))


def write_cells_csv(results: DriftResults, path) -> None:
    """Tidy per-cell metrics: one row per cell per class metric."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["window_id", "eval_bin", "repeat", "class", "metric", "value"])
        for c in results.cells:
            coords = [c.window_id, c.eval_bin, c.repeat_index]
            for k, cname in enumerate(CLASS_NAMES):
                writer.writerow(coords + [cname, "precision", _fnum(c.eval_result.precision[k])])
                writer.writerow(coords + [cname, "recall", _fnum(c.eval_result.recall[k])])
                writer.writerow(coords + [cname, "f1", _fnum(c.eval_result.f1[k])])
            writer.writerow(coords + ["macro", "f1", _fnum(c.eval_result.f1_macro)])


SUMMARY_HEADER = [
    "window_id",
    "eval_bin",
    "eval_bin_start",
    "eval_bin_end",
    "is_training_time",
    "class",
    "metric",
    "mean",
    "ci_lower",
    "ci_upper",
    "n",
]


def write_summary_csv(results: DriftResults, path) -> None:
    """The documented summary table the plotting scripts consume."""
    bin_by_index = {b.index: b for b in results.bins}
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_HEADER)
        for row in results.summaries:
            b = bin_by_index[row.eval_bin]
            writer.writerow(
                [
                    row.window_id,
                    row.eval_bin,
                    format_timestamp(b.start),
                    format_timestamp(b.end),
                    int(row.is_training_time),
                    row.class_name,
                    row.metric,
                    _fnum(row.mean),
                    _fnum(row.lower),
                    _fnum(row.upper),
                    row.n,
                ]
            )
