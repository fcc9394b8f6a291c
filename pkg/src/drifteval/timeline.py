"""Time binning, sliding windows and repeatable train/eval splits."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .ingest import LabeledExample, format_timestamp, parse_timestamp
from .seeds import MASK64, STREAM_SPLIT, mix64

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class TimeBin:
    index: int
    start: datetime  # inclusive
    end: datetime  # exclusive
    example_ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.example_ids)


@dataclass(frozen=True)
class WindowSpec:
    """A training window.  window_id equals the index of its most recent
    bin, so windows and their training-time bins share a coordinate."""

    window_id: int
    bin_indices: tuple[int, ...]
    train_end: datetime


@dataclass(frozen=True)
class SplitSample:
    repeat_index: int
    bin_index: int
    train_ids: tuple[str, ...]
    eval_ids: tuple[str, ...]


@dataclass(frozen=True)
class ExperimentPlan:
    bin_days: int = 90
    window_bins: int = 4
    n_train_per_bin: int = 400
    n_eval_per_bin: int = 150
    repeats: int = 50
    master_seed: int = 0
    origin: datetime | None = None  # None: midnight UTC of earliest example
    downsample: bool = False

    def __post_init__(self):
        for name in ("bin_days", "window_bins", "n_train_per_bin", "n_eval_per_bin"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.origin is not None and self.origin.tzinfo is None:
            raise ValueError("origin must be timezone-aware")


def resolve_origin(corpus: Sequence[LabeledExample], plan: ExperimentPlan) -> datetime:
    if plan.origin is not None:
        return plan.origin.astimezone(timezone.utc)
    first = corpus[0].created_at
    return first.replace(hour=0, minute=0, second=0, microsecond=0)


def build_bins(corpus: Sequence[LabeledExample], plan: ExperimentPlan) -> list[TimeBin]:
    """Assign the corpus to contiguous bins of plan.bin_days.

    Bin k spans [origin + k*bin_days, origin + (k+1)*bin_days).  Only bins
    whose full span is covered by the data are kept: with span = last
    timestamp - origin, that is floor(span / bin_days) bins, so the
    trailing partial bin (and anything on or past its start) is dropped.
    All arithmetic is integer seconds; timestamps are second resolution.
    """
    if not corpus:
        raise ValueError("empty corpus")
    for prev, cur in zip(corpus, corpus[1:]):
        if cur.created_at < prev.created_at:
            raise ValueError("corpus must be sorted by created_at")
    origin = resolve_origin(corpus, plan)
    if corpus[0].created_at < origin:
        raise ValueError("origin is later than the earliest example")
    bin_seconds = plan.bin_days * SECONDS_PER_DAY
    span = int((corpus[-1].created_at - origin).total_seconds())
    n_bins = span // bin_seconds
    if n_bins == 0:
        raise ValueError(
            f"corpus spans {span / SECONDS_PER_DAY:.1f} days, "
            f"shorter than one {plan.bin_days}-day bin"
        )
    members: list[list[str]] = [[] for _ in range(n_bins)]
    for ex in corpus:
        k = int((ex.created_at - origin).total_seconds()) // bin_seconds
        if k < n_bins:
            members[k].append(ex.item_id)
    return [
        TimeBin(
            index=k,
            start=origin + timedelta(seconds=k * bin_seconds),
            end=origin + timedelta(seconds=(k + 1) * bin_seconds),
            example_ids=tuple(ids),
        )
        for k, ids in enumerate(members)
    ]


def split_seed(master_seed: int, repeat_index: int, bin_index: int) -> int:
    return mix64(master_seed, STREAM_SPLIT, repeat_index, bin_index)


def sample_splits(
    bin: TimeBin,
    plan: ExperimentPlan,
    repeat_index: int,
    n_train: int | None = None,
    n_eval: int | None = None,
) -> SplitSample:
    """Draw disjoint train/eval id samples from one bin, without replacement.

    Deterministic in (master_seed, repeat_index, bin.index): those seed a
    dedicated RNG stream whose single permutation of the bin yields eval
    ids first, then train ids.  Because the permutation does not depend on
    the requested sizes, shrinking n_train takes a prefix of the same
    train draw while the eval set stays put, so ablation variants stay
    comparable on identical eval data.  Undersized bins error unless
    plan.downsample is set, in which case both sets shrink proportionally
    (train count rounded down, remainder to eval).
    """
    want_train = plan.n_train_per_bin if n_train is None else n_train
    want_eval = plan.n_eval_per_bin if n_eval is None else n_eval
    size = len(bin)
    if size < want_train + want_eval:
        if not plan.downsample:
            raise ValueError(
                f"bin {bin.index} has {size} examples, "
                f"need {want_train + want_eval} (enable downsampling to shrink)"
            )
        scaled_train = size * want_train // (want_train + want_eval)
        scaled_eval = size - scaled_train
        warnings.warn(
            f"bin {bin.index}: downsampled to {scaled_train} train / "
            f"{scaled_eval} eval (bin holds {size})",
            stacklevel=2,
        )
        want_train, want_eval = scaled_train, scaled_eval
    rng = np.random.default_rng(split_seed(plan.master_seed, repeat_index, bin.index))
    perm = rng.permutation(size)
    ids = bin.example_ids
    eval_ids = tuple(ids[i] for i in perm[:want_eval])
    train_ids = tuple(ids[i] for i in perm[want_eval : want_eval + want_train])
    return SplitSample(
        repeat_index=repeat_index,
        bin_index=bin.index,
        train_ids=train_ids,
        eval_ids=eval_ids,
    )


def build_windows(bins: Sequence[TimeBin], plan: ExperimentPlan) -> list[WindowSpec]:
    """One sliding window ending at every bin from window_bins-1 onward."""
    wb = plan.window_bins
    if len(bins) < wb:
        raise ValueError(f"need at least {wb} bins, got {len(bins)}")
    windows = []
    for w in range(wb - 1, len(bins)):
        windows.append(
            WindowSpec(
                window_id=w,
                bin_indices=tuple(range(w - wb + 1, w + 1)),
                train_end=bins[w].end,
            )
        )
    return windows


# --- plan and manifest files ------------------------------------------------

_PLAN_INT_FIELDS = (
    "bin_days",
    "window_bins",
    "n_train_per_bin",
    "n_eval_per_bin",
    "repeats",
    "master_seed",
)


def write_plan(plan: ExperimentPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for name in _PLAN_INT_FIELDS:
            f.write(f"{name} = {getattr(plan, name)}\n")
        origin = "auto" if plan.origin is None else format_timestamp(plan.origin)
        f.write(f"origin = {origin}\n")
        f.write(f"downsample = {'true' if plan.downsample else 'false'}\n")


def read_plan(path) -> ExperimentPlan:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"plan line {line_no}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    plan = ExperimentPlan()
    kwargs = {}
    for name in _PLAN_INT_FIELDS:
        if name in values:
            kwargs[name] = int(values.pop(name))
    if "origin" in values:
        raw = values.pop("origin")
        kwargs["origin"] = None if raw == "auto" else parse_timestamp(raw)
    if "downsample" in values:
        raw = values.pop("downsample").lower()
        if raw not in ("true", "false"):
            raise ValueError(f"downsample must be true or false, got {raw!r}")
        kwargs["downsample"] = raw == "true"
    if values:
        unknown = ", ".join(sorted(values))
        raise ValueError(f"unknown plan keys: {unknown}")
    return replace(plan, **kwargs)


def write_split_manifest(splits: Sequence[SplitSample], path) -> None:
    """CSV manifest of every sampled id: repeat, bin, item_id, role."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["repeat", "bin", "item_id", "role"])
        for sp in splits:
            for item_id in sp.train_ids:
                writer.writerow([sp.repeat_index, sp.bin_index, item_id, "train"])
            for item_id in sp.eval_ids:
                writer.writerow([sp.repeat_index, sp.bin_index, item_id, "eval"])
