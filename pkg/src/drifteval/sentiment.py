"""Weekly sentiment index from labeled predictions, with a legacy-model vs
periodically-retrained comparison."""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Sequence

from .classifier import Model, predict_batch
from .ingest import parse_timestamp
from .labels import Label, label_from_probs


@dataclass(frozen=True)
class SentimentSeries:
    """Weekly index points: (week start date, mean numeric label, count)."""

    points: tuple[tuple[date, float, int], ...]

    def __len__(self) -> int:
        return len(self.points)

    def week_starts(self) -> list[date]:
        return [p[0] for p in self.points]

    def values(self) -> list[float]:
        return [p[1] for p in self.points]


def week_start(ts: datetime) -> date:
    """Monday of the ISO week holding ts, in UTC."""
    d = ts.astimezone(timezone.utc).date()
    return d - timedelta(days=d.weekday())


def sentiment_index(predictions: Sequence[tuple[datetime, Label]]) -> SentimentSeries:
    """Group predictions by ISO week (UTC) and average the numeric labels.

    s is the weekly mean of {-1, 0, +1}; weeks without predictions are
    omitted, so consumers must join on week_start rather than position.
    """
    sums: dict[date, int] = {}
    counts: dict[date, int] = {}
    for ts, label in predictions:
        wk = week_start(ts)
        sums[wk] = sums.get(wk, 0) + Label(label).value
        counts[wk] = counts.get(wk, 0) + 1
    points = tuple(
        (wk, sums[wk] / counts[wk], counts[wk]) for wk in sorted(sums)
    )
    return SentimentSeries(points=points)


def assign_models(
    timestamps: Sequence[datetime], model_timeline: Sequence[tuple[datetime, Model]]
) -> list[int]:
    """Index of the most recent model with train_end <= t, for each t.

    The assignment is piecewise constant and right-continuous: an item
    stamped exactly at a train_end is scored by that model.
    """
    if not model_timeline:
        raise ValueError("empty model timeline")
    ends = [te for te, _ in model_timeline]
    for prev, cur in zip(ends, ends[1:]):
        if cur < prev:
            raise ValueError("model timeline must be sorted by train_end")
    out = []
    for ts in timestamps:
        k = bisect_right(ends, ts) - 1
        if k < 0:
            raise ValueError(
                f"stream item at {ts.isoformat()} predates every model "
                f"(earliest train_end {ends[0].isoformat()})"
            )
        out.append(k)
    return out


def _score_stream(model: Model, texts: Sequence[str]) -> list[Label]:
    probs = predict_batch(model, texts)
    return [label_from_probs(*row) for row in probs]


def compare_legacy_updated(
    stream: Sequence[tuple[datetime, str]],
    legacy_model: Model,
    model_timeline: Sequence[tuple[datetime, Model]],
) -> tuple[SentimentSeries, SentimentSeries]:
    """Score one stream twice: frozen legacy model vs the retrained timeline.

    The legacy series applies legacy_model to every item; the updated
    series applies, per item, the most recent timeline model whose
    train_end is at or before the item's timestamp.
    """
    timestamps = [ts for ts, _ in stream]
    texts = [text for _, text in stream]
    assignment = assign_models(timestamps, model_timeline)

    legacy_labels = _score_stream(legacy_model, texts)
    updated_labels: list[Label | None] = [None] * len(texts)
    by_model: dict[int, list[int]] = {}
    for i, k in enumerate(assignment):
        by_model.setdefault(k, []).append(i)
    for k, positions in sorted(by_model.items()):
        labels = _score_stream(model_timeline[k][1], [texts[i] for i in positions])
        for pos, label in zip(positions, labels):
            updated_labels[pos] = label

    legacy = sentiment_index(list(zip(timestamps, legacy_labels)))
    updated = sentiment_index(list(zip(timestamps, updated_labels)))
    return legacy, updated


# --- stream and series files ------------------------------------------------


def read_stream(path) -> list[tuple[datetime, str]]:
    """Line-delimited prediction stream: ISO timestamp, tab, text."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            ts_raw, sep, text = line.partition("\t")
            if not sep:
                raise ValueError(f"stream line {line_no}: no tab separator")
            out.append((parse_timestamp(ts_raw), text))
    return out


def write_stream(stream: Sequence[tuple[datetime, str]], path) -> None:
    from .adapter import sanitize_text

    with open(path, "w", encoding="utf-8") as f:
        for ts, text in stream:
            f.write(f"{ts.astimezone(timezone.utc).isoformat()}\t{sanitize_text(text)}\n")


def write_sentiment_csv(
    legacy: SentimentSeries, updated: SentimentSeries, path
) -> None:
    """Joined weekly CSV; weeks missing from one series leave its cells empty."""
    leg = {wk: (s, n) for wk, s, n in legacy.points}
    upd = {wk: (s, n) for wk, s, n in updated.points}
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["week_start", "s_legacy", "n_legacy", "s_updated", "n_updated"])
        for wk in sorted(set(leg) | set(upd)):
            s_l, n_l = leg.get(wk, (None, None))
            s_u, n_u = upd.get(wk, (None, None))
            writer.writerow(
                [
                    wk.isoformat(),
                    "" if s_l is None else str(float(s_l)),
                    "" if n_l is None else n_l,
                    "" if s_u is None else str(float(s_u)),
                    "" if n_u is None else n_u,
                ]
            )
