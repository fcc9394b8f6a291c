"""Synthetic annotated corpora with controlled concept drift.

Texts are bags of unigrams drawn from per-class vocabularies that change
across epochs; a drift schedule says when and how gradually one epoch
blends into the next (linear mixture weights).  Class priors interpolate
over time, raters vote the true class with probability 1 - epsilon (else
uniformly at random), and everything is deterministic in the scenario seed.
Output is the exact annotation-record format the ingest stage consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .ingest import AnnotationRecord, format_timestamp, parse_timestamp
from .labels import CLASS_NAMES, CLASS_ORDER, Label
from .seeds import STREAM_SYNTH, mix64

_PROB_TOL = 1e-9

DEFAULT_START = datetime(2019, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class TokenDistribution:
    tokens: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("empty token distribution")
        if len(self.tokens) != len(self.probs):
            raise ValueError("tokens and probs differ in length")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in distribution")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative token probability")
        if abs(sum(self.probs) - 1.0) > _PROB_TOL:
            raise ValueError(f"token probabilities sum to {sum(self.probs)}")

    def cumulative(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.probs))


def uniform_dist(tokens: Sequence[str]) -> TokenDistribution:
    n = len(tokens)
    return TokenDistribution(tuple(tokens), tuple([1.0 / n] * n))


def token_block(prefix: str, size: int) -> list[str]:
    return [f"{prefix}{k:03d}" for k in range(size)]


@dataclass(frozen=True)
class DriftScenario:
    n_items: int
    time_span_days: int
    class_priors: tuple[tuple[float, tuple[float, float, float]], ...]
    vocabularies: dict[Label, tuple[TokenDistribution, ...]]
    drift_schedule: tuple[tuple[float, float], ...] = ()
    annotator_noise: float = 0.0
    raters_per_item: int = 3
    tokens_min: int = 6
    tokens_max: int = 14
    start: datetime = DEFAULT_START
    seed: int = 0

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if self.time_span_days < 1:
            raise ValueError("time_span_days must be >= 1")
        if not self.class_priors:
            raise ValueError("need at least one prior control point")
        days = [d for d, _ in self.class_priors]
        if days != sorted(days):
            raise ValueError("prior control points must be sorted by day")
        for day, prior in self.class_priors:
            if len(prior) != 3 or any(p < 0 for p in prior):
                raise ValueError(f"prior at day {day} is not a 3-simplex point")
            if abs(sum(prior) - 1.0) > _PROB_TOL:
                raise ValueError(f"prior at day {day} sums to {sum(prior)}")
        n_epochs = len(self.drift_schedule) + 1
        for lb in CLASS_ORDER:
            if lb not in self.vocabularies:
                raise ValueError(f"missing vocabulary for class {lb.text}")
            if len(self.vocabularies[lb]) != n_epochs:
                raise ValueError(
                    f"class {lb.text}: expected {n_epochs} vocabulary epochs, "
                    f"got {len(self.vocabularies[lb])}"
                )
        prev_end = float("-inf")
        for start_day, end_day in self.drift_schedule:
            if not start_day < end_day:
                raise ValueError(f"empty drift segment ({start_day}, {end_day})")
            if start_day < prev_end:
                raise ValueError("overlapping drift segments")
            prev_end = end_day
        if not 0 <= self.annotator_noise < 1:
            raise ValueError("annotator_noise must be in [0, 1)")
        if self.raters_per_item < 1:
            raise ValueError("raters_per_item must be >= 1")
        if not 1 <= self.tokens_min <= self.tokens_max:
            raise ValueError("need 1 <= tokens_min <= tokens_max")
        if self.start.tzinfo is None:
            raise ValueError("start must be timezone-aware")


def interpolate_priors(scenario: DriftScenario, day: float) -> np.ndarray:
    """Piecewise-linear prior at a point in time, clamped at the ends."""
    points = scenario.class_priors
    if day <= points[0][0]:
        p = np.asarray(points[0][1], dtype=float)
    elif day >= points[-1][0]:
        p = np.asarray(points[-1][1], dtype=float)
    else:
        p = None
        for (d0, p0), (d1, p1) in zip(points, points[1:]):
            if d0 <= day <= d1:
                lam = (day - d0) / (d1 - d0)
                p = (1 - lam) * np.asarray(p0, dtype=float) + lam * np.asarray(
                    p1, dtype=float
                )
                break
        assert p is not None
    return p / p.sum()


def epoch_mixture(scenario: DriftScenario, day: float) -> tuple[int, float]:
    """(epoch index e, weight on epoch e+1) at a point in time.

    Outside every drift segment the mixture is pure: weight 0 on the
    epoch after the last completed segment.  Inside segment i the weight
    ramps linearly from 0 to 1.
    """
    completed = 0
    for i, (start_day, end_day) in enumerate(scenario.drift_schedule):
        if day >= end_day:
            completed = i + 1
            continue
        if day >= start_day:
            return i, (day - start_day) / (end_day - start_day)
        break
    return completed, 0.0


def generate(scenario: DriftScenario) -> list[AnnotationRecord]:
    """Draw the annotated corpus: items uniform over the span, true class
    from the interpolated prior, tokens from the epoch-mixed class
    vocabulary, and raters_per_item noisy votes per item."""
    records, _ = generate_with_truth(scenario)
    return records


def generate_with_truth(
    scenario: DriftScenario,
) -> tuple[list[AnnotationRecord], dict[str, Label]]:
    """generate() plus the hidden true class per item id, for calibration
    checks that need ground truth despite annotator noise."""
    rng = np.random.default_rng(mix64(scenario.seed, STREAM_SYNTH))
    span_seconds = scenario.time_span_days * 86400
    offsets = np.sort(rng.integers(0, span_seconds, size=scenario.n_items))

    cumulative = {
        lb: [dist.cumulative() for dist in scenario.vocabularies[lb]]
        for lb in CLASS_ORDER
    }
    eps = scenario.annotator_noise
    records: list[AnnotationRecord] = []
    truth: dict[str, Label] = {}
    for i in range(scenario.n_items):
        offset = int(offsets[i])
        day = offset / 86400.0
        prior = interpolate_priors(scenario, day)
        cls_idx = int(np.searchsorted(np.cumsum(prior), rng.random(), side="right"))
        cls_idx = min(cls_idx, 2)
        true = CLASS_ORDER[cls_idx]

        epoch, weight = epoch_mixture(scenario, day)
        n_tokens = int(rng.integers(scenario.tokens_min, scenario.tokens_max + 1))
        use_next = rng.random(n_tokens) < weight
        tokens = []
        for j in range(n_tokens):
            e = epoch + 1 if use_next[j] else epoch
            dist = scenario.vocabularies[true][e]
            cum = cumulative[true][e]
            t_idx = int(np.searchsorted(cum, rng.random(), side="right"))
            tokens.append(dist.tokens[min(t_idx, len(dist.tokens) - 1)])
        text = " ".join(tokens)

        item_id = f"s{i:06d}"
        truth[item_id] = true
        created_at = scenario.start + timedelta(seconds=offset)
        for r in range(scenario.raters_per_item):
            if rng.random() < eps:
                vote = CLASS_ORDER[int(rng.integers(0, 3))]
            else:
                vote = true
            records.append(
                AnnotationRecord(
                    item_id=item_id,
                    text=text,
                    created_at=created_at,
                    annotator_id=f"rater-{r}",
                    vote=vote,
                )
            )
    return records, truth


# --- scenario presets -------------------------------------------------------


def swap_scenario(
    n_items: int = 10400,
    seed: int = 11,
    time_span_days: int = 1175,
    swap_day: float | None = None,
) -> DriftScenario:
    """Positive drift control: the three class vocabularies rotate at the
    midpoint, so models trained before the swap map post-swap texts to the
    wrong classes almost everywhere.  Imbalanced priors make the pooled
    token distribution shift too, which the embedding diagnostics see."""
    mid = time_span_days / 2 if swap_day is None else swap_day
    neg = uniform_dist(token_block("negword", 60))
    neu = uniform_dist(token_block("neuword", 60))
    pos = uniform_dist(token_block("posword", 60))
    return DriftScenario(
        n_items=n_items,
        time_span_days=time_span_days,
        class_priors=((0.0, (0.18, 0.36, 0.46)),),
        vocabularies={
            Label.NEGATIVE: (neg, neu),
            Label.NEUTRAL: (neu, pos),
            Label.POSITIVE: (pos, neg),
        },
        drift_schedule=((mid - 0.5, mid + 0.5),),
        annotator_noise=0.1,
        seed=seed,
    )


def static_scenario(
    n_items: int = 15000, seed: int = 12, time_span_days: int = 545
) -> DriftScenario:
    """Negative control: one epoch, fixed priors, moderate rater noise."""
    neg = uniform_dist(token_block("negword", 60))
    neu = uniform_dist(token_block("neuword", 60))
    pos = uniform_dist(token_block("posword", 60))
    return DriftScenario(
        n_items=n_items,
        time_span_days=time_span_days,
        class_priors=((0.0, (0.30, 0.34, 0.36)),),
        vocabularies={
            Label.NEGATIVE: (neg,),
            Label.NEUTRAL: (neu,),
            Label.POSITIVE: (pos,),
        },
        annotator_noise=0.15,
        seed=seed,
    )


def negative_shift_scenario(
    n_items: int = 9000, seed: int = 13, time_span_days: int = 1000
) -> DriftScenario:
    """Sentiment control: late in the span the negative class both grows
    (prior ramp) and switches to a fresh vocabulary, so a frozen early
    model cannot see the negative turn but retrained models can."""
    neg_old = uniform_dist(token_block("negword", 60))
    neg_new = uniform_dist(token_block("shiftword", 60))
    neu = uniform_dist(token_block("neuword", 60))
    pos = uniform_dist(token_block("posword", 60))
    return DriftScenario(
        n_items=n_items,
        time_span_days=time_span_days,
        class_priors=(
            (0.0, (0.20, 0.40, 0.40)),
            (600.0, (0.20, 0.40, 0.40)),
            (700.0, (0.60, 0.20, 0.20)),
        ),
        vocabularies={
            Label.NEGATIVE: (neg_old, neg_new),
            Label.NEUTRAL: (neu, neu),
            Label.POSITIVE: (pos, pos),
        },
        drift_schedule=((600.0, 700.0),),
        annotator_noise=0.1,
        seed=seed,
    )


PRESETS = {
    "swap": swap_scenario,
    "static": static_scenario,
    "negative-shift": negative_shift_scenario,
}


# --- scenario files ---------------------------------------------------------


def write_scenario(scenario: DriftScenario, path) -> None:
    obj = {
        "n_items": scenario.n_items,
        "time_span_days": scenario.time_span_days,
        "start": format_timestamp(scenario.start),
        "seed": scenario.seed,
        "annotator_noise": scenario.annotator_noise,
        "raters_per_item": scenario.raters_per_item,
        "tokens_min": scenario.tokens_min,
        "tokens_max": scenario.tokens_max,
        "class_priors": [[day, list(prior)] for day, prior in scenario.class_priors],
        "drift_schedule": [list(seg) for seg in scenario.drift_schedule],
        "vocabularies": {
            lb.text: [
                {t: p for t, p in zip(d.tokens, d.probs)}
                for d in scenario.vocabularies[lb]
            ]
            for lb in CLASS_ORDER
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False)
        f.write("\n")


def read_scenario(path) -> DriftScenario:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    try:
        vocabularies = {}
        for name in CLASS_NAMES:
            epochs = obj["vocabularies"][name]
            vocabularies[Label.from_text(name)] = tuple(
                TokenDistribution(tuple(d.keys()), tuple(float(p) for p in d.values()))
                for d in epochs
            )
        return DriftScenario(
            n_items=int(obj["n_items"]),
            time_span_days=int(obj["time_span_days"]),
            class_priors=tuple(
                (float(day), tuple(float(p) for p in prior))
                for day, prior in obj["class_priors"]
            ),
            vocabularies=vocabularies,
            drift_schedule=tuple(
                (float(s), float(e)) for s, e in obj.get("drift_schedule", [])
            ),
            annotator_noise=float(obj.get("annotator_noise", 0.0)),
            raters_per_item=int(obj.get("raters_per_item", 3)),
            tokens_min=int(obj.get("tokens_min", 6)),
            tokens_max=int(obj.get("tokens_max", 14)),
            start=parse_timestamp(obj["start"]) if "start" in obj else DEFAULT_START,
            seed=int(obj.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad scenario file {path}: {exc}") from None
