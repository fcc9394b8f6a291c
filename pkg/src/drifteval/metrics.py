"""Scoring, relative-drift computation, bootstrap intervals and Fleiss' kappa."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .labels import CLASS_ORDER, Label

N_CLASSES = len(CLASS_ORDER)


@dataclass(frozen=True)
class EvalResult:
    """Per-class precision/recall/F1 in class order (negative, neutral,
    positive) plus the macro F1, the arithmetic mean of the class F1s."""

    precision: tuple[float, float, float]
    recall: tuple[float, float, float]
    f1: tuple[float, float, float]
    f1_macro: float
    confusion: np.ndarray  # 3x3, rows gold, columns predicted

    def class_f1(self, label: Label) -> float:
        return self.f1[label.index]


@dataclass(frozen=True)
class AgreementReport:
    kappa: float
    observed_agreement: float
    expected_agreement: float
    n_items: int
    n_raters: int


@dataclass(frozen=True)
class IntervalEstimate:
    mean: float
    lower: float
    upper: float
    level: float


def confusion_matrix(golds: Sequence[Label], preds: Sequence[Label]) -> np.ndarray:
    if len(golds) != len(preds):
        raise ValueError(
            f"length mismatch: {len(golds)} golds vs {len(preds)} predictions"
        )
    if not golds:
        raise ValueError("nothing to score")
    mat = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for g, p in zip(golds, preds):
        mat[Label(g).index, Label(p).index] += 1
    return mat


def _safe_div(num: float, den: float) -> float:
    # precision/recall/F1 are defined as 0 when the denominator vanishes
    return num / den if den else 0.0


def score(golds: Sequence[Label], preds: Sequence[Label]) -> EvalResult:
    """Precision, recall and F1 per class from the confusion matrix.

    A class that is never predicted has precision 0; a class absent from
    the golds has recall 0; F1 is 0 whenever precision + recall is 0.
    This zero convention bites exactly where support is thin, so macro F1
    can understate sparse-class performance rather than ignore it.
    """
    mat = confusion_matrix(golds, preds)
    tp = np.diag(mat).astype(float)
    gold_totals = mat.sum(axis=1).astype(float)
    pred_totals = mat.sum(axis=0).astype(float)
    precision = []
    recall = []
    f1 = []
    for k in range(N_CLASSES):
        p = _safe_div(float(tp[k]), float(pred_totals[k]))
        r = _safe_div(float(tp[k]), float(gold_totals[k]))
        precision.append(p)
        recall.append(r)
        f1.append(_safe_div(2 * p * r, p + r))
    return EvalResult(
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        f1_macro=sum(f1) / N_CLASSES,
        confusion=mat,
    )


def relative_change(
    series: Sequence[tuple[float, float]], base: float
) -> list[tuple[float, float]]:
    """Per-point relative change (score - base) / base against the score at
    training time."""
    if base == 0:
        raise ValueError("relative change undefined for base 0")
    return [(t, (s - base) / base) for t, s in series]


def bootstrap_ci(
    values: Sequence[float],
    level: float = 0.95,
    draws: int = 1000,
    seed: int | None = None,
) -> IntervalEstimate:
    """Percentile bootstrap CI of the mean.

    Resamples len(values) points with replacement `draws` times and takes
    the (1-level)/2 and 1-(1-level)/2 empirical quantiles of the
    resampled means.  One value per repeat is expected here, so the
    interval reflects run-to-run spread, not per-example noise.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size < 2:
        raise ValueError("need at least 2 values for a bootstrap interval")
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, vals.size, size=(draws, vals.size))
    means = vals[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(means, [alpha, 1.0 - alpha])
    return IntervalEstimate(
        mean=float(vals.mean()), lower=float(lower), upper=float(upper), level=level
    )


def fleiss_kappa(table: Sequence[Sequence[int]] | np.ndarray) -> AgreementReport:
    """Fleiss' kappa for an items x categories count table.

    Every item must carry the same number of ratings n >= 2.  Degenerate
    case: if every rating across the whole table lands in one category,
    expected agreement is 1 and kappa is defined as 1.
    """
    counts = np.asarray(table, dtype=float)
    if counts.ndim != 2 or counts.shape[0] < 1:
        raise ValueError("table must be 2-dimensional with at least one item")
    row_totals = counts.sum(axis=1)
    n = row_totals[0]
    if not np.all(row_totals == n):
        raise ValueError("ragged rater counts: every item needs the same n")
    if n < 2:
        raise ValueError("need at least 2 raters per item")
    n_items = counts.shape[0]
    p_i = (np.square(counts).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = counts.sum(axis=0) / (n_items * n)
    p_e = float(np.square(p_j).sum())
    if p_e >= 1.0:
        kappa = 1.0
    else:
        kappa = (p_bar - p_e) / (1.0 - p_e)
    return AgreementReport(
        kappa=float(kappa),
        observed_agreement=p_bar,
        expected_agreement=p_e,
        n_items=n_items,
        n_raters=int(n),
    )
