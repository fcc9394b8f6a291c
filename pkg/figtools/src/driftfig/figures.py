"""The four figure families rendered from drifteval CSV outputs.

drift           one panel, relative macro-F1 change per window over eval
                bins: square markers at training time, circles later, one
                bootstrap CI band per window
drift-by-class  the same layout, one panel per class
diagnostics     2x2 panel: label mix, agreement, embedding variability,
                similarity heatmap
sentiment       legacy vs updated weekly index overlaid

Everything reads documented CSV columns only, so any pipeline that emits
the same files feeds these unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # batch renderer
import matplotlib.pyplot as plt

from .io import FigureDataError, fnum, load_rows, ts

CLASS_NAMES = ("negative", "neutral", "positive")
CLASS_COLORS = {"negative": "#b2474d", "neutral": "#8a8a8a", "positive": "#4a8f5d"}

SUMMARY_COLS = (
    "window_id",
    "eval_bin",
    "eval_bin_end",
    "is_training_time",
    "class",
    "metric",
    "mean",
    "ci_lower",
    "ci_upper",
)
DIAG_COLS = (
    "corpus",
    "n_items",
    "frac_negative",
    "frac_neutral",
    "frac_positive",
    "kappa",
    "variability",
    "variability_negative",
    "variability_neutral",
    "variability_positive",
)
SENTIMENT_COLS = ("week_start", "s_legacy", "n_legacy", "s_updated", "n_updated")

FAMILY_INPUTS = {
    "drift": ("summary.csv",),
    "drift-by-class": ("summary.csv",),
    "diagnostics": ("corpus_summary.csv", "similarity_display.csv"),
    "sentiment": ("sentiment.csv",),
}


@dataclass(frozen=True)
class FigureSpec:
    family: str
    inputs: tuple[str, ...]
    output: str
    title: str = ""
    dpi: int = 150

    def __post_init__(self):
        if self.family not in FAMILY_INPUTS:
            known = ", ".join(sorted(FAMILY_INPUTS))
            raise ValueError(f"unknown figure family {self.family!r} (known: {known})")
        want = len(FAMILY_INPUTS[self.family])
        if len(self.inputs) != want:
            names = " + ".join(FAMILY_INPUTS[self.family])
            raise ValueError(
                f"family {self.family!r} takes {want} input file(s) ({names}), "
                f"got {len(self.inputs)}"
            )
        if self.dpi < 20:
            raise ValueError(f"dpi too small: {self.dpi}")


# --- drift ------------------------------------------------------------------


def _drift_series(rows, class_name):
    """{window_id: [(eval_bin, bin_end, mean, lo, hi, at_train), ...]} for
    rel_f1 rows of one class, empty-mean rows (no usable repeats) dropped."""
    by_window: dict[int, list] = {}
    for r in rows:
        if r["class"] != class_name or r["metric"] != "rel_f1":
            continue
        mean = fnum(r, "mean")
        if mean is None:
            continue
        lo, hi = fnum(r, "ci_lower"), fnum(r, "ci_upper")
        by_window.setdefault(int(r["window_id"]), []).append(
            (
                int(r["eval_bin"]),
                ts(r, "eval_bin_end"),
                mean,
                mean if lo is None else lo,
                mean if hi is None else hi,
                r["is_training_time"] == "1",
            )
        )
    for pts in by_window.values():
        pts.sort(key=lambda p: p[0])
    return dict(sorted(by_window.items()))


def _plot_drift_axis(ax, series):
    cmap = plt.get_cmap("viridis")
    windows = list(series)
    for i, w in enumerate(windows):
        color = cmap(i / max(len(windows) - 1, 1))
        pts = series[w]
        xs = [p[1] for p in pts]
        means = [p[2] for p in pts]
        ax.fill_between(
            xs, [p[3] for p in pts], [p[4] for p in pts],
            color=color, alpha=0.22, linewidth=0,
        )
        ax.plot(xs, means, color=color, linewidth=1.1, label=f"window {w}")
        at_train = [p for p in pts if p[5]]
        later = [p for p in pts if not p[5]]
        ax.plot(
            [p[1] for p in at_train], [p[2] for p in at_train],
            "s", color=color, markersize=5,
        )
        ax.plot(
            [p[1] for p in later], [p[2] for p in later],
            "o", color=color, markersize=3.5,
        )
    ax.axhline(0.0, color="0.45", linewidth=0.8, linestyle="--")
    ax.set_xlabel("evaluation bin end")


def build_drift(spec: FigureSpec):
    rows = load_rows(spec.inputs[0], SUMMARY_COLS)
    series = _drift_series(rows, "macro")
    if not series:
        raise FigureDataError(f"{spec.inputs[0]} has no macro rel_f1 rows")
    fig, ax = plt.subplots(figsize=(7.5, 4.5))
    _plot_drift_axis(ax, series)
    ax.set_ylabel("relative change in macro F1")
    ax.legend(fontsize=7, ncol=2, frameon=False)
    fig.autofmt_xdate(rotation=30)
    return fig


def build_drift_by_class(spec: FigureSpec):
    rows = load_rows(spec.inputs[0], SUMMARY_COLS)
    fig, axes = plt.subplots(1, 3, figsize=(12.5, 4.0), sharey=True)
    plotted = False
    for ax, cname in zip(axes, CLASS_NAMES):
        series = _drift_series(rows, cname)
        if series:
            _plot_drift_axis(ax, series)
            plotted = True
        ax.set_title(cname)
    if not plotted:
        plt.close(fig)
        raise FigureDataError(f"{spec.inputs[0]} has no per-class rel_f1 rows")
    axes[0].set_ylabel("relative change in F1")
    axes[-1].legend(fontsize=6, ncol=2, frameon=False)
    fig.autofmt_xdate(rotation=30)
    return fig


# --- diagnostics ------------------------------------------------------------


def _load_matrix(path):
    rows = load_rows(path, ("corpus",))
    names = [r["corpus"] for r in rows]
    try:
        matrix = [[float(r[name]) for name in names] for r in rows]
    except (KeyError, TypeError):
        raise FigureDataError(
            f"{path} rows and columns do not form a square named matrix"
        ) from None
    return names, matrix


def build_diagnostics(spec: FigureSpec):
    rows = load_rows(spec.inputs[0], DIAG_COLS)
    sim_names, sim = _load_matrix(spec.inputs[1])
    names = [r["corpus"] for r in rows]
    x = range(len(names))

    fig, axes = plt.subplots(2, 2, figsize=(10.5, 8.0))

    ax = axes[0, 0]
    bottom = [0.0] * len(names)
    for cname in CLASS_NAMES:
        vals = [fnum(r, f"frac_{cname}") or 0.0 for r in rows]
        ax.bar(x, vals, bottom=bottom, color=CLASS_COLORS[cname], label=cname, width=0.8)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_ylabel("label share")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7, frameon=False)

    ax = axes[0, 1]
    kappa_pts = [(i, k) for i, r in enumerate(rows) if (k := fnum(r, "kappa")) is not None]
    if kappa_pts:
        ax.plot([p[0] for p in kappa_pts], [p[1] for p in kappa_pts], "o-", color="#33557a")
    ax.set_ylabel("Fleiss' kappa")

    ax = axes[1, 0]
    ax.plot(x, [fnum(r, "variability") for r in rows], "o-", color="0.2", label="all")
    for cname in CLASS_NAMES:
        vals = [fnum(r, f"variability_{cname}") for r in rows]
        if any(v is not None for v in vals):
            ax.plot(x, vals, "-", linewidth=0.9, color=CLASS_COLORS[cname], label=cname)
    ax.set_ylabel("embedding variability")
    ax.legend(fontsize=7, frameon=False)

    ax = axes[1, 1]
    image = ax.imshow(sim, vmin=0.0, vmax=1.0, cmap="magma")
    ax.set_xticks(range(len(sim_names)), sim_names, rotation=90, fontsize=6)
    ax.set_yticks(range(len(sim_names)), sim_names, fontsize=6)
    fig.colorbar(image, ax=ax, shrink=0.85, label="similarity (rescaled)")

    for ax in (axes[0, 0], axes[0, 1], axes[1, 0]):
        ax.set_xticks(list(x), names, rotation=90, fontsize=6)
    fig.tight_layout()
    return fig


# --- sentiment --------------------------------------------------------------


def build_sentiment(spec: FigureSpec):
    rows = load_rows(spec.inputs[0], SENTIMENT_COLS)
    fig, ax = plt.subplots(figsize=(7.5, 4.0))
    for key, label, color in (
        ("s_legacy", "legacy model", "#8a6d3b"),
        ("s_updated", "retrained models", "#2d6a4f"),
    ):
        pts = [(ts(r, "week_start"), v) for r in rows if (v := fnum(r, key)) is not None]
        if pts:
            ax.plot(
                [p[0] for p in pts], [p[1] for p in pts],
                "o-", color=color, markersize=3, linewidth=1.1, label=label,
            )
    ax.axhline(0.0, color="0.45", linewidth=0.8, linestyle="--")
    ax.set_ylabel("weekly sentiment index")
    ax.set_xlabel("week")
    ax.legend(frameon=False, fontsize=8)
    fig.autofmt_xdate(rotation=30)
    return fig


# --- dispatch ---------------------------------------------------------------

_BUILDERS = {
    "drift": build_drift,
    "drift-by-class": build_drift_by_class,
    "diagnostics": build_diagnostics,
    "sentiment": build_sentiment,
}


def build_figure(spec: FigureSpec):
    return _BUILDERS[spec.family](spec)


def render(spec: FigureSpec) -> Path:
    """Build and save; reruns overwrite the output in place."""
    fig = build_figure(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if spec.title:
        fig.suptitle(spec.title)
    fig.savefig(out, dpi=spec.dpi)
    plt.close(fig)
    return out
