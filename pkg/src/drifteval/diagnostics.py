"""Corpus-level drift indicators: label distribution, embedding variability
and mean-vector cosine similarity between corpora.

The built-in embedding provider is a deterministic stand-in for a large
sentence encoder: every token hashes (64-bit FNV-1a) to the seed of a fixed
pseudo-random Gaussian vector, and a sentence embeds as the L2-normalized
mean of its token vectors.  Random projections of disjoint vocabularies are
near-orthogonal, so distributional drift shows up as falling cosine
similarity just like with a learned encoder.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .classifier import preprocess
from .ingest import LabeledExample
from .labels import CLASS_ORDER, Label
from .metrics import AgreementReport
from .seeds import fnv1a64

DEFAULT_EMBED_DIM = 256


@dataclass
class EmbeddingSet:
    ids: list[str]
    vectors: np.ndarray  # (n, d)
    provider: str
    name: str = ""

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 2:
            raise ValueError("vectors must be (n, d) with d >= 2")
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError("one id per vector required")
        if not np.isfinite(self.vectors).all():
            raise ValueError("embedding vectors contain NaN or Inf")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


class HashedProjectionProvider:
    """Deterministic token-hash random-projection sentence embedder."""

    def __init__(self, dim: int = DEFAULT_EMBED_DIM):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.tag = f"hashed-random-projection-d{dim}"
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is None:
            seed = fnv1a64(token.encode("utf-8"))
            cached = np.random.default_rng(seed).standard_normal(self.dim)
            self._token_cache[token] = cached
        return cached

    def embed_text(self, text: str) -> np.ndarray:
        tokens = preprocess(text)
        if not tokens:
            return np.zeros(self.dim)
        mean = np.mean([self._token_vector(t) for t in tokens], axis=0)
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            return np.zeros(self.dim)
        return mean / norm

    def embed(
        self, texts: Sequence[str], ids: Sequence[str] | None = None, name: str = ""
    ) -> EmbeddingSet:
        vectors = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            vectors[i] = self.embed_text(text)
        id_list = list(ids) if ids is not None else [str(i) for i in range(len(texts))]
        return EmbeddingSet(ids=id_list, vectors=vectors, provider=self.tag, name=name)


class FileProvider:
    """Precomputed id -> vector table loaded from a file.

    File format: one record per line, "id<TAB>d<TAB>v1,v2,...,vd".
    """

    def __init__(self, path):
        self.tag = "file"
        self.table: dict[str, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ValueError(
                        f"embedding file line {line_no}: expected 3 tab-separated fields"
                    )
                rec_id, d_str, values = parts
                vec = np.asarray([float(v) for v in values.split(",")])
                if vec.size != int(d_str):
                    raise ValueError(
                        f"embedding file line {line_no}: declared dimension "
                        f"{d_str} but {vec.size} values"
                    )
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise ValueError(
                        f"embedding file line {line_no}: dimension {vec.size} "
                        f"does not match earlier {dim}"
                    )
                self.table[rec_id] = vec

    def embed(
        self, texts: Sequence[str], ids: Sequence[str] | None = None, name: str = ""
    ) -> EmbeddingSet:
        if ids is None:
            raise ValueError("file provider needs explicit ids")
        vectors = []
        for rec_id in ids:
            if rec_id not in self.table:
                raise KeyError(f"no precomputed embedding for id {rec_id!r}")
            vectors.append(self.table[rec_id])
        return EmbeddingSet(
            ids=list(ids), vectors=np.stack(vectors), provider=self.tag, name=name
        )


def embed_corpus(
    texts: Sequence[str],
    provider,
    ids: Sequence[str] | None = None,
    name: str = "",
) -> EmbeddingSet:
    return provider.embed(texts, ids=ids, name=name)


def corpus_variability(emb: EmbeddingSet) -> float:
    """Mean per-dimension sample variance (trace of covariance over d)."""
    n = emb.vectors.shape[0]
    if n < 2:
        raise ValueError(f"variability needs >= 2 vectors, got {n}")
    # shifting by the first row leaves the variance unchanged but makes a
    # corpus of identical vectors come out exactly 0
    centered = emb.vectors - emb.vectors[0]
    return float(centered.var(axis=0, ddof=1).mean())


def mean_vector(emb: EmbeddingSet) -> np.ndarray:
    if emb.vectors.shape[0] == 0:
        raise ValueError(f"corpus {emb.name or '?'} is empty")
    return emb.vectors.mean(axis=0)


def _check_same_provider(corpora: Sequence[EmbeddingSet]) -> None:
    tags = {c.provider for c in corpora}
    if len(tags) > 1:
        raise ValueError(f"mixed embedding providers: {sorted(tags)}")


def similarity_matrix(
    corpora: Sequence[EmbeddingSet],
) -> tuple[np.ndarray, np.ndarray]:
    """Raw and display cosine-similarity matrices of the corpus means.

    raw[i][j] is the cosine of the two mean vectors.  The display matrix
    rescales the off-diagonal values affinely so the smallest maps to 0
    and the largest to 1 (all-equal off-diagonals map to 1), with the
    diagonal pinned at 1; the raw matrix is the one to persist.
    """
    if not corpora:
        raise ValueError("no corpora")
    _check_same_provider(corpora)
    dims = {c.dim for c in corpora}
    if len(dims) > 1:
        raise ValueError(f"mixed embedding dimensions: {sorted(dims)}")
    means = []
    for c in corpora:
        mv = mean_vector(c)
        norm = float(np.linalg.norm(mv))
        if norm == 0.0:
            raise ValueError(f"corpus {c.name or '?'} has a zero mean vector")
        means.append(mv / norm)
    m = len(means)
    raw = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            raw[i, j] = raw[j, i] = float(np.dot(means[i], means[j]))
    raw = np.clip(raw, -1.0, 1.0)
    display = np.ones_like(raw)
    if m > 1:
        off = ~np.eye(m, dtype=bool)
        lo = raw[off].min()
        hi = raw[off].max()
        if hi > lo:
            display[off] = (raw[off] - lo) / (hi - lo)
        # all off-diagonals equal: display stays 1 everywhere
    return raw, display


def label_distribution(
    dataset: Iterable[LabeledExample | Label],
) -> tuple[dict[Label, int], dict[Label, float]]:
    """Exact label counts and fractions (all zero for an empty input)."""
    counts = {lb: 0 for lb in CLASS_ORDER}
    total = 0
    for item in dataset:
        label = item.label if isinstance(item, LabeledExample) else Label(item)
        counts[label] += 1
        total += 1
    fractions = {lb: (counts[lb] / total if total else 0.0) for lb in CLASS_ORDER}
    return counts, fractions


@dataclass
class CorpusDiagnostics:
    name: str
    n_items: int
    label_counts: dict[Label, int]
    label_fractions: dict[Label, float]
    agreement: AgreementReport | None
    variability: float
    variability_by_class: dict[Label, float | None]


@dataclass
class DiagnosticsReport:
    corpora: list[CorpusDiagnostics]
    similarity_raw: np.ndarray
    similarity_display: np.ndarray
    provider: str
    names: list[str] = field(default_factory=list)


def diagnose_corpora(
    named_corpora: Sequence[tuple[str, Sequence[LabeledExample]]],
    provider=None,
    agreement_tables: dict[str, np.ndarray] | None = None,
) -> DiagnosticsReport:
    """Full per-corpus diagnostics plus the pairwise similarity matrix.

    Per-class variability is computed on the subset carrying that resolved
    label and is None for classes with fewer than 2 members.  Agreement
    tables (items x 3 vote counts) are optional since resolved corpora no
    longer carry rater votes.
    """
    if provider is None:
        provider = HashedProjectionProvider()
    from .metrics import fleiss_kappa

    corpora_diags = []
    embeddings = []
    for name, examples in named_corpora:
        emb = provider.embed(
            [ex.text for ex in examples],
            ids=[ex.item_id for ex in examples],
            name=name,
        )
        embeddings.append(emb)
        counts, fractions = label_distribution(examples)
        by_class: dict[Label, float | None] = {}
        for lb in CLASS_ORDER:
            rows = [i for i, ex in enumerate(examples) if ex.label == lb]
            if len(rows) >= 2:
                sub = EmbeddingSet(
                    ids=[emb.ids[i] for i in rows],
                    vectors=emb.vectors[rows],
                    provider=emb.provider,
                    name=f"{name}/{lb.text}",
                )
                by_class[lb] = corpus_variability(sub)
            else:
                by_class[lb] = None
        agreement = None
        if agreement_tables and name in agreement_tables:
            agreement = fleiss_kappa(agreement_tables[name])
        corpora_diags.append(
            CorpusDiagnostics(
                name=name,
                n_items=len(examples),
                label_counts=counts,
                label_fractions=fractions,
                agreement=agreement,
                variability=corpus_variability(emb) if len(examples) >= 2 else 0.0,
                variability_by_class=by_class,
            )
        )
    raw, display = similarity_matrix(embeddings)
    return DiagnosticsReport(
        corpora=corpora_diags,
        similarity_raw=raw,
        similarity_display=display,
        provider=provider.tag,
        names=[name for name, _ in named_corpora],
    )


# --- CSV export -------------------------------------------------------------


def _fmt(x: float | None) -> str:
    return "" if x is None else str(float(x))


def write_corpus_summary_csv(report: DiagnosticsReport, path) -> None:
    header = [
        "corpus",
        "n_items",
        "count_negative",
        "count_neutral",
        "count_positive",
        "frac_negative",
        "frac_neutral",
        "frac_positive",
        "kappa",
        "variability",
        "variability_negative",
        "variability_neutral",
        "variability_positive",
    ]
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for cd in report.corpora:
            row = [cd.name, cd.n_items]
            row += [cd.label_counts[lb] for lb in CLASS_ORDER]
            row += [_fmt(cd.label_fractions[lb]) for lb in CLASS_ORDER]
            row.append(_fmt(cd.agreement.kappa if cd.agreement else None))
            row.append(_fmt(cd.variability))
            row += [_fmt(cd.variability_by_class[lb]) for lb in CLASS_ORDER]
            writer.writerow(row)


def write_similarity_csv(report: DiagnosticsReport, path, which: str = "raw") -> None:
    matrix = report.similarity_raw if which == "raw" else report.similarity_display
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["corpus"] + report.names)
        for name, row in zip(report.names, matrix):
            writer.writerow([name] + [str(float(v)) for v in row])
