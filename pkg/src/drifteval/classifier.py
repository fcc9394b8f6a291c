"""Linear bag-of-words classifier: averaged token embeddings into a softmax
output layer, trained by plain SGD with a linearly decaying learning rate.

The hot loop is compiled with numba; everything else is numpy.  Matrices
are float64 in memory so the analytic gradient survives a central
finite-difference check; the on-disk container downcasts to float32.
"""

from __future__ import annotations

import json
import struct
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .labels import CLASS_ORDER, Label, ProbVector
from .seeds import MASK64, fnv1a64

N_CLASSES = len(CLASS_ORDER)

MAGIC = b"BOWM"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClassifierConfig:
    dim: int = 10
    epochs: int = 500
    lr0: float = 0.01
    word_ngrams: int = 1
    bucket_count: int = 2_000_000
    min_token_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if self.word_ngrams not in (1, 2):
            raise ValueError(f"word_ngrams must be 1 or 2, got {self.word_ngrams}")
        if self.bucket_count < 1:
            raise ValueError("bucket_count must be >= 1")
        if self.min_token_count < 1:
            raise ValueError("min_token_count must be >= 1")


#: Tag recorded in models so mismatched preprocessing is detectable.
PREPROCESS_TAG = "lower-nfkd-ascii-v1"


def preprocess(text: str) -> list[str]:
    """Lowercase, fold to ASCII, split on whitespace.

    Folding is NFKD compatibility decomposition, dropping combining marks,
    then dropping any remaining non-ASCII bytes.  A second lowercase pass
    catches uppercase characters introduced by decomposition.  Expects
    anonymized input; may return an empty list.
    """
    folded = unicodedata.normalize("NFKD", text.lower())
    folded = "".join(ch for ch in folded if not unicodedata.combining(ch))
    folded = folded.encode("ascii", "ignore").decode("ascii").lower()
    return folded.split()


@dataclass
class Model:
    """Trained classifier.  Class order of output rows and probability
    vectors is fixed as (negative, neutral, positive)."""

    vocabulary: dict[str, int]
    input_matrix: np.ndarray  # (n_rows, dim)
    output_matrix: np.ndarray  # (3, dim)
    config: ClassifierConfig
    preprocessing: str = PREPROCESS_TAG
    n_skipped: int = 0  # training examples with no usable token

    @property
    def dim(self) -> int:
        return int(self.input_matrix.shape[1])


def _bigram_row(tok_a: str, tok_b: str, n_vocab: int, bucket_count: int) -> int:
    key = (tok_a + " " + tok_b).encode("utf-8")
    return n_vocab + int(fnv1a64(key) % bucket_count)


def _encode_tokens(
    tokens: Sequence[str], vocab: dict[str, int], config: ClassifierConfig
) -> list[int]:
    """Row indices for one example: in-vocabulary unigram occurrences, plus
    hashed bigrams over the surviving unigram sequence when enabled."""
    kept_tokens = [t for t in tokens if t in vocab]
    rows = [vocab[t] for t in kept_tokens]
    if config.word_ngrams == 2 and len(kept_tokens) >= 2:
        n_vocab = len(vocab)
        for a, b in zip(kept_tokens, kept_tokens[1:]):
            rows.append(_bigram_row(a, b, n_vocab, config.bucket_count))
    return rows


def build_vocabulary(
    token_lists: Iterable[Sequence[str]], min_token_count: int = 1
) -> dict[str, int]:
    """Token to row index, rows ordered by first occurrence."""
    counts: dict[str, int] = {}
    for tokens in token_lists:
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
    vocab: dict[str, int] = {}
    for t, c in counts.items():
        if c >= min_token_count:
            vocab[t] = len(vocab)
    return vocab


@njit(cache=True)
def _sgd_kernel(input_mat, output_mat, indptr, indices, labels, order, lr0):
    """In-place SGD over the flattened visit order.

    Per update: hidden = mean of the example's input rows, softmax
    cross-entropy on output_mat @ hidden, exact gradient step on the
    output rows and (scaled by 1/n_tokens) on each participating input
    row.  The input-row gradient uses the pre-update output rows, so each
    step is a true gradient step.  Learning rate decays linearly from lr0
    to 0 over the scheduled updates.
    """
    dim = input_mat.shape[1]
    n_classes = output_mat.shape[0]
    total = order.shape[0]
    hidden = np.empty(dim)
    probs = np.empty(n_classes)
    grad_h = np.empty(dim)
    for t in range(total):
        ex = order[t]
        lr = lr0 * (1.0 - t / total)
        start = indptr[ex]
        stop = indptr[ex + 1]
        m = stop - start
        inv_m = 1.0 / m
        for d in range(dim):
            hidden[d] = 0.0
        for k in range(start, stop):
            row = indices[k]
            for d in range(dim):
                hidden[d] += input_mat[row, d]
        for d in range(dim):
            hidden[d] *= inv_m
        z_max = -1.0e300
        for c in range(n_classes):
            s = 0.0
            for d in range(dim):
                s += output_mat[c, d] * hidden[d]
            probs[c] = s
            if s > z_max:
                z_max = s
        z_sum = 0.0
        for c in range(n_classes):
            probs[c] = np.exp(probs[c] - z_max)
            z_sum += probs[c]
        for c in range(n_classes):
            probs[c] /= z_sum
        y = labels[ex]
        for d in range(dim):
            grad_h[d] = 0.0
        for c in range(n_classes):
            delta = probs[c]
            if c == y:
                delta -= 1.0
            coef = lr * delta
            for d in range(dim):
                grad_h[d] += delta * output_mat[c, d]
                output_mat[c, d] -= coef * hidden[d]
        coef = lr * inv_m
        for k in range(start, stop):
            row = indices[k]
            for d in range(dim):
                input_mat[row, d] -= coef * grad_h[d]


def train(
    examples: Sequence[tuple[Sequence[str], Label]], config: ClassifierConfig
) -> Model:
    """Train on (tokens, label) pairs.

    Deterministic given config.seed: the seed drives both the input-matrix
    init and the per-epoch shuffles, so bit-identical matrices come out of
    identical inputs.  Examples that end up with no usable token are
    skipped and tallied on the model.
    """
    if not examples:
        raise ValueError("empty training set")
    present = {label for _, label in examples}
    if len(present) < 2:
        only = next(iter(present)).text if present else "none"
        raise ValueError(f"training set has a single class ({only})")

    vocab = build_vocabulary(
        (tokens for tokens, _ in examples), config.min_token_count
    )
    encoded: list[list[int]] = []
    labels: list[int] = []
    n_skipped = 0
    for tokens, label in examples:
        rows = _encode_tokens(tokens, vocab, config)
        if not rows:
            n_skipped += 1
            continue
        encoded.append(rows)
        labels.append(Label(label).index)
    if not encoded:
        raise ValueError("empty training set (all examples skipped)")

    n_rows = len(vocab)
    if config.word_ngrams == 2:
        n_rows += config.bucket_count
    rng = np.random.default_rng(config.seed & MASK64)
    bound = 1.0 / config.dim
    input_mat = rng.uniform(-bound, bound, size=(n_rows, config.dim))
    output_mat = np.zeros((N_CLASSES, config.dim))

    n = len(encoded)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i, rows in enumerate(encoded):
        indptr[i + 1] = indptr[i] + len(rows)
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i, rows in enumerate(encoded):
        indices[indptr[i] : indptr[i + 1]] = rows
    label_arr = np.asarray(labels, dtype=np.int64)
    order = np.empty(config.epochs * n, dtype=np.int64)
    for e in range(config.epochs):
        order[e * n : (e + 1) * n] = rng.permutation(n)

    _sgd_kernel(input_mat, output_mat, indptr, indices, label_arr, order, config.lr0)
    if not (np.isfinite(input_mat).all() and np.isfinite(output_mat).all()):
        raise FloatingPointError("training produced non-finite parameters")
    return Model(
        vocabulary=vocab,
        input_matrix=input_mat,
        output_matrix=output_mat,
        config=config,
        n_skipped=n_skipped,
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_tokens(model: Model, tokens: Sequence[str]) -> np.ndarray:
    rows = _encode_tokens(tokens, model.vocabulary, model.config)
    if not rows:
        return np.full(N_CLASSES, 1.0 / N_CLASSES)
    hidden = model.input_matrix[np.asarray(rows, dtype=np.int64)].mean(axis=0)
    return _softmax(model.output_matrix @ hidden)


def predict(model: Model, text: str) -> ProbVector:
    """Class probabilities for one text; uniform when nothing is known."""
    p = predict_tokens(model, preprocess(text))
    return ProbVector(float(p[0]), float(p[1]), float(p[2]))


def predict_batch(model: Model, texts: Sequence[str]) -> np.ndarray:
    """(n, 3) probability array, one row per text."""
    out = np.empty((len(texts), N_CLASSES))
    for i, text in enumerate(texts):
        out[i] = predict_tokens(model, preprocess(text))
    return out


def touched_input_rows(model: Model, tokens: Sequence[str]) -> list[int]:
    """Distinct input rows a token list touches, ascending.  This is the
    input-block layout of loss_and_gradient's flat vector."""
    return sorted(set(_encode_tokens(tokens, model.vocabulary, model.config)))


def loss_and_gradient(
    model: Model, example: tuple[Sequence[str], Label]
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy loss and its exact gradient for one example.

    Flat layout: the three output rows first (class order), dim values
    each, then every distinct touched input row in ascending row order
    (see touched_input_rows).  A row occurring r times among n token
    occurrences carries gradient weight r/n.
    """
    tokens, label = example
    rows = _encode_tokens(tokens, model.vocabulary, model.config)
    if not rows:
        raise ValueError("example has no token known to the model")
    row_arr = np.asarray(rows, dtype=np.int64)
    m = len(rows)
    hidden = model.input_matrix[row_arr].mean(axis=0)
    probs = _softmax(model.output_matrix @ hidden)
    y = Label(label).index
    loss = float(-np.log(probs[y]))

    delta = probs.copy()
    delta[y] -= 1.0
    grad_output = np.outer(delta, hidden)  # (3, dim)
    grad_hidden = model.output_matrix.T @ delta  # (dim,)

    distinct = touched_input_rows(model, tokens)
    counts = {r: 0 for r in distinct}
    for r in rows:
        counts[r] += 1
    grad_input = np.stack([(counts[r] / m) * grad_hidden for r in distinct])
    return loss, np.concatenate([grad_output.ravel(), grad_input.ravel()])


# --- serialization ----------------------------------------------------------


def save_model(model: Model, path) -> None:
    """Versioned binary container: magic, version byte, JSON header with
    config/preprocessing/vocabulary, then both matrices as little-endian
    float32."""
    header = {
        "config": {
            "dim": model.config.dim,
            "epochs": model.config.epochs,
            "lr0": model.config.lr0,
            "word_ngrams": model.config.word_ngrams,
            "bucket_count": model.config.bucket_count,
            "min_token_count": model.config.min_token_count,
            "seed": model.config.seed,
        },
        "preprocessing": model.preprocessing,
        "n_skipped": model.n_skipped,
        "vocabulary": _vocab_as_list(model.vocabulary),
        "input_shape": list(model.input_matrix.shape),
        "output_shape": list(model.output_matrix.shape),
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", FORMAT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(model.input_matrix, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(model.output_matrix, dtype="<f4").tobytes())


def _vocab_as_list(vocab: dict[str, int]) -> list[str]:
    tokens = [""] * len(vocab)
    for t, row in vocab.items():
        tokens[row] = t
    return tokens


def load_model(path) -> Model:
    """Load a saved model.  Matrices come back float64 but carry float32
    precision, so predictions can differ from the pre-save model in the
    last bits."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a model file (bad magic {magic!r})")
        (version,) = struct.unpack("<B", f.read(1))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        (blob_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(blob_len).decode("utf-8"))
        in_shape = tuple(header["input_shape"])
        out_shape = tuple(header["output_shape"])
        n_in = int(np.prod(in_shape))
        n_out = int(np.prod(out_shape))
        input_mat = np.frombuffer(f.read(4 * n_in), dtype="<f4").reshape(in_shape)
        output_mat = np.frombuffer(f.read(4 * n_out), dtype="<f4").reshape(out_shape)
    config = ClassifierConfig(**header["config"])
    vocab = {t: i for i, t in enumerate(header["vocabulary"])}
    return Model(
        vocabulary=vocab,
        input_matrix=input_mat.astype(np.float64),
        output_matrix=output_mat.astype(np.float64),
        config=config,
        preprocessing=header["preprocessing"],
        n_skipped=int(header.get("n_skipped", 0)),
    )


def training_accuracy(model: Model, examples: Sequence[tuple[Sequence[str], Label]]) -> float:
    """Fraction of examples whose argmax prediction matches their label."""
    hits = 0
    total = 0
    for tokens, label in examples:
        p = predict_tokens(model, tokens)
        pred = ProbVector(float(p[0]), float(p[1]), float(p[2])).label
        hits += pred == label
        total += 1
    return hits / total if total else 0.0
