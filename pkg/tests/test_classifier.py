import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drifteval import classifier as bow
from drifteval.classifier import (
    ClassifierConfig,
    Model,
    build_vocabulary,
    load_model,
    loss_and_gradient,
    predict,
    predict_batch,
    predict_tokens,
    preprocess,
    save_model,
    touched_input_rows,
    train,
    training_accuracy,
)
from drifteval.labels import Label

TINY = ClassifierConfig(dim=4, epochs=5, lr0=0.05)


def toy_examples():
    return [
        (["good", "great", "fine"], Label.POSITIVE),
        (["bad", "awful", "poor"], Label.NEGATIVE),
        (["meh", "okay"], Label.NEUTRAL),
        (["good", "fine"], Label.POSITIVE),
        (["bad", "poor"], Label.NEGATIVE),
        (["okay", "meh"], Label.NEUTRAL),
    ]


def random_model(rng, dim=4, vocab_size=6, word_ngrams=1, bucket_count=16):
    vocab = {f"t{k}": k for k in range(vocab_size)}
    n_rows = vocab_size + (bucket_count if word_ngrams == 2 else 0)
    config = ClassifierConfig(
        dim=dim, word_ngrams=word_ngrams, bucket_count=bucket_count
    )
    return Model(
        vocabulary=vocab,
        input_matrix=rng.normal(0, 0.5, size=(n_rows, dim)),
        output_matrix=rng.normal(0, 0.5, size=(3, dim)),
        config=config,
    )


class TestPreprocess:
    def test_accents_and_emoji(self):
        assert preprocess("café ❤️ vax") == ["cafe", "vax"]

    def test_lowercases(self):
        assert preprocess("Covid VAX") == ["covid", "vax"]

    def test_fullwidth_compatibility_folded(self):
        assert preprocess("ＡＢＣ") == ["abc"]

    def test_uppercase_from_decomposition_lowered(self):
        # U+1D2C (modifier capital A) decomposes to "A" under NFKD
        assert preprocess("xᴬ") == ["xa"]

    def test_pure_emoji_text_empty(self):
        assert preprocess("\U0001f600 \U0001f601") == []

    def test_whitespace_splitting(self):
        assert preprocess("  a\tb\nc  ") == ["a", "b", "c"]


class TestVocabulary:
    def test_first_occurrence_order(self):
        vocab = build_vocabulary([["b", "a"], ["c", "a"]])
        assert vocab == {"b": 0, "a": 1, "c": 2}

    def test_min_count_filter(self):
        vocab = build_vocabulary([["a", "b"], ["a"]], min_token_count=2)
        assert vocab == {"a": 0}


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dim": 0},
            {"epochs": 0},
            {"lr0": 0.0},
            {"word_ngrams": 3},
            {"bucket_count": 0},
            {"min_token_count": 0},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            ClassifierConfig(**kwargs)


class TestTraining:
    def test_deterministic_in_seed(self):
        a = train(toy_examples(), TINY)
        b = train(toy_examples(), TINY)
        assert np.array_equal(a.input_matrix, b.input_matrix)
        assert np.array_equal(a.output_matrix, b.output_matrix)
        c = train(toy_examples(), ClassifierConfig(dim=4, epochs=5, lr0=0.05, seed=9))
        assert not np.array_equal(a.input_matrix, c.input_matrix)

    def test_empty_and_single_class_rejected(self):
        with pytest.raises(ValueError):
            train([], TINY)
        with pytest.raises(ValueError, match="single class"):
            train([(["a"], Label.POSITIVE), (["b"], Label.POSITIVE)], TINY)

    def test_tokenless_examples_skipped_and_tallied(self):
        examples = toy_examples() + [([], Label.POSITIVE)]
        model = train(examples, TINY)
        assert model.n_skipped == 1

    def test_learns_separable_toy_problem(self):
        model = train(toy_examples(), ClassifierConfig(dim=6, epochs=120, lr0=0.1))
        assert training_accuracy(model, toy_examples()) == 1.0

    def test_bigram_rows_allocated(self):
        config = ClassifierConfig(
            dim=3, epochs=2, lr0=0.05, word_ngrams=2, bucket_count=32
        )
        model = train(toy_examples(), config)
        assert model.input_matrix.shape[0] == len(model.vocabulary) + 32
        rows = touched_input_rows(model, ["good", "great"])
        assert any(r >= len(model.vocabulary) for r in rows)

    def test_untrained_output_layer_gives_log3_loss(self):
        rng = np.random.default_rng(0)
        model = random_model(rng)
        model.output_matrix[:] = 0.0
        loss, _ = loss_and_gradient(model, (["t0", "t1"], Label.NEUTRAL))
        assert loss == pytest.approx(math.log(3), rel=1e-12)


class TestPrediction:
    def test_probabilities_normalized(self):
        model = train(toy_examples(), TINY)
        p = predict(model, "good fine")
        p.validate()
        assert sum(p.as_tuple()) == pytest.approx(1.0, abs=1e-12)

    def test_oov_only_text_uniform(self):
        model = train(toy_examples(), TINY)
        assert predict(model, "zzz qqq").as_tuple() == (1 / 3, 1 / 3, 1 / 3)
        assert predict(model, "").as_tuple() == (1 / 3, 1 / 3, 1 / 3)

    def test_batch_matches_single(self):
        model = train(toy_examples(), TINY)
        texts = ["good fine", "bad poor", "zzz"]
        batch = predict_batch(model, texts)
        for row, text in zip(batch, texts):
            assert tuple(row) == predict(model, text).as_tuple()

    def test_oov_tokens_ignored_within_known_text(self):
        model = train(toy_examples(), TINY)
        assert np.array_equal(
            predict_tokens(model, ["good", "zzz"]), predict_tokens(model, ["good"])
        )


class TestGradient:
    def fd_gradient(self, model, example, h=1e-6):
        """Central finite differences over the flat parameter layout."""
        tokens, _ = example
        rows = touched_input_rows(model, tokens)
        dim = model.dim
        flat_len = 3 * dim + len(rows) * dim
        grad = np.empty(flat_len)

        def bump(i, delta):
            if i < 3 * dim:
                model.output_matrix[i // dim, i % dim] += delta
            else:
                j = i - 3 * dim
                model.input_matrix[rows[j // dim], j % dim] += delta

        for i in range(flat_len):
            bump(i, +h)
            up, _ = loss_and_gradient(model, example)
            bump(i, -2 * h)
            down, _ = loss_and_gradient(model, example)
            bump(i, +h)
            grad[i] = (up - down) / (2 * h)
        return grad

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        model = random_model(rng)
        example = (["t0", "t1", "t1", "t3"], Label.NEGATIVE)
        _, analytic = loss_and_gradient(model, example)
        numeric = self.fd_gradient(model, example)
        assert np.allclose(analytic, numeric, atol=1e-6)

    def test_repeated_token_weighting(self):
        # a token occurring twice in a 4-token example carries weight 2/4
        rng = np.random.default_rng(1)
        model = random_model(rng)
        _, g = loss_and_gradient(model, (["t0", "t0", "t1", "t2"], Label.POSITIVE))
        rows = touched_input_rows(model, ["t0", "t0", "t1", "t2"])
        dim = model.dim
        blocks = {r: g[3 * dim + k * dim : 3 * dim + (k + 1) * dim] for k, r in enumerate(rows)}
        assert np.allclose(blocks[0], 2 * blocks[1])

    def test_unknown_only_example_rejected(self):
        rng = np.random.default_rng(2)
        model = random_model(rng)
        with pytest.raises(ValueError):
            loss_and_gradient(model, (["nope"], Label.NEUTRAL))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        model = train(toy_examples(), TINY)
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.vocabulary == model.vocabulary
        assert loaded.config == model.config
        assert loaded.preprocessing == model.preprocessing
        # float32 on disk: close but not identical
        assert np.allclose(loaded.input_matrix, model.input_matrix, atol=1e-6)
        p_orig = predict(model, "good fine")
        p_load = predict(loaded, "good fine")
        assert p_orig.as_tuple() == pytest.approx(p_load.as_tuple(), abs=1e-5)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_model(path)

    def test_unsupported_version_rejected(self, tmp_path):
        model = train(toy_examples(), TINY)
        path = tmp_path / "model.bin"
        save_model(model, path)
        data = bytearray(path.read_bytes())
        data[4] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="version"):
            load_model(path)


@settings(max_examples=25, deadline=None)
@given(st.text(max_size=60))
def test_predict_always_valid_distribution(text):
    model = train(toy_examples(), TINY)
    p = predict(model, text)
    p.validate()
