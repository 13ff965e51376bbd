import numpy as np
import pytest

import gaslt


def rng():
    return np.random.default_rng(7)


def test_version():
    assert gaslt.__version__


def test_gloss_attention_shapes_and_stochastic_rows():
    r = rng()
    x = r.normal(size=(12, 6))
    w = [r.normal(size=(6, 6)) * 0.5 for _ in range(3)]
    w_offset = r.normal(size=(3, 6)) * 0.5

    out, attn = gaslt.gloss_attention(x, *w, w_offset)
    assert out.shape == (12, 6)
    assert attn["weights"].shape == (12, 3)
    np.testing.assert_allclose(attn["weights"].sum(axis=1), 1.0, atol=1e-12)
    positions = attn["positions"]
    assert positions.shape == (12, 3)
    assert (positions >= 0.0).all() and (positions < 12.0).all()


def test_self_attention_full_key_axis():
    r = rng()
    x = r.normal(size=(5, 4))
    w = [r.normal(size=(4, 4)) for _ in range(3)]
    out, attn = gaslt.self_attention(x, *w)
    assert out.shape == (5, 4)
    assert attn["weights"].shape == (5, 5)
    assert attn["positions"] is None
    np.testing.assert_allclose(attn["weights"].sum(axis=1), 1.0, atol=1e-12)


def test_metric_hand_values():
    b = gaslt.bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]], n_max=1)
    assert b[0] == pytest.approx(0.7788, abs=1e-4)
    assert gaslt.rouge_l(["a", "b", "c"], ["a", "c"]) == pytest.approx(
        0.8299, abs=1e-4
    )
    assert gaslt.cad(np.full((10, 10), 0.1)) == pytest.approx(0.28, abs=1e-12)
    a = np.array([[1.0, 0.5], [0.5, 1.0]])
    b = np.array([[1.0, 0.7], [0.7, 1.0]])
    assert gaslt.asd(a, b) == pytest.approx(0.2, abs=1e-12)
    sim = gaslt.embedding_similarity(np.eye(3))
    np.testing.assert_allclose(sim, np.eye(3), atol=1e-12)


def test_corpus_round_trip(tmp_path):
    out = tmp_path / "corpus"
    count = gaslt.generate_corpus(
        out,
        gloss_vocab=6,
        feature_dim=4,
        min_segment=2,
        max_segment=3,
        min_glosses=2,
        max_glosses=3,
        train_size=8,
        dev_size=3,
        test_size=3,
        seed=11,
    )
    assert count == 14
    for name in ["manifest.txt", "vocab.txt", "train.text", "train.ids"]:
        assert (out / name).is_file()

    vocab = gaslt.Vocabulary.load(out / "vocab.txt")
    assert len(vocab) > 4
    words = (out / "train.text").read_text().splitlines()[0].split()
    assert vocab.decode(vocab.encode(words)) == words


def tiny_config(vocab_size):
    return {
        "d_model": 16,
        "heads": 2,
        "encoder_layers": 1,
        "decoder_layers": 1,
        "window": 3,
        "ff_dim": 32,
        "dropout": 0.0,
        "vocab_size": vocab_size,
        "input_dim": 4,
    }


def test_translator_checkpoint_round_trip(tmp_path):
    m = gaslt.Translator(tiny_config(10), seed=5)
    assert m.config["d_model"] == "16"
    frames = rng().normal(size=(7, 4))

    ids = m.translate_ids(frames, beam=1, max_len=6)
    assert all(0 <= i < 10 for i in ids)

    path = tmp_path / "model.ckpt"
    m.save(path)
    again = gaslt.Translator.load(path)
    assert again.translate_ids(frames, beam=1, max_len=6) == ids
    assert again.translate_ids(frames, beam=3, max_len=6) == m.translate_ids(
        frames, beam=3, max_len=6
    )


def test_translator_attention_maps():
    m = gaslt.Translator(tiny_config(10), seed=5)
    maps = m.attention_maps(rng().normal(size=(9, 4)))
    assert len(maps) == 2  # one layer, two heads
    for attn in maps:
        assert attn["positions"] is not None
        np.testing.assert_allclose(attn["weights"].sum(axis=1), 1.0, atol=1e-9)


def test_translate_words(tmp_path):
    out = tmp_path / "corpus"
    gaslt.generate_corpus(
        out,
        gloss_vocab=6,
        feature_dim=4,
        min_segment=2,
        max_segment=3,
        min_glosses=2,
        max_glosses=3,
        train_size=8,
        dev_size=3,
        test_size=3,
        seed=11,
    )
    vocab = gaslt.Vocabulary.load(out / "vocab.txt")
    m = gaslt.Translator(tiny_config(len(vocab)), seed=5)
    words = m.translate(rng().normal(size=(7, 4)), vocab, max_len=5)
    assert isinstance(words, list)
    assert all(isinstance(w, str) for w in words)


def test_bench_counters():
    rows = gaslt.run_bench([16, 32], window=3, dim=8, repeats=1, seed=7)
    assert len(rows) == 4
    for row in rows:
        expected = (
            3 * row["frames"] if row["variant"] == "gloss" else row["frames"] ** 2
        )
        assert row["score_evals"] == expected
        assert row["median_seconds"] > 0.0
