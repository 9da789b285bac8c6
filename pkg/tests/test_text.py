"""Vocabulary construction, token codecs, reversal, and corruption."""

import numpy as np
import pytest

from mimlm.errors import ConfigError, DataError
from mimlm.rng import RngStream
from mimlm.text import (BOT, EOT, PAD, RESERVED_TOKENS, UNK, Corpus, TokenSeq,
                        Vocabulary, build_vocab, corrupt_unk, load_corpus,
                        reverse_for_encoder)


class TestBuildVocab:
    def test_enumeration(self):
        vocab = build_vocab(["a b", "a"], min_freq=1)
        assert vocab.size == 6
        assert vocab.id_to_token[:4] == list(RESERVED_TOKENS)
        assert set(vocab.id_to_token[4:]) == {"a", "b"}

    def test_min_freq_threshold(self):
        vocab = build_vocab(["a b", "a"], min_freq=2)
        assert "b" not in vocab.token_to_id
        assert vocab.encode("b").ids == (UNK, EOT)

    def test_frequency_order_then_lexicographic(self):
        vocab = build_vocab(["y x", "x y", "x"])
        # x occurs 3 times, y twice
        assert vocab.id_to_token[4:] == ["x", "y"]

    def test_tie_break_with_max_size(self):
        vocab = build_vocab(["x y", "y x"], max_size=1)
        assert "x" in vocab.token_to_id and "y" not in vocab.token_to_id

    def test_max_size_excludes_reserved_from_budget(self):
        vocab = build_vocab(["a b c"], max_size=2)
        assert vocab.size == 6  # 4 reserved + 2 kept

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError, match="empty"):
            build_vocab(["", "   "])

    def test_reserved_surface_forms_not_duplicated(self):
        vocab = build_vocab(["<UNK> word <PAD>"])
        assert vocab.id_to_token.count("<UNK>") == 1
        assert vocab.encode("<UNK>").ids == (UNK, EOT)

    def test_deterministic_given_input_order(self):
        lines = ["c a b", "b a", "a"]
        v1, v2 = build_vocab(lines), build_vocab(lines)
        assert v1.id_to_token == v2.id_to_token


class TestEncodeDecode:
    @pytest.fixture
    def vocab(self):
        return build_vocab(["a b c d"])

    def test_encode_appends_eot(self, vocab):
        seq = vocab.encode("a b")
        assert seq.ids == (vocab.token_id("a"), vocab.token_id("b"), EOT)

    def test_empty_sentence(self, vocab):
        assert vocab.encode("").ids == (EOT,)

    def test_unknown_absorbed(self, vocab):
        seq = vocab.encode("a zzz")
        assert seq.ids == (vocab.token_id("a"), UNK, EOT)

    def test_truncation_before_eot(self, vocab):
        seq = vocab.encode("a b c d", max_len=2)
        assert len(seq.ids) == 3 and seq.ids[-1] == EOT

    def test_roundtrip_with_unk_surface(self, vocab):
        line = "a zzz b"
        assert vocab.decode(vocab.encode(line)) == "a <UNK> b"

    def test_roundtrip_in_vocabulary_words(self):
        rng = np.random.default_rng(5)
        words = [f"w{i}" for i in range(30)]
        vocab = build_vocab([" ".join(words)])
        for _ in range(25):
            line = " ".join(rng.choice(words, size=rng.integers(1, 12)))
            assert vocab.decode(vocab.encode(line)) == line

    def test_tokenseq_must_end_with_eot(self):
        with pytest.raises(DataError, match="EOT"):
            TokenSeq((4, 5))

    def test_save_load_roundtrip(self, vocab, tmp_path):
        path = tmp_path / "vocab.json"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.id_to_token == vocab.id_to_token

    def test_load_rejects_missing_reserved(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('["a", "b"]')
        with pytest.raises(DataError, match="reserved|starting with"):
            Vocabulary.load(path)


class TestReverseForEncoder:
    def test_reverses_content_keeps_eot(self):
        seq = TokenSeq((4, 5, 6, EOT))
        assert reverse_for_encoder(seq).ids == (6, 5, 4, EOT)

    def test_empty_sentence(self):
        assert reverse_for_encoder(TokenSeq((EOT,))).ids == (EOT,)

    def test_involution_on_random_sequences(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            ids = tuple(rng.integers(4, 40, size=rng.integers(0, 15))) + (EOT,)
            seq = TokenSeq(ids)
            assert reverse_for_encoder(reverse_for_encoder(seq)) == seq


class TestCorruptUnk:
    def test_rate_zero_identity(self):
        seq = TokenSeq((4, 5, EOT))
        assert corrupt_unk(seq, 0.0, RngStream(0)) is seq

    def test_eot_never_replaced(self):
        seq = TokenSeq((4, 5, 6, EOT))
        for seed in range(30):
            out = corrupt_unk(seq, 0.9, RngStream(seed))
            assert out.ids[-1] == EOT
            assert len(out.ids) == len(seq.ids)

    def test_binomial_concentration(self):
        seq = TokenSeq(tuple([7] * 100_000) + (EOT,))
        out = corrupt_unk(seq, 0.2, RngStream(3))
        frac = sum(1 for t in out.content if t == UNK) / len(out.content)
        assert 0.19 <= frac <= 0.21

    def test_invalid_rate(self):
        with pytest.raises(ConfigError, match="rate"):
            corrupt_unk(TokenSeq((4, EOT)), 1.0, RngStream(0))


class TestCorpus:
    def test_load_corpus_from_dir(self, tmp_path):
        (tmp_path / "train.txt").write_text("a b\nb c\n")
        (tmp_path / "valid.txt").write_text("a c\n")
        corpus = load_corpus(tmp_path)
        assert len(corpus.train) == 2
        assert len(corpus.valid) == 1
        assert corpus.test == []
        assert corpus.line_counts["train"] == 2

    def test_missing_train_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="train.txt"):
            load_corpus(tmp_path)

    def test_out_of_vocab_ids_rejected(self):
        vocab = build_vocab(["a"])
        with pytest.raises(DataError, match="outside vocabulary"):
            Corpus(vocab=vocab, train=[TokenSeq((99, EOT))])

    def test_shared_vocab_across_splits(self, tmp_path):
        (tmp_path / "train.txt").write_text("a b\n")
        (tmp_path / "test.txt").write_text("a zzz\n")
        corpus = load_corpus(tmp_path)
        assert corpus.test[0].ids[1] == UNK
