"""Tests for embedding table storage and nearest-neighbour search."""

import io

import numpy as np
import pytest

from embgeom import embed_store
from embgeom.embed_store import (
    EmbeddingTable,
    load_embeddings_binary,
    load_embeddings_text,
    nearest_neighbors,
    save_embeddings_binary,
    save_embeddings_text,
    token_filter,
)
from embgeom.errors import (
    OutOfVocabularyError,
    ParseError,
    ZeroVectorError,
)
from embgeom.linalg import Matrix, Vector

MINIMAL = b"2 2\na 1 0\nb 0 1\n"


def make_table(tokens, rows):
    return EmbeddingTable(tokens, rows)


class TestEmbeddingTable:
    def test_construction(self):
        t = make_table(["a", "b"], [[1.0, 0.0], [0.0, 1.0]])
        assert t.V == 2 and t.D == 2
        assert t.vocab == ("a", "b")

    def test_matrix_property_is_linalg_matrix(self):
        t = make_table(["a"], [[1.0, 2.0]])
        assert isinstance(t.matrix, Matrix)
        assert t.matrix == Matrix([[1.0, 2.0]])

    def test_duplicate_tokens_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            make_table(["a", "a"], [[1.0], [2.0]])

    def test_whitespace_token_rejected(self):
        with pytest.raises(ValueError):
            make_table(["a b"], [[1.0]])
        with pytest.raises(ValueError):
            make_table([""], [[1.0]])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            make_table(["a"], [[np.nan]])

    def test_accepts_linalg_matrix(self):
        t = make_table(["a", "b"], Matrix([[1, 2], [3, 4]]))
        assert t.lookup("b") == Vector([3.0, 4.0])


class TestLookup:
    def test_minimal_table(self):
        t = load_embeddings_text(MINIMAL)
        assert t.lookup("a") == Vector([1.0, 0.0])

    def test_unknown_token(self):
        t = load_embeddings_text(MINIMAL)
        with pytest.raises(OutOfVocabularyError, match="zebra"):
            t.lookup("zebra")

    def test_lookup_survives_round_trip(self):
        rng = np.random.default_rng(10)
        t = make_table(["x", "y", "z"], rng.normal(size=(3, 4)))
        back = load_embeddings_text(save_embeddings_text(t))
        for tok in t.vocab:
            assert back.lookup(tok) == t.lookup(tok)


class TestTextFormat:
    def test_minimal_file(self):
        t = load_embeddings_text(MINIMAL)
        assert t.V == 2 and t.D == 2
        assert t.vocab == ("a", "b")

    def test_accepts_file_object(self):
        t = load_embeddings_text(io.BytesIO(MINIMAL))
        assert t.V == 2

    def test_literal_values(self):
        t = load_embeddings_text(b"1 3\nx 0.5 -0.5 2.0\n")
        assert t.lookup("x") == Vector([0.5, -0.5, 2.0])

    def test_scientific_notation(self):
        t = load_embeddings_text(b"1 2\nx 1e-3 -2.5E+2\n")
        assert t.lookup("x") == Vector([0.001, -250.0])

    def test_no_trailing_newline_accepted(self):
        t = load_embeddings_text(b"1 1\nx 3.0")
        assert t.lookup("x") == Vector([3.0])

    def test_round_trip_exact(self):
        t = load_embeddings_text(MINIMAL)
        assert load_embeddings_text(save_embeddings_text(t)) == t

    def test_round_trip_random_values(self):
        rng = np.random.default_rng(11)
        rows = rng.normal(size=(1000, 8)) * rng.choice(
            [1e-6, 1.0, 1e6], size=(1000, 1)
        )
        t = make_table([f"t{i}" for i in range(1000)], rows)
        back = load_embeddings_text(save_embeddings_text(t))
        err = np.max(np.abs(back._array - t._array))
        assert err <= 1e-8

    def test_extra_rows_rejected(self):
        data = b"2 2\na 1 0\nb 0 1\nc 1 1\n"
        with pytest.raises(ParseError, match="line 4"):
            load_embeddings_text(data)

    def test_missing_rows_rejected(self):
        with pytest.raises(ParseError, match="expected 3"):
            load_embeddings_text(b"3 2\na 1 0\nb 0 1\n")

    def test_bad_header(self):
        for header in (b"2", b"2 2 2", b"-1 2", b"2 x", b"2  2"):
            with pytest.raises(ParseError, match="line 1"):
                load_embeddings_text(header + b"\na 1 0\nb 0 1\n")

    def test_wrong_field_count(self):
        with pytest.raises(ParseError, match="line 3"):
            load_embeddings_text(b"2 2\na 1 0\nb 0 1 2\n")

    def test_double_space_rejected(self):
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings_text(b"1 2\na 1  0\n")

    def test_trailing_space_rejected(self):
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings_text(b"1 2\na 1 0 \n")

    def test_duplicate_token_line_numbered(self):
        with pytest.raises(ParseError, match="line 3"):
            load_embeddings_text(b"2 1\na 1\na 2\n")

    def test_non_finite_value_line_numbered(self):
        with pytest.raises(ParseError, match="line 3"):
            load_embeddings_text(b"2 1\na 1\nb nan\n")
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings_text(b"2 1\na inf\nb 1\n")

    def test_malformed_float_line_numbered(self):
        with pytest.raises(ParseError, match="line 3"):
            load_embeddings_text(b"2 1\na 1\nb 1_0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings_text(b"2 1\na 0x3\nb 1\n")

    def test_carriage_return_rejected(self):
        with pytest.raises(ParseError):
            load_embeddings_text(b"2 2\r\na 1 0\r\nb 0 1\r\n")

    def test_invalid_utf8_rejected(self):
        with pytest.raises(ParseError, match="UTF-8"):
            load_embeddings_text(b"1 1\n\xff 1\n")

    def test_lowercase_flag(self):
        t = load_embeddings_text(b"2 1\nApple 1\nBanana 2\n", lowercase=True)
        assert t.vocab == ("apple", "banana")
        with pytest.raises(ParseError, match="duplicate"):
            load_embeddings_text(b"2 1\nApple 1\napple 2\n", lowercase=True)

    def test_unicode_tokens(self):
        t = load_embeddings_text("2 1\ncafé 1\n日本 2\n".encode("utf-8"))
        assert t.lookup("日本") == Vector([2.0])


class TestBinaryFormat:
    def test_round_trip_vocab_exact(self):
        rng = np.random.default_rng(12)
        t = make_table(["alpha", "βeta", "##sub"], rng.normal(size=(3, 5)))
        back = load_embeddings_binary(save_embeddings_binary(t))
        assert back.vocab == t.vocab

    def test_round_trip_float32_precision(self):
        rng = np.random.default_rng(13)
        rows = rng.uniform(-1.0, 1.0, size=(50, 7))
        t = make_table([f"t{i}" for i in range(50)], rows)
        back = load_embeddings_binary(save_embeddings_binary(t))
        assert np.max(np.abs(back._array - t._array)) <= 1e-6

    def test_bad_magic(self):
        with pytest.raises(ParseError, match="magic"):
            load_embeddings_binary(b"NOPE" + b"\x00" * 32)

    def test_truncated(self):
        blob = save_embeddings_binary(make_table(["a"], [[1.0, 2.0]]))
        with pytest.raises(ParseError):
            load_embeddings_binary(blob[:-3])

    def test_accepts_file_object(self):
        blob = save_embeddings_binary(make_table(["a"], [[1.0]]))
        t = load_embeddings_binary(io.BytesIO(blob))
        assert t.lookup("a") == Vector([1.0])


class TestNearestNeighbors:
    def test_orthonormal_all_zero_similarity(self):
        t = make_table(["a", "b", "c"], np.eye(3))
        out = nearest_neighbors(t, "a", k=2)
        assert out.query == "a"
        assert out.tokens() == ["b", "c"]
        assert all(abs(s) < 1e-12 for _, s in out)

    def test_query_excluded_and_sorted_descending(self):
        rng = np.random.default_rng(14)
        t = make_table([f"t{i}" for i in range(30)], rng.normal(size=(30, 6)))
        out = nearest_neighbors(t, "t7", k=30)
        assert "t7" not in out.tokens()
        sims = [s for _, s in out]
        assert sims == sorted(sims, reverse=True)
        assert all(-1.0 <= s <= 1.0 for s in sims)

    def test_duplicate_row_ranks_first_with_similarity_one(self):
        rng = np.random.default_rng(15)
        rows = rng.normal(size=(10, 4))
        rows[4] = rows[0]
        t = make_table([f"t{i}" for i in range(10)], rows)
        out = nearest_neighbors(t, "t0", k=3)
        assert out.entries[0][0] == "t4"
        assert out.entries[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_scale_invariance(self):
        rng = np.random.default_rng(16)
        rows = rng.normal(size=(20, 5))
        t1 = make_table([f"t{i}" for i in range(20)], rows)
        t2 = make_table([f"t{i}" for i in range(20)], rows * 37.5)
        a = nearest_neighbors(t1, "t3", k=19)
        b = nearest_neighbors(t2, "t3", k=19)
        assert a.tokens() == b.tokens()
        for (_, s1), (_, s2) in zip(a, b):
            assert s1 == pytest.approx(s2, abs=1e-9)

    def test_ties_break_by_vocab_order(self):
        # c and b have identical rows; b precedes c in the vocabulary.
        t = make_table(
            ["q", "c", "b", "a"],
            [[1.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 1.0]],
        )
        out = nearest_neighbors(t, "q", k=3)
        assert out.tokens() == ["c", "b", "a"]

    def test_k_larger_than_vocab_returns_all(self):
        t = make_table(["a", "b"], [[1.0, 0.0], [1.0, 1.0]])
        out = nearest_neighbors(t, "a", k=99)
        assert len(out) == 1

    def test_unknown_query(self):
        t = load_embeddings_text(MINIMAL)
        with pytest.raises(OutOfVocabularyError):
            nearest_neighbors(t, "zebra", k=1)

    def test_zero_norm_query_rejected(self):
        t = make_table(["a", "b"], [[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ZeroVectorError):
            nearest_neighbors(t, "a", k=1)

    def test_zero_norm_candidates_skipped(self):
        t = make_table(["a", "b", "z"], [[1.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
        out = nearest_neighbors(t, "a", k=5)
        assert out.tokens() == ["b"]

    def test_against_numpy_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            V, D = int(rng.integers(5, 40)), int(rng.integers(2, 9))
            rows = rng.normal(size=(V, D))
            vocab = [f"t{i}" for i in range(V)]
            t = make_table(vocab, rows)
            qi = int(rng.integers(0, V))
            normed = rows / np.linalg.norm(rows, axis=1, keepdims=True)
            sims = normed @ normed[qi]
            sims[qi] = -np.inf
            order = np.argsort(-sims, kind="stable")[: V - 1]
            expected = [vocab[i] for i in order]
            got = nearest_neighbors(t, vocab[qi], k=V - 1)
            assert got.tokens() == expected
            for (_, s), i in zip(got, order):
                assert s == pytest.approx(float(sims[i]), abs=1e-9)

    def test_filter_applied_before_ranking(self):
        t = make_table(
            ["q", "##ing", "[CLS]", "word"],
            [[1.0, 0.0], [1.0, 0.1], [1.0, 0.2], [0.0, 1.0]],
        )
        f = token_filter(["drop-prefix:##", "drop-bracketed"])
        out = nearest_neighbors(t, "q", k=3, filter=f)
        assert out.tokens() == ["word"]


class TestTokenFilter:
    def test_drop_prefix(self):
        f = token_filter(["drop-prefix:##"])
        assert not f("##ing")
        assert f("ing")

    def test_empty_rules_keep_everything(self):
        f = token_filter([])
        for tok in ("##ing", "[CLS]", "123", "word"):
            assert f(tok)

    def test_drop_bracketed(self):
        f = token_filter(["drop-bracketed"])
        assert not f("[CLS]")
        assert not f("[SEP]")
        assert f("clause")

    def test_drop_non_alphabetic(self):
        f = token_filter(["drop-non-alphabetic"])
        assert not f("123")
        assert not f("it's")
        assert f("word")
        assert f("café")

    def test_rules_compose(self):
        f = token_filter(["drop-prefix:##", "drop-bracketed"])
        assert not f("##s")
        assert not f("[MASK]")
        assert f("horse")

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            token_filter(["drop-everything"])
