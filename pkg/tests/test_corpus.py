import numpy as np
import pytest

from conftest import make_corpus, write_jsonl
from unite.corpus import (
    TokenizerConfig,
    build_lexicon,
    ingest,
    tokenize,
)
from unite.errors import DataError, EmptyCorpusError


class TestTokenize:
    def test_stopwords_and_case(self):
        assert tokenize("The cats sat.") == ["cats", "sat"]

    def test_hyphen_and_digits(self):
        assert tokenize("COVID-19 vaccine") == ["covid", "19", "vaccine"]

    def test_all_stopwords(self):
        assert tokenize("the a of") == []

    def test_hyphen_split(self):
        assert tokenize("BERT-based rankers") == ["bert", "based", "rankers"]

    def test_min_length(self):
        assert tokenize("a b cd") == ["cd"]

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize("   \t\n") == []

    def test_idempotent(self):
        for text in ["The CATS sat on mats!", "COVID-19... vaccine?", "x1 y2 z3"]:
            once = tokenize(text)
            assert tokenize(" ".join(once)) == once

    def test_deterministic(self):
        text = "Neural retrieval models and their BM25 baselines, 2024 edition"
        assert tokenize(text) == tokenize(text)


class TestIngest:
    def test_basic(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [
                {"id": "d1", "text": "The cats sat."},
                {"id": "d2", "title": "Dogs", "text": "dogs bark"},
                {"id": "d3", "text": "fish swim"},
            ],
        )
        corpus = ingest(path)
        assert corpus.ids() == ["d1", "d2", "d3"]
        assert corpus.get("d1").tokens == ["cats", "sat"]
        # title joins the text with a single space before tokenization
        assert corpus.get("d2").tokens == ["dogs", "dogs", "bark"]

    def test_duplicate_id(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [{"id": "d1", "text": "a cat"}, {"id": "d1", "text": "another cat"}],
        )
        with pytest.raises(DataError, match="duplicate.*d1"):
            ingest(path)

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "d1", "text": "ok"}\n{broken\n')
        with pytest.raises(DataError, match="line 2"):
            ingest(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        with pytest.raises(EmptyCorpusError):
            ingest(str(path))

    def test_missing_text(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [{"id": "d1"}])
        with pytest.raises(DataError, match="text"):
            ingest(str(path))


class TestBuildLexicon:
    def test_hand_counts(self, toy_corpus):
        lex = build_lexicon(toy_corpus)
        assert lex.N == 3
        assert lex.avgdl == 2.0
        df = {t: int(lex.df[i]) for t, i in lex.term_to_id.items()}
        assert df == {"cat": 2, "sat": 2, "dog": 1}

    def test_single_doc_repeats(self):
        lex = build_lexicon(make_corpus({"d": ["xx", "xx", "xx"]}))
        assert int(lex.df[lex.term_to_id["xx"]]) == 1
        assert lex.avgdl == 3.0

    def test_df_upper_bound(self):
        corpus = make_corpus({f"d{i}": ["tt", f"w{i}"] for i in range(5)})
        lex = build_lexicon(corpus)
        assert int(lex.df[lex.term_to_id["tt"]]) == lex.N
        assert (lex.df <= lex.N).all()

    def test_tf_sums_match_token_counts(self):
        rng = np.random.default_rng(0)
        vocab = [f"w{i:02d}" for i in range(20)]
        token_lists = {
            f"d{i}": [vocab[j] for j in rng.integers(0, 20, size=rng.integers(1, 30))]
            for i in range(15)
        }
        corpus = make_corpus(token_lists)
        for doc in corpus:
            counts = {}
            for t in doc.tokens:
                counts[t] = counts.get(t, 0) + 1
            assert sum(counts.values()) == len(doc.tokens)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            build_lexicon(make_corpus({}))


def test_reingest_identical_serialization(tmp_path):
    from unite.io_formats import write_lexicon

    path = write_jsonl(
        tmp_path / "c.jsonl",
        [
            {"id": "d1", "text": "cats sat on mats"},
            {"id": "d2", "text": "dogs sat on logs"},
        ],
    )
    out1, out2 = tmp_path / "lex1.tsv", tmp_path / "lex2.tsv"
    write_lexicon(str(out1), build_lexicon(ingest(path)))
    write_lexicon(str(out2), build_lexicon(ingest(path)))
    assert out1.read_bytes() == out2.read_bytes()


def test_tokenizer_hash_changes_with_config():
    a = TokenizerConfig()
    b = TokenizerConfig(min_token_len=3)
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == TokenizerConfig().config_hash()
