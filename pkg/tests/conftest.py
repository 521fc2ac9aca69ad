import json

import pytest

from unite.corpus import Corpus, Document, TokenizerConfig, corpus_from_token_lists


def make_corpus(token_lists: dict[str, list[str]]) -> Corpus:
    """Corpus straight from token lists; text is the space-join."""
    ids = list(token_lists)
    return corpus_from_token_lists(ids, [token_lists[i] for i in ids])


@pytest.fixture
def toy_corpus() -> Corpus:
    # df(cat)=2, df(sat)=2, df(dog)=1, N=3, avgdl=2
    return make_corpus(
        {
            "d1": ["cat", "sat"],
            "d2": ["dog", "sat"],
            "d3": ["cat", "cat"],
        }
    )


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return str(path)
