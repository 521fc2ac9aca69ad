"""Corpus ingestion, tokenization and lexical term statistics.

Documents are tokenized once at ingest time (title and text joined by a
single space) with a fixed rule-based tokenizer, so every downstream stage
sees the same terms. The tokenizer configuration is hashed into each
artifact to catch mixed-config pipelines.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EmptyCorpusError
from .stopwords import STOPWORDS

_TOKEN_SPLIT = re.compile(r"[^0-9a-zA-Z]+")


@dataclass(frozen=True)
class TokenizerConfig:
    """Rule-based tokenizer: lowercase, split at non-alphanumeric boundaries,
    drop short tokens and stopwords."""

    lowercase: bool = True
    min_token_len: int = 2
    stopwords: frozenset[str] = STOPWORDS

    def config_hash(self) -> str:
        payload = json.dumps(
            {
                "lowercase": self.lowercase,
                "min_token_len": self.min_token_len,
                "stopwords": sorted(self.stopwords),
                "split": "non-alphanumeric",
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def tokenize(text: str, cfg: TokenizerConfig | None = None) -> list[str]:
    """Deterministic tokenization; empty text yields an empty list."""
    cfg = cfg or TokenizerConfig()
    if cfg.lowercase:
        text = text.lower()
    out = []
    for tok in _TOKEN_SPLIT.split(text):
        if len(tok) < cfg.min_token_len:
            continue
        if tok in cfg.stopwords:
            continue
        out.append(tok)
    return out


@dataclass
class Document:
    id: str
    title: str | None
    text: str
    tokens: list[str]


class Corpus:
    """Ordered document collection with id lookup."""

    def __init__(self, documents: list[Document], tokenizer: TokenizerConfig):
        self.documents = documents
        self.tokenizer = tokenizer
        self._ordinal = {d.id: i for i, d in enumerate(documents)}
        if len(self._ordinal) != len(documents):
            raise DataError("corpus contains duplicate document ids")

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def ordinal(self, doc_id: str) -> int:
        try:
            return self._ordinal[doc_id]
        except KeyError:
            raise DataError(f"unknown document id: {doc_id}") from None

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._ordinal

    def get(self, doc_id: str) -> Document:
        return self.documents[self.ordinal(doc_id)]

    def subset(self, keep_ids: set[str]) -> "Corpus":
        """New corpus with the kept documents, original order preserved."""
        return Corpus([d for d in self.documents if d.id in keep_ids], self.tokenizer)


def _document_from_record(record: dict, lineno: int, cfg: TokenizerConfig) -> Document:
    doc_id = record.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise DataError(f"line {lineno}: missing or empty 'id' field")
    text = record.get("text")
    if not isinstance(text, str):
        raise DataError(f"line {lineno}: missing 'text' field (id={doc_id})")
    title = record.get("title")
    if title is not None and not isinstance(title, str):
        raise DataError(f"line {lineno}: 'title' must be a string (id={doc_id})")
    full = f"{title} {text}" if title else text
    return Document(id=doc_id, title=title, text=text, tokens=tokenize(full, cfg))


def ingest(path: str, cfg: TokenizerConfig | None = None) -> Corpus:
    """Read a JSONL corpus file: one object per line with id, optional title, text.

    Raises DataError for malformed lines (with the line number), duplicate ids
    (naming the id) and EmptyCorpusError for a file with no documents.
    """
    cfg = cfg or TokenizerConfig()
    documents: list[Document] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DataError(f"line {lineno}: expected a JSON object")
            doc = _document_from_record(record, lineno, cfg)
            if doc.id in seen:
                raise DataError(f"duplicate document id: {doc.id} (line {lineno})")
            seen.add(doc.id)
            documents.append(doc)
    if not documents:
        raise EmptyCorpusError(f"no documents in {path}")
    return Corpus(documents, cfg)


def corpus_from_token_lists(
    ids: list[str], token_lists: list[list[str]], cfg: TokenizerConfig | None = None
) -> Corpus:
    """Build a corpus directly from pre-tokenized documents (simulator path).

    The text is the space-join of the tokens, so re-ingesting the rendered
    text reproduces the same token lists.
    """
    cfg = cfg or TokenizerConfig()
    docs = [
        Document(id=i, title=None, text=" ".join(toks), tokens=list(toks))
        for i, toks in zip(ids, token_lists)
    ]
    return Corpus(docs, cfg)


@dataclass
class Lexicon:
    """Term table with document frequencies over one corpus."""

    term_to_id: dict[str, int]
    df: np.ndarray  # int64, indexed by term id
    N: int
    avgdl: float
    tokenizer_hash: str
    id_to_term: list[str] = field(repr=False, default_factory=list)

    def __post_init__(self):
        if not self.id_to_term:
            self.id_to_term = [""] * len(self.term_to_id)
            for term, tid in self.term_to_id.items():
                self.id_to_term[tid] = term

    @property
    def vocab_size(self) -> int:
        return len(self.term_to_id)


def build_lexicon(corpus: Corpus) -> Lexicon:
    """Count df(t) per term (presence, not frequency) plus N and avgdl.

    Term ids are assigned in first-appearance order over the corpus scan, so
    the result is deterministic for a given file.
    """
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot build a lexicon from an empty corpus")
    term_to_id: dict[str, int] = {}
    df_counts: list[int] = []
    total_tokens = 0
    for doc in corpus:
        total_tokens += len(doc.tokens)
        for term in set(doc.tokens):
            tid = term_to_id.get(term)
            if tid is None:
                term_to_id[term] = len(df_counts)
                df_counts.append(1)
            else:
                df_counts[tid] += 1
    if total_tokens == 0:
        raise DataError("corpus has no tokens after tokenization")
    n = len(corpus)
    return Lexicon(
        term_to_id=term_to_id,
        df=np.asarray(df_counts, dtype=np.int64),
        N=n,
        avgdl=total_tokens / n,
        tokenizer_hash=corpus.tokenizer.config_hash(),
    )
