"""Bridge pretrained Hugging Face retrievers into the sampling core's
file protocol: pooled document embeddings, the vocabulary projection and
model-tokenizer document frequencies.

Pooling follows the model family: mean pooling over non-padding positions
for encoder models, the last non-padding position for decoder models. The
projection is the model's output-embedding map (MLM-head decoder when
present, otherwise the tied input embedding matrix with a zero bias); any
nonlinear transform sublayer inside an MLM head is not part of the export,
which keeps the file format a single linear map.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np
import torch

POOLINGS = ("mean", "last-token")


@dataclass
class AdapterConfig:
    model: str
    pooling: str = "mean"
    batch_size: int = 8
    max_seq_len: int = 256
    output_dir: str = "."

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.batch_size < 1 or self.max_seq_len < 2:
            raise ValueError("batch_size must be >= 1 and max_seq_len >= 2")


def read_corpus(path: str) -> list[tuple[str, str]]:
    """(id, full text) pairs; title joins the text with a single space."""
    out = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            doc_id = record["id"]
            if doc_id in seen:
                raise ValueError(f"duplicate document id: {doc_id} (line {lineno})")
            seen.add(doc_id)
            title = record.get("title")
            text = record["text"]
            out.append((doc_id, f"{title} {text}" if title else text))
    if not out:
        raise ValueError(f"no documents in {path}")
    return out


def load_model_and_tokenizer(cfg: AdapterConfig):
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(cfg.model)
    model = AutoModel.from_pretrained(cfg.model)
    model.eval()
    _check_pooling(cfg, model)
    return model, tokenizer


def _check_pooling(cfg: AdapterConfig, model) -> None:
    is_decoder = bool(getattr(model.config, "is_decoder", False))
    arch = (model.config.architectures or [""])[0] if model.config.architectures else ""
    if "CausalLM" in arch or "GPT" in arch:
        is_decoder = True
    required = "last-token" if is_decoder else "mean"
    if cfg.pooling != required:
        raise ValueError(
            f"{arch or type(model).__name__} requires {required!r} pooling, got {cfg.pooling!r}"
        )


def _pool(hidden: torch.Tensor, mask: torch.Tensor, pooling: str) -> torch.Tensor:
    if pooling == "mean":
        m = mask.unsqueeze(-1).to(hidden.dtype)
        return (hidden * m).sum(dim=1) / m.sum(dim=1).clamp(min=1.0)
    last = mask.sum(dim=1) - 1  # index of the final non-padding position
    return hidden[torch.arange(hidden.shape[0]), last]


@torch.no_grad()
def compute_embeddings(cfg: AdapterConfig, model, tokenizer, texts: list[str]) -> np.ndarray:
    rows = []
    overflowed = 0
    for lo in range(0, len(texts), cfg.batch_size):
        batch = texts[lo : lo + cfg.batch_size]
        enc = tokenizer(
            batch, padding=True, truncation=True, max_length=cfg.max_seq_len,
            return_tensors="pt", return_overflowing_tokens=False,
        )
        lengths = [len(tokenizer(t, truncation=False)["input_ids"]) for t in batch]
        overflowed += sum(1 for n in lengths if n > cfg.max_seq_len)
        out = model(**enc)
        pooled = _pool(out.last_hidden_state, enc["attention_mask"], cfg.pooling)
        rows.append(pooled.float().cpu().numpy())
    if overflowed:
        warnings.warn(f"{overflowed} documents exceeded max_seq_len and were truncated")
    return np.vstack(rows)


def export_embeddings(cfg: AdapterConfig, corpus_path: str, name: str = "model") -> str:
    from . import formats

    docs = read_corpus(corpus_path)
    model, tokenizer = load_model_and_tokenizer(cfg)
    matrix = compute_embeddings(cfg, model, tokenizer, [t for _, t in docs])
    path = os.path.join(cfg.output_dir, f"{name}.emb")
    formats.write_embeddings(path, [i for i, _ in docs], matrix)
    formats.write_manifest(
        os.path.join(cfg.output_dir, "embeddings_manifest.json"),
        {"stage": "export-embeddings", "model": cfg.model, "pooling": cfg.pooling,
         "max_seq_len": cfg.max_seq_len, "count": len(docs), "dim": int(matrix.shape[1])},
        [path, os.path.splitext(path)[0] + ".ids"],
    )
    return path


def projection_arrays(model) -> tuple[np.ndarray, np.ndarray]:
    """Vocabulary projection: output-embedding decoder or tied input matrix."""
    head = model.get_output_embeddings() if hasattr(model, "get_output_embeddings") else None
    if head is not None and hasattr(head, "weight"):
        weights = head.weight.detach().float().cpu().numpy()
        bias = (
            head.bias.detach().float().cpu().numpy()
            if getattr(head, "bias", None) is not None
            else np.zeros(weights.shape[0], dtype=np.float32)
        )
        return weights, bias
    embeddings = model.get_input_embeddings()
    if embeddings is None:
        raise ValueError(
            f"{type(model).__name__} exposes neither an output head nor input embeddings"
        )
    weights = embeddings.weight.detach().float().cpu().numpy()
    return weights, np.zeros(weights.shape[0], dtype=np.float32)


def export_projection(cfg: AdapterConfig, name: str = "model") -> str:
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    from . import formats

    tokenizer = AutoTokenizer.from_pretrained(cfg.model)
    try:
        model = AutoModelForMaskedLM.from_pretrained(cfg.model)
    except (ValueError, OSError):
        from transformers import AutoModel

        model = AutoModel.from_pretrained(cfg.model)
    model.eval()
    weights, bias = projection_arrays(model)
    vocab_size = weights.shape[0]
    vocab = tokenizer.convert_ids_to_tokens(list(range(min(vocab_size, len(tokenizer)))))
    vocab += [f"<unused_{i}>" for i in range(len(vocab), vocab_size)]
    path = os.path.join(cfg.output_dir, f"{name}.prj")
    formats.write_projection(path, weights, bias, vocab)
    formats.write_manifest(
        os.path.join(cfg.output_dir, "projection_manifest.json"),
        {"stage": "export-projection", "model": cfg.model,
         "vocab": int(vocab_size), "dim": int(weights.shape[1])},
        [path, os.path.join(cfg.output_dir, "vocab.tsv")],
    )
    return path


def vocab_document_frequencies(
    cfg: AdapterConfig, tokenizer, texts: list[str], vocab_size: int
) -> np.ndarray:
    """df over model-tokenizer token ids; special tokens stay at zero.

    Special tokens appear in every encoded document by construction and
    would poison any IDF built from these counts.
    """
    df = np.zeros(vocab_size, dtype=np.int64)
    special = set(tokenizer.all_special_ids)
    for text in texts:
        ids = tokenizer(text, truncation=True, max_length=cfg.max_seq_len)["input_ids"]
        for tid in set(ids) - special:
            if tid < vocab_size:
                df[tid] += 1
    return df


def export_vocab_df(cfg: AdapterConfig, corpus_path: str) -> str:
    from transformers import AutoTokenizer

    from . import formats

    tokenizer = AutoTokenizer.from_pretrained(cfg.model)
    docs = read_corpus(corpus_path)
    vocab_size = len(tokenizer)
    df = vocab_document_frequencies(cfg, tokenizer, [t for _, t in docs], vocab_size)
    path = os.path.join(cfg.output_dir, "vocab_df.tsv")
    formats.write_vocab_df(path, df, len(docs))
    formats.write_manifest(
        os.path.join(cfg.output_dir, "vocab_df_manifest.json"),
        {"stage": "export-vocab-df", "model": cfg.model, "N": len(docs)},
        [path],
    )
    return path


def export_all(cfg: AdapterConfig, corpus_path: str, name: str = "model") -> list[str]:
    return [
        export_embeddings(cfg, corpus_path, name),
        export_projection(cfg, name),
        export_vocab_df(cfg, corpus_path),
    ]
