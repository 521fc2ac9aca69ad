import json

import pytest
import torch

WORDS = [
    "virus", "vaccine", "protein", "immune", "clinical", "trial", "patient",
    "dose", "antibody", "infection", "fever", "symptom", "treatment", "cell",
    "gene", "mutation", "spread", "mask", "hospital", "recovery", "study",
    "sample", "result", "risk", "exposure", "test", "positive", "negative",
]


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """Small randomly initialized encoder with an MLM head, saved to disk.

    Stands in for a public checkpoint: the sandbox has no network access, so
    the tests exercise the identical load/export path against a local
    directory instead of a hub id.
    """
    import json

    from transformers import AutoTokenizer, BertConfig, BertForMaskedLM

    out = tmp_path_factory.mktemp("checkpoint") / "model"
    out.mkdir()
    tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS + ["##s", "##ed"]
    (out / "vocab.txt").write_text("".join(t + "\n" for t in tokens))
    (out / "tokenizer_config.json").write_text(
        json.dumps({"tokenizer_class": "BertTokenizer", "do_lower_case": True})
    )
    tokenizer = AutoTokenizer.from_pretrained(str(out))
    assert len(tokenizer) == len(tokens)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(tokens),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    model = BertForMaskedLM(config)
    model.eval()
    model.save_pretrained(str(out))
    return str(out)


@pytest.fixture(scope="session")
def corpus_20(tmp_path_factory):
    """20 short documents over the checkpoint's vocabulary."""
    path = tmp_path_factory.mktemp("corpus") / "corpus.jsonl"
    docs = []
    for i in range(20):
        words = [WORDS[(i * 3 + j) % len(WORDS)] for j in range(4 + i % 5)]
        doc = {"id": f"doc{i:02d}", "text": " ".join(words)}
        if i % 4 == 0:
            doc["title"] = WORDS[i % len(WORDS)]
        docs.append(doc)
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d) + "\n")
    return str(path)
