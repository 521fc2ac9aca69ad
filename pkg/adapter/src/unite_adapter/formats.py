"""Writers for the sampling core's export file formats.

The adapter talks to the core exclusively through these files, so the
layouts are duplicated here rather than imported:

  .emb  "UNITEEMB" | version u32 | count u32 | dim u32 | count*dim float32
  .prj  "UNITEPRJ" | V u32 | D u32 | V*D float32 weights | V float32 bias

plus sibling text files (ids, vocab map, document frequencies). All values
are little-endian; text files are UTF-8 with "\\n" endings. Writes go
through a temp file + rename so partially written state is never visible.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

EMB_MAGIC = b"UNITEEMB"
PRJ_MAGIC = b"UNITEPRJ"
EMB_VERSION = 1


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_embeddings(path: str, ids: list[str], matrix: np.ndarray) -> None:
    mat = np.ascontiguousarray(matrix, dtype="<f4")
    if mat.ndim != 2 or mat.shape[0] != len(ids):
        raise ValueError("embedding matrix must be 2-D with one row per id")
    if not np.isfinite(mat).all():
        raise ValueError("embedding matrix contains NaN/Inf")
    header = EMB_MAGIC + struct.pack("<III", EMB_VERSION, mat.shape[0], mat.shape[1])
    atomic_write_bytes(path, header + mat.tobytes())
    ids_path = os.path.splitext(path)[0] + ".ids"
    atomic_write_text(ids_path, "".join(i + "\n" for i in ids))


def _sanitize_token(token: str) -> str:
    return token.replace("\t", "<TAB>").replace("\n", "<NL>").replace("\r", "<CR>")


def write_projection(path: str, weights: np.ndarray, bias: np.ndarray, vocab: list[str]) -> None:
    w = np.ascontiguousarray(weights, dtype="<f4")
    b = np.ascontiguousarray(bias, dtype="<f4")
    if w.ndim != 2 or b.shape != (w.shape[0],) or len(vocab) != w.shape[0]:
        raise ValueError("projection shapes are inconsistent")
    if not (np.isfinite(w).all() and np.isfinite(b).all()):
        raise ValueError("projection contains NaN/Inf")
    header = PRJ_MAGIC + struct.pack("<II", w.shape[0], w.shape[1])
    atomic_write_bytes(path, header + w.tobytes() + b.tobytes())
    vocab_path = os.path.join(os.path.dirname(os.path.abspath(path)), "vocab.tsv")
    lines = ["token_id\ttoken\n"]
    lines += [f"{i}\t{_sanitize_token(tok)}\n" for i, tok in enumerate(vocab)]
    atomic_write_text(vocab_path, "".join(lines))


def write_vocab_df(path: str, df: np.ndarray, n_docs: int) -> None:
    lines = [f"N={n_docs}\n"]
    lines += [f"{tid}\t{int(v)}\n" for tid, v in enumerate(df)]
    atomic_write_text(path, "".join(lines))


def write_manifest(path: str, payload: dict, files: list[str]) -> None:
    hashes = {}
    for f in files:
        h = hashlib.sha256()
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        hashes[os.path.basename(f)] = h.hexdigest()
    atomic_write_text(
        path, json.dumps(payload | {"outputs": hashes}, sort_keys=True, indent=2) + "\n"
    )
