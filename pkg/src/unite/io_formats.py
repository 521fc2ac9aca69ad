"""File formats shared across pipeline stages and with external adapters.

Binary tensor files are little-endian with fixed magics:

  .emb  "UNITEEMB" | version u32 | count u32 | dim u32 | count*dim float32
  .prj  "UNITEPRJ" | V u32 | D u32 | V*D float32 weights | V float32 bias

Text artifacts are UTF-8 with "\\n" line endings and repr-style float
formatting, so identical inputs always serialize to identical bytes. All
writes are atomic (temp file + rename).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile

import numpy as np

from .au_filter import FilterReport
from .corpus import Lexicon
from .diversity_sampler import Pick
from .errors import DataError
from .eu_estimator import EmbeddingSet, VocabProjection, VocabStats
from .loop_controller import EuTrace, RunReport, TraceRow

EMB_MAGIC = b"UNITEEMB"
PRJ_MAGIC = b"UNITEPRJ"
EMB_VERSION = 1


def _fmt(x: float) -> str:
    return repr(float(x))


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


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_manifest(path: str, stage: str, inputs: list[str], outputs: list[str], config: dict) -> None:
    """Stage manifest: input/output hashes plus the config echo, no timestamps."""
    payload = {
        "stage": stage,
        "inputs": {p: sha256_file(p) for p in inputs if os.path.exists(p)},
        "outputs": {p: sha256_file(p) for p in outputs if os.path.exists(p)},
        "config": config,
    }
    write_json(path, payload)


# -- embeddings ---------------------------------------------------------------


def write_embeddings(path: str, emb: EmbeddingSet, ids_path: str | None = None) -> None:
    mat = np.ascontiguousarray(emb.matrix, dtype="<f4")
    header = EMB_MAGIC + struct.pack("<III", EMB_VERSION, mat.shape[0], mat.shape[1])
    atomic_write_bytes(path, header + mat.tobytes())
    ids_path = ids_path or os.path.splitext(path)[0] + ".ids"
    atomic_write_text(ids_path, "".join(i + "\n" for i in emb.ids))


def read_embeddings(path: str, ids_path: str | None = None) -> EmbeddingSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:8] != EMB_MAGIC:
        raise DataError(f"{path}: not an embedding file (bad magic)")
    version, count, dim = struct.unpack("<III", blob[8:20])
    if version != EMB_VERSION:
        raise DataError(f"{path}: unsupported embedding version {version}")
    expected = 20 + 4 * count * dim
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(blob)}")
    mat = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=20).reshape(count, dim)
    ids_path = ids_path or os.path.splitext(path)[0] + ".ids"
    with open(ids_path, "r", encoding="utf-8") as fh:
        ids = [line.rstrip("\n") for line in fh if line.strip()]
    if len(ids) != count:
        raise DataError(f"{ids_path}: {len(ids)} ids for {count} embedding rows")
    return EmbeddingSet(ids=ids, matrix=mat.copy())


# -- vocabulary projection ----------------------------------------------------


def write_projection(path: str, proj: VocabProjection, vocab_path: str | None = None) -> None:
    w = np.ascontiguousarray(proj.weights, dtype="<f4")
    b = np.ascontiguousarray(proj.bias, dtype="<f4")
    header = PRJ_MAGIC + struct.pack("<II", w.shape[0], w.shape[1])
    atomic_write_bytes(path, header + w.tobytes() + b.tobytes())
    vocab_path = vocab_path or os.path.join(os.path.dirname(os.path.abspath(path)), "vocab.tsv")
    lines = ["token_id\ttoken\n"]
    lines += [f"{i}\t{tok}\n" for i, tok in enumerate(proj.vocab)]
    atomic_write_text(vocab_path, "".join(lines))


def read_projection(path: str, vocab_path: str | None = None) -> VocabProjection:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:8] != PRJ_MAGIC:
        raise DataError(f"{path}: not a projection file (bad magic)")
    v, d = struct.unpack("<II", blob[8:16])
    expected = 16 + 4 * (v * d + v)
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(blob)}")
    weights = np.frombuffer(blob, dtype="<f4", count=v * d, offset=16).reshape(v, d)
    bias = np.frombuffer(blob, dtype="<f4", count=v, offset=16 + 4 * v * d)
    vocab_path = vocab_path or os.path.join(os.path.dirname(os.path.abspath(path)), "vocab.tsv")
    vocab = [""] * v
    with open(vocab_path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.rstrip("\n") != "token_id\ttoken":
            raise DataError(f"{vocab_path}: missing 'token_id\\ttoken' header")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            tid_s, tok = line.split("\t", 1)
            tid = int(tid_s)
            if not 0 <= tid < v:
                raise DataError(f"{vocab_path}: token id {tid} out of range for V={v}")
            vocab[tid] = tok
    return VocabProjection(weights=weights.copy(), bias=bias.copy(), vocab=vocab)


# -- vocabulary document frequencies ------------------------------------------


def write_vocab_df(path: str, stats: VocabStats) -> None:
    lines = [f"N={stats.N}\n"]
    lines += [f"{tid}\t{int(df)}\n" for tid, df in enumerate(stats.df)]
    atomic_write_text(path, "".join(lines))


def read_vocab_df(path: str, vocab_size: int | None = None) -> VocabStats:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("N="):
            raise DataError(f"{path}: missing 'N=<count>' header")
        n = int(header[2:])
        pairs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            tid_s, df_s = line.split("\t")
            pairs.append((int(tid_s), int(df_s)))
    size = vocab_size if vocab_size is not None else (max(t for t, _ in pairs) + 1 if pairs else 0)
    df = np.zeros(size, dtype=np.int64)
    for tid, val in pairs:
        if not 0 <= tid < size:
            raise DataError(f"{path}: token id {tid} out of range for V={size}")
        df[tid] = val
    return VocabStats(df=df, N=n)


# -- lexicon ------------------------------------------------------------------


def write_lexicon(path: str, lexicon: Lexicon) -> None:
    lines = [f"N={lexicon.N}\tAVGDL={_fmt(lexicon.avgdl)}\n"]
    lines += [
        f"{lexicon.id_to_term[tid]}\t{tid}\t{int(lexicon.df[tid])}\n"
        for tid in range(lexicon.vocab_size)
    ]
    atomic_write_text(path, "".join(lines))


def read_lexicon(path: str, tokenizer_hash: str = "") -> Lexicon:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = dict(p.split("=", 1) for p in header.split("\t"))
        n = int(parts["N"])
        avgdl = float(parts["AVGDL"])
        term_to_id: dict[str, int] = {}
        df: list[int] = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            term, tid_s, df_s = line.split("\t")
            tid = int(tid_s)
            term_to_id[term] = tid
            if tid != len(df):
                raise DataError(f"{path}: term ids must be dense and sorted")
            df.append(int(df_s))
    return Lexicon(
        term_to_id=term_to_id,
        df=np.asarray(df, dtype=np.int64),
        N=n,
        avgdl=avgdl,
        tokenizer_hash=tokenizer_hash,
    )


# -- distances and profiles ----------------------------------------------------


def write_distances(
    path: str, distances: dict[str, float], k: int, k1: float, b: float,
    eps: float, query_cap: int,
) -> None:
    lines = [f"K={k}\tK1={_fmt(k1)}\tB={_fmt(b)}\tEPS={_fmt(eps)}\tQUERY_CAP={query_cap}\n"]
    lines += [f"{doc_id}\t{_fmt(d)}\n" for doc_id, d in distances.items()]
    atomic_write_text(path, "".join(lines))


def read_distances(path: str) -> tuple[dict[str, float], dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        params = dict(p.split("=", 1) for p in header.split("\t"))
        distances: dict[str, float] = {}
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            doc_id, val = line.split("\t")
            distances[doc_id] = float(val)
    return distances, params


def write_profile(path: str, profile: list[tuple[int, float]]) -> None:
    lines = ["k\tmedian_Dk\n"]
    lines += [f"{k}\t{_fmt(m)}\n" for k, m in profile]
    atomic_write_text(path, "".join(lines))


# -- EU scores ----------------------------------------------------------------


def write_eu_scores(path: str, scores, estimator: str) -> None:
    lines = [f"K={scores.k}\tESTIMATOR={estimator}\tITERATION={scores.iteration}\n"]
    lines += [f"{doc_id}\t{_fmt(u)}\n" for doc_id, u in scores.scores.items()]
    atomic_write_text(path, "".join(lines))


# -- clusters -------------------------------------------------------------------


def write_clusters(path: str, assignment: dict[str, int]) -> None:
    lines = ["doc_id\tcluster\n"]
    lines += [f"{doc_id}\t{c}\n" for doc_id, c in assignment.items()]
    atomic_write_text(path, "".join(lines))


def read_clusters(path: str) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "doc_id\tcluster":
            raise DataError(f"{path}: missing 'doc_id\\tcluster' header")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            doc_id, c = line.split("\t")
            out[doc_id] = int(c)
    return out


# -- selections, trace, reports -------------------------------------------------


def write_selection_jsonl(path: str, picks: list[tuple[int, Pick]]) -> None:
    lines = []
    for iteration, p in picks:
        lines.append(
            json.dumps(
                {
                    "iteration": iteration,
                    "doc_id": p.doc_id,
                    "cluster": p.cluster,
                    "eu": p.eu,
                    "psi": p.psi,
                    "joint_score": p.joint_score,
                    "rank_in_cluster": p.rank_in_cluster,
                },
                sort_keys=True,
            )
            + "\n"
        )
    atomic_write_text(path, "".join(lines))


def write_trace_csv(path: str, trace: EuTrace) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "raw_mean_eu", "ema_eu", "n_sampled", "cum_budget", "stopped", "reason"])
    for r in trace.rows:
        writer.writerow(
            [
                r.iteration,
                _fmt(r.raw_mean_eu),
                _fmt(r.ema_eu),
                r.n_sampled,
                r.cum_budget,
                "true" if r.stopped else "false",
                r.reason,
            ]
        )
    atomic_write_text(path, buf.getvalue())


def read_trace_csv(path: str) -> EuTrace:
    trace = EuTrace()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            trace.append(
                TraceRow(
                    iteration=int(row["iter"]),
                    raw_mean_eu=float(row["raw_mean_eu"]),
                    ema_eu=float(row["ema_eu"]),
                    n_sampled=int(row["n_sampled"]),
                    cum_budget=int(row["cum_budget"]),
                    stopped=row["stopped"] == "true",
                    reason=row["reason"],
                )
            )
    return trace


def write_run_report(path: str, report: RunReport) -> None:
    write_json(path, report.to_dict())


def write_filter_report(path: str, report: FilterReport) -> None:
    write_json(path, report.to_dict())
