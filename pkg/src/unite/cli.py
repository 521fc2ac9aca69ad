"""Command-line entry point: one subcommand per pipeline stage.

Configuration precedence is built-in defaults, then the JSON config file,
then explicit command-line flags. Every stage validates its inputs up
front, writes its outputs atomically and drops a manifest (input/output
hashes plus the configuration echo) beside them.

Exit codes: 1 usage, 2 validation, 3 data, 4 provider.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys

import click

from . import io_formats, kernels
from .au_filter import filter_corpus
from .corpus import build_lexicon
from .corpus import ingest as ingest_corpus
from .diversity_sampler import (
    ClusterModel,
    SamplerState,
    kmeans_cluster,
    sample_iteration,
)
from .errors import (
    CorpusExhausted,
    DataError,
    ProviderError,
    UniteError,
    ValidationError,
)
from .eu_estimator import score_corpus
from .lexical_index import all_knn_distances, build_index, distance_profile
from .loop_controller import FileStateProvider, LoopConfig, run_loop
from .sim_harness import SynthConfig, run_sim

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_PROVIDER = 4

CONFIG_DEFAULTS: dict = {
    "batch_size": 500,
    "max_iterations": 10,
    "max_budget": 5000,
    "alpha": 0.4,
    "lambda": 0.5,
    "k_eu": 1000,
    "k_eu_fraction": None,
    "z_thr": 1.5,
    "k_nn": 3,
    "min_iterations": 2,
    "seed": 0,
    "estimator": "eq3",
    "eu_pool": "all",
    "resampling_penalty": True,
    "k1": 0.9,
    "b": 0.4,
    "query_cap": 64,
    "epsilon": 1e-6,
    "clusters": 25,
    "update_command": None,
    "corpus": None,
    "state_dir": None,
    "output_dir": ".",
}

_KEY_TYPES: dict[str, tuple] = {
    "batch_size": (int,),
    "max_iterations": (int,),
    "max_budget": (int,),
    "alpha": (int, float),
    "lambda": (int, float),
    "k_eu": (int,),
    "k_eu_fraction": (int, float, type(None)),
    "z_thr": (int, float),
    "k_nn": (int,),
    "min_iterations": (int,),
    "seed": (int,),
    "estimator": (str,),
    "eu_pool": (str,),
    "resampling_penalty": (bool,),
    "k1": (int, float),
    "b": (int, float),
    "query_cap": (int,),
    "epsilon": (int, float),
    "clusters": (int,),
    "update_command": (str, type(None)),
    "corpus": (str, type(None)),
    "state_dir": (str, type(None)),
    "output_dir": (str,),
}


@dataclasses.dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def loop_config(self) -> LoopConfig:
        v = self.values
        return LoopConfig(
            batch_size=v["batch_size"],
            max_iterations=v["max_iterations"],
            max_budget=v["max_budget"],
            alpha=v["alpha"],
            lam=v["lambda"],
            k_eu=v["k_eu"],
            z_thr=v["z_thr"],
            k_nn=v["k_nn"],
            min_iterations=v["min_iterations"],
            seed=v["seed"],
            estimator=v["estimator"],
            eu_pool=v["eu_pool"],
            resampling_penalty=v["resampling_penalty"],
            k_eu_fraction=v["k_eu_fraction"],
        )

    def echo(self) -> dict:
        return dict(self.values)


def parse_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, the optional JSON config file and explicit overrides.

    Unknown keys, wrong types and out-of-range values raise ValidationError.
    """
    values = dict(CONFIG_DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ValidationError("config file must contain a JSON object")
        for key, val in loaded.items():
            if key not in CONFIG_DEFAULTS:
                raise ValidationError(f"unknown config key: {key!r}")
            wrong_type = not isinstance(val, _KEY_TYPES[key])
            if isinstance(val, bool) and bool not in _KEY_TYPES[key]:
                wrong_type = True  # bool is an int subclass, reject explicitly
            if wrong_type:
                raise ValidationError(f"config key {key!r} has wrong type: {val!r}")
            values[key] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            if key not in CONFIG_DEFAULTS:
                raise ValidationError(f"unknown config key: {key!r}")
            values[key] = val

    cfg = RunConfig(values=values)
    cfg.loop_config()  # range checks on every loop hyperparameter
    if not values["k1"] > 0:
        raise ValidationError(f"k1 must be > 0, got {values['k1']}")
    if not 0 <= values["b"] <= 1:
        raise ValidationError(f"b must be in [0, 1], got {values['b']}")
    if values["query_cap"] < 1:
        raise ValidationError("query_cap must be >= 1")
    if not values["epsilon"] > 0:
        raise ValidationError("epsilon must be > 0")
    if values["clusters"] < 1:
        raise ValidationError("clusters must be >= 1")
    return cfg


def _apply_thread_cap() -> None:
    cap = os.environ.get("UNITE_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        raise ValidationError(f"UNITE_THREADS must be an integer, got {cap!r}") from None
    if kernels.active_backend() == "numba":
        import numba

        numba.set_num_threads(min(n, numba.get_num_threads()))


def _require(cfg: RunConfig, key: str) -> str:
    val = cfg[key]
    if not val:
        raise ValidationError(f"missing required config value: {key}")
    return val


def _require_file(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise DataError(f"{what} not found: {path}")
    return path


def _out(cfg: RunConfig, name: str) -> str:
    out_dir = cfg["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _manifest(cfg: RunConfig, stage: str, inputs: list[str], outputs: list[str]) -> None:
    path = _out(cfg, f"{stage}_manifest.json")
    io_formats.write_manifest(
        path, stage, inputs, outputs,
        config=cfg.echo() | {"backend": kernels.active_backend()},
    )


_CONFIG_FLAGS = [
    ("--batch-size", "batch_size", int),
    ("--max-iterations", "max_iterations", int),
    ("--max-budget", "max_budget", int),
    ("--alpha", "alpha", float),
    ("--lambda", "lambda", float),
    ("--k-eu", "k_eu", int),
    ("--k-eu-fraction", "k_eu_fraction", float),
    ("--z-thr", "z_thr", float),
    ("--k-nn", "k_nn", int),
    ("--min-iterations", "min_iterations", int),
    ("--seed", "seed", int),
    ("--estimator", "estimator", str),
    ("--eu-pool", "eu_pool", str),
    ("--k1", "k1", float),
    ("--b", "b", float),
    ("--query-cap", "query_cap", int),
    ("--clusters", "clusters", int),
    ("--update-command", "update_command", str),
    ("--corpus", "corpus", str),
    ("--state-dir", "state_dir", str),
    ("--output-dir", "output_dir", str),
]


def config_options(fn):
    fn = click.option("--config", "config_path", default=None, help="JSON config file.")(fn)
    fn = click.option(
        "--no-resampling-penalty", "resampling_penalty", flag_value=False, default=None,
        help="Disable the accumulated-count budget penalty.",
    )(fn)
    for flag, key, typ in reversed(_CONFIG_FLAGS):
        fn = click.option(flag, key, type=typ, default=None)(fn)
    return fn


def _build_config(config_path, **overrides) -> RunConfig:
    return parse_config(config_path, overrides)


@click.group()
def cli():
    """Uncertainty-driven corpus sampling pipeline."""


@cli.command()
@config_options
def ingest(config_path, **overrides):
    """Validate a JSONL corpus and write its term table (lexicon.tsv)."""
    cfg = _build_config(config_path, **overrides)
    corpus_path = _require_file(_require(cfg, "corpus"), "corpus file")
    corpus = ingest_corpus(corpus_path)
    lexicon = build_lexicon(corpus)
    out = _out(cfg, "lexicon.tsv")
    io_formats.write_lexicon(out, lexicon)
    _manifest(cfg, "ingest", [corpus_path], [out])
    click.echo(f"ingested {len(corpus)} documents, {lexicon.vocab_size} terms -> {out}")


@cli.command()
@config_options
def index(config_path, **overrides):
    """Build the BM25 index and report its statistics."""
    cfg = _build_config(config_path, **overrides)
    corpus_path = _require_file(_require(cfg, "corpus"), "corpus file")
    corpus = ingest_corpus(corpus_path)
    lexicon = build_lexicon(corpus)
    idx = build_index(corpus, lexicon, k1=cfg["k1"], b=cfg["b"])
    out = _out(cfg, "index_stats.json")
    io_formats.write_json(
        out,
        {
            "documents": idx.n_docs,
            "terms": len(idx.term_to_id),
            "postings": int(idx.post_docs.shape[0]),
            "avgdl": idx.avgdl,
            "k1": idx.k1,
            "b": idx.b,
            "tokenizer_hash": idx.tokenizer_hash,
        },
    )
    _manifest(cfg, "index", [corpus_path], [out])
    click.echo(f"indexed {idx.n_docs} documents -> {out}")


@cli.command()
@config_options
def knn(config_path, **overrides):
    """Compute every document's lexical k-NN distance (distances.tsv)."""
    cfg = _build_config(config_path, **overrides)
    corpus_path = _require_file(_require(cfg, "corpus"), "corpus file")
    corpus = ingest_corpus(corpus_path)
    lexicon = build_lexicon(corpus)
    idx = build_index(corpus, lexicon, k1=cfg["k1"], b=cfg["b"])
    distances = all_knn_distances(idx, k=cfg["k_nn"], query_cap=cfg["query_cap"], eps=cfg["epsilon"])
    out = _out(cfg, "distances.tsv")
    io_formats.write_distances(
        out, distances, k=cfg["k_nn"], k1=cfg["k1"], b=cfg["b"],
        eps=cfg["epsilon"], query_cap=cfg["query_cap"],
    )
    _manifest(cfg, "knn", [corpus_path], [out])
    click.echo(f"wrote {len(distances)} distances -> {out}")


@cli.command("knn-profile")
@click.option("--ks", default="1,2,3,4,5,6,8", help="Comma-separated ascending k values.")
@click.option("--sample", type=int, default=None, help="Evaluate on an even subsample of documents.")
@config_options
def knn_profile(ks, sample, config_path, **overrides):
    """Median k-NN distance per k, for elbow-based selection of k."""
    cfg = _build_config(config_path, **overrides)
    corpus_path = _require_file(_require(cfg, "corpus"), "corpus file")
    try:
        k_list = [int(x) for x in ks.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"--ks must be a comma-separated integer list, got {ks!r}") from None
    corpus = ingest_corpus(corpus_path)
    lexicon = build_lexicon(corpus)
    idx = build_index(corpus, lexicon, k1=cfg["k1"], b=cfg["b"])
    profile = distance_profile(idx, k_list, sample=sample, query_cap=cfg["query_cap"], eps=cfg["epsilon"])
    out = _out(cfg, "profile.tsv")
    io_formats.write_profile(out, profile)
    _manifest(cfg, "knn-profile", [corpus_path], [out])
    click.echo(f"wrote profile for ks={k_list} -> {out}")


@cli.command("au-filter")
@click.option("--distances", "distances_path", default=None, help="distances.tsv from the knn stage.")
@config_options
def au_filter_cmd(distances_path, config_path, **overrides):
    """Drop lexical-outlier documents by modified z-score (filter_report.json)."""
    cfg = _build_config(config_path, **overrides)
    corpus_path = _require_file(_require(cfg, "corpus"), "corpus file")
    distances_path = distances_path or _out(cfg, "distances.tsv")
    _require_file(distances_path, "distances file (run the knn stage first)")
    corpus = ingest_corpus(corpus_path)
    distances, _ = io_formats.read_distances(distances_path)
    _, report = filter_corpus(corpus, distances, z_thr=cfg["z_thr"])
    out = _out(cfg, "filter_report.json")
    io_formats.write_filter_report(out, report)
    _manifest(cfg, "au-filter", [corpus_path, distances_path], [out])
    click.echo(
        f"kept {len(report.kept)} / removed {len(report.removed)} "
        f"(ratio {report.removal_ratio:.4f}) -> {out}"
    )


@cli.command("export-check")
@config_options
def export_check(config_path, **overrides):
    """Validate exported .emb/.prj/vocab files before a long run."""
    cfg = _build_config(config_path, **overrides)
    state_dir = _require(cfg, "state_dir")
    provider = FileStateProvider(state_dir)
    try:
        emb, proj, stats = provider.current_state()
    except ProviderError as exc:
        raise DataError(str(exc)) from exc
    problems = []
    if emb.dim != proj.dim:
        problems.append(f"embedding dim {emb.dim} != projection dim {proj.dim}")
    if stats.df.shape[0] != proj.vocab_size:
        problems.append(f"vocab_df rows {stats.df.shape[0]} != projection vocab {proj.vocab_size}")
    corpus_path = cfg["corpus"]
    coverage = None
    if corpus_path:
        corpus = ingest_corpus(_require_file(corpus_path, "corpus file"))
        missing = [d.id for d in corpus if d.id not in set(emb.ids)]
        coverage = len(corpus) - len(missing)
        if missing:
            problems.append(f"embeddings missing for {len(missing)} corpus docs, e.g. {missing[:5]}")
    summary = {
        "embeddings": {"count": len(emb.ids), "dim": emb.dim},
        "projection": {"vocab": proj.vocab_size, "dim": proj.dim},
        "vocab_df": {"rows": int(stats.df.shape[0]), "N": stats.N},
        "corpus_coverage": coverage,
        "problems": problems,
    }
    out = _out(cfg, "export_check.json")
    io_formats.write_json(out, summary)
    _manifest(cfg, "export-check", [], [out])
    if problems:
        raise DataError("; ".join(problems))
    click.echo(f"export files OK: {len(emb.ids)} embeddings, V={proj.vocab_size}, D={proj.dim}")


def _load_refined_ids(cfg: RunConfig, corpus) -> list[str]:
    """Kept ids from filter_report.json when present, else the full corpus."""
    report_path = _out(cfg, "filter_report.json")
    if os.path.exists(report_path):
        with open(report_path, "r", encoding="utf-8") as fh:
            return json.load(fh)["kept"]
    return corpus.ids()


@cli.command()
@click.option("--iteration", type=int, default=0)
@config_options
def eu(iteration, config_path, **overrides):
    """Score epistemic uncertainty for every candidate (eu_scores.tsv)."""
    cfg = _build_config(config_path, **overrides)
    corpus_path = _require_file(_require(cfg, "corpus"), "corpus file")
    corpus = ingest_corpus(corpus_path)
    provider = FileStateProvider(_require(cfg, "state_dir"))
    try:
        emb, proj, stats = provider.current_state()
    except ProviderError as exc:
        raise DataError(str(exc)) from exc
    ids = _load_refined_ids(cfg, corpus)
    scores = score_corpus(
        emb, proj, stats, k=cfg["k_eu"], estimator=cfg["estimator"],
        ids=ids, iteration=iteration, k_fraction=cfg["k_eu_fraction"],
    )
    out = _out(cfg, "eu_scores.tsv")
    io_formats.write_eu_scores(out, scores, cfg["estimator"])
    _manifest(cfg, "eu", [corpus_path], [out])
    click.echo(f"scored {len(scores.scores)} docs, mean EU {scores.mean:.6f} -> {out}")


@cli.command()
@config_options
def cluster(config_path, **overrides):
    """Cluster reference embeddings once (clusters.tsv)."""
    cfg = _build_config(config_path, **overrides)
    provider = FileStateProvider(_require(cfg, "state_dir"))
    try:
        emb, _, _ = provider.current_state()
    except ProviderError as exc:
        raise DataError(str(exc)) from exc
    ids = None
    if cfg["corpus"]:
        corpus = ingest_corpus(_require_file(cfg["corpus"], "corpus file"))
        ids = _load_refined_ids(cfg, corpus)
    if ids is not None:
        from .eu_estimator import EmbeddingSet

        emb = EmbeddingSet(ids=ids, matrix=emb.rows(ids), provenance=emb.provenance)
    model = kmeans_cluster(emb, K=min(cfg["clusters"], len(emb.ids)), seed=cfg["seed"])
    out = _out(cfg, "clusters.tsv")
    io_formats.write_clusters(out, model.assignment)
    _manifest(cfg, "cluster", [], [out])
    click.echo(f"clustered {len(model.assignment)} docs into {model.n_clusters} clusters -> {out}")


@cli.command()
@config_options
def sample(config_path, **overrides):
    """Run one budgeted sampling round over existing EU scores and clusters."""
    cfg = _build_config(config_path, **overrides)
    clusters_path = _require_file(_out(cfg, "clusters.tsv"), "clusters.tsv (run cluster first)")
    scores_path = _require_file(_out(cfg, "eu_scores.tsv"), "eu_scores.tsv (run eu first)")
    provider = FileStateProvider(_require(cfg, "state_dir"))
    try:
        emb, _, _ = provider.current_state()
    except ProviderError as exc:
        raise DataError(str(exc)) from exc

    assignment = io_formats.read_clusters(clusters_path)
    import numpy as np

    from .eu_estimator import EuScores

    k_clusters = max(assignment.values()) + 1
    sizes = np.bincount(list(assignment.values()), minlength=k_clusters).astype(np.int64)
    centroids = np.zeros((k_clusters, emb.dim))
    model = ClusterModel(centroids=centroids, assignment=assignment, sizes=sizes)

    with open(scores_path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        scores = {}
        for line in fh:
            if line.strip():
                doc_id, val = line.rstrip("\n").split("\t")
                scores[doc_id] = float(val)
    vals = list(scores.values())
    eu_scores = EuScores(scores=scores, k=cfg["k_eu"], iteration=0,
                         mean=sum(vals) / len(vals) if vals else 0.0)

    state_path = _out(cfg, "sampler_state.json")
    if os.path.exists(state_path):
        with open(state_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        state = SamplerState(
            P=np.asarray(raw["P"], dtype=np.int64),
            selected=set(raw["selected"]),
            iteration=raw["iteration"],
        )
    else:
        state = SamplerState.initial(k_clusters)

    picks, new_state = sample_iteration(
        state, model, eu_scores, emb, n=cfg["batch_size"],
        lam=cfg["lambda"], penalty=cfg["resampling_penalty"],
    )
    iteration = new_state.iteration
    sel_path = _out(cfg, f"selection_iter_{iteration}.jsonl")
    io_formats.write_selection_jsonl(sel_path, [(iteration, p) for p in picks])
    io_formats.write_json(
        state_path,
        {"P": new_state.P.tolist(), "selected": sorted(new_state.selected),
         "iteration": new_state.iteration},
    )
    _manifest(cfg, "sample", [clusters_path, scores_path], [sel_path, state_path])
    click.echo(f"selected {len(picks)} docs in round {iteration} -> {sel_path}")


@cli.command()
@config_options
def loop(config_path, **overrides):
    """Run the full iterative sample-train loop against a state directory."""
    cfg = _build_config(config_path, **overrides)
    corpus_path = _require_file(_require(cfg, "corpus"), "corpus file")
    state_dir = _require(cfg, "state_dir")
    corpus = ingest_corpus(corpus_path)

    lexicon = build_lexicon(corpus)
    idx = build_index(corpus, lexicon, k1=cfg["k1"], b=cfg["b"])
    loop_cfg = cfg.loop_config()
    distances = all_knn_distances(idx, k=loop_cfg.k_nn, query_cap=cfg["query_cap"], eps=cfg["epsilon"])
    refined, report = filter_corpus(corpus, distances, z_thr=loop_cfg.z_thr)
    io_formats.write_filter_report(_out(cfg, "filter_report.json"), report)

    provider = FileStateProvider(state_dir, update_command=cfg["update_command"])
    emb, _, _ = provider.current_state()
    from .eu_estimator import EmbeddingSet

    ref = EmbeddingSet(ids=refined.ids(), matrix=emb.rows(refined.ids()), provenance=emb.provenance)
    clusters = kmeans_cluster(ref, K=min(cfg["clusters"], len(ref.ids)), seed=loop_cfg.seed)
    io_formats.write_clusters(_out(cfg, "clusters.tsv"), clusters.assignment)

    try:
        run = run_loop(refined, clusters, provider, loop_cfg)
    except ProviderError as exc:
        if exc.partial_report is not None:
            io_formats.write_run_report(_out(cfg, "run_report.json"), exc.partial_report)
        raise
    _write_run_outputs(cfg, run)
    _manifest(
        cfg, "loop", [corpus_path],
        [_out(cfg, n) for n in ("trace.csv", "run_report.json", "selection.jsonl")],
    )
    click.echo(
        f"loop finished: {run.stop_reason} after {len(run.trace.rows)} iterations, "
        f"{run.total_sampled()} docs sampled, best iteration {run.best_iteration}"
    )


def _write_run_outputs(cfg: RunConfig, run) -> None:
    io_formats.write_trace_csv(_out(cfg, "trace.csv"), run.trace)
    io_formats.write_run_report(_out(cfg, "run_report.json"), run)
    picks = [(t + 1, p) for t, sel in enumerate(run.selections) for p in sel]
    io_formats.write_selection_jsonl(_out(cfg, "selection.jsonl"), picks)


@cli.command()
@click.option("--topics", type=int, default=3)
@click.option("--docs-per-topic", type=int, default=100)
@click.option("--vocab-size", type=int, default=400)
@click.option("--zipf-exponent", type=float, default=0.0)
@click.option("--tokens-per-doc", type=int, default=60)
@click.option("--outlier-fraction", type=float, default=0.05)
@click.option("--dim", type=int, default=384)
@click.option("--deficient-topic", type=int, default=0, help="-1 disables the knowledge gap.")
@click.option("--eta", type=float, default=None, help="Simulator training step size.")
@config_options
def simulate(topics, docs_per_topic, vocab_size, zipf_exponent, tokens_per_doc,
             outlier_fraction, dim, deficient_topic, eta, config_path, **overrides):
    """Generate a synthetic world and run the full loop on it."""
    # desk-scale loop defaults; explicit flags still win
    sim_defaults = {"batch_size": 25, "max_iterations": 10, "max_budget": 250,
                    "k_eu_fraction": 0.03, "clusters": 6}
    for key, val in sim_defaults.items():
        if overrides.get(key) is None:
            overrides[key] = val
    cfg = _build_config(config_path, **overrides)
    synth = SynthConfig(
        topics=topics, docs_per_topic=docs_per_topic, vocab_size=vocab_size,
        zipf_exponent=zipf_exponent, tokens_per_doc=tokens_per_doc,
        outlier_fraction=outlier_fraction, dim=dim, seed=cfg["seed"],
    )
    from . import sim_harness

    run, metrics = run_sim(
        synth, cfg.loop_config(),
        deficient_topic=None if deficient_topic < 0 else deficient_topic,
        n_clusters=cfg["clusters"],
        eta=sim_harness.DEFAULT_ETA if eta is None else eta,
        query_cap=cfg["query_cap"], bm25_k1=cfg["k1"], bm25_b=cfg["b"],
    )
    _write_run_outputs(cfg, run)
    io_formats.write_json(_out(cfg, "sim_metrics.json"), metrics)
    _manifest(
        cfg, "simulate", [],
        [_out(cfg, n) for n in ("trace.csv", "run_report.json", "selection.jsonl", "sim_metrics.json")],
    )
    click.echo(
        f"simulation finished: {run.stop_reason} after {len(run.trace.rows)} iterations, "
        f"filter precision {metrics['filter']['precision']:.3f} recall {metrics['filter']['recall']:.3f}"
    )


@cli.command()
@click.option("--trace", "trace_path", default=None, help="trace.csv to render.")
@config_options
def report(trace_path, config_path, **overrides):
    """Render an existing trace to a plot and a text summary (no recompute)."""
    cfg = _build_config(config_path, **overrides)
    trace_path = trace_path or _out(cfg, "trace.csv")
    _require_file(trace_path, "trace file")
    trace = io_formats.read_trace_csv(trace_path)
    if not trace.rows:
        raise DataError(f"{trace_path} has no rows")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    iters = [r.iteration for r in trace.rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iters, [r.raw_mean_eu for r in trace.rows], "o-", label="mean uncertainty")
    ax.plot(iters, [r.ema_eu for r in trace.rows], "s--", label="smoothed (EMA)")
    best = trace.best_iteration()
    ax.axvline(best, color="gray", linestyle=":", label=f"best iteration {best}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("domain mean uncertainty")
    ax.legend()
    fig.tight_layout()
    png_path = _out(cfg, "trace.png")
    fig.savefig(png_path)
    plt.close(fig)

    stop = next((r for r in trace.rows if r.stopped), None)
    lines = [
        f"iterations: {len(trace.rows)}",
        f"best iteration (min smoothed uncertainty): {best}",
        f"stop: {stop.reason if stop else 'n/a'} at iteration {stop.iteration if stop else 'n/a'}",
        f"total sampled: {trace.rows[-1].cum_budget}",
    ]
    summary_path = _out(cfg, "summary.txt")
    io_formats.atomic_write_text(summary_path, "\n".join(lines) + "\n")
    _manifest(cfg, "report", [trace_path], [png_path, summary_path])
    click.echo("\n".join(lines))


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code taxonomy."""
    try:
        _apply_thread_cap()
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, CorpusExhausted) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except UniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
