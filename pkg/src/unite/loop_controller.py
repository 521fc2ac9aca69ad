"""Iterative sample-train orchestration with EMA-based early stopping.

Each round scores epistemic uncertainty over the refined corpus, smooths the
domain mean with an exponential moving average, and stops at the first EMA
upturn after a warmup (the smoothed minimum marks the useful checkpoint) or
when the remaining budget cannot fund a full batch. Model training stays
outside the core: a provider object hands over exported state and consumes
each round's selection.
"""

from __future__ import annotations

import glob
import os
import shlex
import subprocess
from dataclasses import asdict, dataclass, field

from .corpus import Corpus
from .diversity_sampler import ClusterModel, Pick, SamplerState, sample_iteration
from .errors import CorpusExhausted, ProviderError, ValidationError
from .eu_estimator import (
    EmbeddingSet,
    VocabProjection,
    VocabStats,
    score_corpus,
)

EU_POOLS = ("all", "unsampled")


@dataclass
class LoopConfig:
    """Loop hyperparameters; defaults follow the published configuration."""

    batch_size: int = 500
    max_iterations: int = 10
    max_budget: int = 5000
    alpha: float = 0.4
    lam: float = 0.5
    k_eu: int = 1000
    z_thr: float = 1.5
    k_nn: int = 3
    min_iterations: int = 2
    seed: int = 0
    estimator: str = "eq3"
    eu_pool: str = "all"
    resampling_penalty: bool = True
    # optional "fraction of the vocabulary" mode for the top-k size; when
    # set it overrides k_eu (1000 tokens is about 3% of a 32k vocab)
    k_eu_fraction: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.lam <= 1:
            raise ValidationError(f"lambda must be in [0, 1], got {self.lam}")
        for name in ("batch_size", "max_iterations", "max_budget", "k_eu", "k_nn"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.min_iterations < 0:
            raise ValidationError("min_iterations must be >= 0")
        if not self.z_thr > 0:
            raise ValidationError(f"z_thr must be > 0, got {self.z_thr}")
        if self.batch_size * self.max_iterations < self.max_budget:
            raise ValidationError(
                "batch_size * max_iterations must cover max_budget "
                f"({self.batch_size} * {self.max_iterations} < {self.max_budget})"
            )
        if self.estimator not in ("eq3", "entropy"):
            raise ValidationError(f"unknown estimator {self.estimator!r}")
        if self.eu_pool not in EU_POOLS:
            raise ValidationError(f"eu_pool must be one of {EU_POOLS}")
        if self.k_eu_fraction is not None and not 0 < self.k_eu_fraction <= 1:
            raise ValidationError("k_eu_fraction must be in (0, 1]")


def ema_update(prev: float | None, x: float, alpha: float) -> float:
    """First observation passes through; afterwards alpha*x + (1-alpha)*prev."""
    if not 0 < alpha <= 1:
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
    if prev is None:
        return x
    return alpha * x + (1.0 - alpha) * prev


@dataclass
class TraceRow:
    iteration: int
    raw_mean_eu: float
    ema_eu: float
    n_sampled: int = 0
    cum_budget: int = 0
    stopped: bool = False
    reason: str = ""


@dataclass
class EuTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if not self.rows and row.ema_eu != row.raw_mean_eu:
            raise ValidationError("first EMA value must equal the first raw mean")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def emas(self) -> list[float]:
        return [r.ema_eu for r in self.rows]

    def best_iteration(self) -> int | None:
        """Iteration (1-based) with the minimal smoothed EU."""
        if not self.rows:
            return None
        emas = self.emas()
        return 1 + min(range(len(emas)), key=lambda i: emas[i])


def should_stop(
    trace: EuTrace, min_iters: int, budget_left: int, batch_size: int
) -> tuple[bool, str | None]:
    """Plateau fires at the first EMA upturn after the warmup; budget fires
    when the remaining budget cannot fund a full batch."""
    if len(trace) > max(min_iters, 1):
        emas = trace.emas()
        if emas[-1] > emas[-2]:
            return True, "plateau"
    if budget_left < batch_size:
        return True, "budget"
    return False, None


@dataclass
class RunReport:
    trace: EuTrace
    selections: list[list[Pick]]
    stop_reason: str
    config: dict
    best_iteration: int | None
    last_iteration: int

    def total_sampled(self) -> int:
        return sum(len(s) for s in self.selections)

    def to_dict(self) -> dict:
        return {
            "trace": [asdict(r) for r in self.trace.rows],
            "selections": [
                [asdict(p) | {"iteration": t + 1} for p in picks]
                for t, picks in enumerate(self.selections)
            ],
            "stop_reason": self.stop_reason,
            "config": self.config,
            "best_iteration": self.best_iteration,
            "last_iteration": self.last_iteration,
            "total_sampled": self.total_sampled(),
        }


class StateProvider:
    """Interface of the model side: export current state, accept selections."""

    def current_state(self) -> tuple[EmbeddingSet, VocabProjection, VocabStats]:
        raise NotImplementedError

    def update(self, picks: list[Pick], iteration: int) -> None:
        raise NotImplementedError


class FileStateProvider(StateProvider):
    """Default file-based provider: state is read from a directory of export
    files; each update writes the round's selection and invokes an external
    command that is expected to refresh those files.

    The command is a template; ``{selection}``, ``{iteration}`` and
    ``{state_dir}`` are substituted before shlex splitting.
    """

    def __init__(self, state_dir: str, update_command: str | None = None):
        self.state_dir = state_dir
        self.update_command = update_command

    def _find_state_files(self) -> dict[str, str]:
        from . import io_formats

        found = {}
        missing = []
        for key, pattern in (
            ("emb", "*.emb"),
            ("prj", "*.prj"),
            ("vocab_df", "vocab_df.tsv"),
        ):
            matches = sorted(glob.glob(os.path.join(self.state_dir, pattern)))
            if not matches:
                missing.append(pattern)
            else:
                found[key] = matches[0]
        if missing:
            raise ProviderError(
                f"state_dir {self.state_dir} is missing files: {', '.join(missing)}"
            )
        ids_path = os.path.splitext(found["emb"])[0] + ".ids"
        vocab_path = os.path.join(self.state_dir, "vocab.tsv")
        for path, pattern in ((ids_path, "*.ids"), (vocab_path, "vocab.tsv")):
            if not os.path.exists(path):
                raise ProviderError(
                    f"state_dir {self.state_dir} is missing files: {pattern}"
                )
        found["ids"] = ids_path
        found["vocab"] = vocab_path
        return found

    def current_state(self) -> tuple[EmbeddingSet, VocabProjection, VocabStats]:
        from . import io_formats

        files = self._find_state_files()
        emb = io_formats.read_embeddings(files["emb"], files["ids"])
        proj = io_formats.read_projection(files["prj"], files["vocab"])
        stats = io_formats.read_vocab_df(files["vocab_df"])
        return emb, proj, stats

    def update(self, picks: list[Pick], iteration: int) -> None:
        from . import io_formats

        selection_path = os.path.join(self.state_dir, "selection.jsonl")
        io_formats.write_selection_jsonl(selection_path, [(iteration, p) for p in picks])
        if not self.update_command:
            return
        command = self.update_command.format(
            selection=selection_path, iteration=iteration, state_dir=self.state_dir
        )
        result = subprocess.run(shlex.split(command), capture_output=True, text=True)
        if result.returncode != 0:
            raise ProviderError(
                f"update command failed (exit {result.returncode}): {result.stderr.strip()}"
            )


def run_loop(
    corpus_refined: Corpus,
    clusters: ClusterModel,
    provider: StateProvider,
    cfg: LoopConfig,
) -> RunReport:
    """Execute the iterative sampling loop over an already-filtered corpus.

    Provider failures abort the run with a ProviderError carrying the partial
    report assembled so far.
    """
    all_ids = corpus_refined.ids()
    state = SamplerState.initial(clusters.n_clusters)
    trace = EuTrace()
    selections: list[list[Pick]] = []
    ema: float | None = None
    cum = 0
    reason = None
    t = 1

    def partial_report(stop: str) -> RunReport:
        return RunReport(
            trace=trace,
            selections=selections,
            stop_reason=stop,
            config=asdict(cfg),
            best_iteration=trace.best_iteration(),
            last_iteration=len(selections),
        )

    while True:
        if t > cfg.max_iterations:
            reason = "budget"
            if trace.rows:
                trace.rows[-1].stopped = True
                trace.rows[-1].reason = reason
            break

        try:
            emb, proj, stats = provider.current_state()
        except Exception as exc:
            raise ProviderError(
                f"provider failed at iteration {t}: {exc}",
                partial_report=partial_report("provider-error"),
            ) from exc

        pool = all_ids if cfg.eu_pool == "all" else [i for i in all_ids if i not in state.selected]
        if not pool:
            reason = "exhausted"
            if trace.rows:
                trace.rows[-1].stopped = True
                trace.rows[-1].reason = reason
            break
        scores = score_corpus(
            emb, proj, stats, k=cfg.k_eu, estimator=cfg.estimator, ids=pool,
            iteration=t, k_fraction=cfg.k_eu_fraction,
        )
        ema = ema_update(ema, scores.mean, cfg.alpha)
        row = TraceRow(iteration=t, raw_mean_eu=scores.mean, ema_eu=ema, cum_budget=cum)
        trace.append(row)

        stop, why = should_stop(trace, cfg.min_iterations, cfg.max_budget - cum, cfg.batch_size)
        if stop:
            reason = why
            row.stopped = True
            row.reason = why
            break

        try:
            picks, state = sample_iteration(
                state, clusters, scores, emb, n=cfg.batch_size,
                lam=cfg.lam, penalty=cfg.resampling_penalty,
            )
        except CorpusExhausted:
            reason = "exhausted"
            row.stopped = True
            row.reason = reason
            break
        selections.append(picks)
        row.n_sampled = len(picks)
        cum += len(picks)
        row.cum_budget = cum

        if len(picks) < cfg.batch_size:
            reason = "exhausted"
            row.stopped = True
            row.reason = reason
            break

        try:
            provider.update(picks, t)
        except Exception as exc:
            raise ProviderError(
                f"provider update failed at iteration {t}: {exc}",
                partial_report=partial_report("provider-error"),
            ) from exc
        t += 1

    return RunReport(
        trace=trace,
        selections=selections,
        stop_reason=reason or "budget",
        config=asdict(cfg),
        best_iteration=trace.best_iteration(),
        last_iteration=len(selections),
    )
