"""Experiment runs and parameter sweeps driven by a RunConfig."""
import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, MutableMapping, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis import (
    ExperimentReport,
    accuracy,
    aggregate_runs,
    as_points,
    average_class_size_profiles,
    epochs_for,
    format_report,
    format_table,
    performance_drop,
    prediction_count_stddev,
    predictions_by_class_size,
    score_profile,
    write_class_size_csv,
    write_profile_csv,
)
from .corpus import Dataset, Episode, Tokenizer, inject_label_noise, mix_ood, resolve_dataset, sample_episode
from .errors import ConfigError, MetricPromptError, StageError, TemplateError
from .pivot import PivotInference, PivotSet, pivot_infer, select_pivots, train_relevance_matrix
from .pooling import PoolingMethod, Prediction, ScoreMatrix, classify_matrix, write_predictions_csv
from .prompting import DEFAULT_TEMPLATE, PromptTemplate, build_training_pairs
from .run_log import PACKAGE_LOGGER, RunLog
from .scorer import (
    AGGREGATE_MODES,
    LexicalOverlapScorer,
    RelevanceScorer,
    TinyMLMConfig,
    TinyMLMScorer,
    TrainingConfig,
    save_checkpoint,
    score_matrix,
    train,
)

SCORERS = ("lexical", "tiny-mlm")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
SWEEP_AXES = ("shots", "noise", "pivot_p", "pooling")
# Keys that never change results and are left out of the config hash.
_UNHASHED = ("output_dir", "log_level")
# Keys that only act after scoring, so runs differing in them share episodes and matrices.
_POST_SCORING = ("pooling", "k", "pivot_p", "exclude_self")


def setup_logging(level: str = "INFO") -> None:
    numeric = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(level=numeric, format="%(levelname)s %(name)s: %(message)s")
    # basicConfig is a no-op once the root logger has handlers
    logging.getLogger(PACKAGE_LOGGER).setLevel(numeric)


@dataclass(frozen=True)
class RunConfig:
    """Configuration for one experiment; loaded from a flat JSON document."""
    dataset: str = "builtin:synth4"
    dataset_name: Optional[str] = None
    shots: int = 4
    query_size: Optional[int] = 500
    seeds: Tuple[int, ...] = (1,)
    template: str = DEFAULT_TEMPLATE
    max_tokens: int = 120
    scorer: str = "lexical"
    width: int = 64
    blocks: int = 2
    heads: int = 2
    max_length: int = 256
    learning_rate: float = 1e-3
    batch_size: int = 16
    weight_decay: float = 0.01
    epochs: Optional[int] = None
    pooling: str = "mean"
    k: Optional[int] = None
    noise: int = 0
    ood: Tuple[str, ...] = ()
    ood_shots: int = 16
    pivot_p: int = 0
    exclude_self: bool = False
    aggregate: str = "probs"
    output_dir: str = "runs"
    log_level: str = "INFO"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "ood", tuple(self.ood))
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative")
        if self.shots < 1:
            raise ValueError("shots must be at least 1")
        if self.query_size is not None and self.query_size < 1:
            raise ValueError("query_size must be at least 1")
        if self.scorer not in SCORERS:
            raise ValueError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if self.aggregate not in AGGREGATE_MODES:
            raise ValueError(f"aggregate must be one of {AGGREGATE_MODES}, got {self.aggregate!r}")
        if self.noise < 0 or self.ood_shots < 0 or self.pivot_p < 0:
            raise ValueError("noise, ood_shots and pivot_p must be non-negative")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        try:
            PromptTemplate.parse(self.template)
        except TemplateError as e:
            raise ValueError(f"invalid template: {e}") from e
        if self.log_level.upper() not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}")
        self.pooling_method  # validates pooling and k

    @property
    def pooling_method(self) -> PoolingMethod:
        return PoolingMethod(self.pooling, self.k)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_json(cls, path: Union[str, Path, None] = None, **overrides: Any) -> "RunConfig":
        """Read a JSON config file (optional) and apply non-None overrides key for key."""
        data: Dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {path}: {e}") from e
            if not isinstance(data, dict):
                raise ConfigError(f"config {path} must hold a JSON object")
        data.update({key: value for key, value in overrides.items() if value is not None})
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["seeds"] = list(self.seeds)
        data["ood"] = list(self.ood)
        return data

    def _digest(self, excluded: Sequence[str]) -> str:
        content = {key: value for key, value in self.to_dict().items() if key not in excluded}
        return hashlib.sha256(json.dumps(content, sort_keys=True).encode("utf-8")).hexdigest()[:12]

    def config_hash(self) -> str:
        return self._digest(_UNHASHED)

    def scoring_hash(self) -> str:
        """Hash of everything that determines episodes, training and score matrices."""
        return self._digest(_UNHASHED + _POST_SCORING + ("seeds",))


@dataclass
class SeedResult:
    """Everything produced for one seed up to and including the full score matrix."""
    seed: int
    episode: Episode
    scorer: RelevanceScorer
    matrix: ScoreMatrix
    loss_trace: List[float] = field(default_factory=list)
    training_pairs: int = 0
    scorer_calls: int = 0


@dataclass
class SeedOutcome:
    seed: int
    predictions: List[Prediction]
    accuracy: float
    pivots: Optional[PivotSet] = None
    pivot_inference: Optional[PivotInference] = None
    pivot_accuracy: Optional[float] = None


class ExperimentRunner:
    """Central orchestrator: sample, train, score, pool and report for one RunConfig."""

    def __init__(
        self,
        config: RunConfig,
        cache: Optional[MutableMapping[Tuple[str, int], SeedResult]] = None,
        tokenizer: Optional[Tokenizer] = None,
        scorer: Optional[RelevanceScorer] = None,
    ):
        self.config = config
        self._cache = cache if cache is not None else {}
        self._scorer = scorer
        self._logger = logging.getLogger(__name__)
        with self._stage("load"):
            self.dataset: Dataset = resolve_dataset(config.dataset, config.dataset_name)
            self.ood_sources: List[Dataset] = [resolve_dataset(location) for location in config.ood]
        self._check_k()
        with self._stage("template"):
            if tokenizer is None:
                tokenizer = Tokenizer.build(
                    [self.dataset, *self.ood_sources], extra_texts=[PromptTemplate.literal_text(config.template)]
                )
            self.tokenizer = tokenizer
            self.template = PromptTemplate(config.template, tokenizer, config.max_tokens)

    def _check_k(self) -> None:
        """Reject an explicit knn ``k`` larger than the columns it will be pooled over."""
        config = self.config
        if config.k is None:
            return
        n_labels = len(self.dataset.label_set)
        columns = config.shots * n_labels
        if config.pivot_p > 0:
            columns = min(columns, min(config.pivot_p, config.shots) * n_labels)
        if config.k > columns:
            raise ConfigError(f"knn k={config.k} exceeds the {columns} train columns of a {config.shots}-shot episode")

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        try:
            yield
        except StageError:
            raise
        except (MetricPromptError, ValueError) as e:
            self._logger.error(f"Stage '{name}' failed: {e}")
            raise StageError(name, e) from e

    @property
    def run_dir(self) -> Path:
        return Path(self.config.output_dir) / self.config.config_hash()

    def seed_dir(self, seed: int) -> Path:
        return self.run_dir / f"seed-{seed}"

    def sample(self, seed: int) -> Episode:
        """Sample the episode for a seed, then apply noise and OOD mixing."""
        config = self.config
        with self._stage("episode"):
            episode = sample_episode(self.dataset, config.shots, config.query_size, seed)
            episode = inject_label_noise(episode, config.noise, seed)
            for source in self.ood_sources:
                episode = mix_ood(episode, source, config.ood_shots, seed)
        return episode

    def training_config(self, seed: int) -> TrainingConfig:
        config = self.config
        epochs = config.epochs or epochs_for(self.dataset.name, config.shots, len(self.dataset.label_set))
        return TrainingConfig(config.learning_rate, config.batch_size, epochs, config.weight_decay, seed)

    def build_scorer(self, episode: Episode, seed: int) -> Tuple[RelevanceScorer, List[float], int]:
        """Return the scorer for an episode, training it when the config asks for the tiny MLM."""
        config = self.config
        if self._scorer is not None:
            return self._scorer, [], 0
        if config.scorer == "lexical":
            return LexicalOverlapScorer(self.tokenizer.unk_id), [], 0
        with self._stage("pairs"):
            pairs = build_training_pairs(episode, self.template)
        with self._stage("train"):
            model_config = TinyMLMConfig(
                vocab_size=len(self.tokenizer),
                width=config.width,
                blocks=config.blocks,
                heads=config.heads,
                max_length=max(config.max_length, self.template.max_length),
            )
            initial = TinyMLMScorer.create(self.tokenizer, model_config, seed=seed, aggregate=config.aggregate)
            result = train(initial, pairs, self.training_config(seed))
        return result.scorer, result.loss_trace, len(pairs)

    def score_seed(self, seed: int) -> SeedResult:
        key = (self.config.scoring_hash(), seed)
        if key in self._cache:
            self._logger.info(f"Reusing episode and score matrix for seed {seed}")
            return self._cache[key]
        episode = self.sample(seed)
        scorer, trace, n_pairs = self.build_scorer(episode, seed)
        with self._stage("score"):
            before = scorer.calls
            matrix = score_matrix(scorer, episode, self.template)
            calls = scorer.calls - before
        self._logger.info(f"Scored {matrix.shape[0]} queries x {matrix.shape[1]} train samples ({calls} scorer calls)")
        result = SeedResult(seed, episode, scorer, matrix, trace, n_pairs, calls)
        self._cache[key] = result
        return result

    def run_seed(self, seed: int) -> SeedOutcome:
        config = self.config
        seed_dir = self.seed_dir(seed)
        run_log = RunLog(verbose_mode=config.log_level.upper() == "DEBUG")
        with run_log.capture():
            self._logger.info(f"Running seed {seed} of config {config.config_hash()}")
            result = self.score_seed(seed)
            episode = result.episode
            gold = {s.id: s.label for s in episode.query}
            method = config.pooling_method
            with self._stage("pool"):
                predictions = classify_matrix(result.matrix, method)
                acc = accuracy(predictions, gold)
            self._logger.info(f"Seed {seed}: {method} pooling accuracy {as_points(acc):.2f}")
            tied = sum(p.tie_broken for p in predictions)
            if tied * 2 > len(predictions):
                self._logger.warning(f"Seed {seed}: {tied} of {len(predictions)} predictions needed tie-breaking")
            outcome = SeedOutcome(seed, predictions, acc)
            if config.pivot_p > 0:
                with self._stage("pivots"):
                    relevance = train_relevance_matrix(result.scorer, episode, self.template)
                    outcome.pivots = select_pivots(relevance, config.pivot_p, config.exclude_self, seed)
                    outcome.pivot_inference = pivot_infer(result.scorer, episode, outcome.pivots, self.template, method)
                    outcome.pivot_accuracy = accuracy(outcome.pivot_inference.predictions, gold)
                self._logger.info(
                    f"Seed {seed}: pivot p={config.pivot_p} accuracy {as_points(outcome.pivot_accuracy):.2f} "
                    f"with {outcome.pivot_inference.pairs_per_query} pairs per query (full: {len(episode.train)})"
                )
            self._write_seed_artifacts(seed_dir, result, outcome, gold)
        run_log.write(seed_dir / "run.log")
        return outcome

    def _write_seed_artifacts(self, seed_dir: Path, result: SeedResult, outcome: SeedOutcome, gold: Mapping[str, str]) -> None:
        seed_dir.mkdir(parents=True, exist_ok=True)
        stamp = {"config_hash": self.config.config_hash(), "seed": result.seed}
        episode_doc = {**result.episode.to_json(), **stamp}
        (seed_dir / "episode.json").write_text(json.dumps(episode_doc, sort_keys=True, indent=2), encoding="utf-8")
        if isinstance(result.scorer, TinyMLMScorer):
            save_checkpoint(result.scorer, seed_dir / "checkpoint.pt", metadata=stamp)
            (seed_dir / "loss_trace.json").write_text(
                json.dumps({**stamp, "loss_trace": result.loss_trace}, indent=2), encoding="utf-8"
            )
        result.matrix.to_csv(seed_dir / "scores.csv")
        method = str(self.config.pooling_method)
        write_predictions_csv(seed_dir / f"predictions-{method}.csv", outcome.predictions, gold)
        if outcome.pivots is not None:
            (seed_dir / "pivots.json").write_text(
                json.dumps({**outcome.pivots.to_json(), **stamp}, sort_keys=True, indent=2), encoding="utf-8"
            )
            write_predictions_csv(seed_dir / f"pivot-predictions-{method}.csv", outcome.pivot_inference.predictions, gold)

    def run(self) -> ExperimentReport:
        """Run every seed, aggregate and write the report artifacts."""
        config = self.config
        setup_logging(config.log_level)
        outcomes = [self.run_seed(seed) for seed in sorted(config.seeds)]
        with self._stage("aggregate"):
            summary = aggregate_runs([o.accuracy for o in outcomes])
            report = ExperimentReport(
                dataset=self.dataset.name,
                shots=config.shots,
                seeds=[o.seed for o in outcomes],
                per_seed_accuracy=summary["per_seed_accuracy"],
                mean_accuracy=summary["mean_accuracy"],
                pooling=str(config.pooling_method),
                noise=config.noise,
                ood_sources=[s.name for s in self.ood_sources],
                config_hash=config.config_hash(),
            )
            if config.pivot_p > 0:
                pivot_summary = aggregate_runs([o.pivot_accuracy for o in outcomes])
                report.pivot_p = config.pivot_p
                report.pivot_accuracy = pivot_summary["per_seed_accuracy"]
                report.pivot_mean_accuracy = pivot_summary["mean_accuracy"]
            self._write_analysis(report, outcomes)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "config.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=2), encoding="utf-8")
        (self.run_dir / "report.json").write_text(report.dumps(), encoding="utf-8")
        (self.run_dir / "report.txt").write_text(format_report(report), encoding="utf-8")
        self._logger.info(f"Mean accuracy {as_points(report.mean_accuracy):.2f} over {len(outcomes)} seeds")
        return report

    def _write_analysis(self, report: ExperimentReport, outcomes: Sequence[SeedOutcome]) -> None:
        results = [self.score_seed(o.seed) for o in outcomes]
        profiles = [score_profile(r.matrix) for r in results]
        if len({len(p) for p in profiles}) == 1:
            write_profile_csv(self.run_dir / "score_profile.csv", np.mean(profiles, axis=0))
        by_size = average_class_size_profiles(
            [predictions_by_class_size(o.predictions, r.episode.train_label_counts()) for o, r in zip(outcomes, results)]
        )
        write_class_size_csv(self.run_dir / "class_sizes.csv", by_size)
        stddevs = [prediction_count_stddev(o.predictions, self.dataset.label_set) for o in outcomes]
        report.notes.append(f"prediction count stddev (mean over seeds): {float(np.mean(stddevs)):.2f}")
        report.notes.append("class-size counts: per training set, then averaged")


def run_experiment(config: RunConfig, cache: Optional[MutableMapping[Tuple[str, int], SeedResult]] = None) -> ExperimentReport:
    return ExperimentRunner(config, cache=cache).run()


@dataclass
class SweepCell:
    value: Any
    report: Optional[ExperimentReport] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.report is None


@dataclass
class SweepResult:
    axis: str
    cells: List[SweepCell]
    table: str = ""
    drops: Dict[str, float] = field(default_factory=dict)

    @property
    def reports(self) -> List[ExperimentReport]:
        return [cell.report for cell in self.cells if cell.report is not None]


def run_sweep(base: RunConfig, axis: str, values: Sequence[Any]) -> SweepResult:
    """Run one experiment per axis value with shared seeds and build a comparison table.

    Cells share a cache keyed by the scoring hash, so pooling and pivot sweeps score
    each seed once. A failing cell is logged and marked, and the sweep carries on.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("a sweep needs at least one value")
    logger = logging.getLogger(__name__)
    cache: Dict[Tuple[str, int], SeedResult] = {}
    cells: List[SweepCell] = []
    for value in values:
        try:
            changes: Dict[str, Any] = {axis: value}
            if axis == "pooling":
                kind, _, k = str(value).partition("@")
                changes = {"pooling": kind, "k": int(k) if k else None}
            config = replace(base, **changes)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid {axis} value {value!r}: {e}") from e
        try:
            cells.append(SweepCell(value, run_experiment(config, cache)))
        except ConfigError:
            raise
        except MetricPromptError as e:
            logger.error(f"Sweep cell {axis}={value} failed: {e}")
            cells.append(SweepCell(value, error=str(e)))

    result = SweepResult(axis, cells)
    header = [axis, "mean acc"]
    rows: List[List[Any]] = []
    clean = next((c.report for c in cells if axis == "noise" and c.value == 0 and c.report), None)
    if axis == "noise":
        header.append("drop")
        if clean is None:
            logger.warning("Noise sweep has no successful m=0 cell, drops are not computed")
    if axis == "pivot_p":
        header.append("pivot acc")
    for cell in cells:
        if cell.report is None:
            rows.append([cell.value, "failed"] + [""] * (len(header) - 2))
            continue
        row: List[Any] = [cell.value, as_points(cell.report.mean_accuracy)]
        if axis == "noise":
            if clean is not None and cell.value != 0:
                drop = performance_drop(as_points(clean.mean_accuracy), as_points(cell.report.mean_accuracy))
                result.drops[str(cell.value)] = drop
                row.append(drop)
            else:
                row.append("-")
        if axis == "pivot_p":
            pivot = cell.report.pivot_mean_accuracy
            row.append(as_points(pivot) if pivot is not None else "-")
        rows.append(row)
    result.table = format_table(header, rows)

    out = Path(base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"sweep-{axis}-{base.config_hash()}"
    (out / f"{stem}.txt").write_text(result.table, encoding="utf-8")
    document = {
        "axis": axis,
        "base_config_hash": base.config_hash(),
        "cells": [
            {"value": c.value, "config_hash": c.report.config_hash if c.report else None,
             "mean_accuracy": c.report.mean_accuracy if c.report else None, "error": c.error}
            for c in cells
        ],
        "drops": result.drops,
    }
    (out / f"{stem}.json").write_text(json.dumps(document, sort_keys=True, indent=2), encoding="utf-8")
    return result
