"""MetricPrompt CLI - few-shot text classification as text-pair relevance."""
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from dotenv import load_dotenv

from metricprompt.analysis import (
    ExperimentReport,
    accuracy,
    as_points,
    format_report,
    predicted_counts,
    prediction_count_stddev,
)
from metricprompt.corpus import BUILTIN_DATASETS, save_dataset, synthetic_dataset
from metricprompt.errors import ConfigError, MetricPromptError
from metricprompt.experiment import ExperimentRunner, RunConfig, run_experiment, run_sweep, setup_logging
from metricprompt.pivot import DEFAULT_PIVOTS, select_pivots, train_relevance_matrix
from metricprompt.pooling import read_predictions_csv
from metricprompt.scorer import TinyMLMScorer, load_checkpoint, save_checkpoint

app = typer.Typer(help="MetricPrompt CLI - few-shot text classification as text-pair relevance")

EXIT_CONFIG = 1
EXIT_PIPELINE = 2

_CONFIG_HELP = "Flat JSON run configuration; flags override its keys"


def _env_default(name: str) -> Optional[str]:
    return os.environ.get(name) or None


def _build_config(overrides: Dict[str, Any], config: Optional[Path]) -> RunConfig:
    load_dotenv()
    overrides.setdefault("log_level", None)
    overrides.setdefault("output_dir", None)
    overrides["log_level"] = overrides["log_level"] or _env_default("METRICPROMPT_LOG_LEVEL")
    overrides["output_dir"] = overrides["output_dir"] or _env_default("METRICPROMPT_OUTPUT_DIR")
    seeds = overrides.pop("seeds", None)
    if seeds:
        try:
            overrides["seeds"] = [int(s) for s in seeds.split(",") if s.strip()]
        except ValueError:
            typer.echo(f"Error: seeds must be comma-separated integers, got {seeds!r}", err=True)
            raise typer.Exit(code=EXIT_CONFIG)
    if not overrides.get("ood"):
        overrides.pop("ood", None)
    if not overrides.get("exclude_self"):
        overrides.pop("exclude_self", None)
    try:
        run_config = RunConfig.from_json(config, **overrides)
    except ConfigError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=EXIT_CONFIG)
    setup_logging(run_config.log_level)
    return run_config


def _fail(e: Exception) -> None:
    typer.echo(f"Error: {e}", err=True)
    raise typer.Exit(code=EXIT_CONFIG if isinstance(e, ConfigError) else EXIT_PIPELINE)


def _write_json(path: Path, document: Dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True, indent=2), encoding="utf-8")
    return path


@app.command()
def synth(
    name: str = typer.Argument(..., help="Dataset name; also prefixes every generated word"),
    out: Path = typer.Option(..., help="JSONL file to write"),
    labels: int = typer.Option(4, help="Number of labels"),
    per_label: int = typer.Option(100, help="Samples per label"),
    words_per_text: int = typer.Option(8, help="Words per sample text"),
    seed: int = typer.Option(0, help="Generator seed"),
):
    """Write a synthetic corpus with pairwise-disjoint label vocabularies."""
    try:
        dataset = synthetic_dataset(name, labels, per_label, words_per_text=words_per_text, seed=seed)
    except ValueError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=EXIT_CONFIG)
    save_dataset(dataset, out)
    typer.echo(f"Wrote {len(dataset.samples)} samples ({labels} labels) to {out}")


@app.command()
def episode(
    config: Optional[Path] = typer.Option(None, help=_CONFIG_HELP),
    dataset: Optional[str] = typer.Option(None, help=f"JSONL path or builtin:<{'|'.join(BUILTIN_DATASETS)}>"),
    shots: Optional[int] = typer.Option(None, help="Train samples per label"),
    query_size: Optional[int] = typer.Option(None, help="Number of query samples"),
    seeds: Optional[str] = typer.Option(None, help="Comma-separated seeds"),
    noise: Optional[int] = typer.Option(None, help="Number of train labels to corrupt"),
    ood: Optional[List[str]] = typer.Option(None, help="Out-of-domain dataset (repeatable)"),
    ood_shots: Optional[int] = typer.Option(None, help="OOD samples per label"),
    output_dir: Optional[str] = typer.Option(None, help="Artifact root directory"),
    log_level: Optional[str] = typer.Option(None, help="Logging level (DEBUG, INFO, WARNING, ERROR)"),
):
    """Sample the episode of every seed and write episode.json."""
    run_config = _build_config(dict(
        dataset=dataset, shots=shots, query_size=query_size, seeds=seeds, noise=noise,
        ood=ood, ood_shots=ood_shots, output_dir=output_dir, log_level=log_level,
    ), config)
    try:
        runner = ExperimentRunner(run_config)
        for seed in run_config.seeds:
            ep = runner.sample(seed)
            document = {**ep.to_json(), "config_hash": run_config.config_hash(), "seed": seed}
            path = _write_json(runner.seed_dir(seed) / "episode.json", document)
            typer.echo(f"seed {seed}: {len(ep.train)} train, {len(ep.query)} query, "
                       f"{len(ep.noisy_ids)} noisy, {len(ep.ood_train)} ood -> {path}")
    except MetricPromptError as e:
        _fail(e)


@app.command()
def train(
    config: Optional[Path] = typer.Option(None, help=_CONFIG_HELP),
    dataset: Optional[str] = typer.Option(None, help="JSONL path or builtin:<name>"),
    shots: Optional[int] = typer.Option(None, help="Train samples per label"),
    seeds: Optional[str] = typer.Option(None, help="Comma-separated seeds"),
    epochs: Optional[int] = typer.Option(None, help="Training epochs (default: epoch table)"),
    learning_rate: Optional[float] = typer.Option(None, help="AdamW learning rate"),
    width: Optional[int] = typer.Option(None, help="Hidden width of the tiny MLM"),
    blocks: Optional[int] = typer.Option(None, help="Encoder blocks"),
    aggregate: Optional[str] = typer.Option(None, help="Meta-verbalizer aggregation (probs, logits)"),
    noise: Optional[int] = typer.Option(None, help="Number of train labels to corrupt"),
    ood: Optional[List[str]] = typer.Option(None, help="Out-of-domain dataset (repeatable)"),
    output_dir: Optional[str] = typer.Option(None, help="Artifact root directory"),
    log_level: Optional[str] = typer.Option(None, help="Logging level (DEBUG, INFO, WARNING, ERROR)"),
):
    """Train the tiny MLM scorer on every seed's pairs and save checkpoints."""
    run_config = _build_config(dict(
        dataset=dataset, shots=shots, seeds=seeds, epochs=epochs, learning_rate=learning_rate, width=width,
        blocks=blocks, aggregate=aggregate, noise=noise, ood=ood, output_dir=output_dir, log_level=log_level,
        scorer="tiny-mlm",
    ), config)
    try:
        runner = ExperimentRunner(run_config)
        for seed in run_config.seeds:
            ep = runner.sample(seed)
            scorer, trace, n_pairs = runner.build_scorer(ep, seed)
            stamp = {"config_hash": run_config.config_hash(), "seed": seed}
            path = save_checkpoint(scorer, runner.seed_dir(seed) / "checkpoint.pt", metadata=stamp)
            _write_json(runner.seed_dir(seed) / "loss_trace.json", {**stamp, "loss_trace": trace})
            typer.echo(f"seed {seed}: {n_pairs} pairs, final loss {trace[-1]:.4f} -> {path}")
    except MetricPromptError as e:
        _fail(e)


@app.command()
def infer(
    config: Optional[Path] = typer.Option(None, help=_CONFIG_HELP),
    checkpoint: Optional[Path] = typer.Option(None, help="Scorer checkpoint to use instead of training"),
    dataset: Optional[str] = typer.Option(None, help="JSONL path or builtin:<name>"),
    shots: Optional[int] = typer.Option(None, help="Train samples per label"),
    query_size: Optional[int] = typer.Option(None, help="Number of query samples"),
    seeds: Optional[str] = typer.Option(None, help="Comma-separated seeds"),
    scorer: Optional[str] = typer.Option(None, help="Relevance scorer (lexical, tiny-mlm)"),
    pooling: Optional[str] = typer.Option(None, help="Pooling method (mean, max, knn)"),
    k: Optional[int] = typer.Option(None, help="Neighbours for knn pooling (default: half the train set)"),
    output_dir: Optional[str] = typer.Option(None, help="Artifact root directory"),
    log_level: Optional[str] = typer.Option(None, help="Logging level (DEBUG, INFO, WARNING, ERROR)"),
):
    """Score queries against the train set and classify them by pooling."""
    run_config = _build_config(dict(
        dataset=dataset, shots=shots, query_size=query_size, seeds=seeds, scorer=scorer, pooling=pooling, k=k,
        output_dir=output_dir, log_level=log_level, pivot_p=0,
    ), config)
    try:
        loaded: Optional[TinyMLMScorer] = None
        if checkpoint is not None:
            loaded, _ = load_checkpoint(checkpoint)
        runner = ExperimentRunner(run_config, tokenizer=loaded.tokenizer if loaded else None, scorer=loaded)
        for seed in run_config.seeds:
            outcome = runner.run_seed(seed)
            typer.echo(f"seed {seed}: {run_config.pooling_method} accuracy {as_points(outcome.accuracy):.2f}")
    except MetricPromptError as e:
        _fail(e)


@app.command()
def pivots(
    config: Optional[Path] = typer.Option(None, help=_CONFIG_HELP),
    dataset: Optional[str] = typer.Option(None, help="JSONL path or builtin:<name>"),
    shots: Optional[int] = typer.Option(None, help="Train samples per label"),
    seeds: Optional[str] = typer.Option(None, help="Comma-separated seeds"),
    scorer: Optional[str] = typer.Option(None, help="Relevance scorer (lexical, tiny-mlm)"),
    pivot_p: Optional[int] = typer.Option(None, help=f"Pivots per label (default {DEFAULT_PIVOTS})"),
    exclude_self: bool = typer.Option(False, help="Leave self-pairs out of the same-label mean"),
    output_dir: Optional[str] = typer.Option(None, help="Artifact root directory"),
    log_level: Optional[str] = typer.Option(None, help="Logging level (DEBUG, INFO, WARNING, ERROR)"),
):
    """Select the most representative train samples of every label."""
    run_config = _build_config(dict(
        dataset=dataset, shots=shots, seeds=seeds, scorer=scorer, pivot_p=pivot_p, exclude_self=exclude_self,
        output_dir=output_dir, log_level=log_level,
    ), config)
    p = run_config.pivot_p or DEFAULT_PIVOTS
    try:
        runner = ExperimentRunner(run_config)
        for seed in run_config.seeds:
            ep = runner.sample(seed)
            relevance_scorer, _, _ = runner.build_scorer(ep, seed)
            matrix = train_relevance_matrix(relevance_scorer, ep, runner.template)
            chosen = select_pivots(matrix, p, run_config.exclude_self, seed)
            document = {**chosen.to_json(), "config_hash": run_config.config_hash(), "seed": seed}
            path = _write_json(runner.seed_dir(seed) / "pivots.json", document)
            for label, ids in chosen.pivots.items():
                typer.echo(f"seed {seed} {label}: {', '.join(ids)}")
            typer.echo(f"Pivots written to {path}")
    except MetricPromptError as e:
        _fail(e)


@app.command(name="eval")
def evaluate(
    config: Optional[Path] = typer.Option(None, help=_CONFIG_HELP),
    dataset: Optional[str] = typer.Option(None, help="JSONL path or builtin:<name>"),
    dataset_name: Optional[str] = typer.Option(None, help="Dataset name used for the epoch table"),
    shots: Optional[int] = typer.Option(None, help="Train samples per label"),
    query_size: Optional[int] = typer.Option(None, help="Number of query samples"),
    seeds: Optional[str] = typer.Option(None, help="Comma-separated seeds"),
    template: Optional[str] = typer.Option(None, help="Prompt template with {a}, {b} and [MASK]"),
    scorer: Optional[str] = typer.Option(None, help="Relevance scorer (lexical, tiny-mlm)"),
    epochs: Optional[int] = typer.Option(None, help="Training epochs (default: epoch table)"),
    learning_rate: Optional[float] = typer.Option(None, help="AdamW learning rate"),
    pooling: Optional[str] = typer.Option(None, help="Pooling method (mean, max, knn)"),
    k: Optional[int] = typer.Option(None, help="Neighbours for knn pooling"),
    noise: Optional[int] = typer.Option(None, help="Number of train labels to corrupt"),
    ood: Optional[List[str]] = typer.Option(None, help="Out-of-domain dataset (repeatable)"),
    ood_shots: Optional[int] = typer.Option(None, help="OOD samples per label"),
    pivot_p: Optional[int] = typer.Option(None, help="Pivots per label (0 disables pivot inference)"),
    exclude_self: bool = typer.Option(False, help="Leave self-pairs out of representativeness"),
    aggregate: Optional[str] = typer.Option(None, help="Meta-verbalizer aggregation (probs, logits)"),
    output_dir: Optional[str] = typer.Option(None, help="Artifact root directory"),
    log_level: Optional[str] = typer.Option(None, help="Logging level (DEBUG, INFO, WARNING, ERROR)"),
):
    """Run the full experiment over all seeds and print the report."""
    run_config = _build_config(dict(
        dataset=dataset, dataset_name=dataset_name, shots=shots, query_size=query_size, seeds=seeds,
        template=template, scorer=scorer, epochs=epochs, learning_rate=learning_rate, pooling=pooling, k=k,
        noise=noise, ood=ood, ood_shots=ood_shots, pivot_p=pivot_p, exclude_self=exclude_self,
        aggregate=aggregate, output_dir=output_dir, log_level=log_level,
    ), config)
    try:
        report = run_experiment(run_config)
    except MetricPromptError as e:
        _fail(e)
    typer.echo(format_report(report), nl=False)
    typer.echo(f"Artifacts in {Path(run_config.output_dir) / report.config_hash}")


def _parse_sweep_values(axis: str, values: List[str]) -> List[Any]:
    if axis == "pooling":
        return list(values)
    try:
        return [int(v) for v in values]
    except ValueError:
        raise ConfigError(f"{axis} values must be integers, got {values}") from None


@app.command()
def sweep(
    axis: str = typer.Argument(..., help="Axis to vary (shots, noise, pivot_p, pooling)"),
    values: List[str] = typer.Argument(..., help="Axis values, e.g. 0 1 2 4 or mean max knn@4"),
    config: Optional[Path] = typer.Option(None, help=_CONFIG_HELP),
    dataset: Optional[str] = typer.Option(None, help="JSONL path or builtin:<name>"),
    shots: Optional[int] = typer.Option(None, help="Train samples per label"),
    query_size: Optional[int] = typer.Option(None, help="Number of query samples"),
    seeds: Optional[str] = typer.Option(None, help="Comma-separated seeds"),
    scorer: Optional[str] = typer.Option(None, help="Relevance scorer (lexical, tiny-mlm)"),
    epochs: Optional[int] = typer.Option(None, help="Training epochs (default: epoch table)"),
    output_dir: Optional[str] = typer.Option(None, help="Artifact root directory"),
    log_level: Optional[str] = typer.Option(None, help="Logging level (DEBUG, INFO, WARNING, ERROR)"),
):
    """Run one experiment per axis value and print the comparison table."""
    run_config = _build_config(dict(
        dataset=dataset, shots=shots, query_size=query_size, seeds=seeds, scorer=scorer, epochs=epochs,
        output_dir=output_dir, log_level=log_level,
    ), config)
    try:
        result = run_sweep(run_config, axis, _parse_sweep_values(axis, values))
    except ConfigError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=EXIT_CONFIG)
    except MetricPromptError as e:
        _fail(e)
    typer.echo(result.table, nl=False)
    failed = [cell for cell in result.cells if cell.failed]
    for cell in failed:
        typer.echo(f"Error: {axis}={cell.value} failed: {cell.error}", err=True)
    if failed and len(failed) == len(result.cells):
        raise typer.Exit(code=EXIT_PIPELINE)


@app.command()
def analyze(
    run_dir: Path = typer.Argument(..., help="Run directory holding report.json and seed-* folders"),
    log_level: str = typer.Option("WARNING", help="Logging level (DEBUG, INFO, WARNING, ERROR)"),
):
    """Print a stored report with per-seed prediction counts and their spread."""
    setup_logging(log_level)
    report_path = run_dir / "report.json"
    if not report_path.is_file():
        typer.echo(f"Error: report not found: {report_path}", err=True)
        raise typer.Exit(code=EXIT_CONFIG)
    try:
        report = ExperimentReport(**json.loads(report_path.read_text(encoding="utf-8")))
        typer.echo(format_report(report), nl=False)
        for seed_dir in sorted(run_dir.glob("seed-*")):
            label_set = json.loads((seed_dir / "episode.json").read_text(encoding="utf-8"))["label_set"]
            for csv_path in sorted(seed_dir.glob("*predictions-*.csv")):
                predictions, gold = read_predictions_csv(csv_path)
                counts = predicted_counts(predictions, label_set)
                spread = prediction_count_stddev(predictions, label_set)
                typer.echo(
                    f"{seed_dir.name} {csv_path.stem}: accuracy {as_points(accuracy(predictions, gold)):.2f}, "
                    f"counts {counts}, stddev {spread:.2f}"
                )
    except (OSError, KeyError, TypeError, ValueError) as e:
        _fail(e)
    except MetricPromptError as e:
        _fail(e)


if __name__ == "__main__":
    app()
