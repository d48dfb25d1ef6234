"""Accuracy aggregation and score/prediction diagnostics."""
import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import AnalysisError
from .pooling import Prediction, ScoreMatrix

logger = logging.getLogger(__name__)

# Training epochs per (dataset, shots) for the reference benchmark corpora.
EPOCHS_TABLE: Dict[str, Dict[int, int]] = {
    "agnews": {2: 120, 4: 60, 8: 30, 16: 15},
    "dbpedia": {2: 32, 4: 16, 8: 8, 16: 4},
    "yahoo": {2: 36, 4: 18, 8: 9, 16: 5},
}
DATASET_CLASSES = {"agnews": 4, "dbpedia": 14, "yahoo": 10}
_ALIASES = {"agsnews": "agnews", "ag": "agnews", "yahooanswers": "yahoo", "yahootopics": "yahoo"}


@dataclass
class ExperimentReport:
    """Accuracy of one configuration over several seeds."""
    dataset: str
    shots: int
    seeds: List[int]
    per_seed_accuracy: List[float]
    mean_accuracy: float
    pooling: str = "mean"
    noise: int = 0
    ood_sources: List[str] = field(default_factory=list)
    pivot_p: Optional[int] = None
    pivot_accuracy: Optional[List[float]] = None
    pivot_mean_accuracy: Optional[float] = None
    config_hash: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.seeds) != len(self.per_seed_accuracy):
            raise ValueError("one accuracy per seed is required")
        if self.per_seed_accuracy and abs(self.mean_accuracy - float(np.mean(self.per_seed_accuracy))) > 1e-12:
            raise ValueError("mean accuracy does not match the per-seed accuracies")

    def to_json(self) -> Dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def accuracy(predictions: Sequence[Prediction], gold_labels: Mapping[str, str]) -> float:
    if not predictions:
        raise AnalysisError("no predictions to score")
    ids = [p.query_id for p in predictions]
    if len(set(ids)) != len(ids) or set(ids) != set(gold_labels):
        raise AnalysisError("prediction ids do not match the gold-label ids")
    return sum(p.label == gold_labels[p.query_id] for p in predictions) / len(predictions)


def performance_drop(clean_acc: float, noisy_acc: float) -> float:
    """Clean minus noisy accuracy, both given in percentage points."""
    drop = clean_acc - noisy_acc
    if drop < 0:
        logger.warning(f"Noisy accuracy {noisy_acc:.2f} exceeds clean accuracy {clean_acc:.2f}")
    return drop


def score_profile(matrix: ScoreMatrix) -> np.ndarray:
    """Sort each row descending, average position-wise and shift so the minimum is 0."""
    if matrix.scores.size == 0:
        raise AnalysisError("score matrix is empty")
    averaged = (-np.sort(-matrix.scores, axis=1)).mean(axis=0)
    return averaged - averaged.min()


def predicted_counts(predictions: Sequence[Prediction], labels: Sequence[str]) -> Dict[str, int]:
    counts = {label: 0 for label in labels}
    for p in predictions:
        counts[p.label] = counts.get(p.label, 0) + 1
    return counts


def predictions_by_class_size(predictions: Sequence[Prediction], train_label_counts: Mapping[str, int]) -> Dict[int, float]:
    """Mean number of queries predicted into classes, grouped by their train-sample count."""
    stray = {p.label for p in predictions} - set(train_label_counts)
    if stray:
        raise ValueError(f"predicted labels without a train count: {sorted(stray)}")
    counts = predicted_counts(predictions, list(train_label_counts))
    groups: Dict[int, List[int]] = {}
    for label, size in train_label_counts.items():
        groups.setdefault(size, []).append(counts[label])
    return {size: float(np.mean(groups[size])) for size in sorted(groups)}


def average_class_size_profiles(profiles: Sequence[Mapping[int, float]]) -> Dict[int, float]:
    """Average per-episode class-size profiles; a size only averages over episodes that have it."""
    pooled: Dict[int, List[float]] = {}
    for profile in profiles:
        for size, value in profile.items():
            pooled.setdefault(size, []).append(value)
    return {size: float(np.mean(values)) for size, values in sorted(pooled.items())}


def prediction_count_stddev(predictions: Sequence[Prediction], label_set: Sequence[str]) -> float:
    """Population standard deviation of per-class predicted-query counts."""
    counts = predicted_counts(predictions, label_set)
    return float(np.std([counts[label] for label in label_set]))


def _normalize_dataset_name(name: str) -> str:
    key = re.sub(r"[^a-z0-9]", "", name.lower())
    return _ALIASES.get(key, key)


def epochs_for(dataset_name: str, shots: int, n_labels: Optional[int] = None) -> int:
    """Look up the epoch count, falling back to epochs proportional to 1/shots.

    Unknown shot counts scale the nearest table column of the dataset's row. Unknown
    datasets use the row with the closest class count (AG's News when ``n_labels`` is
    not given).
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    key = _normalize_dataset_name(dataset_name)
    if key not in EPOCHS_TABLE:
        if n_labels is None:
            key = "agnews"
        else:
            key = min(DATASET_CLASSES, key=lambda d: (abs(DATASET_CLASSES[d] - n_labels), d))
        logger.debug(f"No epoch table row for {dataset_name!r}, anchoring on {key}")
    row = EPOCHS_TABLE[key]
    if shots in row:
        return row[shots]
    anchor = min(row, key=lambda s: (abs(math.log2(s) - math.log2(shots)), s))
    return max(1, int(row[anchor] * anchor / shots + 0.5))


def aggregate_runs(per_seed_accuracies: Sequence[float]) -> Dict[str, object]:
    if not per_seed_accuracies:
        raise AnalysisError("no runs to aggregate")
    values = [float(a) for a in per_seed_accuracies]
    return {"per_seed_accuracy": values, "mean_accuracy": float(np.mean(values))}


def as_points(fraction: float) -> float:
    return 100.0 * fraction


def format_report(report: ExperimentReport) -> str:
    """Aligned-column text rendering with accuracies in percentage points."""
    rows = [
        ("dataset", report.dataset),
        ("shots", str(report.shots)),
        ("pooling", report.pooling),
        ("noise", str(report.noise)),
        ("ood", ", ".join(report.ood_sources) or "-"),
        ("config", report.config_hash or "-"),
    ]
    rows += [(f"seed {seed}", f"{as_points(acc):.2f}") for seed, acc in zip(report.seeds, report.per_seed_accuracy)]
    rows.append(("mean accuracy", f"{as_points(report.mean_accuracy):.2f}"))
    if report.pivot_p:
        rows.append((f"pivot p={report.pivot_p}", f"{as_points(report.pivot_mean_accuracy or 0.0):.2f}"))
    rows += [("note", note) for note in report.notes]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows) + "\n"


def format_table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [[str(c) for c in header]] + [[f"{c:.2f}" if isinstance(c, float) else str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in cells) + "\n"


def write_profile_csv(path: Union[str, Path], profile: Sequence[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "score"])
        for rank, value in enumerate(profile, start=1):
            writer.writerow([rank, repr(float(value))])
    return path


def write_class_size_csv(path: Union[str, Path], by_size: Mapping[int, float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["class_size", "mean_predicted_queries"])
        for size, value in sorted(by_size.items()):
            writer.writerow([size, repr(float(value))])
    return path
