"""Mean, max and KNN pooling of relevance scores into label predictions."""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import PoolingError

POOLING_KINDS = ("mean", "max", "knn")


@dataclass(frozen=True)
class ScoreMatrix:
    """Relevance scores of every query (rows) against every train sample (columns)."""
    scores: np.ndarray
    query_ids: Tuple[str, ...]
    train_ids: Tuple[str, ...]
    train_labels: Tuple[str, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "query_ids", tuple(self.query_ids))
        object.__setattr__(self, "train_ids", tuple(self.train_ids))
        object.__setattr__(self, "train_labels", tuple(self.train_labels))
        if scores.ndim != 2:
            raise ValueError(f"score matrix must be 2-dimensional, got shape {scores.shape}")
        if scores.shape != (len(self.query_ids), len(self.train_ids)):
            raise ValueError(
                f"score matrix shape {scores.shape} does not match "
                f"{len(self.query_ids)} queries x {len(self.train_ids)} train samples"
            )
        if len(self.train_labels) != len(self.train_ids):
            raise ValueError("every train column needs exactly one label")
        if not np.all(np.isfinite(scores)):
            raise ValueError("score matrix contains non-finite entries")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.scores.shape

    def select_columns(self, columns: Sequence[int]) -> "ScoreMatrix":
        columns = list(columns)
        return ScoreMatrix(
            self.scores[:, columns],
            self.query_ids,
            tuple(self.train_ids[c] for c in columns),
            tuple(self.train_labels[c] for c in columns),
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["query_id", *self.train_ids])
            for qid, row in zip(self.query_ids, self.scores):
                writer.writerow([qid, *(repr(float(v)) for v in row)])
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path], train_labels: Sequence[str]) -> "ScoreMatrix":
        with Path(path).open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        if not rows:
            raise ValueError(f"score matrix file is empty: {path}")
        header, body = rows[0], rows[1:]
        return cls(
            np.array([[float(v) for v in row[1:]] for row in body], dtype=np.float64).reshape(len(body), len(header) - 1),
            tuple(row[0] for row in body),
            tuple(header[1:]),
            tuple(train_labels),
        )


@dataclass(frozen=True)
class PoolingMethod:
    """A pooling strategy; ``k=None`` under KNN means half the column count."""
    kind: str = "mean"
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in POOLING_KINDS:
            raise ValueError(f"pooling must be one of {POOLING_KINDS}, got {self.kind!r}")
        if self.k is not None and self.kind != "knn":
            raise ValueError("k only applies to knn pooling")
        if self.k is not None and self.k < 1:
            raise ValueError("knn needs k >= 1")

    def resolve_k(self, n_columns: int) -> int:
        k = self.k if self.k is not None else default_k(n_columns)
        if not 1 <= k <= n_columns:
            raise PoolingError(f"knn needs 1 <= k <= {n_columns}, got {k}")
        return k

    def __str__(self) -> str:
        return self.kind if self.k is None else f"{self.kind}@{self.k}"


@dataclass(frozen=True)
class Prediction:
    """One classified query. ``scores`` holds per-label scores, or votes under KNN."""
    query_id: str
    label: str
    method: str
    scores: Mapping[str, float] = field(default_factory=dict)
    tie_broken: bool = False


@dataclass(frozen=True)
class KnnVotes:
    votes: Dict[str, int]
    top_columns: Tuple[int, ...]


def label_order(train_labels: Sequence[str]) -> List[str]:
    """Distinct labels in order of first occurrence."""
    return list(dict.fromkeys(train_labels))


def _columns_by_label(train_labels: Sequence[str], labels: Optional[Sequence[str]]) -> Dict[str, List[int]]:
    columns: Dict[str, List[int]] = {label: [] for label in (labels if labels is not None else label_order(train_labels))}
    for j, label in enumerate(train_labels):
        if label in columns:
            columns[label].append(j)
    empty = [label for label, cols in columns.items() if not cols]
    if empty:
        raise PoolingError(f"labels without any train column: {empty}")
    return columns


def _as_row(row: Sequence[float], train_labels: Sequence[str]) -> np.ndarray:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] != len(train_labels):
        raise PoolingError(f"score row of shape {row.shape} does not match {len(train_labels)} train labels")
    return row


def pool_mean(row: Sequence[float], train_labels: Sequence[str], labels: Optional[Sequence[str]] = None) -> Dict[str, float]:
    row = _as_row(row, train_labels)
    return {label: float(np.mean(row[cols])) for label, cols in _columns_by_label(train_labels, labels).items()}


def pool_max(row: Sequence[float], train_labels: Sequence[str], labels: Optional[Sequence[str]] = None) -> Dict[str, float]:
    row = _as_row(row, train_labels)
    return {label: float(np.max(row[cols])) for label, cols in _columns_by_label(train_labels, labels).items()}


def top_k_columns(row: Sequence[float], k: int) -> Tuple[int, ...]:
    """Indices of the k highest scores; equal scores keep the lower column index first."""
    row = np.asarray(row, dtype=np.float64)
    if not 1 <= k <= row.shape[0]:
        raise PoolingError(f"k must lie in [1, {row.shape[0]}], got {k}")
    return tuple(int(j) for j in np.argsort(-row, kind="stable")[:k])


def pool_knn(row: Sequence[float], train_labels: Sequence[str], k: int) -> KnnVotes:
    row = _as_row(row, train_labels)
    top = top_k_columns(row, k)
    votes = {label: 0 for label in label_order(train_labels)}
    for j in top:
        votes[train_labels[j]] += 1
    return KnnVotes(votes, top)


def default_k(train_size: int) -> int:
    if train_size < 1:
        raise ValueError("train_size must be at least 1")
    return max(1, train_size // 2)


def classify(row: Sequence[float], train_labels: Sequence[str], method: PoolingMethod, query_id: str = "") -> Prediction:
    """Pick the best label for one score row.

    Label-score ties under mean/max go to the earliest label by first occurrence.
    Vote ties under KNN go to the tied label owning the single most relevant train
    sample, with lower column index winning equal scores.
    """
    row = _as_row(row, train_labels)
    if method.kind in ("mean", "max"):
        scores = pool_mean(row, train_labels) if method.kind == "mean" else pool_max(row, train_labels)
        best = max(scores.values())
        tied = [label for label, score in scores.items() if score == best]
        return Prediction(query_id, tied[0], str(method), scores, len(tied) > 1)

    knn = pool_knn(row, train_labels, method.resolve_k(row.shape[0]))
    best_votes = max(knn.votes.values())
    tied = [label for label, votes in knn.votes.items() if votes == best_votes]
    if len(tied) == 1:
        return Prediction(query_id, tied[0], str(method), dict(knn.votes), False)
    candidates = [j for j, label in enumerate(train_labels) if label in tied]
    winner = min(candidates, key=lambda j: (-row[j], j))
    return Prediction(query_id, train_labels[winner], str(method), dict(knn.votes), True)


def classify_matrix(matrix: ScoreMatrix, method: PoolingMethod) -> List[Prediction]:
    return [classify(row, matrix.train_labels, method, qid) for qid, row in zip(matrix.query_ids, matrix.scores)]


def write_predictions_csv(
    path: Union[str, Path],
    predictions: Sequence[Prediction],
    gold_labels: Mapping[str, str],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["query_id", "predicted_label", "gold_label", "method", "tie_broken"])
        for p in predictions:
            writer.writerow([p.query_id, p.label, gold_labels.get(p.query_id, ""), p.method, str(p.tie_broken).lower()])
    return path


def read_predictions_csv(path: Union[str, Path]) -> Tuple[List[Prediction], Dict[str, str]]:
    predictions, gold = [], {}
    with Path(path).open(newline="", encoding="utf-8") as handle:
        for record in csv.DictReader(handle):
            predictions.append(
                Prediction(record["query_id"], record["predicted_label"], record["method"],
                           tie_broken=record["tie_broken"] == "true")
            )
            gold[record["query_id"]] = record["gold_label"]
    return predictions, gold
