"""Pivot samples: representative train samples standing in for their label at inference."""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .corpus import Episode
from .errors import PivotError
from .pooling import PoolingMethod, Prediction, ScoreMatrix, classify_matrix, label_order
from .prompting import PromptTemplate, build_pairs
from .scorer import RelevanceScorer, score_matrix

logger = logging.getLogger(__name__)

DEFAULT_PIVOTS = 2


@dataclass(frozen=True)
class TrainRelevanceMatrix:
    """Scores among train samples; entry ``(j, i)`` puts train_j in the query slot and train_i as reference."""
    scores: np.ndarray
    train_ids: Tuple[str, ...]
    train_labels: Tuple[str, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "train_ids", tuple(self.train_ids))
        object.__setattr__(self, "train_labels", tuple(self.train_labels))
        n = len(self.train_ids)
        if scores.shape != (n, n):
            raise ValueError(f"train relevance matrix must be {n}x{n}, got {scores.shape}")
        if len(self.train_labels) != n:
            raise ValueError("every train sample needs exactly one label")

    def transformed(self, scale: float = 1.0, shift: float = 0.0) -> "TrainRelevanceMatrix":
        return replace(self, scores=self.scores * scale + shift)


@dataclass(frozen=True)
class PivotSet:
    """Per-label pivot ids, most representative first."""
    p: int
    pivots: Mapping[str, Tuple[str, ...]]
    episode_seed: Optional[int] = None

    def ids(self) -> List[str]:
        return [sid for ids in self.pivots.values() for sid in ids]

    def to_json(self) -> Dict:
        return {"p": self.p, "episode_seed": self.episode_seed, "pivots": {label: list(ids) for label, ids in self.pivots.items()}}

    @classmethod
    def from_json(cls, document: Mapping) -> "PivotSet":
        return cls(int(document["p"]), {label: tuple(ids) for label, ids in document["pivots"].items()},
                   document.get("episode_seed"))


@dataclass
class PivotInference:
    predictions: List[Prediction]
    matrix: ScoreMatrix
    pairs_per_query: int
    scorer_calls: int = 0


def train_relevance_matrix(scorer: RelevanceScorer, episode: Episode, template: PromptTemplate) -> TrainRelevanceMatrix:
    train = list(episode.train)
    scores = scorer.score_pairs(build_pairs(train, train, template)).reshape(len(train), len(train))
    return TrainRelevanceMatrix(scores, tuple(s.id for s in train), tuple(s.label for s in train))


def representativeness(m: TrainRelevanceMatrix, i: int, exclude_self: bool = False) -> float:
    """Mean score from same-label rows into column ``i`` minus the mean from other-label rows.

    With ``exclude_self`` the diagonal is left out of the same-label mean, unless it is
    the only same-label row.
    """
    n = len(m.train_ids)
    if not 0 <= i < n:
        raise IndexError(f"column {i} outside a {n}-sample train set")
    label = m.train_labels[i]
    same = [j for j in range(n) if m.train_labels[j] == label and not (exclude_self and j == i)] or [i]
    other = [j for j in range(n) if m.train_labels[j] != label]
    if not other:
        raise PivotError(f"label {label!r} has no complementary train samples")
    column = m.scores[:, i]
    return float(np.mean(column[same]) - np.mean(column[other]))


def select_pivots(m: TrainRelevanceMatrix, p: int = DEFAULT_PIVOTS, exclude_self: bool = False,
                  episode_seed: Optional[int] = None) -> PivotSet:
    if p < 1:
        raise ValueError("p must be at least 1")
    r = [representativeness(m, i, exclude_self) for i in range(len(m.train_ids))]
    pivots: Dict[str, Tuple[str, ...]] = {}
    for label in label_order(m.train_labels):
        members = [i for i, lab in enumerate(m.train_labels) if lab == label]
        members.sort(key=lambda i: (-r[i], i))
        pivots[label] = tuple(m.train_ids[i] for i in members[:p])
    return PivotSet(p, pivots, episode_seed)


def pivot_infer(
    scorer: RelevanceScorer,
    episode: Episode,
    pivots: PivotSet,
    template: PromptTemplate,
    method: PoolingMethod,
) -> PivotInference:
    """Classify queries against pivot columns only, keeping the train order of the pivots."""
    chosen = set(pivots.ids())
    unknown = chosen - {s.id for s in episode.train}
    if unknown:
        raise PivotError(f"pivots not in this episode's train set: {sorted(unknown)[:5]}")
    restricted = replace(episode, train=tuple(s for s in episode.train if s.id in chosen), corrupted_labels={})
    before = scorer.calls
    matrix = score_matrix(scorer, restricted, template)
    calls = scorer.calls - before
    logger.info(
        f"Pivot inference: {matrix.shape[1]} pairs per query instead of {len(episode.train)} ({calls} scorer calls)"
    )
    return PivotInference(classify_matrix(matrix, method), matrix, matrix.shape[1], calls)
