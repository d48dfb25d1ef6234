"""Relevance scorers.

A scorer maps a rendered text pair to a :class:`BinomialRelevance` (same class vs.
different class). The trainable :class:`TinyMLMScorer` gets there through a vocabulary
distribution at the mask position aggregated by the :class:`MetaVerbalizer`; the
:class:`LexicalOverlapScorer` is a parameter-free reference used without training.
"""
import copy
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import NEGATIVE_WORDS, POSITIVE_WORDS, Episode, Tokenizer
from .errors import ScorerError
from .pooling import ScoreMatrix
from .prompting import PromptedPair, PromptTemplate, build_query_pairs

logger = logging.getLogger(__name__)

AGGREGATE_MODES = ("probs", "logits")
CHECKPOINT_FORMAT = "metricprompt.tiny-mlm/1"


@dataclass(frozen=True)
class MetaVerbalizer:
    """Vocabulary indices aggregated into the "same class" and "different class" outcomes."""
    positive: Tuple[int, ...]
    negative: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "positive", tuple(self.positive))
        object.__setattr__(self, "negative", tuple(self.negative))
        if not self.positive or not self.negative:
            raise ValueError("meta verbalizer needs non-empty positive and negative word sets")
        if set(self.positive) & set(self.negative):
            raise ValueError("positive and negative word sets must be disjoint")

    @classmethod
    def from_tokenizer(
        cls,
        tokenizer: Tokenizer,
        positive_words: Sequence[str] = POSITIVE_WORDS,
        negative_words: Sequence[str] = NEGATIVE_WORDS,
    ) -> "MetaVerbalizer":
        missing = [w for w in list(positive_words) + list(negative_words) if w not in tokenizer]
        if missing:
            raise ScorerError(f"meta words missing from the vocabulary: {missing}")
        return cls(
            tuple(tokenizer.token_id(w) for w in positive_words),
            tuple(tokenizer.token_id(w) for w in negative_words),
        )

    def swapped(self) -> "MetaVerbalizer":
        return MetaVerbalizer(self.negative, self.positive)

    def check_vocab(self, vocab_size: int) -> None:
        bad = [i for i in self.positive + self.negative if not 0 <= i < vocab_size]
        if bad:
            raise ScorerError(f"meta verbalizer indices {bad} fall outside a vocabulary of {vocab_size}")


@dataclass(frozen=True)
class VocabDistribution:
    """Output word probabilities at the mask position, with the logits when available."""
    probs: np.ndarray
    logits: Optional[np.ndarray] = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise ValueError("vocabulary distribution must be 1-dimensional")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("vocabulary probabilities must be finite and non-negative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"vocabulary probabilities sum to {float(probs.sum())}, expected 1")


@dataclass(frozen=True)
class BinomialRelevance:
    """Probability that a pair is same-class (``p1``) or different-class (``p0``)."""
    p1: float
    p0: float

    def __post_init__(self):
        if self.p1 < 0 or self.p0 < 0:
            raise ValueError("binomial probabilities must be non-negative")
        if abs(self.p1 + self.p0 - 1.0) > 1e-9:
            raise ValueError(f"binomial probabilities sum to {self.p1 + self.p0}, expected 1")


def meta_verbalize(dist: VocabDistribution, mv: MetaVerbalizer, aggregate: str = "probs") -> BinomialRelevance:
    """Collapse a vocabulary distribution onto the two meta-verbalizer outcomes.

    ``probs`` sums the probabilities of each word set and renormalizes; ``logits`` sums
    each set's logits and applies a two-way softmax.
    """
    mv.check_vocab(dist.probs.shape[0])
    if aggregate == "probs":
        pos = float(dist.probs[list(mv.positive)].sum())
        neg = float(dist.probs[list(mv.negative)].sum())
        total = pos + neg
        if not total > 0:
            raise ScorerError("scorer put no probability mass on any meta-verbalizer word")
        return BinomialRelevance(pos / total, neg / total)
    if aggregate == "logits":
        if dist.logits is not None:
            logits = np.asarray(dist.logits, dtype=np.float64)
        else:
            with np.errstate(divide="ignore"):
                logits = np.log(dist.probs)
        margin = float(logits[list(mv.positive)].sum() - logits[list(mv.negative)].sum())
        if not math.isfinite(margin):
            raise ScorerError("meta-verbalizer logit aggregate is not finite")
        t = math.tanh(margin / 2)
        return BinomialRelevance(0.5 * (1 + t), 0.5 * (1 - t))
    raise ValueError(f"aggregate must be one of {AGGREGATE_MODES}, got {aggregate!r}")


def delta(rel: BinomialRelevance) -> float:
    return rel.p1 - rel.p0


class RelevanceScorer(ABC):
    """Common interface for relevance scorers; ``calls`` counts scored pairs."""

    kind = "abstract"

    def __init__(self):
        self.calls = 0

    @abstractmethod
    def _relevance(self, pairs: List[PromptedPair]) -> List[BinomialRelevance]:
        ...

    def relevance(self, pairs: Sequence[PromptedPair]) -> List[BinomialRelevance]:
        pairs = list(pairs)
        self.calls += len(pairs)
        return self._relevance(pairs)

    def score_pairs(self, pairs: Sequence[PromptedPair]) -> np.ndarray:
        return np.array([delta(rel) for rel in self.relevance(pairs)], dtype=np.float64)


class LexicalOverlapScorer(RelevanceScorer):
    """Maps token Jaccard overlap J of the two texts to ``p1 = (1 + J) / 2``.

    Unknown-word tokens are ignored so two out-of-vocabulary texts do not look alike.
    Two texts with no known tokens have J = 0.
    """

    kind = "lexical"

    def __init__(self, unk_id: Optional[int] = None):
        super().__init__()
        self.unk_id = unk_id

    def jaccard(self, pair: PromptedPair) -> float:
        a = set(pair.a_tokens)
        b = set(pair.b_tokens)
        if self.unk_id is not None:
            a.discard(self.unk_id)
            b.discard(self.unk_id)
        union = a | b
        return len(a & b) / len(union) if union else 0.0

    def _relevance(self, pairs: List[PromptedPair]) -> List[BinomialRelevance]:
        out = []
        for pair in pairs:
            p1 = (1.0 + self.jaccard(pair)) / 2.0
            out.append(BinomialRelevance(p1, 1.0 - p1))
        return out


@dataclass(frozen=True)
class TinyMLMConfig:
    """Architecture of the trainable masked-token scorer."""
    vocab_size: int
    width: int = 64
    blocks: int = 2
    heads: int = 2
    max_length: int = 256
    ff_multiplier: int = 4
    dtype: str = "float32"

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if self.width < 1 or self.blocks < 1 or self.heads < 1:
            raise ValueError("width, blocks and heads must be positive")
        if self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by {self.heads} heads")
        if self.max_length < 1:
            raise ValueError("max_length must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


class EncoderBlock(nn.Module):
    """Pre-norm transformer encoder block with padding-masked self-attention."""

    def __init__(self, width: int, heads: int, ff_width: int):
        super().__init__()
        self.heads = heads
        self.attn_norm = nn.LayerNorm(width)
        self.qkv = nn.Linear(width, 3 * width)
        self.attn_out = nn.Linear(width, width)
        self.ff_norm = nn.LayerNorm(width)
        self.ff_in = nn.Linear(width, ff_width)
        self.ff_out = nn.Linear(ff_width, width)

    def forward(self, x: torch.Tensor, padding_mask: torch.Tensor) -> torch.Tensor:
        batch, length, width = x.shape
        head_dim = width // self.heads
        q, k, v = self.qkv(self.attn_norm(x)).split(width, dim=-1)
        q, k, v = (t.view(batch, length, self.heads, head_dim).transpose(1, 2) for t in (q, k, v))
        weights = (q @ k.transpose(-2, -1)) / math.sqrt(head_dim)
        weights = weights.masked_fill(padding_mask[:, None, None, :], float("-inf")).softmax(dim=-1)
        attended = (weights @ v).transpose(1, 2).reshape(batch, length, width)
        x = x + self.attn_out(attended)
        return x + self.ff_out(F.gelu(self.ff_in(self.ff_norm(x))))


class TinyMLM(nn.Module):
    """Token and position embeddings, encoder blocks and a tied output projection."""

    def __init__(self, config: TinyMLMConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.width)
        self.position_embedding = nn.Embedding(config.max_length, config.width)
        self.blocks = nn.ModuleList(
            EncoderBlock(config.width, config.heads, config.ff_multiplier * config.width) for _ in range(config.blocks)
        )
        self.final_norm = nn.LayerNorm(config.width)
        self.output_bias = nn.Parameter(torch.zeros(config.vocab_size))
        nn.init.normal_(self.token_embedding.weight, std=0.02)
        nn.init.normal_(self.position_embedding.weight, std=0.02)

    def forward(self, tokens: torch.Tensor, padding_mask: torch.Tensor, mask_positions: torch.Tensor) -> torch.Tensor:
        """Return vocabulary logits at each sequence's mask position, shape ``[batch, vocab]``."""
        positions = torch.arange(tokens.shape[1], device=tokens.device)
        x = self.token_embedding(tokens) + self.position_embedding(positions)[None, :, :]
        for block in self.blocks:
            x = block(x, padding_mask)
        hidden = self.final_norm(x[torch.arange(tokens.shape[0], device=tokens.device), mask_positions])
        return hidden @ self.token_embedding.weight.T + self.output_bias


@dataclass(frozen=True)
class ScorerParams:
    """Snapshot of a TinyMLM's architecture and named parameter tensors."""
    config: TinyMLMConfig
    tensors: Mapping[str, torch.Tensor]

    def __post_init__(self):
        for name, tensor in self.tensors.items():
            if not torch.all(torch.isfinite(tensor)):
                raise ValueError(f"parameter {name} holds non-finite values")
        projection = self.tensors.get("token_embedding.weight")
        if projection is not None and projection.shape[0] != self.config.vocab_size:
            raise ValueError(f"output projection has {projection.shape[0]} rows, vocabulary has {self.config.vocab_size}")

    @classmethod
    def of(cls, model: TinyMLM) -> "ScorerParams":
        return cls(model.config, {name: t.detach().clone() for name, t in model.state_dict().items()})


def binomial_log_probs(logits: torch.Tensor, mv: MetaVerbalizer, aggregate: str = "probs") -> torch.Tensor:
    """Differentiable meta-verbalizer aggregation; column 0 is "different", column 1 "same"."""
    pos = torch.tensor(mv.positive, device=logits.device)
    neg = torch.tensor(mv.negative, device=logits.device)
    if aggregate == "probs":
        log_probs = F.log_softmax(logits, dim=-1)
        pooled = torch.stack([torch.logsumexp(log_probs[:, neg], -1), torch.logsumexp(log_probs[:, pos], -1)], -1)
    elif aggregate == "logits":
        pooled = torch.stack([logits[:, neg].sum(-1), logits[:, pos].sum(-1)], -1)
    else:
        raise ValueError(f"aggregate must be one of {AGGREGATE_MODES}, got {aggregate!r}")
    return F.log_softmax(pooled, dim=-1)


class TinyMLMScorer(RelevanceScorer):
    """The trainable masked-token relevance scorer."""

    kind = "tiny-mlm"

    def __init__(
        self,
        model: TinyMLM,
        tokenizer: Tokenizer,
        verbalizer: Optional[MetaVerbalizer] = None,
        aggregate: str = "probs",
        batch_size: int = 64,
    ):
        super().__init__()
        if aggregate not in AGGREGATE_MODES:
            raise ValueError(f"aggregate must be one of {AGGREGATE_MODES}, got {aggregate!r}")
        if model.config.vocab_size != len(tokenizer):
            raise ScorerError(f"model vocabulary {model.config.vocab_size} != tokenizer vocabulary {len(tokenizer)}")
        self.model = model
        self.tokenizer = tokenizer
        self.verbalizer = verbalizer or MetaVerbalizer.from_tokenizer(tokenizer)
        self.verbalizer.check_vocab(model.config.vocab_size)
        self.aggregate = aggregate
        self.batch_size = batch_size

    @classmethod
    def create(
        cls,
        tokenizer: Tokenizer,
        config: Optional[TinyMLMConfig] = None,
        seed: int = 0,
        aggregate: str = "probs",
    ) -> "TinyMLMScorer":
        config = config or TinyMLMConfig(vocab_size=len(tokenizer))
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            model = TinyMLM(config)
        return cls(model.to(config.torch_dtype), tokenizer, aggregate=aggregate)

    def with_model(self, model: TinyMLM) -> "TinyMLMScorer":
        return TinyMLMScorer(model, self.tokenizer, self.verbalizer, self.aggregate, self.batch_size)

    @property
    def params(self) -> ScorerParams:
        return ScorerParams.of(self.model)

    def _collate(self, pairs: Sequence[PromptedPair], device: torch.device):
        longest = max(len(p.tokens) for p in pairs)
        if longest > self.model.config.max_length:
            raise ScorerError(f"sequence of {longest} tokens exceeds the maximum length {self.model.config.max_length}")
        tokens = torch.full((len(pairs), longest), self.tokenizer.pad_id, dtype=torch.long)
        padding = torch.ones((len(pairs), longest), dtype=torch.bool)
        for row, pair in enumerate(pairs):
            tokens[row, :len(pair.tokens)] = torch.tensor(pair.tokens, dtype=torch.long)
            padding[row, :len(pair.tokens)] = False
        if int(tokens.min()) < 0 or int(tokens.max()) >= self.model.config.vocab_size:
            raise ScorerError("token index outside the vocabulary")
        mask_positions = torch.tensor([p.mask_position for p in pairs], dtype=torch.long)
        return tokens.to(device), padding.to(device), mask_positions.to(device)

    def logits(self, pairs: Sequence[PromptedPair], model: Optional[TinyMLM] = None) -> torch.Tensor:
        model = model if model is not None else self.model
        device = next(model.parameters()).device
        return model(*self._collate(pairs, device))

    def loss(self, pairs: Sequence[PromptedPair], model: Optional[TinyMLM] = None) -> torch.Tensor:
        """Mean cross-entropy between the meta-verbalized prediction and the pair labels."""
        if any(p.y is None for p in pairs):
            raise ScorerError("every training pair needs a label")
        log_probs = binomial_log_probs(self.logits(pairs, model), self.verbalizer, self.aggregate)
        targets = torch.tensor([p.y for p in pairs], dtype=torch.long, device=log_probs.device)
        return F.nll_loss(log_probs, targets)

    def f_vocab(self, pair: PromptedPair) -> VocabDistribution:
        return self._distributions([pair])[0]

    def _distributions(self, pairs: Sequence[PromptedPair]) -> List[VocabDistribution]:
        self.model.eval()
        with torch.no_grad():
            logits = self.logits(pairs).to(torch.float64)
            probs = logits.softmax(dim=-1)
        return [VocabDistribution(p.numpy(), l.numpy()) for p, l in zip(probs, logits)]

    def _relevance(self, pairs: List[PromptedPair]) -> List[BinomialRelevance]:
        unique: Dict[Tuple[int, ...], PromptedPair] = {}
        for pair in pairs:
            unique.setdefault(pair.tokens, pair)
        distinct = list(unique.values())
        scored: Dict[Tuple[int, ...], BinomialRelevance] = {}
        for start in range(0, len(distinct), self.batch_size):
            chunk = distinct[start:start + self.batch_size]
            for pair, dist in zip(chunk, self._distributions(chunk)):
                scored[pair.tokens] = meta_verbalize(dist, self.verbalizer, self.aggregate)
        return [scored[pair.tokens] for pair in pairs]


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer settings for :func:`train`."""
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")

    @classmethod
    def full_scale(cls, epochs: int, seed: int = 0) -> "TrainingConfig":
        return cls(learning_rate=1e-5, batch_size=16, epochs=epochs, weight_decay=0.01, seed=seed)

    @classmethod
    def toy(cls, epochs: int, seed: int = 0) -> "TrainingConfig":
        return cls(learning_rate=1e-3, batch_size=16, epochs=epochs, weight_decay=0.01, seed=seed)


@dataclass
class TrainResult:
    scorer: TinyMLMScorer
    loss_trace: List[float] = field(default_factory=list)
    steps: int = 0


def pair_loss(scorer: TinyMLMScorer, batch: Sequence[PromptedPair]) -> float:
    with torch.no_grad():
        value = float(scorer.loss(batch))
    if not math.isfinite(value):
        raise ScorerError("pair loss is not finite")
    return value


def train(scorer: TinyMLMScorer, training_pairs: Sequence[PromptedPair], config: TrainingConfig) -> TrainResult:
    """Minimize the pair loss with AdamW, reshuffling the pairs once per epoch.

    The input scorer is left untouched; the returned scorer owns a trained copy.
    """
    pairs = list(training_pairs)
    if not pairs:
        raise ScorerError("no training pairs")
    if any(p.y is None for p in pairs):
        raise ScorerError("every training pair needs a label")
    model = copy.deepcopy(scorer.model)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    trace: List[float] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for start in range(0, len(pairs), config.batch_size):
            batch = [pairs[int(i)] for i in order[start:start + config.batch_size]]
            loss = scorer.loss(batch, model)
            if not torch.isfinite(loss):
                raise ScorerError(f"non-finite loss at step {step} (epoch {epoch})")
            optimizer.zero_grad()
            loss.backward()
            for name, p in model.named_parameters():
                if p.grad is not None and not torch.all(torch.isfinite(p.grad)):
                    raise ScorerError(f"non-finite gradient for {name} at step {step} (epoch {epoch})")
            optimizer.step()
            total += float(loss) * len(batch)
            step += 1
        trace.append(total / len(pairs))
        logger.debug(f"Epoch {epoch + 1}/{config.epochs}: loss {trace[-1]:.6f}")
    logger.info(f"Trained for {config.epochs} epochs ({step} steps), final loss {trace[-1]:.6f}")
    model.eval()
    return TrainResult(scorer.with_model(model), trace, step)


def pair_accuracy(scorer: RelevanceScorer, pairs: Sequence[PromptedPair]) -> float:
    """Fraction of labeled pairs whose score sign agrees with the label (positive iff y = 1)."""
    if not pairs:
        raise ScorerError("no pairs to evaluate")
    scores = scorer.score_pairs(pairs)
    labels = np.array([p.y for p in pairs])
    return float(np.mean((scores > 0) == (labels == 1)))


def grad_check_tensors(
    scorer: TinyMLMScorer,
    batch: Sequence[PromptedPair],
    h: float = 1e-5,
    atol: float = 1e-8,
    coords_per_tensor: Optional[int] = 8,
    seed: int = 0,
) -> Dict[str, float]:
    """Compare autograd gradients of the pair loss with central differences in float64.

    Each parameter tensor is probed on all coordinates, or on a seeded subset of
    ``coords_per_tensor`` coordinates. Coordinates whose analytic and numeric values
    differ by at most ``atol`` count as exact.
    """
    model = copy.deepcopy(scorer.model).to(torch.float64)
    model.eval()
    model.zero_grad()
    scorer.loss(batch, model).backward()
    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for name, param in model.named_parameters():
        analytic = param.grad.detach().reshape(-1).clone()
        flat = param.data.view(-1)
        if coords_per_tensor is None or flat.numel() <= coords_per_tensor:
            coords = range(flat.numel())
        else:
            coords = sorted(int(i) for i in rng.choice(flat.numel(), size=coords_per_tensor, replace=False))
        worst = 0.0
        with torch.no_grad():
            for i in coords:
                original = float(flat[i])
                flat[i] = original + h
                upper = float(scorer.loss(batch, model))
                flat[i] = original - h
                lower = float(scorer.loss(batch, model))
                flat[i] = original
                numeric = (upper - lower) / (2 * h)
                exact = float(analytic[i])
                diff = abs(exact - numeric)
                if diff > atol:
                    worst = max(worst, diff / max(abs(exact), abs(numeric)))
        errors[name] = worst
    return errors


def grad_check(scorer: TinyMLMScorer, batch: Sequence[PromptedPair], h: float = 1e-5, **kwargs) -> float:
    return max(grad_check_tensors(scorer, batch, h=h, **kwargs).values())


def score_matrix(scorer: RelevanceScorer, episode: Episode, template: PromptTemplate) -> ScoreMatrix:
    """Score every query against every in-domain train sample."""
    pairs = build_query_pairs(episode, template)
    scores = scorer.score_pairs(pairs).reshape(len(episode.query), len(episode.train))
    return ScoreMatrix(
        scores,
        tuple(s.id for s in episode.query),
        tuple(s.id for s in episode.train),
        tuple(s.label for s in episode.train),
    )


def save_checkpoint(scorer: TinyMLMScorer, path: Union[str, Path], metadata: Optional[Mapping] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vocab = scorer.tokenizer.vocab
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "config": asdict(scorer.model.config),
            "vocab": list(vocab),
            "aggregate": scorer.aggregate,
            "positive_words": [vocab[i] for i in scorer.verbalizer.positive],
            "negative_words": [vocab[i] for i in scorer.verbalizer.negative],
            "metadata": dict(metadata or {}),
            "state_dict": scorer.params.tensors,
        },
        path,
    )
    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[TinyMLMScorer, Dict]:
    """Load a scorer saved by :func:`save_checkpoint`, returning it with its metadata."""
    try:
        data = torch.load(Path(path), map_location="cpu")
    except (OSError, RuntimeError) as e:
        raise ScorerError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise ScorerError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    config = TinyMLMConfig(**data["config"])
    tokenizer = Tokenizer(data["vocab"])
    if config.vocab_size != len(tokenizer):
        raise ScorerError(f"checkpoint vocabulary has {len(tokenizer)} entries, config says {config.vocab_size}")
    model = TinyMLM(config).to(config.torch_dtype)
    expected = {name: tuple(t.shape) for name, t in model.state_dict().items()}
    found = {name: tuple(t.shape) for name, t in data["state_dict"].items()}
    mismatched = sorted(name for name in set(expected) | set(found) if expected.get(name) != found.get(name))
    if mismatched:
        raise ScorerError(f"checkpoint tensors do not match the declared architecture: {mismatched}")
    model.load_state_dict(data["state_dict"])
    model.eval()
    verbalizer = MetaVerbalizer.from_tokenizer(tokenizer, data["positive_words"], data["negative_words"])
    scorer = TinyMLMScorer(model, tokenizer, verbalizer, data["aggregate"])
    return scorer, data.get("metadata", {})
