"""Two-text prompt templates and enumeration of training and query pairs."""
import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import DEFAULT_MAX_TOKENS, Episode, Sample, Tokenizer, split_words, tokenize_and_truncate
from .errors import TemplateError

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATE = "{a} [SEP] A news of [MASK] topic: {b}"

TEXT_A = "{a}"
TEXT_B = "{b}"
MASK = "[MASK]"
SEP = "[SEP]"
_PLACEHOLDER = re.compile(r"(\{a\}|\{b\}|\[MASK\]|\[SEP\])")


@dataclass(frozen=True)
class PromptedPair:
    """A rendered two-text input.

    ``a_span``/``b_span`` are the ``[start, stop)`` ranges of the two texts inside
    ``tokens``. ``y`` is 1 for same-class pairs, 0 otherwise, and ``None`` for query pairs.
    """
    tokens: Tuple[int, ...]
    mask_position: int
    left_id: str
    right_id: str
    a_span: Tuple[int, int]
    b_span: Tuple[int, int]
    y: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.mask_position < len(self.tokens):
            raise ValueError(f"mask position {self.mask_position} outside a sequence of {len(self.tokens)}")
        if self.y is not None and self.y not in (0, 1):
            raise ValueError(f"pair label must be 0 or 1, got {self.y}")

    def with_label(self, y: int) -> "PromptedPair":
        return PromptedPair(self.tokens, self.mask_position, self.left_id, self.right_id, self.a_span, self.b_span, y)

    @property
    def a_tokens(self) -> Tuple[int, ...]:
        return self.tokens[self.a_span[0]:self.a_span[1]]

    @property
    def b_tokens(self) -> Tuple[int, ...]:
        return self.tokens[self.b_span[0]:self.b_span[1]]


class PromptTemplate:
    """A pattern such as ``"{a} [SEP] A news of [MASK] topic: {b}"`` compiled against a tokenizer.

    Literal text between placeholders goes through the same word splitting as sample
    text, so template words must be in the tokenizer vocabulary to avoid ``[UNK]``.
    """

    def __init__(self, pattern: str, tokenizer: Tokenizer, max_tokens: int = DEFAULT_MAX_TOKENS):
        if max_tokens < 1:
            raise TemplateError("per-side truncation limit must be at least 1")
        self.pattern = pattern
        self.tokenizer = tokenizer
        self.max_tokens = max_tokens
        self.segments = self.parse(pattern)
        self._compiled: List[Tuple[str, Tuple[int, ...]]] = []
        for kind, words in self.segments:
            if kind == "literal":
                self._compiled.append((kind, tuple(tokenizer.encode_words(words))))
            else:
                self._compiled.append((kind, ()))

    @staticmethod
    def parse(pattern: str) -> List[Tuple[str, Tuple[str, ...]]]:
        """Split a pattern into ``("literal", words)`` runs and placeholder segments."""
        segments: List[Tuple[str, Tuple[str, ...]]] = []
        counts = {TEXT_A: 0, TEXT_B: 0, MASK: 0}
        for part in _PLACEHOLDER.split(pattern):
            if part in (TEXT_A, TEXT_B, MASK, SEP):
                counts[part] = counts.get(part, 0) + 1
                segments.append((part, ()))
            else:
                words = tuple(split_words(part))
                if words:
                    segments.append(("literal", words))
        for placeholder in (TEXT_A, TEXT_B, MASK):
            if counts[placeholder] != 1:
                raise TemplateError(
                    f"template must contain exactly one {placeholder}, found {counts[placeholder]}: {pattern!r}"
                )
        return segments

    @classmethod
    def literal_text(cls, pattern: str) -> str:
        """The literal words of a pattern, for seeding a tokenizer vocabulary."""
        return " ".join(" ".join(words) for kind, words in cls.parse(pattern) if kind == "literal")

    @property
    def literal_length(self) -> int:
        return sum(len(ids) if kind == "literal" else 0 for kind, ids in self._compiled) + sum(
            1 for kind, _ in self._compiled if kind in (MASK, SEP)
        )

    @property
    def max_length(self) -> int:
        """Longest sequence this template can render."""
        return self.literal_length + 2 * self.max_tokens

    def encode_text(self, text: str) -> List[int]:
        return tokenize_and_truncate(self.tokenizer, text, self.max_tokens)


def pair_label(a: Sample, b: Sample) -> int:
    """1 iff both samples carry the same label within the same source dataset."""
    return int((a.dataset_tag, a.label) == (b.dataset_tag, b.label))


def render_pair(
    template: PromptTemplate,
    a_tokens: Sequence[int],
    b_tokens: Sequence[int],
    left_id: str = "",
    right_id: str = "",
) -> PromptedPair:
    if len(a_tokens) > template.max_tokens or len(b_tokens) > template.max_tokens:
        raise TemplateError(f"pair sides must be truncated to {template.max_tokens} tokens before rendering")
    tokens: List[int] = []
    mask_position = -1
    a_span = b_span = (0, 0)
    for kind, ids in template._compiled:
        if kind == "literal":
            tokens.extend(ids)
        elif kind == TEXT_A:
            a_span = (len(tokens), len(tokens) + len(a_tokens))
            tokens.extend(a_tokens)
        elif kind == TEXT_B:
            b_span = (len(tokens), len(tokens) + len(b_tokens))
            tokens.extend(b_tokens)
        elif kind == MASK:
            mask_position = len(tokens)
            tokens.append(template.tokenizer.mask_id)
        else:
            tokens.append(template.tokenizer.sep_id)
    return PromptedPair(tuple(tokens), mask_position, left_id, right_id, a_span, b_span)


def build_pairs(
    rows: Sequence[Sample],
    columns: Sequence[Sample],
    template: PromptTemplate,
    labeled: bool = False,
) -> List[PromptedPair]:
    """Render every (row, column) pair in row-major order, rows in the TEXT_A slot."""
    cache: Dict[str, List[int]] = {}

    def encoded(sample: Sample) -> List[int]:
        key = f"{sample.dataset_tag}\x00{sample.id}"
        if key not in cache:
            cache[key] = template.encode_text(sample.text)
        return cache[key]

    pairs = []
    for a in rows:
        a_tokens = encoded(a)
        for b in columns:
            pair = render_pair(template, a_tokens, encoded(b), a.id, b.id)
            pairs.append(pair.with_label(pair_label(a, b)) if labeled else pair)
    return pairs


def build_training_pairs(episode: Episode, template: PromptTemplate) -> List[PromptedPair]:
    """All ordered pairs over train plus OOD train, self-pairs included, labeled."""
    if not episode.train:
        raise TemplateError("cannot build training pairs from an empty train set")
    pool = list(episode.train) + list(episode.ood_train)
    pairs = build_pairs(pool, pool, template, labeled=True)
    logger.info(f"Built {len(pairs)} training pairs ({sum(p.y for p in pairs)} positive)")
    return pairs


def build_query_pairs(episode: Episode, template: PromptTemplate) -> List[PromptedPair]:
    """Query x in-domain train pairs, query-major, OOD samples excluded."""
    if not episode.query or not episode.train:
        raise TemplateError("query pairs need a non-empty query set and train set")
    pairs = build_pairs(episode.query, episode.train, template)
    logger.debug(f"Built {len(pairs)} query pairs")
    return pairs
