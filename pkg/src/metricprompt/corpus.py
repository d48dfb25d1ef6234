"""Dataset ingestion, tokenization and seeded few-shot episode sampling."""
import json
import logging
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CorpusError, InsufficientSamplesError

logger = logging.getLogger(__name__)

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
MASK_TOKEN = "[MASK]"
SEP_TOKEN = "[SEP]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, SEP_TOKEN)

POSITIVE_WORDS = ("relevant", "similar", "consistent")
NEGATIVE_WORDS = ("irrelevant", "inconsistent", "different")
META_WORDS = POSITIVE_WORDS + NEGATIVE_WORDS

DEFAULT_MAX_TOKENS = 120

_PUNCTUATION = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True)
class Sample:
    """A labeled text unit."""
    id: str
    text: str
    label: str
    dataset_tag: str

    def __post_init__(self):
        if not self.label:
            raise ValueError(f"sample {self.id!r} has an empty label")
        if not self.dataset_tag:
            raise ValueError(f"sample {self.id!r} has an empty dataset tag")


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of samples sharing one label set."""
    name: str
    samples: Tuple[Sample, ...]
    label_set: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        if len(self.label_set) < 2:
            raise ValueError(f"dataset {self.name!r} needs at least 2 labels, got {len(self.label_set)}")
        if len(set(self.label_set)) != len(self.label_set):
            raise ValueError(f"dataset {self.name!r} has repeated labels in its label set")
        known = set(self.label_set)
        seen = set()
        for sample in self.samples:
            if sample.label not in known:
                raise ValueError(f"sample {sample.id!r} has label {sample.label!r} outside the label set")
            if sample.id in seen:
                raise ValueError(f"duplicate sample id {sample.id!r} in dataset {self.name!r}")
            seen.add(sample.id)

    def __len__(self) -> int:
        return len(self.samples)

    def by_label(self) -> Dict[str, List[Sample]]:
        groups: Dict[str, List[Sample]] = {label: [] for label in self.label_set}
        for sample in self.samples:
            groups[sample.label].append(sample)
        return groups

    def index(self) -> Dict[str, Sample]:
        return {sample.id: sample for sample in self.samples}


@dataclass(frozen=True)
class Episode:
    """A seeded few-shot split: training set, query set, noise and OOD bookkeeping.

    ``corrupted_labels`` maps the id of every noised train sample to its original label;
    the train samples themselves carry the corrupted label.
    """
    dataset_name: str
    label_set: Tuple[str, ...]
    train: Tuple[Sample, ...]
    query: Tuple[Sample, ...]
    shots: int
    seed: int
    corrupted_labels: Mapping[str, str] = field(default_factory=dict)
    ood_train: Tuple[Sample, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "query", tuple(self.query))
        object.__setattr__(self, "ood_train", tuple(self.ood_train))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        object.__setattr__(self, "corrupted_labels", dict(self.corrupted_labels))
        train_ids = {s.id for s in self.train}
        overlap = train_ids & {s.id for s in self.query}
        if overlap:
            raise ValueError(f"train and query share ids: {sorted(overlap)[:5]}")
        stray = set(self.corrupted_labels) - train_ids
        if stray:
            raise ValueError(f"noisy ids outside the train set: {sorted(stray)[:5]}")

    @property
    def noisy_ids(self) -> FrozenSet[str]:
        return frozenset(self.corrupted_labels)

    def train_label_counts(self) -> Dict[str, int]:
        counts = {label: 0 for label in self.label_set}
        for sample in self.train:
            counts[sample.label] += 1
        return counts

    def to_json(self) -> Dict:
        """Serialize the ids needed to rebuild this episode without re-sampling."""
        ood_sources: Dict[str, List[str]] = {}
        for sample in self.ood_train:
            ood_sources.setdefault(sample.dataset_tag, []).append(sample.id)
        return {
            "dataset": self.dataset_name,
            "seed": self.seed,
            "shots": self.shots,
            "label_set": list(self.label_set),
            "train_ids": [s.id for s in self.train],
            "train_labels": [s.label for s in self.train],
            "query_ids": [s.id for s in self.query],
            "corrupted_labels": {sid: self._label_of(sid) for sid in sorted(self.corrupted_labels)},
            "original_labels": {sid: self.corrupted_labels[sid] for sid in sorted(self.corrupted_labels)},
            "ood": ood_sources,
        }

    def _label_of(self, sample_id: str) -> str:
        for sample in self.train:
            if sample.id == sample_id:
                return sample.label
        raise KeyError(sample_id)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(
        cls,
        document: Mapping,
        dataset: Dataset,
        ood_sources: Optional[Mapping[str, Dataset]] = None,
    ) -> "Episode":
        """Rebuild an episode from :meth:`to_json` output and its source datasets."""
        if document.get("dataset") != dataset.name:
            raise CorpusError(f"episode belongs to dataset {document.get('dataset')!r}, not {dataset.name!r}")
        index = dataset.index()
        try:
            corrupted = document.get("corrupted_labels", {})
            train = []
            for sid in document["train_ids"]:
                sample = index[sid]
                if sid in corrupted:
                    sample = replace(sample, label=corrupted[sid])
                train.append(sample)
            query = [index[sid] for sid in document["query_ids"]]
            ood_train: List[Sample] = []
            for source_name, ids in document.get("ood", {}).items():
                if not ood_sources or source_name not in ood_sources:
                    raise CorpusError(f"episode references OOD dataset {source_name!r} which was not provided")
                ood_index = ood_sources[source_name].index()
                ood_train.extend(ood_index[sid] for sid in ids)
        except KeyError as e:
            raise CorpusError(f"episode references unknown sample id {e.args[0]!r}") from None
        originals = document.get("original_labels", {})
        return cls(
            dataset_name=dataset.name,
            label_set=dataset.label_set,
            train=tuple(train),
            query=tuple(query),
            shots=int(document["shots"]),
            seed=int(document["seed"]),
            corrupted_labels={sid: originals.get(sid, index[sid].label) for sid in corrupted},
            ood_train=tuple(ood_train),
        )


def split_words(text: str) -> List[str]:
    """Lowercase, strip ASCII punctuation and split on whitespace."""
    return text.lower().translate(_PUNCTUATION).split()


class Tokenizer:
    """Deterministic word-level tokenizer over a fixed vocabulary.

    Special markers come first, followed by the six meta-verbalizer words and then
    corpus words in order of first occurrence.
    """

    def __init__(self, vocab: Sequence[str]):
        self.vocab: Tuple[str, ...] = tuple(vocab)
        self._index: Dict[str, int] = {}
        for i, token in enumerate(self.vocab):
            if token in self._index:
                raise ValueError(f"token {token!r} appears twice in the vocabulary")
            self._index[token] = i
        missing = [t for t in SPECIAL_TOKENS + META_WORDS if t not in self._index]
        if missing:
            raise ValueError(f"vocabulary is missing required tokens: {missing}")

    @classmethod
    def build(cls, datasets: Iterable[Dataset], extra_texts: Iterable[str] = ()) -> "Tokenizer":
        vocab: List[str] = list(SPECIAL_TOKENS) + list(META_WORDS)
        seen = set(vocab)

        def add(text: str) -> None:
            for word in split_words(text):
                if word not in seen:
                    seen.add(word)
                    vocab.append(word)

        for text in extra_texts:
            add(text)
        for dataset in datasets:
            for sample in dataset.samples:
                add(sample.text)
        logger.debug(f"Built vocabulary of {len(vocab)} tokens")
        return cls(vocab)

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def token_id(self, token: str) -> int:
        return self._index.get(token, self._index[UNK_TOKEN])

    @property
    def pad_id(self) -> int:
        return self._index[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self._index[UNK_TOKEN]

    @property
    def mask_id(self) -> int:
        return self._index[MASK_TOKEN]

    @property
    def sep_id(self) -> int:
        return self._index[SEP_TOKEN]

    def encode_words(self, words: Iterable[str]) -> List[int]:
        return [self.token_id(w) for w in words]

    def encode(self, text: str) -> List[int]:
        return self.encode_words(split_words(text))

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.vocab[i] for i in ids]

    def to_dict(self) -> Dict:
        return {"vocab": list(self.vocab)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Tokenizer":
        return cls(data["vocab"])


def tokenize_and_truncate(tokenizer: Tokenizer, text: str, max_tokens: int = DEFAULT_MAX_TOKENS) -> List[int]:
    if max_tokens < 1:
        raise ValueError("max_tokens must be at least 1")
    return tokenizer.encode(text)[:max_tokens]


def load_dataset(path: Union[str, Path], format: str = "jsonl", name: Optional[str] = None) -> Dataset:
    """Read a JSONL corpus with required ``text``/``label`` fields and an optional ``id``.

    Records without an id get their 0-based line index. The label set is ordered by
    first occurrence.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported dataset format: {format}")
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"dataset file not found: {path}")
    dataset_name = name or path.stem
    samples: List[Sample] = []
    labels: List[str] = []
    seen_ids = set()
    with path.open(encoding="utf-8") as handle:
        for line_index, line in enumerate(handle):
            if not line.strip():
                continue
            line_number = line_index + 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"invalid JSON: {e.msg}", line=line_number) from None
            if not isinstance(record, dict):
                raise CorpusError("record is not a JSON object", line=line_number)
            for key in ("text", "label"):
                if not isinstance(record.get(key), str):
                    raise CorpusError(f"record lacks a string {key!r} field", line=line_number)
            if not record["label"]:
                raise CorpusError("record has an empty label", line=line_number)
            sample_id = str(record["id"]) if "id" in record else str(line_index)
            if sample_id in seen_ids:
                raise CorpusError(f"duplicate id {sample_id!r}", line=line_number)
            seen_ids.add(sample_id)
            if record["label"] not in labels:
                labels.append(record["label"])
            samples.append(Sample(sample_id, record["text"], record["label"], dataset_name))
    if not samples:
        raise CorpusError(f"dataset file is empty: {path}")
    if len(labels) < 2:
        raise CorpusError(f"dataset {dataset_name!r} has fewer than 2 distinct labels")
    logger.info(f"Loaded {len(samples)} samples with {len(labels)} labels from {path}")
    return Dataset(dataset_name, tuple(samples), tuple(labels))


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    if path.parent:
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for sample in dataset.samples:
            handle.write(json.dumps({"id": sample.id, "text": sample.text, "label": sample.label}) + "\n")
    return path


def _draw_per_label(dataset: Dataset, shots: int, rng: np.random.Generator) -> List[Sample]:
    drawn: List[Sample] = []
    for label, pool in dataset.by_label().items():
        if len(pool) < shots:
            raise InsufficientSamplesError(
                f"label {label!r} of {dataset.name!r} has {len(pool)} samples, {shots} requested"
            )
        for i in rng.choice(len(pool), size=shots, replace=False):
            drawn.append(pool[int(i)])
    return drawn


def sample_episode(dataset: Dataset, shots: int, query_size: Optional[int], seed: int) -> Episode:
    """Draw ``shots`` train samples per label and ``query_size`` queries from the rest.

    ``query_size=None`` uses the entire remainder as the query set.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    rng = np.random.default_rng(seed)
    train = _draw_per_label(dataset, shots, rng)
    chosen = {s.id for s in train}
    remainder = [s for s in dataset.samples if s.id not in chosen]
    if query_size is None:
        query = remainder
    else:
        if query_size < 0:
            raise ValueError("query_size must be non-negative")
        if query_size > len(remainder):
            raise InsufficientSamplesError(
                f"{len(remainder)} samples remain after drawing the train set, {query_size} queries requested"
            )
        query = [remainder[int(i)] for i in rng.choice(len(remainder), size=query_size, replace=False)]
    logger.info(f"Sampled {shots}-shot episode (seed {seed}): {len(train)} train, {len(query)} query")
    return Episode(dataset.name, dataset.label_set, tuple(train), tuple(query), shots, seed)


def inject_label_noise(episode: Episode, m: int, seed: int) -> Episode:
    """Replace the labels of ``m`` train samples with a different label drawn uniformly."""
    if m < 0 or m > len(episode.train):
        raise CorpusError(f"cannot corrupt {m} labels in a train set of {len(episode.train)}")
    if m == 0:
        return episode
    rng = np.random.default_rng(seed)
    positions = sorted(int(i) for i in rng.choice(len(episode.train), size=m, replace=False))
    train = list(episode.train)
    corrupted = dict(episode.corrupted_labels)
    for pos in positions:
        sample = train[pos]
        others = [label for label in episode.label_set if label != sample.label]
        new_label = others[int(rng.integers(len(others)))]
        corrupted.setdefault(sample.id, sample.label)
        train[pos] = replace(sample, label=new_label)
        logger.debug(f"Corrupted label of {sample.id}: {sample.label} -> {new_label}")
    logger.info(f"Injected label noise into {m} train samples")
    return replace(episode, train=tuple(train), corrupted_labels=corrupted)


def mix_ood(episode: Episode, ood_source: Dataset, ood_shots: int, seed: int) -> Episode:
    """Add an ``ood_shots``-per-label draw from another dataset to the training pool."""
    if ood_source.name == episode.dataset_name:
        raise CorpusError(f"cannot mix dataset {ood_source.name!r} into itself")
    if ood_shots < 0:
        raise ValueError("ood_shots must be non-negative")
    if ood_shots == 0:
        return episode
    drawn = _draw_per_label(ood_source, ood_shots, np.random.default_rng(seed))
    logger.info(f"Mixed {len(drawn)} OOD samples from {ood_source.name}")
    return replace(episode, ood_train=episode.ood_train + tuple(drawn))


def synthetic_dataset(
    name: str,
    n_labels: int,
    per_label: int,
    words_per_label: int = 8,
    words_per_text: int = 8,
    seed: int = 0,
) -> Dataset:
    """Generate a corpus whose labels use pairwise-disjoint vocabularies.

    Label names are shared across generated datasets (``topic0``, ``topic1``...) while
    words are prefixed with the dataset name, so two synthetic corpora never share text.
    """
    rng = np.random.default_rng(seed)
    labels = [f"topic{i}" for i in range(n_labels)]
    words = {label: [f"{name}{i}w{j}" for j in range(words_per_label)] for i, label in enumerate(labels)}
    samples = []
    for n in range(per_label):
        for label in labels:
            text = " ".join(words[label][int(j)] for j in rng.integers(words_per_label, size=words_per_text))
            samples.append(Sample(f"{name}-{len(samples)}", text, label, name))
    return Dataset(name, tuple(samples), tuple(labels))


BUILTIN_DATASETS = {
    "synth2": dict(n_labels=2, per_label=100, seed=2),
    "synth4": dict(n_labels=4, per_label=100, seed=4),
    "synth10": dict(n_labels=10, per_label=40, seed=10),
}


def builtin_dataset(name: str) -> Dataset:
    if name not in BUILTIN_DATASETS:
        raise CorpusError(f"unknown builtin dataset {name!r}; choose from {sorted(BUILTIN_DATASETS)}")
    return synthetic_dataset(name, **BUILTIN_DATASETS[name])


def resolve_dataset(location: str, name: Optional[str] = None) -> Dataset:
    """Load ``builtin:<name>`` corpora from the generator and anything else from JSONL."""
    if location.startswith("builtin:"):
        return builtin_dataset(location.split(":", 1)[1])
    return load_dataset(location, name=name)
