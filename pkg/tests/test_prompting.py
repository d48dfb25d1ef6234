from dataclasses import replace

import numpy as np
import pytest

from metricprompt.corpus import Sample, Tokenizer, mix_ood, sample_episode, synthetic_dataset
from metricprompt.errors import TemplateError
from metricprompt.prompting import (
    DEFAULT_TEMPLATE,
    PromptTemplate,
    build_pairs,
    build_query_pairs,
    build_training_pairs,
    pair_label,
    render_pair,
)


@pytest.fixture
def dataset():
    return synthetic_dataset("prompt", n_labels=4, per_label=30, seed=1)


@pytest.fixture
def template(dataset):
    ood = synthetic_dataset("ood", n_labels=4, per_label=10, seed=2)
    tokenizer = Tokenizer.build([dataset, ood], extra_texts=[PromptTemplate.literal_text(DEFAULT_TEMPLATE)])
    return PromptTemplate(DEFAULT_TEMPLATE, tokenizer)


def test_pair_label():
    a = Sample("1", "x", "sports", "agnews")
    assert pair_label(a, a) == 1
    assert pair_label(a, Sample("2", "y", "sports", "yahoo")) == 0
    assert pair_label(a, Sample("3", "z", "business", "agnews")) == 0


@pytest.mark.parametrize("pattern", [
    "{a} [SEP] {b}",
    "{a} [MASK] [MASK] {b}",
    "{a} {a} [MASK] {b}",
    "[MASK] {a}",
])
def test_template_requires_each_placeholder_once(pattern, template):
    with pytest.raises(TemplateError):
        PromptTemplate(pattern, template.tokenizer)


def test_render_empty_sides_gives_template_literals(template):
    tokenizer = template.tokenizer
    pair = render_pair(template, [], [])
    assert tokenizer.decode(pair.tokens) == ["[SEP]", "a", "news", "of", "[MASK]", "topic"]
    assert pair.tokens[pair.mask_position] == tokenizer.mask_id
    assert template.literal_length == 6


def test_render_full_sides_length(template):
    side = [template.tokenizer.unk_id] * 120
    pair = render_pair(template, side, side)
    assert len(pair.tokens) == 240 + template.literal_length
    assert template.max_length == len(pair.tokens)


def test_render_rejects_untruncated_sides(template):
    with pytest.raises(TemplateError):
        render_pair(template, [template.tokenizer.unk_id] * 121, [])


def test_render_is_position_asymmetric(template):
    a = template.encode_text("relevant similar")
    b = template.encode_text("different")
    first = render_pair(template, a, b)
    second = render_pair(template, b, a)
    assert first.tokens != second.tokens
    assert first.a_tokens == tuple(a)
    assert first.b_tokens == tuple(b)
    assert render_pair(template, a, b) == first


def test_training_pairs_count_and_self_pairs(dataset, template):
    episode = sample_episode(dataset, shots=2, query_size=4, seed=0)
    pairs = build_training_pairs(episode, template)
    assert len(pairs) == 64
    self_pairs = [p for p in pairs if p.left_id == p.right_id]
    assert len(self_pairs) == 8
    assert all(p.y == 1 for p in self_pairs)
    assert sum(p.y for p in pairs) == 4 * 2 * 2


def test_training_pairs_row_major_order(dataset, template):
    episode = sample_episode(dataset, shots=1, query_size=2, seed=4)
    pairs = build_training_pairs(episode, template)
    ids = [s.id for s in episode.train]
    assert [(p.left_id, p.right_id) for p in pairs] == [(a, b) for a in ids for b in ids]


def test_one_shot_positives_are_self_pairs(dataset, template):
    episode = sample_episode(dataset, shots=1, query_size=2, seed=0)
    pairs = build_training_pairs(episode, template)
    positives = [(p.left_id, p.right_id) for p in pairs if p.y == 1]
    assert sorted(positives) == sorted((s.id, s.id) for s in episode.train)


def test_training_pairs_with_ood(dataset, template):
    ood = synthetic_dataset("ood", n_labels=4, per_label=10, seed=2)
    episode = mix_ood(sample_episode(dataset, 2, 4, seed=0), ood, 2, seed=0)
    pairs = build_training_pairs(episode, template)
    assert len(pairs) == 256
    pool = list(episode.train) + list(episode.ood_train)
    for pair, (a, b) in zip(pairs, [(a, b) for a in pool for b in pool]):
        assert (pair.left_id, pair.right_id) == (a.id, b.id)
        assert pair.y == pair_label(a, b)


def test_query_pairs_exclude_ood(dataset, template):
    ood = synthetic_dataset("ood", n_labels=4, per_label=40, seed=2)
    episode = sample_episode(dataset, 2, 100, seed=0)
    assert len(build_query_pairs(episode, template)) == 800
    mixed = mix_ood(episode, ood, 40, seed=0)
    assert len(mixed.ood_train) == 160
    pairs = build_query_pairs(mixed, template)
    assert len(pairs) == 800
    assert pairs[0].left_id == episode.query[0].id
    assert pairs[0].right_id == episode.train[0].id
    assert all(p.y is None for p in pairs)


def test_minimal_query_pair(dataset, template):
    episode = sample_episode(dataset, 1, 1, seed=0)
    single = replace(episode, train=episode.train[:1])
    pairs = build_query_pairs(single, template)
    assert len(pairs) == 1
    assert pairs[0].y is None


def test_pair_count_identities(dataset, template):
    """Pair counts follow (n*k + |ood|)^2 for training and |query| * n*k for queries."""
    rng = np.random.default_rng(0)
    ood = synthetic_dataset("ood", n_labels=4, per_label=10, seed=2)
    for _ in range(50):
        shots = int(rng.integers(1, 5))
        query_size = int(rng.integers(1, 20))
        ood_shots = int(rng.integers(0, 3))
        episode = sample_episode(dataset, shots, query_size, seed=int(rng.integers(1000)))
        episode = mix_ood(episode, ood, ood_shots, seed=1)
        n_train = 4 * shots
        assert len(build_training_pairs(episode, template)) == (n_train + len(episode.ood_train)) ** 2
        assert len(build_query_pairs(episode, template)) == query_size * n_train


def test_build_pairs_reuses_row_encodings(dataset, template):
    rows = dataset.samples[:3]
    pairs = build_pairs(rows, rows, template)
    assert pairs[1].a_tokens == pairs[0].a_tokens
    assert pairs[3].b_tokens == pairs[0].b_tokens
