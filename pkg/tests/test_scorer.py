import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from metricprompt.corpus import Sample, Tokenizer, builtin_dataset, sample_episode
from metricprompt.errors import ScorerError
from metricprompt.prompting import DEFAULT_TEMPLATE, PromptedPair, PromptTemplate, build_training_pairs, render_pair
from metricprompt.scorer import (
    BinomialRelevance,
    LexicalOverlapScorer,
    MetaVerbalizer,
    TinyMLMConfig,
    TinyMLMScorer,
    TrainingConfig,
    VocabDistribution,
    delta,
    grad_check,
    grad_check_tensors,
    load_checkpoint,
    meta_verbalize,
    pair_accuracy,
    pair_loss,
    save_checkpoint,
    score_matrix,
    train,
)


@pytest.fixture(scope="module")
def dataset():
    return builtin_dataset("synth2")


@pytest.fixture(scope="module")
def tokenizer(dataset):
    return Tokenizer.build([dataset], extra_texts=[PromptTemplate.literal_text(DEFAULT_TEMPLATE)])


@pytest.fixture(scope="module")
def template(tokenizer):
    return PromptTemplate(DEFAULT_TEMPLATE, tokenizer)


@pytest.fixture(scope="module")
def episode(dataset):
    return sample_episode(dataset, shots=4, query_size=20, seed=1)


@pytest.fixture(scope="module")
def training_pairs(episode, template):
    return build_training_pairs(episode, template)


def small_config(tokenizer, **overrides):
    values = dict(vocab_size=len(tokenizer), width=64, blocks=2, heads=2, max_length=64)
    values.update(overrides)
    return TinyMLMConfig(**values)


def zeroed_scorer(tokenizer, aggregate="probs"):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0, aggregate=aggregate)
    with torch.no_grad():
        for param in scorer.model.parameters():
            param.zero_()
    return scorer


def distribution(tokenizer, masses):
    probs = np.zeros(len(tokenizer))
    for word, mass in masses.items():
        probs[tokenizer.token_id(word)] = mass
    return VocabDistribution(probs)


def test_meta_verbalize_examples(tokenizer):
    mv = MetaVerbalizer.from_tokenizer(tokenizer)
    assert meta_verbalize(distribution(tokenizer, {"relevant": 1.0}), mv) == BinomialRelevance(1.0, 0.0)
    equal = {w: 1 / 6 for w in ("relevant", "similar", "consistent", "irrelevant", "inconsistent", "different")}
    rel = meta_verbalize(distribution(tokenizer, equal), mv)
    assert rel.p1 == pytest.approx(0.5)
    mixed = {"relevant": 0.3, "similar": 0.2, "consistent": 0.1, "irrelevant": 0.2, "inconsistent": 0.1, "different": 0.1}
    rel = meta_verbalize(distribution(tokenizer, mixed), mv)
    assert rel.p1 == pytest.approx(0.6)
    assert rel.p0 == pytest.approx(0.4)


def test_meta_verbalize_rejects_degenerate_distribution(tokenizer):
    mv = MetaVerbalizer.from_tokenizer(tokenizer)
    with pytest.raises(ScorerError):
        meta_verbalize(distribution(tokenizer, {"[UNK]": 1.0}), mv)


def test_meta_verbalize_depends_only_on_aggregate_ratio(tokenizer):
    mv = MetaVerbalizer.from_tokenizer(tokenizer)
    rng = np.random.default_rng(0)
    for _ in range(20):
        probs = rng.random(len(tokenizer))
        probs /= probs.sum()
        before = delta(meta_verbalize(VocabDistribution(probs), mv))
        extra = probs.copy()
        extra[tokenizer.unk_id] += rng.random() * 5
        extra /= extra.sum()
        assert delta(meta_verbalize(VocabDistribution(extra), mv)) == pytest.approx(before, abs=1e-12)


def test_swapped_verbalizer_negates_delta(tokenizer):
    mv = MetaVerbalizer.from_tokenizer(tokenizer)
    rng = np.random.default_rng(1)
    probs = rng.random(len(tokenizer))
    dist = VocabDistribution(probs / probs.sum())
    for aggregate in ("probs", "logits"):
        assert delta(meta_verbalize(dist, mv.swapped(), aggregate)) == pytest.approx(
            -delta(meta_verbalize(dist, mv, aggregate)), abs=1e-12
        )


def test_logit_aggregation_of_equal_logits(tokenizer):
    mv = MetaVerbalizer.from_tokenizer(tokenizer)
    n = len(tokenizer)
    dist = VocabDistribution(np.full(n, 1 / n), logits=np.zeros(n))
    assert meta_verbalize(dist, mv, "logits").p1 == pytest.approx(0.5)


def test_verbalizer_rejects_overlap():
    with pytest.raises(ValueError):
        MetaVerbalizer((1, 2), (2, 3))


@pytest.mark.parametrize("rel, expected", [
    (BinomialRelevance(1.0, 0.0), 1.0),
    (BinomialRelevance(0.5, 0.5), 0.0),
    (BinomialRelevance(0.6, 0.4), 0.2),
])
def test_delta(rel, expected):
    assert delta(rel) == pytest.approx(expected)


def test_binomial_relevance_must_sum_to_one():
    with pytest.raises(ValueError):
        BinomialRelevance(0.7, 0.7)


def test_lexical_scorer_self_pair_and_symmetry(template, dataset):
    scorer = LexicalOverlapScorer(template.tokenizer.unk_id)
    a = template.encode_text(dataset.samples[0].text)
    b = template.encode_text(dataset.samples[2].text)
    c = template.encode_text(dataset.samples[1].text)
    assert scorer.score_pairs([render_pair(template, a, a)])[0] == 1.0
    forward, backward = scorer.score_pairs([render_pair(template, a, b), render_pair(template, b, a)])
    assert forward == backward
    assert scorer.score_pairs([render_pair(template, a, c)])[0] == 0.0
    assert scorer.calls == 4


def test_lexical_scorer_ignores_unknown_words(template):
    scorer = LexicalOverlapScorer(template.tokenizer.unk_id)
    unknown = template.encode_text("nowhere nothing")
    assert scorer.score_pairs([render_pair(template, unknown, unknown)])[0] == 0.0


def test_lexical_pair_accuracy_on_disjoint_corpus(training_pairs, template):
    assert pair_accuracy(LexicalOverlapScorer(template.tokenizer.unk_id), training_pairs) == 1.0


def test_f_vocab_is_normalized_positive_and_deterministic(tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=3)
    first = scorer.f_vocab(training_pairs[0])
    second = scorer.f_vocab(training_pairs[0])
    assert first.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(first.probs > 0)
    assert np.array_equal(first.probs, second.probs)


def test_tiny_scorer_rejects_long_sequences(tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer, max_length=16), seed=0)
    with pytest.raises(ScorerError, match="exceeds"):
        scorer.score_pairs(training_pairs[:1])


def test_tiny_scorer_rejects_out_of_vocab_ids(tokenizer):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0)
    pair = PromptedPair((len(tokenizer), tokenizer.mask_id), 1, "x", "y", (0, 1), (1, 1))
    with pytest.raises(ScorerError, match="outside the vocabulary"):
        scorer.score_pairs([pair])


def test_create_is_seeded(tokenizer):
    first = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=5).params.tensors
    second = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=5).params.tensors
    assert all(torch.equal(first[name], second[name]) for name in first)


@pytest.mark.parametrize("aggregate", ["probs", "logits"])
def test_uniform_prediction_loss_is_ln2(tokenizer, training_pairs, aggregate):
    scorer = zeroed_scorer(tokenizer, aggregate)
    assert pair_loss(scorer, training_pairs[:8]) == pytest.approx(math.log(2), abs=1e-6)


def test_perfect_prediction_loss_is_zero(tokenizer, training_pairs):
    scorer = zeroed_scorer(tokenizer)
    with torch.no_grad():
        scorer.model.output_bias[tokenizer.token_id("relevant")] = 1e4
    positives = [p for p in training_pairs if p.y == 1][:4]
    assert pair_loss(scorer, positives) == pytest.approx(0.0, abs=1e-6)
    assert delta(scorer.relevance(positives[:1])[0]) == pytest.approx(1.0)


def test_loss_is_mean_of_pair_losses(tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=2)
    batch = training_pairs[:6]
    individual = [pair_loss(scorer, [pair]) for pair in batch]
    assert pair_loss(scorer, batch) == pytest.approx(float(np.mean(individual)), rel=1e-5)
    assert all(value >= 0 for value in individual)


def test_loss_requires_labels(tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0)
    unlabeled = [PromptedPair(p.tokens, p.mask_position, p.left_id, p.right_id, p.a_span, p.b_span) for p in training_pairs[:2]]
    with pytest.raises(ScorerError):
        pair_loss(scorer, unlabeled)
    with pytest.raises(ScorerError):
        train(scorer, unlabeled, TrainingConfig(epochs=1))
    with pytest.raises(ScorerError):
        train(scorer, [], TrainingConfig(epochs=1))


@pytest.mark.parametrize("aggregate", ["probs", "logits"])
def test_grad_check_float64(tokenizer, training_pairs, aggregate):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0, aggregate=aggregate)
    batch = [training_pairs[0], training_pairs[1], training_pairs[9], training_pairs[20]]
    errors = grad_check_tensors(scorer, batch, h=1e-5)
    assert {"token_embedding.weight", "position_embedding.weight", "blocks.0.qkv.weight",
            "blocks.1.ff_out.weight", "output_bias"} <= set(errors)
    assert max(errors.values()) < 1e-4
    assert grad_check(scorer, batch, h=5e-6) < 1e-4


def test_train_is_deterministic_and_leaves_input_untouched(tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0)
    before = scorer.params.tensors
    config = TrainingConfig.toy(epochs=2, seed=4)
    first = train(scorer, training_pairs, config)
    second = train(scorer, training_pairs, config)
    assert first.loss_trace == second.loss_trace
    assert first.steps == 2 * math.ceil(len(training_pairs) / config.batch_size)
    trained_a, trained_b = first.scorer.params.tensors, second.scorer.params.tensors
    assert all(torch.equal(trained_a[name], trained_b[name]) for name in trained_a)
    assert all(torch.equal(before[name], scorer.params.tensors[name]) for name in before)


def test_train_reports_non_finite_loss_step(tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0)
    with torch.no_grad():
        scorer.model.output_bias[0] = float("nan")
    with pytest.raises(ScorerError, match="step 0"):
        train(scorer, training_pairs, TrainingConfig(epochs=1))


@pytest.fixture(scope="module")
def overfit(tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0)
    return train(scorer, training_pairs, TrainingConfig.toy(epochs=300, seed=0))


def test_overfits_separable_corpus(overfit, training_pairs):
    """A 2-class 4-shot vocabulary-disjoint corpus is learned to near-perfect pair accuracy."""
    assert pair_accuracy(overfit.scorer, training_pairs) >= 0.99
    late = overfit.loss_trace[len(overfit.loss_trace) // 2:]
    assert all(later <= earlier + 1e-3 for earlier, later in zip(late, late[1:]))


def duplicate_queries(train_samples):
    return tuple(Sample(f"dup-{s.id}", s.text, s.label, s.dataset_tag) for s in train_samples)


def test_duplicate_query_scores_highest_on_its_own_train_sample(overfit, template, episode):
    by_label = {}
    for sample in episode.train:
        by_label.setdefault(sample.label, sample)
    singles = tuple(by_label.values())
    matrix = score_matrix(overfit.scorer, replace(episode, train=singles, query=duplicate_queries(singles)), template)
    assert list(np.argmax(matrix.scores, axis=1)) == list(range(len(singles)))


def test_duplicate_query_prefers_its_own_label(overfit, template, episode):
    # every same-label column is a positive of the pair objective, so only the label block ranks first
    matrix = score_matrix(overfit.scorer, replace(episode, query=duplicate_queries(episode.train)), template)
    labels = np.array(matrix.train_labels)
    for row, sample in enumerate(episode.train):
        self_score = matrix.scores[row, row]
        assert self_score > 0
        assert np.all(self_score > matrix.scores[row, labels != sample.label])
        assert labels[np.argmax(matrix.scores[row])] == sample.label


def test_score_matrix_shape_range_and_duplicate_rows(tokenizer, template, episode):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=1)
    twin = Sample("twin", episode.query[0].text, episode.query[0].label, episode.query[0].dataset_tag)
    with_twin = replace(episode, query=episode.query + (twin,))
    matrix = score_matrix(scorer, with_twin, template)
    assert matrix.shape == (len(episode.query) + 1, len(episode.train))
    assert np.all(np.abs(matrix.scores) <= 1)
    assert np.array_equal(matrix.scores[0], matrix.scores[-1])
    assert matrix.train_ids == tuple(s.id for s in episode.train)


def test_training_config_presets():
    parity = TrainingConfig.full_scale(epochs=120)
    assert (parity.learning_rate, parity.batch_size, parity.weight_decay) == (1e-5, 16, 0.01)
    assert TrainingConfig.toy(epochs=5).learning_rate == 1e-3
    with pytest.raises(ValueError):
        TrainingConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainingConfig(epochs=0)


def test_tiny_config_validates_heads():
    with pytest.raises(ValueError):
        TinyMLMConfig(vocab_size=20, width=10, heads=3)


def test_checkpoint_round_trip(tmp_path, tokenizer, training_pairs):
    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=7, aggregate="logits")
    path = save_checkpoint(scorer, tmp_path / "ckpt" / "checkpoint.pt", metadata={"seed": 7})
    loaded, metadata = load_checkpoint(path)
    assert metadata == {"seed": 7}
    assert loaded.aggregate == "logits"
    assert loaded.tokenizer.vocab == tokenizer.vocab
    assert np.array_equal(loaded.score_pairs(training_pairs[:5]), scorer.score_pairs(training_pairs[:5]))


def test_checkpoint_rejects_foreign_and_mismatched_files(tmp_path, tokenizer):
    foreign = tmp_path / "foreign.pt"
    torch.save({"weights": 1}, foreign)
    with pytest.raises(ScorerError, match="not a"):
        load_checkpoint(foreign)

    scorer = TinyMLMScorer.create(tokenizer, small_config(tokenizer), seed=0)
    path = save_checkpoint(scorer, tmp_path / "bad.pt")
    data = torch.load(path)
    data["config"]["width"] = 32
    torch.save(data, path)
    with pytest.raises(ScorerError, match="do not match"):
        load_checkpoint(path)
