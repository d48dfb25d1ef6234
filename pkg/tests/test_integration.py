"""End-to-end runs over the builtin corpora."""
from dataclasses import replace

import pytest

from metricprompt.analysis import accuracy
from metricprompt.corpus import Tokenizer, builtin_dataset, sample_episode
from metricprompt.experiment import RunConfig, run_experiment
from metricprompt.pooling import PoolingMethod, classify_matrix
from metricprompt.prompting import DEFAULT_TEMPLATE, PromptTemplate, build_training_pairs
from metricprompt.scorer import TinyMLMConfig, TinyMLMScorer, TrainingConfig, score_matrix, train


def test_lexical_scorer_separates_disjoint_vocabularies(tmp_path):
    config = RunConfig(dataset="builtin:synth4", shots=4, query_size=200, seeds=(1, 2, 3), output_dir=str(tmp_path))
    report = run_experiment(config)
    assert len(report.per_seed_accuracy) == 3
    assert report.mean_accuracy >= 0.95


@pytest.mark.parametrize("pooling", ["mean", "max", "knn"])
def test_every_pooling_method_classifies_synthetic_corpus(tmp_path, pooling):
    config = RunConfig(dataset="builtin:synth4", shots=4, query_size=100, seeds=(1,), pooling=pooling,
                       output_dir=str(tmp_path))
    assert run_experiment(config).mean_accuracy >= 0.9


def test_trained_scorer_classifies_synthetic_corpus(tmp_path):
    config = RunConfig(dataset="builtin:synth4", shots=4, query_size=200, seeds=(1, 2, 3), scorer="tiny-mlm",
                       width=32, blocks=1, heads=2, epochs=60, max_tokens=16, output_dir=str(tmp_path))
    report = run_experiment(config)
    assert report.mean_accuracy >= 0.9


def test_trained_scorer_learns_relevance():
    dataset = builtin_dataset("synth4")
    tokenizer = Tokenizer.build([dataset], extra_texts=[PromptTemplate.literal_text(DEFAULT_TEMPLATE)])
    template = PromptTemplate(DEFAULT_TEMPLATE, tokenizer, max_tokens=16)
    episode = sample_episode(dataset, 4, 100, seed=1)
    scorer = TinyMLMScorer.create(
        tokenizer, TinyMLMConfig(len(tokenizer), width=32, blocks=1, heads=2, max_length=64), seed=1
    )
    result = train(scorer, build_training_pairs(episode, template), TrainingConfig.toy(epochs=60, seed=1))
    assert result.loss_trace[-1] < result.loss_trace[0]
    predictions = classify_matrix(score_matrix(result.scorer, episode, template), PoolingMethod("mean"))
    assert accuracy(predictions, {s.id: s.label for s in episode.query}) >= 0.8


def test_runs_are_byte_for_byte_reproducible(tmp_path):
    config = RunConfig(dataset="builtin:synth4", shots=2, query_size=30, seeds=(1, 2), noise=1, pivot_p=1,
                       ood=("builtin:synth2",), ood_shots=2)
    first = replace(config, output_dir=str(tmp_path / "first"))
    second = replace(config, output_dir=str(tmp_path / "second"))
    assert run_experiment(first) == run_experiment(second)
    first_dir = tmp_path / "first" / config.config_hash()
    second_dir = tmp_path / "second" / config.config_hash()
    compared = ["report.json", "report.txt", "config.json", "score_profile.csv", "class_sizes.csv"]
    for seed in (1, 2):
        compared += [f"seed-{seed}/{name}" for name in
                     ("episode.json", "scores.csv", "predictions-mean.csv", "pivots.json", "pivot-predictions-mean.csv")]
    for name in compared:
        assert (first_dir / name).read_bytes() == (second_dir / name).read_bytes(), name


def test_tiny_mlm_runs_are_reproducible(tmp_path):
    config = RunConfig(dataset="builtin:synth2", shots=1, query_size=6, scorer="tiny-mlm", width=16, blocks=1,
                       heads=2, epochs=2, max_tokens=16)
    first = run_experiment(replace(config, output_dir=str(tmp_path / "a")))
    second = run_experiment(replace(config, output_dir=str(tmp_path / "b")))
    assert first == second
    name = f"{config.config_hash()}/seed-1/scores.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
