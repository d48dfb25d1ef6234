"""MetricPrompt - few-shot text classification as text-pair relevance estimation."""
from .corpus import Dataset, Episode, Sample, Tokenizer, inject_label_noise, load_dataset, mix_ood, sample_episode
from .errors import MetricPromptError
from .experiment import RunConfig, run_experiment, run_sweep
from .pooling import PoolingMethod, ScoreMatrix, classify
from .prompting import DEFAULT_TEMPLATE, PromptTemplate, build_query_pairs, build_training_pairs
from .scorer import LexicalOverlapScorer, TinyMLMScorer, train

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TEMPLATE",
    "Dataset",
    "Episode",
    "LexicalOverlapScorer",
    "MetricPromptError",
    "PoolingMethod",
    "PromptTemplate",
    "RunConfig",
    "Sample",
    "ScoreMatrix",
    "TinyMLMScorer",
    "Tokenizer",
    "build_query_pairs",
    "build_training_pairs",
    "classify",
    "inject_label_noise",
    "load_dataset",
    "mix_ood",
    "run_experiment",
    "run_sweep",
    "sample_episode",
    "train",
]
