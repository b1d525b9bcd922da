"""Bigram language models smoothed by deleted interpolation and Dirichlet priors."""

__version__ = "0.1.0"

from .baselines import AddKLM, GoodTuringTable, addk_cond, addk_joint, good_turing
from .counts import (CountTable, DirichletStats, FreqView, Vocabulary, count_block,
                     dirichlet_stats, freqs, leave_one_out, merge_counts)
from .deleted_estimation import DeletedEstimationLM, LambdaBuckets, LambdaModel
from .dirichlet import DirichletLM, DirichletModel, digamma, k_alpha, solve_u
from .evaluation import EvalReport, compare, corpus_logprob, perplexity
from .textprep import (TokenizerRules, dedup, filter_oov, half_sample, split_blocks,
                       tokenize_sentence)

__all__ = [
    "AddKLM", "CountTable", "DeletedEstimationLM", "DirichletLM", "DirichletModel",
    "DirichletStats", "EvalReport", "FreqView", "GoodTuringTable", "LambdaBuckets",
    "LambdaModel", "TokenizerRules", "Vocabulary", "addk_cond", "addk_joint", "compare",
    "corpus_logprob", "count_block", "dedup", "digamma", "dirichlet_stats", "filter_oov",
    "freqs", "good_turing", "half_sample", "k_alpha", "leave_one_out", "merge_counts",
    "perplexity", "solve_u", "split_blocks", "tokenize_sentence",
]
