"""Estimator base class and input validation shared by the bigram models."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .counts import BOS_ID, EOS_ID, CountTable, Vocabulary, count_block
from .exceptions import OovError
from .textprep import BOS, EOS, check_sentence


def check_sentences(X) -> list[tuple]:
    """Validate an iterable of token sequences and return them as tuples."""
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a sequence of sentences, got a string")
    return [check_sentence(s) for s in X]


def check_counts(counts) -> CountTable:
    if isinstance(counts, CountTable):
        return counts
    return count_block(check_sentences(counts))


class BigramLanguageModel(BaseEstimator):
    """Common interface: ``fit`` on sentences, then query q(i | j).

    Subclasses set ``counts_`` and implement ``_pair_probs`` over vocabulary
    ids. ``score`` returns the mean log2 probability per bigram event, so
    higher is better, as scikit-learn expects.
    """

    def _pair_probs(self, j_ids: np.ndarray, i_ids: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def vocabulary_(self) -> Vocabulary:
        check_is_fitted(self, "counts_")
        return self.counts_.vocab

    def _ids(self, js: Sequence[str], is_: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        index = self.vocabulary_.index
        try:
            j_ids = np.fromiter((index[t] for t in js), dtype=np.int64, count=len(js))
            i_ids = np.fromiter((index[t] for t in is_), dtype=np.int64, count=len(is_))
        except KeyError as exc:
            raise OovError(f"token {exc.args[0]!r} is not in the model vocabulary") from None
        if (j_ids == EOS_ID).any():
            raise ValueError(f"{EOS} cannot be a context")
        if (i_ids == BOS_ID).any():
            raise ValueError(f"{BOS} cannot be predicted")
        return j_ids, i_ids

    def pair_probs(self, js: Sequence[str], is_: Sequence[str]) -> np.ndarray:
        """Vectorized q(i | j) for parallel sequences of context and outcome tokens."""
        j_ids, i_ids = self._ids(list(js), list(is_))
        return self._pair_probs(j_ids, i_ids)

    def prob(self, j: str, i: str) -> float:
        return float(self.pair_probs([j], [i])[0])

    def transition_matrix(self) -> np.ndarray:
        """Dense W x W matrix ``Q[j, i] = q(i | j)``; the ``</s>`` row and ``<s>`` column are 0."""
        W = len(self.vocabulary_)
        ctx = np.flatnonzero(self.vocabulary_.context_mask)
        out = np.flatnonzero(self.vocabulary_.outcome_mask)
        jj, ii = np.meshgrid(ctx, out, indexing="ij")
        Q = np.zeros((W, W))
        Q[jj, ii] = self._pair_probs(jj.ravel(), ii.ravel()).reshape(jj.shape)
        return Q

    def logprob(self, X) -> tuple[float, int]:
        from .evaluation import corpus_logprob
        return corpus_logprob(self, X)

    def perplexity(self, X) -> float:
        from .evaluation import perplexity
        return perplexity(*self.logprob(X))

    def score(self, X, y=None) -> float:
        lp, n = self.logprob(X)
        return lp / n
