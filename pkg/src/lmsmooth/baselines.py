"""Reference estimators: initial counts (add-k) and Good-Turing."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .base import BigramLanguageModel, check_counts
from .counts import CountTable
from .exceptions import DegenerateVocabulary, UndefinedClass


def _possible_sizes(counts: CountTable) -> tuple[int, int]:
    present = counts.unigram > 0
    w_ctx = int((present & counts.vocab.context_mask).sum())
    w_out = int((present & counts.vocab.outcome_mask).sum())
    return w_ctx, w_out


def addk_joint(counts: CountTable, k: float = 1.0) -> dict:
    """Joint bigram probabilities (k + F_ji) / sum(k + F_j'i') over every possible bigram.

    Possible bigrams pair a context (any token but ``</s>``) with an outcome
    (any token but ``<s>``). Returns a dict with the probability of each
    observed bigram under ``"seen"`` and the shared probability of an unseen
    one under ``"unseen"``.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    w_ctx, w_out = _possible_sizes(counts)
    denom = k * w_ctx * w_out + counts.n_bigrams
    toks = counts.vocab.tokens
    seen = {(toks[j], toks[i]): (k + c) / denom for j, i, c in counts.bigram_items()}
    return {"seen": seen, "unseen": k / denom, "n_possible": w_ctx * w_out}


class AddKLM(BigramLanguageModel):
    """Row-conditional add-k model q(i | j) = (k + F_ji) / (k W_out + F_j)."""

    def __init__(self, k=1.0):
        self.k = k

    def fit(self, X, y=None):
        return self.fit_counts(check_counts(X))

    def fit_counts(self, counts: CountTable):
        if not self.k > 0:
            raise ValueError("k must be positive")
        self.counts_ = counts
        self.n_outcomes_ = _possible_sizes(counts)[1]
        return self

    def _pair_probs(self, j_ids, i_ids):
        check_is_fitted(self, "counts_")
        c = self.counts_
        F_ji = np.asarray(c.bigram[j_ids, i_ids]).ravel() if len(j_ids) else np.zeros(0)
        return (self.k + F_ji) / (self.k * self.n_outcomes_ + c.unigram[j_ids])

    def transition_matrix(self) -> np.ndarray:
        check_is_fitted(self, "counts_")
        c = self.counts_
        Q = (self.k + c.bigram.toarray()) / (self.k * self.n_outcomes_ + c.unigram[:, None])
        Q[~c.vocab.context_mask, :] = 0.0
        Q[:, ~c.vocab.outcome_mask] = 0.0
        return Q


def addk_cond(counts: CountTable, k: float = 1.0) -> AddKLM:
    return AddKLM(k).fit_counts(counts)


@dataclass(frozen=True)
class GoodTuringTable:
    """Frequencies of frequencies for bigram counts.

    ``n_r[r]`` is the number of distinct bigrams seen exactly r times,
    ``N`` the number of bigram events and ``N0`` the number of possible
    bigrams never seen.
    """

    n_r: dict
    N: int
    N0: int

    def _nr(self, r: int) -> int:
        return self.n_r.get(r, 0)

    def p_r(self, r: int) -> float:
        """Probability of one bigram seen r >= 1 times: (r + 1) N_{r+1} / (N_r N)."""
        return float(self.p_r_exact(r))

    def p_r_exact(self, r: int) -> Fraction:
        if r < 1:
            raise ValueError("use p_unseen for r = 0")
        if self._nr(r) == 0:
            raise UndefinedClass(f"no bigram has count {r}")
        if self._nr(r + 1) == 0:
            raise UndefinedClass(f"N_{r + 1} = 0, so the estimate for count {r} is undefined")
        return Fraction((r + 1) * self._nr(r + 1), self._nr(r) * self.N)

    def p_unseen(self) -> float:
        return float(self.p_unseen_exact())

    def p_unseen_exact(self) -> Fraction:
        """Probability of each unseen bigram: N_1 / (N_0 N)."""
        n1 = self._nr(1)
        if self.N0 == 0:
            if n1 > 0:
                raise DegenerateVocabulary("every possible bigram was seen but N_1 > 0")
            return Fraction(0)
        if self.N == 0:
            raise DegenerateVocabulary("no bigram events")
        return Fraction(n1, self.N0 * self.N)

    def class_mass(self, r: int) -> Fraction:
        """Total probability of all bigrams seen r times: (r + 1) N_{r+1} / N."""
        return Fraction((r + 1) * self._nr(r + 1), self.N)

    def to_lines(self) -> list[str]:
        lines = [f"{r} {n}" for r, n in sorted(self.n_r.items())]
        return lines + [f"N0 {self.N0}", f"N {self.N}"]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.to_lines()) + "\n")


def good_turing(counts: CountTable) -> GoodTuringTable:
    data = counts.bigram.data
    n_r = dict(sorted(Counter(int(c) for c in data).items()))
    w_ctx, w_out = _possible_sizes(counts)
    return GoodTuringTable(n_r, int(data.sum()), w_ctx * w_out - int(data.size))
