import json
import math

import numpy as np
import pytest

from corpora import random_corpus
from lmsmooth.baselines import AddKLM
from lmsmooth.counts import count_block
from lmsmooth.deleted_estimation import DeletedEstimationLM
from lmsmooth.dirichlet import DirichletLM
from lmsmooth.evaluation import (compare, corpus_logprob, format_probs, perplexity,
                                 score_sample)
from lmsmooth.exceptions import EmptyTest, OovError


class TableModel:
    """q(i | j) from a dict, default ``fallback``."""

    def __init__(self, table, fallback=0.0):
        self.table, self.fallback = table, fallback

    def pair_probs(self, js, is_):
        return np.array([self.table.get((j, i), self.fallback) for j, i in zip(js, is_)])


class TestLogprob:
    def test_uniform(self):
        test = random_corpus(0, 7, 300)
        lp, n = corpus_logprob(TableModel({}, 1 / 8), test)
        assert n == sum(len(s) - 1 for s in test)
        assert lp == pytest.approx(-n * 3)
        assert perplexity(lp, n) == pytest.approx(8.0, abs=1e-9)

    def test_worked(self):
        m = TableModel({("<s>", "a"): 0.5, ("a", "</s>"): 0.5})
        lp, n = corpus_logprob(m, [("<s>", "a", "</s>")])
        assert (lp, n) == (-2.0, 2)
        assert perplexity(lp, n) == 2.0

    def test_zero_probability(self):
        m = TableModel({("<s>", "a"): 1.0})
        r = score_sample(m, [("<s>", "a", "</s>")])
        assert r.log2_prob == -math.inf and r.perplexity == math.inf
        assert r.zero_prob_bigrams == [("a", "</s>")]

    def test_empty(self):
        with pytest.raises(EmptyTest):
            perplexity(0.0, 0)

    def test_replication_invariance(self):
        assert perplexity(3 * -17.5, 3 * 9) == pytest.approx(perplexity(-17.5, 9), rel=1e-15)

    def test_no_underflow(self):
        lp, n = corpus_logprob(TableModel({}, 1e-300), [("<s>",) + ("x",) * 999 + ("</s>",)] * 10)
        assert n == 10000 and math.isfinite(lp)
        assert perplexity(lp, n) == pytest.approx(1e300, rel=1e-9)

    def test_order_independent(self):
        test = random_corpus(1, 10, 500)
        m = TableModel({}, 0.1)
        assert corpus_logprob(m, test) == corpus_logprob(m, test[::-1])

    def test_oov(self):
        est = AddKLM().fit(random_corpus(0, 5, 200))
        with pytest.raises(OovError):
            corpus_logprob(est, [("<s>", "zzz", "</s>")])
        r = score_sample(est, [("<s>", "zzz", "</s>")] + random_corpus(1, 5, 50),
                         vocab=est.vocabulary_)
        assert r.oov_sentences_skipped == 1


class TestCompare:
    def test_report(self):
        train = random_corpus(0, 15, 3000)
        test = [s for s in random_corpus(1, 15, 500)]
        de = DeletedEstimationLM(n_lambdas=3, n_blocks=3).fit(train)
        models = {"de": de, "de_copy": de, "dirichlet": DirichletLM().fit(train),
                  "addk": AddKLM().fit(train)}
        vocab = de.vocabulary_
        test = [s for s in test if all(t in vocab for t in s)]
        cmp = compare(models, {"s": test})
        assert cmp.perplexity("s", "de") == cmp.perplexity("s", "de_copy")
        tsv = cmp.to_tsv().splitlines()
        assert tsv[0] == "sample\tmodel\tN\tlog2prob\tperplexity"
        assert len(tsv) == 5
        payload = json.loads(cmp.to_json())
        assert payload["models"]["dirichlet"]["alpha"] > 0
        assert "N" in cmp.to_table()

    def test_uniform_baseline_is_worse(self):
        train = random_corpus(2, 20, 4000)
        test = random_corpus(3, 20, 1000)
        m = DirichletLM().fit(train)
        W_out = int(m.vocabulary_.outcome_mask.sum())
        test = [s for s in test if all(t in m.vocabulary_ for t in s)]
        cmp = compare({"dir": m, "uniform": TableModel({}, 1 / W_out)}, {"t": test})
        assert cmp.perplexity("t", "uniform") >= cmp.perplexity("t", "dir")

    def test_format_probs(self):
        m = TableModel({("<s>", "a"): 0.5, ("a", "</s>"): 1 / 3})
        assert format_probs(m, [("<s>", "a", "</s>")]) == \
            ["0.5 <s> a", "0.333333333333333 a </s>"]
