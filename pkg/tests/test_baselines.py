from fractions import Fraction

import numpy as np
import pytest

from corpora import random_corpus
from lmsmooth.baselines import AddKLM, GoodTuringTable, addk_cond, addk_joint, good_turing
from lmsmooth.counts import CountTable, count_block, freqs
from lmsmooth.exceptions import DegenerateVocabulary, UndefinedClass


class TestAddK:
    def test_c0_joint(self, c0):
        # C0 has 6 bigram events (four singletons and (<s>, a) twice)
        j = addk_joint(count_block(c0), 1.0)
        assert j["n_possible"] == 9
        assert j["seen"][("<s>", "a")] == pytest.approx(3 / 15)
        total = sum(j["seen"].values()) + (9 - len(j["seen"])) * j["unseen"]
        assert total == pytest.approx(1.0, abs=1e-15)

    def test_uniform_when_no_counts(self):
        t = CountTable.from_bigram_counts({("<s>", "a"): 1, ("a", "</s>"): 1})
        t = CountTable(t.vocab, t.unigram, np.zeros((3, 3), dtype=np.int64))
        j = addk_joint(t, 0.5)
        assert j["unseen"] == pytest.approx(1 / j["n_possible"])

    def test_c0_cond(self, c0):
        m = addk_cond(count_block(c0), 1.0)
        assert m.prob("a", "b") == pytest.approx(1 / 3)
        Q = m.transition_matrix()
        assert np.allclose(Q[m.vocabulary_.context_mask].sum(axis=1), 1.0, atol=1e-15)

    def test_empty_row_uniform(self, c0):
        t = count_block(c0)
        z = CountTable(t.vocab, np.zeros(len(t.vocab), dtype=np.int64), t.bigram * 0)
        m = AddKLM(2.0).fit_counts(t)
        m.counts_ = z
        assert m.prob("b", "a") == pytest.approx(1 / 3)

    def test_mle_limit(self):
        t = count_block(random_corpus(4, 20, 2000))
        v = freqs(t)
        j = addk_joint(t, 1e-9)
        m = addk_cond(t, 1e-9)
        toks = t.vocab.tokens
        for a, b, c in t.bigram_items():
            jt, it = toks[a], toks[b]
            assert j["seen"][(jt, it)] == pytest.approx(c / t.n_bigrams, rel=1e-6)
            assert m.prob(jt, it) == pytest.approx(v.f_i_given_j(jt, it), rel=1e-6)

    def test_k_positive(self, c0):
        with pytest.raises(ValueError):
            addk_joint(count_block(c0), 0)
        with pytest.raises(ValueError):
            AddKLM(k=-1).fit(c0)


class TestGoodTuring:
    def test_c0(self, c0):
        gt = good_turing(count_block(c0))
        assert (gt.N, gt.n_r, gt.N0) == (6, {1: 4, 2: 1}, 4)
        assert gt.p_r_exact(1) == Fraction(2 * 1, 4 * 6)
        with pytest.raises(UndefinedClass):
            gt.p_r(2)
        assert gt.p_unseen_exact() == Fraction(4, 4 * 6)
        assert gt.N0 * gt.p_unseen_exact() == Fraction(gt.n_r[1], gt.N)

    def test_dump(self, c0, tmp_path):
        gt = good_turing(count_block(c0))
        assert gt.to_lines() == ["1 4", "2 1", "N0 4", "N 6"]
        gt.save(tmp_path / "gt")
        assert (tmp_path / "gt").read_text() == "1 4\n2 1\nN0 4\nN 6\n"

    def test_degenerate(self):
        gt = GoodTuringTable({1: 2}, 2, 0)
        with pytest.raises(DegenerateVocabulary):
            gt.p_unseen()

    def test_invariant(self):
        gt = good_turing(count_block(random_corpus(0, 30, 3000)))
        assert sum(r * n for r, n in gt.n_r.items()) == gt.N and gt.N0 >= 0
