import math

import numpy as np
import pytest

from corpora import random_corpus
from lmsmooth.counts import count_block, freqs
from lmsmooth.deleted_estimation import (DeletedEstimationLM, LambdaBuckets, LambdaModel,
                                         LikelihoodTerms, build_terms, de_prob,
                                         init_brackets, leave_one_out_views,
                                         loglik_and_deriv, optimize)
from lmsmooth.exceptions import NonConvergence, OovError
from lmsmooth.textprep import split_blocks


def terms(u, v, w=None, bucket=None, r=1):
    u = np.asarray(u, dtype=float)
    return LikelihoodTerms(u, np.asarray(v, dtype=float),
                           np.ones_like(u) if w is None else np.asarray(w, dtype=float),
                           np.ones(len(u), dtype=np.int64) if bucket is None else np.asarray(bucket),
                           r)


class TestBuckets:
    def test_formula(self):
        b = LambdaBuckets(15, 0.03)
        f = np.array([0.0, 0.001999, 0.002, 0.0299, 0.03, 0.5, 1.0])
        expect = np.minimum(np.floor(f * 15 / 0.03).astype(int) + 1, 15)
        assert np.array_equal(b.bucket(f), expect)
        assert b.bucket(0.0) == 1 and b.bucket(0.9) == 15

    def test_monotone(self):
        f = np.sort(np.random.default_rng(0).random(1000) * 0.05)
        h = LambdaBuckets(7).bucket(f)
        assert np.all(np.diff(h) >= 0) and h.min() >= 1 and h.max() <= 7

    def test_invalid(self):
        with pytest.raises(ValueError):
            LambdaBuckets(0)


class TestLoglik:
    def test_worked_example(self):
        ell, d = loglik_and_deriv(terms([1 / 6 - 1 / 3], [1 / 3]), [0.5])
        assert ell[0] == pytest.approx(math.log(0.25))
        assert d[0] == pytest.approx(-2 / 3)

    def test_endpoint_zero(self):
        t = terms([0.1, -0.2], [0.3, 0.4], [2, 3])
        ell, _ = loglik_and_deriv(t, [0.0])
        assert ell[0] == pytest.approx(2 * math.log(0.3) + 3 * math.log(0.4))

    def test_u_zero(self):
        _, d = loglik_and_deriv(terms([0, 0], [0.3, 0.5]), [0.37])
        assert d[0] == 0

    def test_sentinels(self):
        ell, d = loglik_and_deriv(terms([0.2], [0.0]), [0.0])
        assert ell[0] == -math.inf and d[0] == math.inf


class TestInitBrackets:
    def test_first_quarter(self):
        # derivative positive at 0, negative from 0.25 on: optimum near 0.1
        t = terms([1.0, -1.0], [0.1, 1.0], [1, 9])
        _, d0 = loglik_and_deriv(t, [0.0])
        _, d1 = loglik_and_deriv(t, [0.25])
        assert d0[0] > 0 > d1[0]
        s = init_brackets(t)[0]
        assert (s.lam, s.final, s.lo, s.hi) == (0.125, False, 0.0, 0.25)

    def test_decreasing_takes_zero(self):
        s = init_brackets(terms([-0.1, -0.2], [0.5, 0.5]))[0]
        assert (s.lam, s.final) == (0.0, True)

    def test_zero_at_half(self):
        # weights 1 and 1 with u=+1/-1 and v=0.5/1.5: d(0.5) = 1/1 - 1/1 = 0
        t = terms([1.0, -1.0], [0.5, 1.5])
        assert loglik_and_deriv(t, [0.5])[1][0] == 0
        s = init_brackets(t)[0]
        assert (s.lam, s.final) == (0.5, True)

    def test_empty_bucket(self):
        t = terms([0.1], [0.2], bucket=[1], r=2)
        # no terms in bucket 2: zero derivative at the first probe
        assert init_brackets(t)[1].final


class TestOptimize:
    def test_known_interior_optimum(self):
        # optimum exactly 0.3: 5 * 1/(0.3 + 0.2) = 7 * 0.5/(0.5 - 0.15)
        t = terms([1.0, -0.5], [0.2, 0.5], [5, 7])
        grid = np.linspace(0, 1, 100001)
        ell = 5 * np.log(grid + 0.2) + 7 * np.log(0.5 - 0.5 * grid + 1e-300)
        star = grid[np.argmax(ell)]
        assert star == pytest.approx(0.3, abs=1e-5)
        m = optimize(t, tol=5e-9, max_iter=100)
        assert m.converged
        assert abs(m.lambdas[0] - 0.3) <= 2.0 ** -m.n_iter * 2 + 1e-12

    def test_all_negative_u(self):
        m = optimize(terms([-0.1, -0.3], [0.4, 0.6]))
        assert m.lambdas[0] == 0.0 and m.n_iter == 0

    def test_nonconvergence_flag(self):
        t = terms([1.0, -0.5], [0.2, 0.5], [5, 7])
        m = optimize(t, max_iter=3)
        assert not m.converged and m.n_iter == 3

    def test_r_mismatch(self):
        with pytest.raises(ValueError):
            optimize(terms([1.0], [0.1]), r=3)


def per_event_terms(block_sentences, views, buckets):
    """Brute force: one (u, v, bucket) per held-out event, then grouped."""
    out = {}
    for k, (sents, view) in enumerate(zip(block_sentences, views)):
        for s in sents:
            for j, i in zip(s, s[1:]):
                fi, v = view.f_i(i), view.f_i_given_j(j, i)
                if fi == 0 and v == 0:
                    continue
                key = (k, round(fi - v, 15), round(v, 15), int(buckets.bucket(view.f_i(j))))
                out[key] = out.get(key, 0) + 1
    return out


class TestBuildTerms:
    def test_two_block_c0(self, c0):
        blocks = split_blocks(c0 + [("<s>", "b", "a", "</s>")], 2)
        tables = [count_block(b) for b in blocks]
        total, views = leave_one_out_views(tables)
        buckets = LambdaBuckets(3, 0.5)
        t = build_terms(list(zip(tables, views)), buckets)
        got = {}
        offs = 0
        for k, tab in enumerate(tables):
            n = len(build_terms([(tab, views[k])], buckets))
            for a in range(offs, offs + n):
                key = (k, round(t.u[a], 15), round(t.v[a], 15), int(t.bucket[a]))
                got[key] = got.get(key, 0) + int(t.weight[a])
            offs += n
        assert got == per_event_terms(blocks, views, buckets)

    def test_aggregation(self):
        held = [("<s>", "a", "</s>")] * 5
        rest = [("<s>", "a", "b", "</s>")]
        view = freqs(count_block(rest))
        t = build_terms([(held, view)], LambdaBuckets(1))
        w = dict(zip(zip(t.u.round(12), t.v.round(12)), t.weight))
        assert sorted(w.values()) == [5, 5]

    def test_single_block_drops_everything(self, c0):
        tables = [count_block(c0)]
        total, views = leave_one_out_views(tables)
        assert views == [None]
        t = build_terms(list(zip(tables, views)), LambdaBuckets(1))
        assert len(t) == 0 and t.n_dropped == 5 and t.n_dropped_events == 6

    def test_dropped_counter(self):
        held = [("<s>", "new", "</s>")]
        view = freqs(count_block([("<s>", "a", "</s>")]))
        t = build_terms([(held, view)], LambdaBuckets(1))
        # (<s>, new) keeps v = 0 but f_new = 0 too, so it is dropped; (new, </s>) has f_</s> > 0
        assert t.n_dropped == 1 and len(t) == 1


class TestDeProb:
    def test_worked_examples(self, c0):
        view = freqs(count_block(c0))
        m = LambdaModel(np.full(15, 0.5), LambdaBuckets(15))
        assert de_prob(m, view, "a", "b") == pytest.approx(0.25)
        assert de_prob(m, view, "b", "a") == pytest.approx(0.25)
        m0 = LambdaModel(np.zeros(15), LambdaBuckets(15))
        assert de_prob(m0, view, "a", "b") == pytest.approx(view.f_i_given_j("a", "b"))
        with pytest.raises(OovError):
            de_prob(m, view, "a", "zzz")


class TestEstimator:
    @pytest.mark.parametrize("seed", range(3))
    def test_rows_sum_to_one(self, seed):
        corpus = random_corpus(seed, 30, 3000)
        est = DeletedEstimationLM(n_lambdas=3, n_blocks=4).fit(corpus)
        Q = est.transition_matrix()
        v = est.vocabulary_
        live = v.context_mask & (est.counts_.unigram > 0)
        assert np.all(np.abs(Q[live].sum(axis=1) - 1) <= 1e-9)
        assert np.all(Q[:, 0] == 0)

    def test_matches_de_prob(self):
        corpus = random_corpus(1, 20, 1500)
        est = DeletedEstimationLM(n_lambdas=5, n_blocks=3).fit(corpus)
        toks = [t for t in est.vocabulary_.tokens if t not in ("<s>",)]
        for j, i in [("<s>", toks[2]), (toks[3], toks[4]), (toks[5], "</s>")]:
            assert est.prob(j, i) == pytest.approx(de_prob(est.model_, est.freqs_, j, i), rel=1e-12)

    def test_concavity(self):
        corpus = random_corpus(7, 25, 2000)
        tables = [count_block(b) for b in split_blocks(corpus, 4)]
        _, views = leave_one_out_views(tables)
        t = build_terms(list(zip(tables, views)), LambdaBuckets(3))
        ds = np.array([loglik_and_deriv(t, lam)[1] for lam in np.linspace(0, 1, 11)])
        assert np.all(np.diff(ds, axis=0) <= 1e-9 * (1 + np.abs(ds[:-1])))

    def test_params_and_roundtrip(self, tmp_path):
        corpus = random_corpus(2, 15, 800)
        est = DeletedEstimationLM(n_lambdas=4, n_blocks=3).fit(corpus)
        assert est.get_params()["n_lambdas"] == 4
        est.model_.save(tmp_path / "m")
        back = DeletedEstimationLM.from_model(LambdaModel.load(tmp_path / "m"), est.counts_)
        assert np.allclose(back.transition_matrix(), est.transition_matrix(), rtol=1e-14)

    def test_nonconvergence_warns(self):
        corpus = random_corpus(3, 15, 800)
        with pytest.warns(NonConvergence):
            est = DeletedEstimationLM(n_lambdas=2, n_blocks=3, max_iter=1).fit(corpus)
        assert not est.converged_
