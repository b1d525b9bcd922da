"""Deleted interpolation of unigram and conditional frequencies.

The mixture q(i | j) = lam_h f_i + (1 - lam_h) f_{i|j} uses one weight per
bucket of the context frequency f_j. Weights are fit by maximizing the
likelihood of each held-out block under frequencies counted without it;
the objective is concave in every lam_h, so each weight is found by its own
bisection on the derivative.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from sklearn.utils.validation import check_is_fitted

from .base import BigramLanguageModel, check_sentences
from .counts import (CountTable, FreqView, count_block, freqs, leave_one_out,
                     merge_all)
from .exceptions import NonConvergence, OovError
from .textprep import split_blocks

PROBES = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class LambdaBuckets:
    r: int = 15
    range_max: float = 0.03

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be a positive integer")
        if not self.range_max > 0:
            raise ValueError("range_max must be positive")

    def bucket(self, f):
        """1-based bucket of a context frequency; frequencies past range_max land in bucket r."""
        f = np.asarray(f, dtype=np.float64)
        h = np.floor(f * self.r / self.range_max).astype(np.int64) + 1
        h = np.minimum(h, self.r)
        return h if h.ndim else int(h)


@dataclass
class LikelihoodTerms:
    """Aggregated held-out events: log-likelihood is sum weight * log(lam_h * u + v)."""

    u: np.ndarray
    v: np.ndarray
    weight: np.ndarray
    bucket: np.ndarray
    r: int
    n_dropped: int = 0
    n_dropped_events: int = 0

    def __len__(self):
        return len(self.u)

    @classmethod
    def concat(cls, parts: Sequence["LikelihoodTerms"]) -> "LikelihoodTerms":
        r = parts[0].r
        return cls(
            np.concatenate([p.u for p in parts]),
            np.concatenate([p.v for p in parts]),
            np.concatenate([p.weight for p in parts]),
            np.concatenate([p.bucket for p in parts]),
            r,
            sum(p.n_dropped for p in parts),
            sum(p.n_dropped_events for p in parts),
        )


def leave_one_out_views(block_tables: Sequence[CountTable]) -> tuple[CountTable, list[FreqView | None]]:
    """Total counts and, per block, frequencies computed with that block removed.

    A view is ``None`` when nothing remains after removing the block.
    """
    total = merge_all(block_tables)
    views = []
    for blk in block_tables:
        rest = leave_one_out(total, blk)
        views.append(None if rest.unigram[rest.vocab.outcome_mask].sum() == 0 else freqs(rest))
    return total, views


def _block_terms(block: CountTable, view: FreqView | None, buckets: LambdaBuckets) -> LikelihoodTerms:
    rows, cols, data = [], [], []
    for j, i, c in block.bigram_items():
        rows.append(j)
        cols.append(i)
        data.append(c)
    toks = block.vocab.tokens
    weight = np.asarray(data, dtype=np.float64)
    if view is None:
        n = len(weight)
        empty = np.zeros(0)
        return LikelihoodTerms(empty, empty, empty, np.zeros(0, dtype=np.int64), buckets.r,
                               n, int(weight.sum()))
    # tokens missing from the view have zero frequency there
    idx = view.vocab.index
    j_ids = np.fromiter((idx.get(toks[j], -1) for j in rows), dtype=np.int64, count=len(rows))
    i_ids = np.fromiter((idx.get(toks[i], -1) for i in cols), dtype=np.int64, count=len(cols))
    known = (j_ids >= 0) & (i_ids >= 0)
    f_i = np.where(i_ids >= 0, view.f[np.maximum(i_ids, 0)], 0.0)
    f_j = np.where(j_ids >= 0, view.f[np.maximum(j_ids, 0)], 0.0)
    v = np.zeros(len(j_ids))
    if known.any():
        v[known] = np.asarray(view.f_cond[j_ids[known], i_ids[known]]).ravel()
    keep = (f_i > 0) | (v > 0)
    return LikelihoodTerms(
        u=(f_i - v)[keep],
        v=v[keep],
        weight=weight[keep],
        bucket=np.asarray(buckets.bucket(f_j[keep]), dtype=np.int64).reshape(-1),
        r=buckets.r,
        n_dropped=int((~keep).sum()),
        n_dropped_events=int(weight[~keep].sum()),
    )


def build_terms(blocks, buckets: LambdaBuckets) -> LikelihoodTerms:
    """One term per (held-out bigram, block), weighted by its count in that block.

    ``blocks`` is a sequence of ``(held_out, view)`` pairs where ``held_out``
    is a CountTable or a list of sentences and ``view`` holds the frequencies
    computed without that block (or ``None`` when nothing remains). The
    bucket comes from the leave-one-out frequency of the context word. Terms
    whose word is unseen outside the block (f_i = f_{i|j} = 0) are dropped
    and counted.
    """
    parts = []
    for held_out, view in blocks:
        table = held_out if isinstance(held_out, CountTable) else count_block(held_out)
        parts.append(_block_terms(table, view, buckets))
    if not parts:
        z = np.zeros(0)
        return LikelihoodTerms(z, z, z, np.zeros(0, dtype=np.int64), buckets.r)
    return LikelihoodTerms.concat(parts)


def loglik_and_deriv(terms: LikelihoodTerms, lambdas) -> tuple[np.ndarray, np.ndarray]:
    """Per-bucket log-likelihood and its derivative at the given weights.

    A zero mixture probability contributes -inf to the log-likelihood and an
    infinite derivative with the sign of u.
    """
    lambdas = np.broadcast_to(np.asarray(lambdas, dtype=np.float64), (terms.r,))
    h = terms.bucket - 1
    x = lambdas[h] * terms.u + terms.v
    pos = x > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_x = np.where(pos, np.log(np.where(pos, x, 1.0)), -np.inf)
        d = np.where(pos, terms.u / np.where(pos, x, 1.0), np.sign(terms.u) * np.inf)
        d = np.where(terms.u == 0, 0.0, d)
        ell = np.bincount(h, weights=terms.weight * log_x, minlength=terms.r)
        dell = np.bincount(h, weights=terms.weight * d, minlength=terms.r)
    return ell, dell


@dataclass
class BucketState:
    lam: float
    final: bool
    lo: float = 0.0
    hi: float = 1.0


def init_brackets(terms: LikelihoodTerms) -> list[BucketState]:
    """Starting point for each weight from probes at 0, 1/4, 1/2, 3/4 and 1.

    An interior probe with zero derivative is taken as final. Otherwise, if
    the derivative changes sign across [0, 1], the search starts at the
    midpoint of the quarter containing the change. With no sign change the
    better endpoint is final.
    """
    ell0, _ = loglik_and_deriv(terms, 0.0)
    ell1, _ = loglik_and_deriv(terms, 1.0)
    d = {p: loglik_and_deriv(terms, p)[1] for p in PROBES}
    states = []
    for h in range(terms.r):
        dp = [d[p][h] for p in PROBES]
        zero = next((p for p, v in zip(PROBES[1:4], dp[1:4]) if v == 0), None)
        if zero is not None:
            states.append(BucketState(zero, True))
        elif np.sign(dp[0]) * np.sign(dp[4]) < 0:
            k = next(k for k in range(4) if np.sign(dp[k]) * np.sign(dp[k + 1]) < 0)
            lo, hi = PROBES[k], PROBES[k + 1]
            states.append(BucketState((lo + hi) / 2, False, lo, hi))
        elif ell0[h] > ell1[h]:
            states.append(BucketState(0.0, True))
        else:
            states.append(BucketState(1.0, True))
    return states


@dataclass
class LambdaModel:
    lambdas: np.ndarray
    buckets: LambdaBuckets
    final: np.ndarray = field(default=None)
    lo: np.ndarray = field(default=None)
    hi: np.ndarray = field(default=None)
    n_iter: int = 0
    converged: bool = True
    n_dropped: int = 0

    def lambda_for(self, f_j):
        return self.lambdas[np.asarray(self.buckets.bucket(f_j)) - 1]

    def to_lines(self) -> list[str]:
        header = [
            f"# r {self.buckets.r}",
            f"# range_max {format(self.buckets.range_max, '.15g')}",
            f"# iterations {self.n_iter}",
            f"# dropped {self.n_dropped}",
            f"# converged {'yes' if self.converged else 'no'}",
        ]
        body = [f"{format(float(lam), '.15g')} {h}" for h, lam in enumerate(self.lambdas, 1)]
        return header + body

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.to_lines()) + "\n")

    @classmethod
    def load(cls, path) -> "LambdaModel":
        meta: dict[str, str] = {}
        lams: list[tuple[int, float]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition(" ")
                    meta[key] = value.strip()
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'lambda h'")
                lams.append((int(parts[1]), float(parts[0])))
        lams.sort()
        if [h for h, _ in lams] != list(range(1, len(lams) + 1)):
            raise ValueError(f"{path}: bucket indices must run 1..r")
        r = int(meta.get("r", len(lams)))
        if r != len(lams):
            raise ValueError(f"{path}: header says r={r} but {len(lams)} weights found")
        return cls(
            lambdas=np.array([lam for _, lam in lams]),
            buckets=LambdaBuckets(r, float(meta.get("range_max", 0.03))),
            n_iter=int(meta.get("iterations", 0)),
            converged=meta.get("converged", "yes") == "yes",
            n_dropped=int(meta.get("dropped", 0)),
        )


def optimize(terms: LikelihoodTerms, r: int | None = None, tol: float = 5e-9,
             max_iter: int = 100, range_max: float = 0.03) -> LambdaModel:
    """Bisect each bucket's derivative until the summed weight change drops below ``tol * r``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    r = terms.r if r is None else r
    if r != terms.r:
        raise ValueError(f"terms were bucketed for r={terms.r}, not r={r}")
    states = init_brackets(terms)
    lam = np.array([s.lam for s in states])
    final = np.array([s.final for s in states])
    lo = np.array([s.lo for s in states])
    hi = np.array([s.hi for s in states])
    n_iter = 0
    converged = bool(final.all())
    while not converged and n_iter < max_iter:
        n_iter += 1
        _, d = loglik_and_deriv(terms, lam)
        active = ~final
        up = active & (d > 0)
        down = active & (d < 0)
        final = final | (active & (d == 0))
        lo = np.where(up, lam, lo)
        hi = np.where(down, lam, hi)
        new = np.where(up | down, (lo + hi) / 2, lam)
        change = float(np.abs(new - lam).sum())
        lam = new
        converged = change < tol * r
    return LambdaModel(lam, LambdaBuckets(r, range_max), final, lo, hi, n_iter, converged,
                       terms.n_dropped)


def de_prob(model: LambdaModel, view: FreqView, j: str, i: str) -> float:
    """Mixture probability of ``i`` after ``j``; the bucket uses the full-corpus f_j."""
    for tok in (j, i):
        if tok not in view.vocab:
            raise OovError(f"token {tok!r} is not in the model vocabulary")
    lam = float(model.lambda_for(view.f_i(j)))
    return lam * view.f_i(i) + (1.0 - lam) * view.f_i_given_j(j, i)


class DeletedEstimationLM(BigramLanguageModel):
    """Bigram model smoothed by deleted interpolation.

    Parameters
    ----------
    n_lambdas : int
        Number of mixture weights (buckets of context frequency).
    range_max : float
        Upper end of the expected context-frequency range split into buckets.
    n_blocks : int
        Blocks dealt round-robin from the training sentences when ``fit`` is
        not given explicit ``groups``.
    tol, max_iter :
        Bisection stops once the summed weight change is below
        ``tol * n_lambdas`` or after ``max_iter`` iterations.
    """

    def __init__(self, n_lambdas=15, range_max=0.03, n_blocks=6, tol=5e-9, max_iter=100):
        self.n_lambdas = n_lambdas
        self.range_max = range_max
        self.n_blocks = n_blocks
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None, groups=None):
        """Fit on sentences; ``groups`` optionally assigns each sentence to a held-out block."""
        X = check_sentences(X)
        if groups is None:
            blocks = split_blocks(X, self.n_blocks)
        else:
            groups = list(groups)
            if len(groups) != len(X):
                raise ValueError("groups must have one label per sentence")
            labels = sorted(set(groups))
            blocks = [[s for s, g in zip(X, groups) if g == lab] for lab in labels]
        return self.fit_counts([count_block(b) for b in blocks])

    def fit_counts(self, block_tables: Sequence[CountTable]):
        """Fit from per-block count tables (the blocks are also the training data)."""
        buckets = LambdaBuckets(self.n_lambdas, self.range_max)
        total, views = leave_one_out_views(block_tables)
        terms = build_terms(list(zip(block_tables, views)), buckets)
        model = optimize(terms, self.n_lambdas, self.tol, self.max_iter, self.range_max)
        return self._set_fitted(total, model)

    def _set_fitted(self, total: CountTable, model: LambdaModel):
        self.counts_ = total
        self.freqs_ = freqs(total)
        self.model_ = model
        self.lambdas_ = model.lambdas
        self.n_iter_ = model.n_iter
        self.converged_ = model.converged
        self.n_dropped_terms_ = model.n_dropped
        if not model.converged:
            warnings.warn(f"deleted interpolation did not converge in {model.n_iter} iterations",
                          NonConvergence, stacklevel=3)
        return self

    @classmethod
    def from_model(cls, model: LambdaModel, counts: CountTable) -> "DeletedEstimationLM":
        est = cls(n_lambdas=model.buckets.r, range_max=model.buckets.range_max)
        est.counts_ = counts
        est.freqs_ = freqs(counts)
        est.model_ = model
        est.lambdas_ = model.lambdas
        est.n_iter_ = model.n_iter
        est.converged_ = model.converged
        est.n_dropped_terms_ = model.n_dropped
        return est

    def _pair_probs(self, j_ids, i_ids):
        check_is_fitted(self, "model_")
        view = self.freqs_
        lam = self.model_.lambda_for(view.f[j_ids])
        f_cond = np.asarray(view.f_cond[j_ids, i_ids]).ravel() if len(j_ids) else np.zeros(0)
        return lam * view.f[i_ids] + (1.0 - lam) * f_cond

    def transition_matrix(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        view = self.freqs_
        vocab = view.vocab
        lam = np.asarray(self.model_.lambda_for(view.f))
        f_out = np.where(vocab.outcome_mask, view.f, 0.0)
        Q = lam[:, None] * f_out[None, :] + (1.0 - lam)[:, None] * sparse.csr_array(view.f_cond).toarray()
        Q[~vocab.context_mask, :] = 0.0
        return Q
