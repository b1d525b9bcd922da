"""Dirichlet-prior smoothing with hyperparameters fit by maximum evidence.

Each context row gets a Dirichlet prior with shared measure ``u / alpha``.
The posterior-mean prediction is

    q(i | j) = (F_{i|j} + u_i) / (F_j + alpha),    alpha = sum_i u_i.

``u`` is found by the closed-form fixed point driven by per-word statistics
(N_1i, G_i, H_i) and the context-side aggregate K(alpha); alpha is adjusted
by doubling/halving and then geometric bisection until it matches sum(u).
Every iteration touches only vocabulary-sized arrays.

Exact log-evidence and gradient are provided as independent checks on the
closed-form route.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from sklearn.utils.validation import check_is_fitted

from .base import BigramLanguageModel, check_counts
from .counts import BOS_ID, CountTable, DirichletStats, Vocabulary, dirichlet_stats
from .exceptions import DomainError, NonConvergence, OovError

U_FLOOR = 1e-12

_DIGAMMA_SHIFT = 10.0
# Bernoulli-number coefficients B_2n / 2n of the asymptotic series
_ASYMPTOTIC = (1.0 / 12, -1.0 / 120, 1.0 / 252, -1.0 / 240, 1.0 / 132, -691.0 / 32760)


def digamma(x):
    """Psi(x) for x > 0.

    Uses Psi(x) = Psi(x + 1) - 1/x to lift the argument to at least 10 and
    then the asymptotic expansion
    ln x - 1/(2x) - sum_n B_2n / (2n x^2n), accurate to ~1e-14 there.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0):
        raise DomainError("digamma is only defined here for x > 0")
    z = arr.copy()
    acc = np.zeros_like(z)
    small = z < _DIGAMMA_SHIFT
    while small.any():
        acc[small] -= 1.0 / z[small]
        z[small] += 1.0
        small = z < _DIGAMMA_SHIFT
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_ASYMPTOTIC):
        series = series * inv2 + c
    out = acc + np.log(z) - 0.5 / z - series * inv2
    return float(out) if out.ndim == 0 else out


def _fj_arrays(fj_histogram):
    if isinstance(fj_histogram, DirichletStats):
        return fj_histogram.fj_values.astype(np.float64), fj_histogram.fj_multiplicity.astype(np.float64)
    if hasattr(fj_histogram, "items"):
        items = sorted(fj_histogram.items())
        return (np.array([k for k, _ in items], dtype=np.float64),
                np.array([m for _, m in items], dtype=np.float64))
    vals = np.asarray(fj_histogram, dtype=np.float64)
    return vals, np.ones_like(vals)


def k_alpha(alpha: float, fj_histogram) -> float:
    """K(alpha) = sum_j [ln((F_j + alpha)/alpha) + F_j / (2 alpha (F_j + alpha))].

    ``fj_histogram`` may be a :class:`DirichletStats`, a ``{F_j: multiplicity}``
    mapping, or a flat sequence of F_j values.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    F, mult = _fj_arrays(fj_histogram)
    terms = np.log1p(F / alpha) + 0.5 * F / (alpha * (F + alpha))
    return float(np.dot(mult, terms))


def solve_u(K: float, stats: DirichletStats) -> tuple[np.ndarray, int]:
    """Positive root of N_1i/u + G_i - u H_i = K for every word.

    Returns ``(u, n_clamped)``. Words never seen as an outcome get 0;
    roots that come out negative or non-finite are floored at ``U_FLOOR``
    and counted.
    """
    n1 = stats.n1.astype(np.float64)
    a = K - stats.G
    H = stats.H
    disc = np.sqrt(a * a + 4.0 * H * n1)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = 2.0 * n1 / (a + disc)
        # same root without cancellation when K - G_i < 0
        stable = (disc - a) / (2.0 * H)
    u = np.where((a < 0) & (H > 0), stable, direct)
    u = np.where(n1 > 0, u, 0.0)
    bad = (n1 > 0) & ~(np.isfinite(u) & (u > 0))
    u = np.where(bad, U_FLOOR, u)
    u[BOS_ID] = 0.0
    return u, int(bad.sum())


@dataclass
class DirichletModel:
    vocab: Vocabulary
    alpha: float
    u: np.ndarray
    n_iter: int = 0
    converged: bool = True
    n_clamped: int = 0
    trace: list = field(default_factory=list)

    @property
    def m(self) -> np.ndarray:
        return self.u / self.alpha

    def u_of(self, token: str) -> float:
        return float(self.u[self.vocab.id(token)])

    def to_lines(self) -> list[str]:
        mask = self.vocab.outcome_mask
        lines = sorted(
            ((t, f"{format(float(v), '.15g')} {t}")
             for t, v, keep in zip(self.vocab.tokens, self.u, mask) if keep),
            key=lambda p: p[0].encode("utf-8"))
        return [f"alpha {format(self.alpha, '.15g')}"] + [line for _, line in lines]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.to_lines()) + "\n")

    @classmethod
    def load(cls, path, vocab: Vocabulary | None = None) -> "DirichletModel":
        with open(path, encoding="utf-8") as fh:
            lines = [line.split() for line in fh if line.strip()]
        if not lines or len(lines[0]) != 2 or lines[0][0] != "alpha":
            raise ValueError(f"{path}: first line must be 'alpha <value>'")
        alpha = float(lines[0][1])
        pairs = {}
        for k, parts in enumerate(lines[1:], 2):
            if len(parts) != 2:
                raise ValueError(f"{path}:{k}: expected 'u_i token'")
            pairs[parts[1]] = float(parts[0])
        vocab = vocab if vocab is not None else Vocabulary(pairs)
        u = np.zeros(len(vocab))
        for tok, val in pairs.items():
            if tok not in vocab:
                raise ValueError(f"{path}: token {tok!r} not in the training vocabulary")
            u[vocab.id(tok)] = val
        return cls(vocab, alpha, u)


def fit_from_stats(stats: DirichletStats, alpha0: float = 10.0, tol: float = 5e-9,
                   max_iter: int = 100) -> DirichletModel:
    """Search alpha until it agrees with sum(u); see the module docstring.

    Only ``stats`` is consulted, so the per-iteration cost is independent of
    the corpus size. Convergence is declared when the summed absolute change
    in u falls below ``tol`` times the number of outcome words. The returned
    alpha is set to sum(u) so that every row of q sums to one.
    """
    if not alpha0 > 0:
        raise ValueError("alpha0 must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    W = int(stats.outcome_mask.sum())
    alpha = float(alpha0)
    alpha_min = alpha_max = None
    u_prev = None
    u = np.zeros(len(stats.n1))
    n_clamped = 0
    trace = []
    converged = False
    n_iter = 0
    while n_iter < max_iter:
        n_iter += 1
        K = k_alpha(alpha, stats)
        u, n_clamped = solve_u(K, stats)
        total = float(u.sum())
        trace.append((alpha, total, alpha_min, alpha_max))
        if total < alpha:
            alpha_max = alpha
            alpha = alpha / 2 if alpha_min is None else math.sqrt(alpha_min * alpha_max)
        elif total > alpha:
            alpha_min = alpha
            alpha = alpha * 2 if alpha_max is None else math.sqrt(alpha_min * alpha_max)
        if u_prev is not None and float(np.abs(u - u_prev).sum()) < tol * W:
            converged = True
            break
        u_prev = u
    return DirichletModel(stats.vocab, float(u.sum()), u, n_iter, converged, n_clamped, trace)


def fit(counts: CountTable, alpha0: float = 10.0, tol: float = 5e-9,
        max_iter: int = 100) -> DirichletModel:
    if counts.is_empty():
        raise ValueError("cannot fit on an empty count table")
    return fit_from_stats(dirichlet_stats(counts), alpha0, tol, max_iter)


def dir_prob(model: DirichletModel, counts: CountTable, j: str, i: str) -> float:
    for tok in (j, i):
        if tok not in counts.vocab:
            raise OovError(f"token {tok!r} is not in the model vocabulary")
    return (counts.F_cond(j, i) + model.u_of(i)) / (counts.F(j) + model.alpha)


def _outcome_u(u, counts: CountTable) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (len(counts.vocab),):
        raise ValueError("u must have one entry per vocabulary id")
    if not np.all(u[counts.vocab.outcome_mask] > 0):
        raise DomainError("every outcome u_i must be positive")
    return u


def log_rising(x, n):
    """ln Gamma(x + n) - ln Gamma(x), without cancellation when x is large."""
    x = np.asarray(x, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    x, n = np.broadcast_arrays(x, n)
    out = np.empty(x.shape)
    big = x > 1e6
    small = ~big
    out[small] = gammaln(x[small] + n[small]) - gammaln(x[small])
    xb, nb = x[big], n[big]
    # Stirling; the dropped terms are O(x^-3)
    out[big] = ((xb - 0.5) * np.log1p(nb / xb) + nb * np.log(xb + nb) - nb
                + 1.0 / (12.0 * (xb + nb)) - 1.0 / (12.0 * xb))
    return out


def log_evidence_exact(u, counts: CountTable) -> float:
    """ln Pr(D | u): sum over contexts of Dirichlet-multinomial log normalizer ratios."""
    u = _outcome_u(u, counts)
    alpha = float(u[counts.vocab.outcome_mask].sum())
    coo = counts.bigram.tocoo()
    ui = u[coo.col]
    total = float(np.sum(log_rising(ui, coo.data)))
    Fj = counts.unigram[counts.vocab.context_mask]
    Fj = Fj[Fj > 0].astype(np.float64)
    total -= float(np.sum(log_rising(alpha, Fj)))
    return total


def grad_log_evidence_exact(u, counts: CountTable) -> np.ndarray:
    """Gradient of :func:`log_evidence_exact` in u, via exact digamma."""
    u = _outcome_u(u, counts)
    mask = counts.vocab.outcome_mask
    alpha = float(u[mask].sum())
    coo = counts.bigram.tocoo()
    ui = u[coo.col]
    per_pair = digamma(coo.data + ui) - digamma(ui) if coo.nnz else np.zeros(0)
    grad = np.bincount(coo.col, weights=per_pair, minlength=len(u))
    Fj = counts.unigram[counts.vocab.context_mask]
    Fj = Fj[Fj > 0].astype(np.float64)
    ctx = float(np.sum(digamma(alpha) - digamma(Fj + alpha))) if Fj.size else 0.0
    grad = grad + ctx
    grad[~mask] = 0.0
    return grad


def grad_log_evidence_closed_form(u, stats: DirichletStats, alpha: float) -> np.ndarray:
    """N_1i/u_i + G_i - u_i H_i - K(alpha): the approximate gradient the fixed point zeroes."""
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(stats.n1 > 0, stats.n1 / u, 0.0) + stats.G - u * stats.H
    g = g - k_alpha(alpha, stats)
    g[~stats.outcome_mask] = 0.0
    return g


def psi_shift_closed_form(F, u, correction_sign: int = 1):
    """Small-u closed form for Psi(F + u) - Psi(u), and 0 when F = 0.

    1/u + sum_{k<F} (1/k + s u/k^2) with s = ``correction_sign``. The default
    s = +1 is the form as usually written; s = -1 is the sign that a Taylor
    expansion gives and that the G_i - u H_i statistic in the fixed point uses.
    """
    if correction_sign not in (1, -1):
        raise ValueError("correction_sign must be +1 or -1")
    F = int(F)
    if F == 0:
        return 0.0
    k = np.arange(1, F, dtype=np.float64)
    return 1.0 / u + float(np.sum(1.0 / k + correction_sign * u / (k * k)))


def psi_context_closed_form(F, alpha):
    """Closed form for Psi(F + alpha) - Psi(alpha) used inside K(alpha)."""
    return math.log1p(F / alpha) + 0.5 * F / (alpha * (F + alpha))


class DirichletLM(BigramLanguageModel):
    """Bigram model with a shared Dirichlet prior on every context row.

    Parameters
    ----------
    alpha0 : float
        Starting value of the prior strength for the alpha search.
    tol, max_iter :
        Stop once the summed change in u is below ``tol`` times the number
        of outcome words, or after ``max_iter`` iterations.
    """

    def __init__(self, alpha0=10.0, tol=5e-9, max_iter=100):
        self.alpha0 = alpha0
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        return self.fit_counts(check_counts(X))

    def fit_counts(self, counts: CountTable):
        if counts.is_empty():
            raise ValueError("cannot fit on an empty count table")
        stats = dirichlet_stats(counts)
        model = fit_from_stats(stats, self.alpha0, self.tol, self.max_iter)
        self.counts_ = counts
        self.stats_ = stats
        self._set_model(model)
        if not model.converged:
            warnings.warn(f"alpha search did not converge in {model.n_iter} iterations",
                          NonConvergence, stacklevel=2)
        return self

    def _set_model(self, model: DirichletModel):
        self.model_ = model
        self.alpha_ = model.alpha
        self.u_ = model.u
        self.n_iter_ = model.n_iter
        self.converged_ = model.converged
        self.n_clamped_ = model.n_clamped

    @classmethod
    def from_model(cls, model: DirichletModel, counts: CountTable) -> "DirichletLM":
        est = cls()
        est.counts_ = counts
        est.stats_ = dirichlet_stats(counts)
        if model.vocab != counts.vocab:
            u = np.zeros(len(counts.vocab))
            for tok, val in zip(model.vocab.tokens, model.u):
                if val and tok in counts.vocab:
                    u[counts.vocab.id(tok)] = val
            model = DirichletModel(counts.vocab, model.alpha, u, model.n_iter,
                                   model.converged, model.n_clamped)
        est._set_model(model)
        return est

    def _pair_probs(self, j_ids, i_ids):
        check_is_fitted(self, "model_")
        c = self.counts_
        F_ji = np.asarray(c.bigram[j_ids, i_ids]).ravel() if len(j_ids) else np.zeros(0)
        return (F_ji + self.u_[i_ids]) / (c.unigram[j_ids] + self.alpha_)

    def transition_matrix(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        c = self.counts_
        Q = (c.bigram.toarray() + self.u_[None, :]) / (c.unigram[:, None] + self.alpha_)
        Q[~c.vocab.context_mask, :] = 0.0
        Q[:, ~c.vocab.outcome_mask] = 0.0
        return Q
