"""Test-set scoring, perplexity and model comparison reports."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import EmptyTest, OovError


@dataclass
class EvalReport:
    model_name: str
    sample: str
    N: int
    log2_prob: float
    perplexity: float
    oov_sentences_skipped: int = 0
    zero_prob_bigrams: list = field(default_factory=list)


def grouped_bigrams(sentences) -> list[tuple[tuple[str, str], int]]:
    """Test bigram counts sorted by (j, i) so that sums have a fixed order."""
    counts: Counter = Counter()
    for s in sentences:
        counts.update(zip(s, s[1:]))
    return sorted(counts.items())


def corpus_logprob(model, test: Sequence[Sequence[str]]) -> tuple[float, int]:
    """Sum of log2 q(i | j) over every adjacent pair in ``test``, and the pair count.

    ``model`` needs a ``pair_probs(js, is_)`` method. Pairs are grouped and
    summed as F_ji * log2 q(i | j) in sorted order. A zero probability makes
    the result -inf; see :func:`score_sample` for the offending bigrams.
    """
    lp, n, _ = _score(model, test)
    return lp, n


def _score(model, test):
    grouped = grouped_bigrams(test)
    if not grouped:
        return 0.0, 0, []
    js = [j for (j, _), _ in grouped]
    is_ = [i for (_, i), _ in grouped]
    F = np.array([c for _, c in grouped], dtype=np.float64)
    q = np.asarray(model.pair_probs(js, is_), dtype=np.float64)
    zero = q <= 0
    if zero.any():
        bad = [grouped[k][0] for k in np.flatnonzero(zero)]
        return -math.inf, int(F.sum()), bad
    return float(np.dot(F, np.log2(q))), int(F.sum()), []


def perplexity(log2_prob: float, N: int) -> float:
    if N < 1:
        raise EmptyTest("perplexity needs at least one bigram event")
    if log2_prob == -math.inf:
        return math.inf
    return 2.0 ** (-log2_prob / N)


def score_sample(model, test, model_name: str = "model", sample: str = "test",
                 vocab=None) -> EvalReport:
    """Score one sample; when ``vocab`` is given, OOV sentences are skipped and counted."""
    skipped = 0
    if vocab is not None:
        kept = [s for s in test if all(t in vocab for t in s)]
        skipped = len(test) - len(kept)
        test = kept
    lp, n, bad = _score(model, test)
    return EvalReport(model_name, sample, n, lp, perplexity(lp, n), skipped, bad)


@dataclass
class Comparison:
    reports: list
    models: dict = field(default_factory=dict)

    def perplexity(self, sample: str, model: str) -> float:
        for r in self.reports:
            if r.sample == sample and r.model_name == model:
                return r.perplexity
        raise KeyError((sample, model))

    def to_tsv(self) -> str:
        lines = ["sample\tmodel\tN\tlog2prob\tperplexity"]
        for r in self.reports:
            lines.append(f"{r.sample}\t{r.model_name}\t{r.N}\t"
                         f"{format(r.log2_prob, '.15g')}\t{format(r.perplexity, '.15g')}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "models": self.models,
            "results": [
                {k: v for k, v in asdict(r).items()}
                for r in self.reports
            ],
        }
        for row in payload["results"]:
            row["zero_prob_bigrams"] = [list(p) for p in row["zero_prob_bigrams"]]
            for key in ("log2_prob", "perplexity"):
                if not math.isfinite(row[key]):
                    row[key] = str(row[key])
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        """Human-readable grid: samples down, models across."""
        samples = list(dict.fromkeys(r.sample for r in self.reports))
        names = list(dict.fromkeys(r.model_name for r in self.reports))
        width = max([12] + [len(n) + 2 for n in names])
        out = ["sample".ljust(10) + "N".rjust(10) + "".join(n.rjust(width) for n in names)]
        for s in samples:
            rows = [r for r in self.reports if r.sample == s]
            cells = "".join(f"{self.perplexity(s, n):.2f}".rjust(width) for n in names)
            out.append(s.ljust(10) + str(rows[0].N).rjust(10) + cells)
        return "\n".join(out) + "\n"


def describe_model(model) -> dict:
    """Metadata recorded alongside perplexities."""
    info = {"class": type(model).__name__}
    if hasattr(model, "get_params"):
        info["params"] = model.get_params()
    for attr in ("alpha_", "n_iter_", "converged_", "n_clamped_", "n_dropped_terms_"):
        if hasattr(model, attr):
            val = getattr(model, attr)
            info[attr.rstrip("_")] = val.item() if hasattr(val, "item") else val
    if hasattr(model, "lambdas_"):
        info["lambdas"] = [float(x) for x in model.lambdas_]
    return info


def compare(models: Mapping[str, object], samples: Mapping[str, Sequence]) -> Comparison:
    """Perplexity of every sample under every model.

    Samples must already be restricted to the models' vocabulary; an OOV
    token raises :class:`OovError`.
    """
    reports = []
    for sname, sentences in samples.items():
        for mname, model in models.items():
            try:
                reports.append(score_sample(model, sentences, mname, sname))
            except OovError as exc:
                raise OovError(f"sample {sname!r} under model {mname!r}: {exc}") from None
    return Comparison(reports, {name: describe_model(m) for name, m in models.items()})


def format_probs(model, sentences) -> list[str]:
    """``prob j i`` lines for every distinct test bigram, sorted by (j, i)."""
    grouped = grouped_bigrams(sentences)
    js = [j for (j, _), _ in grouped]
    is_ = [i for (_, i), _ in grouped]
    q = model.pair_probs(js, is_) if grouped else []
    return [f"{format(float(p), '.15g')} {j} {i}" for p, j, i in zip(q, js, is_)]
