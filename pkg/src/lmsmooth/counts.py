"""Unigram/bigram count tables, relative frequencies and Dirichlet sufficient statistics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .exceptions import EmptyCorpus, UnderflowError
from .textprep import BOS, EOS

BOS_ID = 0
EOS_ID = 1


class Vocabulary:
    """Token <-> dense id bijection.

    Ids are canonical: ``<s>`` is 0, ``</s>`` is 1, and the remaining tokens
    follow in code-point (equivalently UTF-8 byte) order, so two tables over
    the same token set always agree on ids.
    """

    def __init__(self, tokens: Iterable[str] = ()):
        rest = sorted(set(tokens) - {BOS, EOS})
        self.tokens: tuple[str, ...] = (BOS, EOS, *rest)
        self.index: dict[str, int] = {t: k for k, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __iter__(self):
        return iter(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self):
        return f"Vocabulary({len(self)} tokens)"

    def id(self, token: str) -> int:
        return self.index[token]

    def ids(self, tokens: Iterable[str]) -> np.ndarray:
        return np.fromiter((self.index[t] for t in tokens), dtype=np.int64)

    def union(self, other: "Vocabulary") -> "Vocabulary":
        if self == other:
            return self
        return Vocabulary(self.tokens + other.tokens)

    def mapping_into(self, other: "Vocabulary") -> np.ndarray:
        """Array ``m`` with ``m[self_id] = other_id``; every token must exist in ``other``."""
        return np.fromiter((other.index[t] for t in self.tokens), dtype=np.int64,
                           count=len(self))

    @property
    def context_mask(self) -> np.ndarray:
        m = np.ones(len(self), dtype=bool)
        m[EOS_ID] = False
        return m

    @property
    def outcome_mask(self) -> np.ndarray:
        m = np.ones(len(self), dtype=bool)
        m[BOS_ID] = False
        return m


class CountTable:
    """Sparse unigram counts F_j and bigram counts F_{i|j}.

    ``bigram[j, i]`` is the number of times token ``i`` follows token ``j``.
    The table is treated as immutable once built.
    """

    def __init__(self, vocab: Vocabulary, unigram: np.ndarray, bigram):
        self.vocab = vocab
        self.unigram = np.asarray(unigram, dtype=np.int64)
        bigram = sparse.csr_array(bigram, shape=(len(vocab), len(vocab)), dtype=np.int64)
        bigram.eliminate_zeros()
        bigram.sort_indices()
        self.bigram = bigram

    @classmethod
    def empty(cls) -> "CountTable":
        vocab = Vocabulary()
        return cls(vocab, np.zeros(len(vocab), dtype=np.int64),
                   sparse.csr_array((len(vocab), len(vocab)), dtype=np.int64))

    @classmethod
    def from_bigram_counts(cls, counts: Mapping[tuple[str, str], int]) -> "CountTable":
        """Build a table from bigram counts alone.

        Unigram counts are derived: F_j is the number of bigrams leaving j,
        and F for ``</s>`` is the number of bigrams entering it, which is what
        counting whole sentences would give.
        """
        vocab = Vocabulary(t for pair in counts for t in pair)
        rows, cols, vals = [], [], []
        for (j, i), c in counts.items():
            if c < 0:
                raise ValueError("counts must be non-negative")
            if c == 0:
                continue
            if j == EOS or i == BOS:
                raise ValueError(f"impossible bigram ({j}, {i})")
            rows.append(vocab.id(j))
            cols.append(vocab.id(i))
            vals.append(int(c))
        W = len(vocab)
        bigram = sparse.coo_array((np.asarray(vals, dtype=np.int64), (rows, cols)),
                                  shape=(W, W)).tocsr()
        unigram = np.asarray(bigram.sum(axis=1)).ravel().astype(np.int64)
        unigram[EOS_ID] = int(bigram[:, [EOS_ID]].sum())
        return cls(vocab, unigram, bigram)

    def __repr__(self):
        return (f"CountTable(W={len(self.vocab)}, tokens={self.n_tokens}, "
                f"bigram_types={self.bigram.nnz})")

    def __eq__(self, other):
        if not isinstance(other, CountTable):
            return NotImplemented
        return self.to_dicts() == other.to_dicts()

    @property
    def n_tokens(self) -> int:
        return int(self.unigram.sum())

    @property
    def n_bigrams(self) -> int:
        return int(self.bigram.sum())

    def is_empty(self) -> bool:
        return self.n_tokens == 0

    def F(self, token: str) -> int:
        k = self.vocab.index.get(token)
        return 0 if k is None else int(self.unigram[k])

    def F_cond(self, j: str, i: str) -> int:
        """Count of bigram ``j i``."""
        kj, ki = self.vocab.index.get(j), self.vocab.index.get(i)
        if kj is None or ki is None:
            return 0
        return int(self.bigram[kj, ki])

    def bigram_items(self):
        """Yield ``(j_id, i_id, count)`` for every stored bigram, row-major."""
        coo = self.bigram.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            yield int(r), int(c), int(v)

    def to_dicts(self) -> tuple[dict, dict]:
        """Token-level view with zero entries dropped."""
        toks = self.vocab.tokens
        uni = {toks[k]: int(c) for k, c in enumerate(self.unigram) if c}
        bi = {(toks[j], toks[i]): c for j, i, c in self.bigram_items()}
        return uni, bi

    def reindex(self, vocab: Vocabulary) -> "CountTable":
        """Re-express this table over a superset vocabulary."""
        if vocab == self.vocab:
            return self
        m = self.vocab.mapping_into(vocab)
        W = len(vocab)
        unigram = np.zeros(W, dtype=np.int64)
        unigram[m] = self.unigram
        coo = self.bigram.tocoo()
        bigram = sparse.coo_array((coo.data, (m[coo.row], m[coo.col])), shape=(W, W)).tocsr()
        return CountTable(vocab, unigram, bigram)

    def compact(self) -> "CountTable":
        """Drop tokens whose unigram count is zero from the vocabulary."""
        keep = [t for t, c in zip(self.vocab.tokens, self.unigram) if c]
        vocab = Vocabulary(keep)
        if vocab == self.vocab:
            return self
        sel = np.fromiter((self.vocab.index[t] for t in vocab.tokens), dtype=np.int64)
        return CountTable(vocab, self.unigram[sel], self.bigram[sel][:, sel])


def count_block(sentences: Iterable[Sequence[str]]) -> CountTable:
    """Count tokens and within-sentence adjacent pairs."""
    uni: Counter = Counter()
    bi: Counter = Counter()
    for s in sentences:
        uni.update(s)
        bi.update(zip(s, s[1:]))
    if not uni:
        return CountTable.empty()
    vocab = Vocabulary(uni)
    W = len(vocab)
    unigram = np.zeros(W, dtype=np.int64)
    for t, c in uni.items():
        unigram[vocab.index[t]] = c
    if bi:
        idx = vocab.index
        keys = list(bi)
        rows = np.fromiter((idx[j] for j, _ in keys), dtype=np.int64, count=len(keys))
        cols = np.fromiter((idx[i] for _, i in keys), dtype=np.int64, count=len(keys))
        vals = np.fromiter(bi.values(), dtype=np.int64, count=len(keys))
        bigram = sparse.coo_array((vals, (rows, cols)), shape=(W, W)).tocsr()
    else:
        bigram = sparse.csr_array((W, W), dtype=np.int64)
    return CountTable(vocab, unigram, bigram)


def merge_counts(a: CountTable, b: CountTable) -> CountTable:
    vocab = a.vocab.union(b.vocab)
    a, b = a.reindex(vocab), b.reindex(vocab)
    return CountTable(vocab, a.unigram + b.unigram, a.bigram + b.bigram)


def merge_all(tables: Sequence[CountTable]) -> CountTable:
    """Left fold of :func:`merge_counts` in the given order."""
    out = CountTable.empty()
    for t in tables:
        out = merge_counts(out, t)
    return out


def leave_one_out(total: CountTable, block_k: CountTable) -> CountTable:
    """Counts of ``total`` with ``block_k`` removed, over ``total``'s vocabulary."""
    missing = [t for t, c in zip(block_k.vocab.tokens, block_k.unigram)
               if c and t not in total.vocab]
    if missing:
        raise UnderflowError(f"tokens absent from total: {missing[:5]}")
    block = block_k.compact().reindex(total.vocab)
    unigram = total.unigram - block.unigram
    bigram = total.bigram - block.bigram
    if (unigram < 0).any():
        bad = total.vocab.tokens[int(np.flatnonzero(unigram < 0)[0])]
        raise UnderflowError(f"block count exceeds total for token {bad!r}")
    if bigram.nnz and bigram.data.min() < 0:
        coo = bigram.tocoo()
        k = int(np.flatnonzero(coo.data < 0)[0])
        toks = total.vocab.tokens
        raise UnderflowError(
            f"block count exceeds total for bigram ({toks[coo.row[k]]}, {toks[coo.col[k]]})")
    return CountTable(total.vocab, unigram, bigram)


@dataclass(frozen=True)
class FreqView:
    """Relative frequencies f_i and conditional relative frequencies f_{i|j}.

    ``f`` covers every token including ``<s>``, but its denominator excludes
    ``<s>``, so the stochastic vector is ``f[outcome_mask]``.
    """

    vocab: Vocabulary
    f: np.ndarray
    f_cond: sparse.csr_array
    denominator_total: int

    def f_i(self, token: str) -> float:
        k = self.vocab.index.get(token)
        return 0.0 if k is None else float(self.f[k])

    def f_i_given_j(self, j: str, i: str) -> float:
        kj, ki = self.vocab.index.get(j), self.vocab.index.get(i)
        if kj is None or ki is None:
            return 0.0
        return float(self.f_cond[kj, ki])


def freqs(table: CountTable) -> FreqView:
    denom = int(table.unigram[table.vocab.outcome_mask].sum())
    if denom == 0:
        raise EmptyCorpus("no tokens other than <s>; relative frequencies undefined")
    f = table.unigram / denom
    row_tot = table.unigram.astype(np.float64)
    inv = np.divide(1.0, row_tot, out=np.zeros_like(row_tot), where=row_tot > 0)
    f_cond = sparse.csr_array(sparse.diags_array(inv) @ table.bigram.astype(np.float64))
    f_cond.sort_indices()
    return FreqView(table.vocab, f, f_cond, denom)


@dataclass(frozen=True)
class DirichletStats:
    """Per-outcome N_1i, G_i, H_i plus the histogram of context counts F_j.

    Arrays are indexed by vocabulary id; ``<s>`` is never an outcome and has
    zeros. ``fj_values``/``fj_multiplicity`` hold the distinct positive F_j
    over contexts (``</s>`` excluded) and how many contexts share each.
    """

    vocab: Vocabulary
    n1: np.ndarray
    G: np.ndarray
    H: np.ndarray
    fj_values: np.ndarray
    fj_multiplicity: np.ndarray

    @property
    def fj_histogram(self) -> Counter:
        return Counter(dict(zip(self.fj_values.tolist(), self.fj_multiplicity.tolist())))

    @property
    def outcome_mask(self) -> np.ndarray:
        return self.vocab.outcome_mask


def _harmonic_tables(max_count: int) -> tuple[np.ndarray, np.ndarray]:
    """``h1[n] = sum_{k<=n} 1/k`` and ``h2[n] = sum_{k<=n} 1/k^2`` for n = 0..max_count."""
    k = np.arange(1, max_count + 1, dtype=np.float64)
    h1 = np.concatenate(([0.0], np.cumsum(1.0 / k)))
    h2 = np.concatenate(([0.0], np.cumsum(1.0 / (k * k))))
    return h1, h2


def dirichlet_stats(table: CountTable) -> DirichletStats:
    W = len(table.vocab)
    coo = table.bigram.tocoo()
    cols, data = coo.col, coo.data
    n1 = np.bincount(cols, minlength=W).astype(np.int64)
    if data.size:
        # a context seen F times adds sum_{k=1}^{F-1} 1/k to G and 1/k^2 to H
        h1, h2 = _harmonic_tables(int(data.max()))
        G = np.bincount(cols, weights=h1[data - 1], minlength=W)
        H = np.bincount(cols, weights=h2[data - 1], minlength=W)
    else:
        G = np.zeros(W)
        H = np.zeros(W)
    fj = table.unigram[table.vocab.context_mask]
    fj = fj[fj > 0]
    values, mult = np.unique(fj, return_counts=True)
    return DirichletStats(table.vocab, n1, G, H, values.astype(np.int64), mult.astype(np.int64))


# --- text formats ---------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".15g")


def _line_key(line: str) -> bytes:
    return line.split(" ", 1)[1].encode("utf-8")


def format_unigram_counts(table: CountTable) -> list[str]:
    lines = [f"{int(c)} {t}" for t, c in zip(table.vocab.tokens, table.unigram) if c]
    return sorted(lines, key=_line_key)


def format_bigram_counts(table: CountTable) -> list[str]:
    toks = table.vocab.tokens
    lines = [f"{c} {toks[j]} {toks[i]}" for j, i, c in table.bigram_items()]
    return sorted(lines, key=_line_key)


def write_counts(table: CountTable, prefix) -> tuple[str, str]:
    """Write ``<prefix>.tok.counts`` and ``<prefix>.bigr.counts``."""
    tok_path, bigr_path = f"{prefix}.tok.counts", f"{prefix}.bigr.counts"
    _write_lines(tok_path, format_unigram_counts(table))
    _write_lines(bigr_path, format_bigram_counts(table))
    return tok_path, bigr_path


def read_counts(prefix) -> CountTable:
    uni: dict[str, int] = {}
    with open(f"{prefix}.tok.counts", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{prefix}.tok.counts:{lineno}: expected 'count token'")
            uni[parts[1]] = uni.get(parts[1], 0) + int(parts[0])
    bi: dict[tuple[str, str], int] = {}
    with open(f"{prefix}.bigr.counts", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ValueError(f"{prefix}.bigr.counts:{lineno}: expected 'count j i'")
            key = (parts[1], parts[2])
            bi[key] = bi.get(key, 0) + int(parts[0])
    vocab = Vocabulary(list(uni) + [t for k in bi for t in k])
    W = len(vocab)
    unigram = np.zeros(W, dtype=np.int64)
    for t, c in uni.items():
        unigram[vocab.index[t]] = c
    if bi:
        rows = [vocab.index[j] for j, _ in bi]
        cols = [vocab.index[i] for _, i in bi]
        bigram = sparse.coo_array((np.fromiter(bi.values(), dtype=np.int64), (rows, cols)),
                                  shape=(W, W)).tocsr()
    else:
        bigram = sparse.csr_array((W, W), dtype=np.int64)
    return CountTable(vocab, unigram, bigram)


def write_freqs(view: FreqView, prefix) -> tuple[str, str]:
    """Write ``<prefix>.tok.freq`` ("freq token") and ``<prefix>.bigr.freq`` ("freq j i")."""
    toks = view.vocab.tokens
    tok_lines = sorted((f"{_fmt(f)} {t}" for t, f in zip(toks, view.f) if f > 0),
                       key=_line_key)
    coo = view.f_cond.tocoo()
    bigr_lines = sorted((f"{_fmt(v)} {toks[j]} {toks[i]}"
                         for j, i, v in zip(coo.row, coo.col, coo.data) if v > 0),
                        key=_line_key)
    _write_lines(f"{prefix}.tok.freq", tok_lines)
    _write_lines(f"{prefix}.bigr.freq", bigr_lines)
    return f"{prefix}.tok.freq", f"{prefix}.bigr.freq"


def _write_lines(path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
