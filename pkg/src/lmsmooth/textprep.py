"""Text preparation: tokenization, block interleaving and test-sample construction.

A sentence is a plain tuple of token strings that starts with ``"<s>"`` and
ends with ``"</s>"``.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .exceptions import EmptySentence, InvalidBlockCount

BOS = "<s>"
EOS = "</s>"

Sentence = tuple  # tuple[str, ...]

_NUMBER = re.compile(r"[+-]?\d+(?:[.,]\d+)*")
_APOS_SUFFIX = re.compile(r"'(?:s|t|re|ve|ll|d|m)", re.IGNORECASE)
_STEM_AND_SUFFIX = re.compile(r"(.*[^'])('(?:s|t|re|ve|ll|d|m))", re.IGNORECASE)
_SENTENCE_NUMBER = re.compile(r"^\s*\d+\.\s*")

DEFAULT_ABBREVIATIONS = frozenset({
    "Mr.", "Mrs.", "Dr.", "Ms.", "No.", "hon.", "Hon.", "incl.",
    "a.m.", "p.m.", "St.", "Jr.", "Sr.", "vs.", "etc.",
})
DEFAULT_PUNCTUATION = frozenset(".,!?:;\"'`")
# multi-character punctuation kept as a single token
_UNITS = ("--", "...")


@dataclass(frozen=True)
class TokenizerRules:
    number_token: str = "#"
    abbreviation_whitelist: frozenset = field(default=DEFAULT_ABBREVIATIONS)
    split_punctuation: frozenset = field(default=DEFAULT_PUNCTUATION)
    apostrophe_suffix_split: bool = True

    def __post_init__(self):
        if not self.split_punctuation:
            raise ValueError("split_punctuation must be nonempty")
        bad = [a for a in self.abbreviation_whitelist if not a.endswith(".")]
        if bad:
            raise ValueError(f"abbreviations must end with '.': {sorted(bad)}")
        if not self.number_token or any(c.isspace() for c in self.number_token):
            raise ValueError("number_token must be a nonempty token without whitespace")


DEFAULT_RULES = TokenizerRules()


def _split_token(tok: str, rules: TokenizerRules) -> list[str]:
    if tok in rules.abbreviation_whitelist or tok in _UNITS:
        return [tok]
    for unit in _UNITS:
        if unit in tok:
            head, _, tail = tok.partition(unit)
            out = _split_token(head, rules) if head else []
            out.append(unit)
            if tail:
                out.extend(_split_token(tail, rules))
            return out
    if rules.apostrophe_suffix_split and _APOS_SUFFIX.fullmatch(tok):
        return [tok]
    if len(tok) > 1 and tok[0] in rules.split_punctuation:
        return [tok[0]] + _split_token(tok[1:], rules)
    if len(tok) > 1 and tok[-1] in rules.split_punctuation:
        return _split_token(tok[:-1], rules) + [tok[-1]]
    if rules.apostrophe_suffix_split:
        m = _STEM_AND_SUFFIX.fullmatch(tok)
        if m:
            return _split_token(m.group(1), rules) + [m.group(2)]
    if _NUMBER.fullmatch(tok):
        return [rules.number_token]
    return [tok]


def tokenize_sentence(raw_line: str, rules: TokenizerRules = DEFAULT_RULES) -> Sentence:
    """Tokenize one line of text and wrap it in sentence markers.

    Numbers become ``rules.number_token``, punctuation is detached unless the
    word is a whitelisted abbreviation, and apostrophe suffixes such as
    ``'s`` become their own tokens. Marker tokens already present in the line
    are discarded, so re-tokenizing the space-joined output is a no-op.

    >>> tokenize_sentence("He said 10 .")
    ('<s>', 'He', 'said', '#', '.', '</s>')
    """
    if "\n" in raw_line.rstrip("\r\n"):
        raise ValueError("raw_line must hold a single sentence")
    tokens: list[str] = []
    for word in raw_line.split():
        if word in (BOS, EOS):
            continue
        tokens.extend(t for t in _split_token(word, rules) if t not in (BOS, EOS))
    if not tokens:
        raise EmptySentence(f"no tokens in {raw_line!r}")
    return (BOS, *tokens, EOS)


def strip_sentence_number(line: str) -> str:
    """Drop a leading ``"12. "`` style sentence number."""
    return _SENTENCE_NUMBER.sub("", line, count=1)


def join_wrapped_lines(text: str) -> str:
    """Join continuation lines (a newline followed by a space) onto the previous line."""
    return text.replace("\n ", " ")


def check_sentence(sentence: Sequence[str]) -> Sentence:
    s = tuple(sentence)
    if len(s) < 2 or s[0] != BOS or s[-1] != EOS:
        raise ValueError(f"sentence must start with {BOS} and end with {EOS}: {s!r}")
    for tok in s[1:-1]:
        if tok in (BOS, EOS):
            raise ValueError(f"sentence marker inside sentence: {s!r}")
        if not tok or any(c.isspace() for c in tok):
            raise ValueError(f"invalid token {tok!r}")
    return s


def parse_sentence(line: str) -> Sentence:
    """Parse an already tokenized, space-separated line."""
    return check_sentence(line.split())


def format_sentence(sentence: Sequence[str]) -> str:
    return " ".join(sentence)


def split_blocks(sentences: Sequence[Sentence], b: int) -> list[list[Sentence]]:
    """Deal sentences round-robin into ``b`` blocks (sentence t goes to block t mod b)."""
    if not isinstance(b, int) or b < 1:
        raise InvalidBlockCount(f"block count must be a positive integer, got {b!r}")
    blocks: list[list[Sentence]] = [[] for _ in range(b)]
    for t, s in enumerate(sentences):
        blocks[t % b].append(s)
    return blocks


def interleave_blocks(blocks: Sequence[Sequence[Sentence]]) -> list[Sentence]:
    """Inverse of :func:`split_blocks`."""
    out = []
    sizes = [len(blk) for blk in blocks]
    for t in range(max(sizes, default=0)):
        for blk in blocks:
            if t < len(blk):
                out.append(blk[t])
    return out


def filter_oov(test: Iterable[Sentence], vocab) -> list[Sentence]:
    """Keep the sentences whose every token is in ``vocab`` (Sample 1)."""
    return [s for s in test if all(tok in vocab for tok in s)]


def dedup(sample1: Sequence[Sentence], training: Iterable[Sentence],
          keep_first: bool = False) -> list[Sentence]:
    """Remove sentences seen in training and sentences repeated within the sample (Sample 2).

    By default every copy of a repeated test sentence is removed; with
    ``keep_first`` the first occurrence survives.
    """
    seen_in_training = {tuple(s) for s in training}
    counts = Counter(tuple(s) for s in sample1)
    out = []
    emitted = set()
    for s in sample1:
        key = tuple(s)
        if key in seen_in_training:
            continue
        if counts[key] > 1:
            if not keep_first or key in emitted:
                continue
            emitted.add(key)
        out.append(s)
    return out


def _sort_key(sentence: Sequence[str]) -> bytes:
    return " ".join(sentence).encode("utf-8")


def half_sample(sample2: Sequence[Sentence]) -> list[Sentence]:
    """Sort byte-lexicographically and keep the first half, rounded down (Sample 3)."""
    ordered = sorted(sample2, key=_sort_key)
    return ordered[: len(ordered) // 2]


def build_samples(test: Sequence[Sentence], training: Sequence[Sentence],
                  keep_first: bool = False) -> dict[str, list[Sentence]]:
    """Construct the three test samples from held-out sentences."""
    vocab = {tok for s in training for tok in s}
    sample1 = filter_oov(test, vocab)
    sample2 = dedup(sample1, training, keep_first=keep_first)
    return {
        "sample1": sample1,
        "sample2": sample2,
        "sample3": half_sample(sample2),
    }


def read_sentences(path) -> list[Sentence]:
    with open(path, encoding="utf-8") as fh:
        return [parse_sentence(line) for line in fh if line.strip()]


def write_sentences(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sentences:
            fh.write(format_sentence(s))
            fh.write("\n")
