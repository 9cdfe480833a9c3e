"""Text to vocabulary to sparse co-occurrence counts.

Counting is exact: every window weight is a rational number, so pairs are
tallied as integer numerators over a common denominator and each cell is
converted to the nearest double only once, at the end. Two counters fed
the same sentences in any order or partitioning therefore agree to the bit.
"""

from __future__ import annotations

import io
import math
import re
import sys
import warnings
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable, Iterator, Sequence

import numpy as np

SCALINGS = ("harmonic", "linear", "uniform")

_SENTENCE_END = re.compile(r"[.!?\n]+")
# letters/digits, optionally joined by internal hyphens or apostrophes
_TOKEN = re.compile(r"[^\W_]+(?:['-][^\W_]+)*")


def tokenize_line(text: str) -> list[list[str]]:
    text = text.lower().replace("’", "'")
    sentences = []
    for chunk in _SENTENCE_END.split(text):
        tokens = _TOKEN.findall(chunk)
        if tokens:
            sentences.append(tokens)
    return sentences


def tokenize(text: str | Iterable[str]) -> list[list[str]]:
    """Lowercase and split text into sentences of tokens.

    Sentences end at ``.``, ``!``, ``?`` and newlines. Other punctuation is
    dropped; hyphenated words and contractions stay whole.

    >>> tokenize("The cat. The DOG!")
    [['the', 'cat'], ['the', 'dog']]
    """
    if isinstance(text, str):
        return tokenize_line(text)
    return [s for line in text for s in tokenize_line(line)]


def iter_sentences(paths: Sequence[str]) -> Iterator[list[str]]:
    """Stream sentences from UTF-8 files (``-`` is stdin, ``.gz`` is gunzipped)."""
    for path in paths:
        for line in _open_text(path):
            yield from tokenize_line(line)


def _open_text(path: str):
    if path == "-":
        return io.TextIOWrapper(sys.stdin.buffer, encoding="utf-8")
    if path.endswith(".gz"):
        import gzip

        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


@dataclass(frozen=True)
class Vocabulary:
    """Frequency-ranked token table; the position of a token is its id."""

    tokens: tuple[str, ...]
    counts: tuple[int, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.tokens) != len(self.counts):
            raise ValueError("tokens and counts differ in length")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def items(self):
        return zip(self.tokens, self.counts)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for token, count in self.items():
                fh.write(f"{token}\t{count}\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        tokens, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    token, count = line.split("\t")
                    counts.append(int(count))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected 'token<TAB>count'") from None
                tokens.append(token)
        return cls(tuple(tokens), tuple(counts))


def build_vocabulary(sentences: Iterable[Sequence[str]], max_size: int, min_count: int = 1) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens seen at least ``min_count`` times.

    Ties in frequency are ordered lexicographically so ids are deterministic.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter = Counter()
    for sentence in sentences:
        counter.update(sentence)
    ranked = sorted((item for item in counter.items() if item[1] >= min_count), key=lambda tc: (-tc[1], tc[0]))
    ranked = ranked[:max_size]
    return Vocabulary(tuple(t for t, _ in ranked), tuple(c for _, c in ranked))


@dataclass(frozen=True)
class CoocConfig:
    window: int = 10
    scaling: str = "harmonic"
    symmetric: bool = True

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if not self.symmetric:
            raise ValueError("only symmetric counting is supported")

    def weight(self, distance: int) -> Fraction:
        """Exact weight given to a context token ``distance`` positions away."""
        if not 1 <= distance <= self.window:
            raise ValueError(f"distance {distance} outside window {self.window}")
        if self.scaling == "harmonic":
            return Fraction(1, distance)
        if self.scaling == "linear":
            return Fraction(self.window - distance + 1, self.window)
        return Fraction(1)

    def denominator(self) -> int:
        return reduce(math.lcm, (self.weight(d).denominator for d in range(1, self.window + 1)), 1)


@dataclass
class CoocAccumulator:
    """Sparse co-occurrence cells sorted by (row, col); absent cells are zero."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if not (len(self.rows) == len(self.cols) == len(self.values)):
            raise ValueError("rows, cols and values differ in length")

    @classmethod
    def empty(cls) -> "CoocAccumulator":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def from_dict(cls, cells: dict[tuple[int, int], float]) -> "CoocAccumulator":
        items = sorted((k, v) for k, v in cells.items() if v != 0)
        if not items:
            return cls.empty()
        rows = [i for (i, _), _ in items]
        cols = [j for (_, j), _ in items]
        return cls(np.array(rows), np.array(cols), np.array([v for _, v in items], dtype=np.float64))

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(v) for i, j, v in zip(self.rows, self.cols, self.values)}

    def total(self) -> float:
        return math.fsum(self.values.tolist())

    def merge(self, other: "CoocAccumulator") -> "CoocAccumulator":
        """Cell-wise sum of two accumulators."""
        rows = np.concatenate([self.rows, other.rows])
        cols = np.concatenate([self.cols, other.cols])
        values = np.concatenate([self.values, other.values])
        return _coalesce(rows, cols, values)

    def save(self, path: str) -> None:
        """Write the sparse ``i j count`` text interchange format."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i, j, v in zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()):
                fh.write(f"{i} {j} {v!r}\n")

    @classmethod
    def load(cls, path: str) -> "CoocAccumulator":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty file is a valid empty table
            data = np.loadtxt(path, dtype=str, ndmin=2, comments=None)
        if data.size == 0:
            return cls.empty()
        if data.shape[1] != 3:
            raise ValueError(f"{path}: expected 'i j count' lines")
        acc = _coalesce(data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2].astype(np.float64))
        if np.any(acc.rows < 0) or np.any(acc.cols < 0) or np.any(acc.values < 0):
            raise ValueError(f"{path}: negative ids or counts")
        return acc


def _coalesce(rows, cols, values) -> CoocAccumulator:
    if len(rows) == 0:
        return CoocAccumulator.empty()
    order = np.lexsort((cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    starts = np.flatnonzero(np.r_[True, (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])])
    summed = np.add.reduceat(values, starts)
    keep = summed != 0
    return CoocAccumulator(rows[starts][keep], cols[starts][keep], summed[keep])


class CooccurrenceCounter:
    """Streaming, mergeable, exact co-occurrence counter.

    Each counter is single-writer. Counters built from disjoint slices of a
    corpus combine with :meth:`merge`; the result does not depend on how the
    corpus was sliced.
    """

    def __init__(self, vocab: Vocabulary, config: CoocConfig, chunk_tokens: int = 1 << 20):
        if vocab.size == 0:
            raise ValueError("vocabulary is empty")
        self.vocab = vocab
        self.config = config
        self.chunk_tokens = chunk_tokens
        self.denominator = config.denominator()
        self._numerators = [int(config.weight(d) * self.denominator) for d in range(1, config.window + 1)]
        # exact integer numerators, keyed by row * size + col
        self._keys = np.zeros(0, np.int64)
        self._nums = np.zeros(0, np.int64)
        self._pending: list[tuple[np.ndarray, np.ndarray]] = []
        self._pending_tokens = 0
        self._buf_ids: list[int] = []
        self._buf_sent: list[int] = []
        self._sentence_no = 0

    def update(self, sentences: Iterable[Sequence[str]]) -> "CooccurrenceCounter":
        index = self.vocab.index
        for sentence in sentences:
            self._buf_ids.extend(index.get(tok, -1) for tok in sentence)
            self._buf_sent.extend([self._sentence_no] * len(sentence))
            self._sentence_no += 1
            if len(self._buf_ids) >= self.chunk_tokens:
                self._flush_buffer()
        return self

    def _flush_buffer(self):
        if not self._buf_ids:
            return
        ids = np.array(self._buf_ids, dtype=np.int64)
        sent = np.array(self._buf_sent, dtype=np.int64)
        self._buf_ids, self._buf_sent = [], []
        size = self.vocab.size
        keys, nums = [], []
        for d in range(1, self.config.window + 1):
            if d >= len(ids):
                break
            left, right = ids[:-d], ids[d:]
            ok = (sent[:-d] == sent[d:]) & (left >= 0) & (right >= 0)
            a, b = left[ok], right[ok]
            if len(a) == 0:
                continue
            k = np.concatenate([a * size + b, b * size + a])
            keys.append(k)
            nums.append(np.full(len(k), self._numerators[d - 1], dtype=np.int64))
        if keys:
            self._pending.append((np.concatenate(keys), np.concatenate(nums)))
            self._pending_tokens += len(ids)
        if self._pending_tokens >= 4 * self.chunk_tokens:
            self._reduce_pending()

    def _reduce_pending(self):
        if not self._pending:
            return
        keys = np.concatenate([self._keys] + [k for k, _ in self._pending])
        nums = _concat_exact([self._nums] + [n for _, n in self._pending])
        self._pending, self._pending_tokens = [], 0
        self._keys, self._nums = _reduce_exact(keys, nums)

    def merge(self, other: "CooccurrenceCounter") -> "CooccurrenceCounter":
        if other.vocab != self.vocab or other.config != self.config:
            raise ValueError("cannot merge counters with different vocabularies or configs")
        self._flush_buffer()
        other._flush_buffer()
        self._reduce_pending()
        other._reduce_pending()
        self._keys, self._nums = _reduce_exact(
            np.concatenate([self._keys, other._keys]), _concat_exact([self._nums, other._nums])
        )
        return self

    def result(self) -> CoocAccumulator:
        self._flush_buffer()
        self._reduce_pending()
        size = self.vocab.size
        nums = self._nums
        if nums.dtype != object and (len(nums) == 0 or int(nums.max()) < 2**53):
            # both operands exact in float64, so one correctly rounded division
            values = nums.astype(np.float64) / float(self.denominator)
        else:
            values = np.array([n / self.denominator for n in nums.tolist()], dtype=np.float64)
        return CoocAccumulator(self._keys // size, self._keys % size, values)


def _concat_exact(parts: list[np.ndarray]) -> np.ndarray:
    # int64 while the grand total provably fits, python ints beyond that
    if all(p.dtype != object for p in parts):
        bound = sum(float(np.abs(p).sum(dtype=np.float64)) for p in parts)
        if bound < 2.0**62:
            return np.concatenate(parts).astype(np.int64, copy=False)
    return np.concatenate([p.astype(object) for p in parts])


def _reduce_exact(keys: np.ndarray, nums: np.ndarray):
    if len(keys) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    order = np.argsort(keys, kind="stable")
    keys, nums = keys[order], nums[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    return keys[starts], np.add.reduceat(nums, starts)


def count_cooccurrences(
    sentences: Iterable[Sequence[str]], vocab: Vocabulary, config: CoocConfig | None = None
) -> CoocAccumulator:
    """Count windowed co-occurrences between in-vocabulary tokens.

    Out-of-vocabulary tokens contribute no counts but still occupy positions,
    so distances are surface distances. Windows never cross sentences.
    """
    return CooccurrenceCounter(vocab, config or CoocConfig()).update(sentences).result()
