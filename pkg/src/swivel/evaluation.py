"""Word similarity and analogy scoring for embedding tables."""

from __future__ import annotations

import gzip
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DegenerateResultError(ValueError):
    """A metric is undefined for the given data (e.g. constant rankings)."""


class EmbeddingTable:
    """Token to vector lookup. Tokens are lowercased on construction."""

    def __init__(self, tokens: Sequence[str], vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError("need one d-vector per token")
        self.tokens = [t.lower() for t in tokens]
        self.vectors = vectors
        self.index = {}
        for i, t in enumerate(self.tokens):
            self.index.setdefault(t, i)  # first (most frequent) spelling wins
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        self.unit = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __getitem__(self, token):
        return self.vectors[self.index[token]]

    @classmethod
    def load(cls, path: str) -> "EmbeddingTable":
        """Read the text format, or raw f32 with a ``<path>.vocab`` sidecar."""
        sidecar = f"{path}.vocab"
        if os.path.exists(sidecar):
            with open(sidecar, encoding="utf-8") as fh:
                tokens = [line.split("\t")[0] for line in fh.read().splitlines() if line]
            data = np.fromfile(path, dtype="<f4")
            if len(tokens) == 0 or data.size % len(tokens):
                raise ValueError(f"{path}: size does not match {len(tokens)} sidecar tokens")
            return cls(tokens, data.reshape(len(tokens), -1))
        with open(path, encoding="utf-8") as fh:
            count, dim = (int(x) for x in fh.readline().split())
            tokens, rows = [], []
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise ValueError(f"{path}: expected {dim} values for {parts[0]!r}")
                tokens.append(parts[0])
                rows.append([float(v) for v in parts[1:]])
        if len(tokens) != count:
            raise ValueError(f"{path}: header says {count} rows, found {len(tokens)}")
        return cls(tokens, np.array(rows, dtype=np.float64).reshape(count, dim))


def cosine(u, v) -> float:
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def average_ranks(values) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], len(values)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    return ranks


def spearman_rho(model_scores, human_scores) -> float:
    """Pearson correlation of average ranks."""
    x, y = np.asarray(model_scores, float), np.asarray(human_scores, float)
    if len(x) != len(y):
        raise ValueError("score lists differ in length")
    if len(x) < 2:
        raise ValueError("need at least 2 pairs")
    rx, ry = average_ranks(x), average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0:
        raise DegenerateResultError("a ranking has zero variance; Spearman's rho is undefined")
    return float(np.clip(rx @ ry / denom, -1.0, 1.0))


@dataclass
class SimilarityDataset:
    name: str
    pairs: list  # (word1, word2, score)

    def __post_init__(self):
        if not self.pairs:
            raise ValueError(f"similarity dataset {self.name!r} is empty")
        if not all(math.isfinite(s) for _, _, s in self.pairs):
            raise ValueError(f"similarity dataset {self.name!r} has non-finite scores")

    @classmethod
    def load(cls, path: str, name: str | None = None) -> "SimilarityDataset":
        pairs = []
        for line in _read_lines(path):
            parts = line.split()
            if not parts or line.startswith("#") or len(parts) < 3:
                continue
            try:
                score = float(parts[2])
            except ValueError:
                continue  # header line
            pairs.append((parts[0].lower(), parts[1].lower(), score))
        return cls(name or _stem(path), pairs)


@dataclass
class AnalogyDataset:
    name: str
    questions: list  # (a, b, c, d)
    sections: list  # section label per question

    def __post_init__(self):
        if not self.questions:
            raise ValueError(f"analogy dataset {self.name!r} is empty")
        if len(self.sections) != len(self.questions):
            raise ValueError("one section label per question")

    @classmethod
    def load(cls, path: str, name: str | None = None) -> "AnalogyDataset":
        questions, sections, section = [], [], ""
        for line in _read_lines(path):
            line = line.strip()
            if not line or line.startswith("//"):
                continue
            if line.startswith(":"):
                section = line[1:].strip()
                continue
            parts = line.lower().split()
            if len(parts) != 4:
                raise ValueError(f"{path}: analogy lines need 4 tokens, got {line!r}")
            questions.append(tuple(parts))
            sections.append(section)
        return cls(name or _stem(path), questions, sections)


def _read_lines(path):
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return fh.read().splitlines()


def _stem(path):
    base = os.path.basename(path)
    for ext in (".gz", ".txt", ".tsv", ".csv"):
        base = base.removesuffix(ext)
    return base


@dataclass
class SimilarityResult:
    name: str
    rho: float
    used: int
    skipped: int


def evaluate_similarity(table: EmbeddingTable, dataset: SimilarityDataset) -> SimilarityResult:
    """Spearman's rho of cosine vs human scores; pairs with OOV words are skipped."""
    model, human = [], []
    for w1, w2, score in dataset.pairs:
        if w1 in table and w2 in table:
            model.append(cosine(table[w1], table[w2]))
            human.append(score)
    skipped = len(dataset.pairs) - len(model)
    if not model:
        raise ValueError(f"{dataset.name}: every pair has an out-of-vocabulary word")
    if len(model) < 2:
        raise DegenerateResultError(f"{dataset.name}: only one in-vocabulary pair")
    return SimilarityResult(dataset.name, spearman_rho(model, human), len(model), skipped)


@dataclass
class AnalogyResult:
    name: str
    correct: int
    total: int
    oov: int
    sections: dict = field(default_factory=dict)  # label -> (correct, total)
    hits: np.ndarray = field(default=None, repr=False)  # per question, True if answered correctly

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def evaluate_analogy(table: EmbeddingTable, dataset: AnalogyDataset, batch_size: int = 512) -> AnalogyResult:
    """3CosAdd over the whole table, query words excluded, OOV counted as wrong.

    The prediction for ``a : b :: c : ?`` is the token maximising the cosine
    with ``b - a + c`` built from unit vectors; ties go to the lowest id.
    """
    index = table.index
    hits = np.zeros(len(dataset.questions), dtype=bool)
    known = [i for i, q in enumerate(dataset.questions) if all(w in index for w in q)]
    ids = np.array([[index[w] for w in dataset.questions[i]] for i in known], dtype=np.int64).reshape(-1, 4)
    unit = table.unit
    for start in range(0, len(known), batch_size):
        chunk = ids[start : start + batch_size]
        a, b, c, d = chunk.T
        queries = unit[b] - unit[a] + unit[c]
        # ranking by dot with unit rows equals ranking by cosine: |query| is fixed per row
        scores = queries @ unit.T
        rows = np.arange(len(chunk))
        scores[rows, a] = -np.inf
        scores[rows, b] = -np.inf
        scores[rows, c] = -np.inf
        hits[np.asarray(known[start : start + batch_size])] = scores.argmax(axis=1) == d
    sections = {}
    for label, hit in zip(dataset.sections, hits):
        c, t = sections.get(label, (0, 0))
        sections[label] = (c + int(hit), t + 1)
    total = len(dataset.questions)
    return AnalogyResult(dataset.name, int(hits.sum()), total, total - len(known), sections, hits)


@dataclass
class FrequencyBucket:
    mean_log10_freq: float
    lo: float
    hi: float
    accuracy: float
    count: int


def analogy_accuracy_by_frequency(
    table: EmbeddingTable,
    dataset: AnalogyDataset,
    vocab,
    buckets: int = 10,
    min_size: int = 100,
    result: AnalogyResult | None = None,
) -> tuple[list[FrequencyBucket], int]:
    """Accuracy against log10 of the mean corpus frequency of the four words.

    Questions are binned over equal-width log-frequency intervals; any bin
    smaller than ``min_size`` is merged into its smaller neighbour until all
    bins qualify or one bin remains. Out-of-vocabulary words count as
    frequency 0 and the mean is floored at 1. Returns the buckets and the
    number of merges performed.
    """
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    result = result or evaluate_analogy(table, dataset)
    counts = dict(zip(vocab.tokens, vocab.counts))
    keys = np.array([math.log10(max(np.mean([counts.get(w, 0) for w in q]), 1.0)) for q in dataset.questions])
    lo, hi = float(keys.min()), float(keys.max())
    if hi == lo:
        edges = np.array([lo, hi])
    else:
        edges = np.linspace(lo, hi, buckets + 1)
    which = np.clip(np.searchsorted(edges, keys, side="right") - 1, 0, len(edges) - 2)
    groups = [np.flatnonzero(which == b) for b in range(len(edges) - 1)]
    bounds = [(edges[b], edges[b + 1]) for b in range(len(edges) - 1)]
    groups, bounds = _drop_empty(groups, bounds)

    merges = 0
    while len(groups) > 1:
        sizes = [len(g) for g in groups]
        small = [i for i, s in enumerate(sizes) if s < min_size]
        if not small:
            break
        i = min(small, key=lambda j: (sizes[j], j))
        if i == 0:
            j = 1
        elif i == len(groups) - 1:
            j = i - 1
        else:
            j = i - 1 if sizes[i - 1] <= sizes[i + 1] else i + 1
        a, b = min(i, j), max(i, j)
        groups[a : b + 1] = [np.concatenate([groups[a], groups[b]])]
        bounds[a : b + 1] = [(bounds[a][0], bounds[b][1])]
        merges += 1

    out = []
    for g, (blo, bhi) in zip(groups, bounds):
        out.append(FrequencyBucket(float(keys[g].mean()), float(blo), float(bhi), float(result.hits[g].mean()), len(g)))
    return out, merges


def _drop_empty(groups, bounds):
    keep = [i for i, g in enumerate(groups) if len(g)]
    return [groups[i] for i in keep], [bounds[i] for i in keep]


def nearest_neighbors(table: EmbeddingTable, token: str, top_n: int = 10) -> list[tuple[str, float]]:
    """Most cosine-similar tokens, excluding the query; ties go to the lower id."""
    if token not in table:
        raise KeyError(f"{token!r} is not in the vocabulary")
    q = table.index[token]
    scores = table.unit @ table.unit[q]
    scores[q] = -np.inf
    order = np.argsort(-scores, kind="stable")[: min(top_n, len(table) - 1)]
    return [(table.tokens[i], float(scores[i])) for i in order]


def report_records(results) -> list[dict]:
    """Flatten results into JSON-lines records: name, metric, value, used, skipped."""
    records = []
    for r in results:
        if isinstance(r, SimilarityResult):
            records.append(
                {"name": r.name, "metric": "spearman_rho", "value": r.rho, "used": r.used, "skipped": r.skipped}
            )
        elif isinstance(r, AnalogyResult):
            records.append(
                {"name": r.name, "metric": "accuracy", "value": r.accuracy, "used": r.total - r.oov, "skipped": r.oov}
            )
            for label, (c, t) in r.sections.items():
                if label:
                    records.append(
                        {"name": f"{r.name}/{label}", "metric": "accuracy", "value": c / t, "used": t, "skipped": 0}
                    )
    return records


def format_report(records: list[dict]) -> str:
    width = max([len(r["name"]) for r in records] + [7])
    lines = [f"{'dataset':<{width}}  {'metric':<12} {'value':>8} {'used':>6} {'skipped':>7}"]
    for r in records:
        lines.append(f"{r['name']:<{width}}  {r['metric']:<12} {r['value']:>8.4f} {r['used']:>6d} {r['skipped']:>7d}")
    return "\n".join(lines)


def dumps_jsonl(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
