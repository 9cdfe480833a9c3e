import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import spearman_by_hand
from swivel.corpus import Vocabulary
from swivel.evaluation import (
    AnalogyDataset,
    DegenerateResultError,
    EmbeddingTable,
    SimilarityDataset,
    analogy_accuracy_by_frequency,
    average_ranks,
    cosine,
    dumps_jsonl,
    evaluate_analogy,
    evaluate_similarity,
    format_report,
    nearest_neighbors,
    report_records,
    spearman_rho,
)

scores = st.lists(st.integers(-5, 5).map(float), min_size=2, max_size=25)


def analogy_table():
    """Four words per relation laid out on orthogonal axes so b - a + c = d."""
    tokens, vecs = [], []
    dim = 12
    e = np.eye(dim)
    for r, (a, b, c, d) in enumerate([("man", "king", "woman", "queen"), ("paris", "france", "rome", "italy")]):
        base = 6 * r
        # a = x, b = x + y, c = z, d = z + y
        x, y, z = e[base], e[base + 1], e[base + 2]
        for tok, v in ((a, x), (b, x + y), (c, z), (d, z + y)):
            tokens.append(tok)
            vecs.append(v)
    tokens += ["noise1", "noise2"]
    vecs += [e[10], e[11]]
    return EmbeddingTable(tokens, np.array(vecs))


def test_cosine_cases():
    v = np.array([3.0, -4.0, 1.0])
    assert cosine(v, v) == pytest.approx(1)
    assert cosine(v, -v) == pytest.approx(-1)
    assert cosine([1, 0], [0, 1]) == 0
    assert cosine([0, 0], [1, 2]) == 0
    with pytest.raises(ValueError):
        cosine([1, 2], [1, 2, 3])


def test_spearman_cases():
    assert spearman_rho([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert spearman_rho([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert spearman_rho([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        spearman_rho([1], [1])
    with pytest.raises(DegenerateResultError):
        spearman_rho([1, 1, 1], [1, 2, 3])


def test_average_ranks_ties():
    assert average_ranks([10, 20, 20, 5]).tolist() == [2, 3.5, 3.5, 1]


@given(scores, st.data())
def test_spearman_matches_hand_oracle(x, data):
    y = data.draw(st.lists(st.integers(-5, 5).map(float), min_size=len(x), max_size=len(x)))
    if len(set(x)) < 2 or len(set(y)) < 2:
        with pytest.raises(DegenerateResultError):
            spearman_rho(x, y)
        return
    assert spearman_rho(x, y) == pytest.approx(spearman_by_hand(x, y), abs=1e-12)


@given(scores, scores)
def test_spearman_invariant_under_monotone_maps(x, y):
    n = min(len(x), len(y))
    x, y = x[:n], y[:n]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    rho = spearman_rho(x, y)
    assert spearman_rho([math.exp(v) for v in x], [v**3 + 7 for v in y]) == pytest.approx(rho, abs=1e-12)


# -------------------------------------------------------------- similarity


def test_similarity_loading_and_oov_accounting(tmp_path):
    path = tmp_path / "sim.tsv"
    path.write_text(
        "# comment\nWord 1\tWord 2\tHuman (mean)\nKing\tqueen\t9\nking\tnoise1\t1\nman\twoman\t5\nman\tunicorn\t3\n"
    )
    data = SimilarityDataset.load(str(path))
    assert data.name == "sim" and len(data.pairs) == 4 and data.pairs[0] == ("king", "queen", 9.0)
    table = analogy_table()
    res = evaluate_similarity(table, data)
    assert (res.used, res.skipped) == (3, 1)
    assert res.used + res.skipped == len(data.pairs)


def test_similarity_perfect_fixture():
    # cosines to the first axis follow the angle, human scores follow it too
    angles = np.linspace(0, math.pi, 6)
    tokens = ["anchor"] + [f"w{i}" for i in range(6)]
    vecs = [[1.0, 0.0]] + [[math.cos(a), math.sin(a)] for a in angles]
    table = EmbeddingTable(tokens, np.array(vecs))
    pairs = [("anchor", f"w{i}", 10.0 - i) for i in range(6)]
    assert evaluate_similarity(table, SimilarityDataset("t", pairs)).rho == 1.0
    reverse = [(a, b, -s) for a, b, s in pairs]
    assert evaluate_similarity(table, SimilarityDataset("t", reverse)).rho == -1.0


def test_similarity_errors():
    table = analogy_table()
    with pytest.raises(ValueError, match="out-of-vocabulary"):
        evaluate_similarity(table, SimilarityDataset("t", [("x", "y", 1.0)]))
    with pytest.raises(ValueError):
        SimilarityDataset("t", [])
    with pytest.raises(ValueError):
        SimilarityDataset("t", [("a", "b", float("nan"))])


# ----------------------------------------------------------------- analogy


def test_analogy_perfect_fixture_and_oov():
    table = analogy_table()
    data = AnalogyDataset("t", [("man", "king", "woman", "queen"), ("paris", "france", "rome", "italy")], ["a", "b"])
    res = evaluate_analogy(table, data)
    assert res.accuracy == 1.0 and res.oov == 0
    with_oov = AnalogyDataset("t", data.questions + [("man", "king", "woman", "empress")], ["a", "b", "a"])
    res = evaluate_analogy(table, with_oov)
    assert (res.correct, res.total, res.oov) == (2, 3, 1)
    assert res.sections == {"a": (1, 2), "b": (1, 1)}


def test_analogy_excludes_query_words():
    # b - a + c lands nearest to b itself; the answer must be the runner-up
    tokens = ["a", "b", "c", "d"]
    vecs = np.array([[1.0, 0, 0], [0, 1.0, 0], [0.9, 0.1, 0.05], [0.2, 1.0, 0.3]])
    table = EmbeddingTable(tokens, vecs)
    res = evaluate_analogy(table, AnalogyDataset("t", [("a", "b", "c", "d")], [""]))
    assert res.correct == 1


def test_analogy_ties_go_to_lowest_id():
    e = np.eye(3)
    table = EmbeddingTable(["a", "b", "c", "x", "y"], np.array([e[0], e[0], e[0], e[2], e[2]]))
    res = evaluate_analogy(table, AnalogyDataset("t", [("a", "b", "c", "x"), ("a", "b", "c", "y")], ["", ""]))
    assert res.hits.tolist() == [True, False]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_analogy_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(30, 6))
    tokens = [f"t{i}" for i in range(30)]
    questions = [tuple(f"t{i}" for i in rng.choice(30, 4, replace=False)) for _ in range(40)]
    data = AnalogyDataset("r", questions, [""] * 40)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    a = evaluate_analogy(EmbeddingTable(tokens, vecs), data)
    b = evaluate_analogy(EmbeddingTable(tokens, vecs @ q), data)
    assert a.hits.tolist() == b.hits.tolist()


def test_analogy_file_format(tmp_path):
    path = tmp_path / "q.txt"
    path.write_text("// note\n: capital\nParis France Rome Italy\n: family\nman king woman queen\n")
    data = AnalogyDataset.load(str(path))
    assert data.questions[0] == ("paris", "france", "rome", "italy")
    assert data.sections == ["capital", "family"]
    path.write_text("a b c\n")
    with pytest.raises(ValueError):
        AnalogyDataset.load(str(path))


# --------------------------------------------------------- frequency bins


def freq_fixture(n_words=40, n_questions=600, seed=0, flat=False):
    rng = np.random.default_rng(seed)
    tokens = [f"w{i}" for i in range(n_words)]
    counts = [1000] * n_words if flat else [int(10 ** (5 * (1 - i / n_words))) + 1 for i in range(n_words)]
    table = EmbeddingTable(tokens, rng.normal(size=(n_words, 8)))
    questions = [tuple(tokens[i] for i in rng.choice(n_words, 4, replace=False)) for _ in range(n_questions)]
    return table, AnalogyDataset("f", questions, [""] * n_questions), Vocabulary(tuple(tokens), tuple(counts))


def test_uniform_frequency_gives_one_bucket():
    table, data, vocab = freq_fixture(flat=True)
    buckets, merges = analogy_accuracy_by_frequency(table, data, vocab, buckets=5)
    assert len(buckets) == 1 and buckets[0].count == len(data.questions) and merges == 0


def test_buckets_partition_and_average_to_overall():
    table, data, vocab = freq_fixture()
    overall = evaluate_analogy(table, data)
    buckets, _ = analogy_accuracy_by_frequency(table, data, vocab, buckets=8, min_size=50)
    assert sum(b.count for b in buckets) == overall.total
    assert all(b.count >= 50 for b in buckets)
    weighted = sum(b.accuracy * b.count for b in buckets) / overall.total
    assert weighted == pytest.approx(overall.accuracy, abs=1e-12)
    assert [b.lo for b in buckets[1:]] == [b.hi for b in buckets[:-1]]
    again, _ = analogy_accuracy_by_frequency(table, data, vocab, buckets=8, min_size=50)
    assert again == buckets


def test_small_buckets_merge():
    table, data, vocab = freq_fixture(n_questions=150)
    buckets, merges = analogy_accuracy_by_frequency(table, data, vocab, buckets=10, min_size=100)
    assert merges > 0 and all(b.count >= 100 for b in buckets)


# --------------------------------------------------------------- neighbors


def test_nearest_neighbors():
    e = np.eye(3)
    table = EmbeddingTable(["q", "dup2", "dup1", "far"], np.array([e[0], e[0] + 0.1 * e[1], e[0] + 0.1 * e[1], e[2]]))
    got = nearest_neighbors(table, "q", top_n=10)
    assert [t for t, _ in got] == ["dup2", "dup1", "far"]
    assert nearest_neighbors(table, "q", top_n=1)[0][0] == "dup2"
    with pytest.raises(KeyError):
        nearest_neighbors(table, "missing")


def test_table_lowercases_and_loads(tmp_path):
    table = EmbeddingTable(["The", "the"], np.array([[1.0], [2.0]]))
    assert table["the"][0] == 1.0
    path = tmp_path / "bad.txt"
    path.write_text("2 2\na 1 2\n")
    with pytest.raises(ValueError):
        EmbeddingTable.load(str(path))


def test_report_records():
    table = analogy_table()
    sim = evaluate_similarity(
        table, SimilarityDataset("s", [("man", "woman", 1.0), ("man", "king", 2.0), ("x", "y", 3.0)])
    )
    ana = evaluate_analogy(
        table, AnalogyDataset("a", [("man", "king", "woman", "queen"), ("q", "r", "s", "t")], ["fam", "fam"])
    )
    records = report_records([sim, ana])
    assert records[0] == {"name": "s", "metric": "spearman_rho", "value": sim.rho, "used": 2, "skipped": 1}
    assert records[1] == {"name": "a", "metric": "accuracy", "value": 0.5, "used": 1, "skipped": 1}
    assert records[2]["name"] == "a/fam"
    lines = dumps_jsonl(records).splitlines()
    assert [json.loads(line) for line in lines] == records
    assert format_report(records).splitlines()[0].split() == ["dataset", "metric", "value", "used", "skipped"]
