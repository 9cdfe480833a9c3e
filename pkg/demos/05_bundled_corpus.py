"""A short run on the bundled corpus, then a look at what was learned.

Uses a smaller vocabulary and far fewer steps than the benchmark in the
test suite, so it finishes in about a minute. Expect rough neighbours.
"""

import os
import tempfile

from swivel.cli import main
from swivel.evaluation import EmbeddingTable, SimilarityDataset, evaluate_similarity, nearest_neighbors

here = os.path.dirname(os.path.abspath(__file__))
data = os.path.join(here, os.pardir, "data")
corpus = os.path.join(data, "gutenberg-small.txt.gz")

with tempfile.TemporaryDirectory() as tmp:
    path = lambda name: os.path.join(tmp, name)
    steps = [
        ["vocab", "--input", corpus, "--max-vocab", "4096", "--output", path("vocab")],
        ["cooc", "--input", corpus, "--vocab", path("vocab"), "--output", path("cooc")],
        ["shard", "--cooc", path("cooc"), "--vocab", path("vocab"), "--k", "256", "--output-dir", path("shards")],
        ["train", "--shards", path("shards"), "--dim", "64", "--steps", "20000", "--output", path("ck")],
        ["export", "--checkpoint", path("ck"), "--vocab", path("vocab"), "--output", path("vec.txt")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv[0]
    table = EmbeddingTable.load(path("vec.txt"))

for word in ("king", "love", "sword", "heaven", "night"):
    print(word, "->", ", ".join(t for t, _ in nearest_neighbors(table, word, 6)))

res = evaluate_similarity(table, SimilarityDataset.load(os.path.join(data, "wordsim353.tsv")))
print(f"\nWordSim353: rho {res.rho:.3f} over {res.used} pairs ({res.skipped} skipped as out of vocabulary)")
