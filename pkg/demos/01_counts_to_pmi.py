"""From raw text to a PMI table, on a corpus small enough to read."""

import numpy as np

from swivel.corpus import CoocConfig, build_vocabulary, count_cooccurrences, tokenize
from swivel.matrix import finalize_matrix
from swivel.objective import pmi, smoothed_pmi

text = """The cat sat on the mat. The dog sat on the log!
A cat and a dog met. The cat ran; the dog didn't."""

sentences = tokenize(text)
for s in sentences:
    print(s)

vocab = build_vocabulary(sentences, max_size=8)
print("\nvocabulary (id, token, count):")
for i, (tok, cnt) in enumerate(vocab.items()):
    print(f"  {i:2d} {tok:8s} {cnt}")

# harmonic window: a neighbour 2 tokens away adds 1/2
acc = count_cooccurrences(sentences, vocab, CoocConfig(window=3, scaling="harmonic"))
mat, plan = finalize_matrix(acc, vocab.size, vocab.size, k=2)
X = mat.cells.toarray()[: vocab.size, : vocab.size]
print("\nco-occurrence counts:")
print(np.array2string(X, precision=2, suppress_small=True))

rows, cols = mat.row_marginals[: vocab.size], mat.col_marginals[: vocab.size]
observed = X > 0
P = np.where(
    observed,
    pmi(np.where(observed, X, 1), rows[:, None], cols[None, :], mat.total),
    smoothed_pmi(rows[:, None], cols[None, :], mat.total),
)
print("\nPMI (observed cells) and smoothed PMI (unobserved cells, marked *):")
header = "        " + " ".join(f"{t:>7s}" for t in vocab.tokens)
print(header)
for i, tok in enumerate(vocab.tokens):
    cells = [f"{P[i, j]:6.2f}" + (" " if observed[i, j] else "*") for j in range(vocab.size)]
    print(f"{tok:>7s} " + " ".join(cells))
