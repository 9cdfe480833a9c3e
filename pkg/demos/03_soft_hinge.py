"""What the model does with a pair it never saw.

Features 0 and 1 are both very common, yet (0, 0) never co-occurs. The
soft hinge lets the model put that cell anywhere below its smoothed PMI,
and pushes it down hard if it drifts above. Compare an ordinary observed
cell, which is fitted to its PMI.
"""

import numpy as np

from swivel.corpus import CoocAccumulator
from swivel.matrix import finalize_matrix, iter_shards
from swivel.objective import loss_unobserved, pmi, smoothed_pmi
from swivel.trainer import TrainConfig, init_embeddings, train

rng = np.random.default_rng(3)
m = 16
X = rng.integers(1, 50, (m, m)).astype(float)
X[:2, :] *= 40
X[:, :2] *= 40
X[0, 0] = 0
r, c = np.nonzero(X)
mat, plan = finalize_matrix(CoocAccumulator(r, c, X[r, c]), m, m, k=8)
rows, cols, total = mat.row_marginals, mat.col_marginals, mat.total

bound = smoothed_pmi(rows[0], cols[0], total)
print(f"smoothed PMI of the unseen pair: {bound:.3f}")
for z in (-4, -1, 0, 1, 4):
    loss, grad = loss_unobserved(bound + z, rows[0], cols[0], total)
    print(f"  prediction bound{z:+d}: loss {loss:.4f} slope {grad:.4f}")

store = init_embeddings(plan.m, plan.n, d=16, seed=0)
train(list(iter_shards(mat, plan)), store, TrainConfig(dim=16, steps=8000))
P = store.W.astype(float) @ store.W_tilde.T.astype(float)
print(f"\ntrained prediction for the unseen pair: {P[0, 0]:.3f} (bound {bound:.3f})")
print(f"observed pair (1, 1): prediction {P[1, 1]:.4f}, PMI {pmi(X[1, 1], rows[1], cols[1], total):.4f}")
