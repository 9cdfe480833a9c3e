"""Several workers sharing one parameter store without locks.

Runs with more than one worker are not repeatable: the interleaving of
reads and writes differs every time. The result should still be about as
good as the single-worker run.
"""

import time

import numpy as np

from swivel.corpus import CoocAccumulator
from swivel.matrix import finalize_matrix, iter_shards
from swivel.objective import pmi
from swivel.trainer import TrainConfig, init_embeddings, train

rng = np.random.default_rng(0)
X = rng.integers(1, 1000, (64, 64)).astype(float)
r, c = np.nonzero(X)
mat, plan = finalize_matrix(CoocAccumulator(r, c, X[r, c]), 64, 64, k=8)
shards = list(iter_shards(mat, plan))
target = pmi(X, mat.row_marginals[:, None], mat.col_marginals[None, :], mat.total)

for workers in (1, 1, 4, 4, 4):
    store = init_embeddings(plan.m, plan.n, 64, seed=0)
    t0 = time.perf_counter()
    train(shards, store, TrainConfig(dim=64, steps=3000, workers=workers))
    P = store.W.astype(float) @ store.W_tilde.T.astype(float)
    rmse = np.sqrt(np.mean((P - target) ** 2))
    print(f"workers={workers}  RMSE {rmse:.5f}  {time.perf_counter() - t0:.2f} s  finite={store.is_finite()}")
