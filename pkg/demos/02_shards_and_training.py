"""Shard a random matrix, train on it, and watch the reconstruction error fall."""

import numpy as np

from swivel.corpus import CoocAccumulator
from swivel.matrix import finalize_matrix, iter_shards, shard_of
from swivel.objective import pmi
from swivel.trainer import TrainConfig, init_embeddings, train

rng = np.random.default_rng(0)
m = 64
X = rng.integers(1, 1000, (m, m)).astype(float)
r, c = np.nonzero(X)
mat, plan = finalize_matrix(CoocAccumulator(r, c, X[r, c]), m, m, k=8)

print(f"{plan.m}x{plan.n} matrix, k={plan.k}: {plan.row_blocks}x{plan.col_blocks} = {plan.num_shards} shards")
print("row block 0 holds rows", plan.row_ids(0).tolist())
print("row block 3 holds rows", plan.row_ids(3).tolist())
print("cell (17, 42) lives in shard", shard_of(plan, 17, 42)[:2], "at local", shard_of(plan, 17, 42)[2:])

shards = list(iter_shards(mat, plan))
target = pmi(X, mat.row_marginals[:, None], mat.col_marginals[None, :], mat.total)
store = init_embeddings(plan.m, plan.n, d=64, seed=0)


def rmse():
    P = store.W.astype(float) @ store.W_tilde.T.astype(float)
    return np.sqrt(np.mean((P - target) ** 2))


print(f"\nRMSE before training: {rmse():.4f}")
result = train(shards, store, TrainConfig(dim=64, steps=3000), progress=lambda s: s.epoch % 10 == 1 and print(s.line()))
print(f"RMSE after {result.state.step} steps: {rmse():.4f}")
print("epoch losses (every 5th):", np.round(result.loss_trace[::5], 4).tolist())
