"""PMI targets and the piecewise observed / unobserved loss.

Observed cells (count > 0) pay a confidence-weighted squared error against
their PMI. Unobserved cells pay a softplus ("soft hinge") on how far the
prediction rises above the PMI they would have with a single co-occurrence,
so under-estimating them is nearly free. Every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class WeightParams:
    alpha: float = 0.5
    b0: float = 0.1
    b: float = 0.25

    def __post_init__(self):
        if self.b0 < 0:
            raise ValueError("b0 must be >= 0")
        if self.b <= 0:
            raise ValueError("b must be > 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")


@dataclass(frozen=True)
class ObjectiveConfig:
    weights: WeightParams = field(default_factory=WeightParams)
    shift: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.shift):
            raise ValueError("shift must be finite")


def _require_positive(**values):
    for name, value in values.items():
        if np.any(np.asarray(value) <= 0) or np.any(np.isnan(value)):
            raise ValueError(f"{name} must be strictly positive")


def pmi(x_ij, x_row, x_col, total):
    """log x_ij + log |D| - log x_i* - log x_*j."""
    _require_positive(x_ij=x_ij, x_row=x_row, x_col=x_col, total=total)
    return np.log(x_ij) + np.log(total) - np.log(x_row) - np.log(x_col)


def smoothed_pmi(x_row, x_col, total):
    """PMI of a cell as if it had been observed exactly once."""
    _require_positive(x_row=x_row, x_col=x_col, total=total)
    return np.log(total) - np.log(x_row) - np.log(x_col)


def confidence(x_ij, weights: WeightParams = WeightParams()):
    _require_positive(x_ij=x_ij)
    return weights.b0 + weights.b * np.power(x_ij, weights.alpha)


def softplus(z):
    """log(1 + e^z) without overflow."""
    z = np.asarray(z, dtype=np.float64)
    out = np.log1p(np.exp(-np.abs(z)))
    out += np.maximum(z, 0.0)
    return out


def sigmoid(z):
    return expit(np.asarray(z, dtype=np.float64))


def softplus_and_sigmoid(z):
    """Soft-hinge loss and its derivative, sharing one softplus evaluation.

    Uses sigmoid(z) = exp(z - softplus(z)), which stays accurate in both
    tails and avoids a second full pass of divisions and selects.
    """
    sp = softplus(z)
    return sp, np.exp(z - sp)


def loss_observed(p, x_ij, x_row, x_col, total, cfg: ObjectiveConfig = ObjectiveConfig()):
    """Weighted squared error; returns (loss, dloss/dp)."""
    f = confidence(x_ij, cfg.weights)
    err = p - (pmi(x_ij, x_row, x_col, total) - cfg.shift)
    return 0.5 * f * err * err, f * err


def loss_unobserved(p, x_row, x_col, total, cfg: ObjectiveConfig = ObjectiveConfig()):
    """Soft hinge against the smoothed PMI; returns (loss, dloss/dp)."""
    z = p - (smoothed_pmi(x_row, x_col, total) - cfg.shift)
    return softplus_and_sigmoid(z)


@dataclass
class ShardGradient:
    loss: float
    grad: np.ndarray


@dataclass
class ShardTargets:
    """Per-shard constants of the objective, independent of the predictions.

    Sizes are O(k + nnz), so they can be kept for every shard of a run.
    """

    row_term: np.ndarray  # log|D| - shift - log x_i*, per local row
    col_term: np.ndarray  # log x_*j, per local column
    observed: np.ndarray  # flat indices of cells with count > 0 in live rows/cols
    log_counts: np.ndarray  # log x_ij at those cells
    weights: np.ndarray  # f(x_ij) at those cells
    live_rows: np.ndarray
    live_cols: np.ndarray
    dead: bool  # some row or column has zero marginal
    empty: bool  # nothing in the shard can contribute


def prepare_targets(shard, cfg: ObjectiveConfig = ObjectiveConfig()) -> ShardTargets:
    counts = np.asarray(shard.counts, dtype=np.float64)
    row_m = np.asarray(shard.row_marginals, dtype=np.float64)
    col_m = np.asarray(shard.col_marginals, dtype=np.float64)
    live_rows, live_cols = row_m > 0, col_m > 0
    total = float(shard.total)
    empty = total <= 0 or not live_rows.any() or not live_cols.any()
    log_total = math.log(total) if total > 0 else 0.0
    row_term = log_total - cfg.shift - np.log(np.where(live_rows, row_m, 1.0))
    col_term = np.log(np.where(live_cols, col_m, 1.0))
    live = live_rows[:, None] & live_cols[None, :]
    observed = np.flatnonzero((counts > 0) & live)
    x = counts.ravel()[observed]
    w = cfg.weights
    return ShardTargets(
        row_term,
        col_term,
        observed,
        np.log(x),
        w.b0 + w.b * np.power(x, w.alpha),
        live_rows,
        live_cols,
        bool(not live_rows.all() or not live_cols.all()),
        empty,
    )


def shard_objective(predictions, shard, cfg: ObjectiveConfig = ObjectiveConfig(), targets=None) -> ShardGradient:
    """Loss summed over a shard and its gradient w.r.t. each predicted value.

    Cells whose row or column marginal is zero (padding, or features that
    never co-occur with anything) contribute nothing. ``targets`` may carry
    a cached :func:`prepare_targets` result for this shard and config.
    """
    P = np.asarray(predictions, dtype=np.float64)
    if P.shape != tuple(shard.counts.shape):
        raise ValueError(f"predictions shape {P.shape} != shard shape {tuple(shard.counts.shape)}")
    t = targets if targets is not None else prepare_targets(shard, cfg)
    if t.empty:
        return ShardGradient(0.0, np.zeros_like(P))

    # every cell first as unobserved (target = smoothed PMI) ...
    z = P - t.row_term[:, None]
    z += t.col_term[None, :]
    loss, grad = softplus_and_sigmoid(z)
    # ... then overwrite observed cells with the weighted squared error
    zo = z.ravel()[t.observed] - t.log_counts
    loss.ravel()[t.observed] = 0.5 * t.weights * zo * zo
    grad.ravel()[t.observed] = t.weights * zo
    if t.dead:
        live = t.live_rows[:, None] & t.live_cols[None, :]
        loss *= live
        grad *= live
    return ShardGradient(float(loss.sum()), grad)
