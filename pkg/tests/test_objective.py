import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import cell_loss
from swivel.matrix import Shard
from swivel.objective import (
    ObjectiveConfig,
    WeightParams,
    confidence,
    loss_observed,
    loss_unobserved,
    pmi,
    shard_objective,
    smoothed_pmi,
    softplus,
)

counts = st.floats(0.5, 1e6)
preds = st.floats(-40, 40)
LOG5 = math.log(5)


def make_shard(X, row=None, col=None, total=None):
    X = np.asarray(X, dtype=np.float32)
    row = X.sum(axis=1, dtype=np.float64) if row is None else np.asarray(row, float)
    col = X.sum(axis=0, dtype=np.float64) if col is None else np.asarray(col, float)
    total = float(X.sum(dtype=np.float64)) if total is None else total
    return Shard(0, 0, 1, 1, X, row, col, total)


def test_pmi_values():
    assert pmi(1, 1, 1, 1) == 0
    assert pmi(2, 4, 4, 16) == pytest.approx(math.log(2), abs=1e-15)
    assert abs(pmi(6.0, 3.0, 8.0, 4.0)) < 1e-12  # 6 = 3 * 8 / 4
    for bad in ((0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 1, float("nan"))):
        with pytest.raises(ValueError):
            pmi(*bad)


def test_smoothed_pmi_values():
    assert smoothed_pmi(1, 1, 1) == 0
    assert smoothed_pmi(50, 50, 50) == pytest.approx(-math.log(50))
    assert smoothed_pmi(10, 10, 1000) == pytest.approx(math.log(10))
    assert smoothed_pmi(7, 3, 90) == pmi(1, 7, 3, 90)
    with pytest.raises(ValueError):
        smoothed_pmi(0, 1, 1)


def test_confidence_values():
    assert confidence(100) == 2.6
    assert confidence(1) == pytest.approx(0.35, abs=1e-15)
    assert confidence(0.5) > 0.1  # fractional counts are fine
    with pytest.raises(ValueError):
        confidence(0)


@given(st.floats(0, 2), st.floats(0.01, 3), st.floats(0.01, 1))
def test_confidence_monotone(b0, b, alpha):
    w = WeightParams(alpha, b0, b)
    assert confidence(4, w) < confidence(9, w)


def test_weight_params_validation():
    with pytest.raises(ValueError):
        WeightParams(b0=-0.1)
    with pytest.raises(ValueError):
        WeightParams(b=0)
    with pytest.raises(ValueError):
        WeightParams(alpha=1.5)
    with pytest.raises(ValueError):
        ObjectiveConfig(shift=float("inf"))


def test_observed_branch_values():
    x, r, c, t = 100.0, 400.0, 300.0, 5000.0
    target = pmi(x, r, c, t)
    assert loss_observed(target, x, r, c, t) == (0, 0)
    loss, grad = loss_observed(target + 1, x, r, c, t)
    assert loss == pytest.approx(1.3, rel=1e-12) and grad == pytest.approx(2.6, rel=1e-12)
    lo, go = loss_observed(target - 1, x, r, c, t)
    assert lo == pytest.approx(loss) and go == pytest.approx(-grad)


def test_unobserved_branch_values():
    r, c, t = 40.0, 25.0, 1000.0
    target = smoothed_pmi(r, c, t)
    loss, grad = loss_unobserved(target, r, c, t)
    assert abs(loss - math.log(2)) < 1e-12 and abs(grad - 0.5) < 1e-12
    loss, grad = loss_unobserved(target + 30, r, c, t)
    assert loss == pytest.approx(30, abs=1e-12) and grad == pytest.approx(1, abs=1e-12)
    loss, grad = loss_unobserved(target - 800, r, c, t)
    assert loss == 0 and grad == 0
    loss, grad = loss_unobserved(1e300, r, c, t)
    assert np.isfinite(loss) and grad == 1


def test_softplus_matches_direct_formula():
    z = np.linspace(-30, 30, 121)
    np.testing.assert_allclose(softplus(z), np.log1p(np.exp(z)), rtol=1e-13)


@settings(max_examples=200)
@given(preds, counts, counts, counts, st.sampled_from([0.0, LOG5]))
def test_gradients_match_central_differences(p, x, r, c, shift):
    # slopes below 1e-4 sit under the resolution of a 1e-6 difference quotient
    total = r + c + x
    cfg = ObjectiveConfig(shift=shift)
    h = 1e-6
    for fn in (
        lambda q: loss_observed(q, x, r, c, total, cfg),
        lambda q: loss_unobserved(q, r, c, total, cfg),
    ):
        analytic = fn(p)[1]
        numeric = (fn(p + h)[0] - fn(p - h)[0]) / (2 * h)
        scale = max(abs(analytic), abs(numeric))
        assume(scale > 1e-4)
        assert abs(analytic - numeric) <= 1e-6 * scale + 1e-9


@given(preds, counts, counts, counts)
def test_shift_lowers_both_targets_by_exactly_log5(p, x, r, c):
    total = r + c + x
    plain, shifted = ObjectiveConfig(), ObjectiveConfig(shift=LOG5)
    # shifting the target down is the same as raising the prediction
    assert loss_observed(p, x, r, c, total, shifted)[1] == pytest.approx(
        loss_observed(p + LOG5, x, r, c, total, plain)[1], rel=1e-9, abs=1e-9
    )
    assert loss_unobserved(p, r, c, total, shifted)[0] == pytest.approx(
        loss_unobserved(p + LOG5, r, c, total, plain)[0], rel=1e-9, abs=1e-12
    )


@given(preds, counts, counts, st.floats(1.5, 100))
def test_unobserved_penalty_grows_with_marginals(p, r, c, factor):
    total = 1e7
    assert loss_unobserved(p, r * factor, c, total)[0] >= loss_unobserved(p, r, c, total)[0]


@given(st.lists(preds, min_size=3, max_size=3, unique=True), counts, counts, counts)
def test_losses_are_convex_and_hinge_is_increasing(ps, x, r, c):
    a, b, d = sorted(ps)
    total = x + r + c
    lam = (d - b) / (d - a)
    for fn in (lambda q: loss_observed(q, x, r, c, total)[0], lambda q: loss_unobserved(q, r, c, total)[0]):
        assert fn(b) <= lam * fn(a) + (1 - lam) * fn(d) + 1e-9
    assert loss_unobserved(a, r, c, total)[0] <= loss_unobserved(d, r, c, total)[0]


def test_stress_large_counts():
    p = np.array([-1e6, -50.0, 0.0, 50.0, 1e6])
    for x in (1e-3, 1.0, 1e12):
        loss, grad = loss_observed(p, x, 1e12, 1e12, 1e12)
        assert np.isfinite(loss).all() and np.isfinite(grad).all()
    loss, grad = loss_unobserved(p, 1e12, 1e12, 1e12)
    assert np.isfinite(loss).all() and np.isfinite(grad).all()


# ----------------------------------------------------------- whole shards


def test_all_padded_shard_is_inert():
    shard = make_shard(np.zeros((3, 3)), np.zeros(3), np.zeros(3), 0.0)
    out = shard_objective(np.ones((3, 3)), shard)
    assert out.loss == 0 and not out.grad.any()


def test_one_cell_by_hand():
    e = math.e
    shard = make_shard([[e]], [e], [e], e)
    out = shard_objective(np.array([[1.0]]), shard)
    f = 0.1 + 0.25 * math.sqrt(e)
    # float32 storage of e perturbs the target by ~1e-8
    assert out.loss == pytest.approx(0.5 * f, rel=1e-6)
    assert out.grad[0, 0] == pytest.approx(f, rel=1e-6)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        shard_objective(np.zeros((2, 3)), make_shard(np.ones((2, 2))))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.sampled_from([0.0, LOG5]))
def test_shard_equals_sum_of_cells(k, seed, shift):
    rng = np.random.default_rng(seed)
    X = rng.integers(1, 50, (k, k)) * (rng.random((k, k)) < 0.6)
    row = X.sum(axis=1).astype(float) + rng.integers(0, 30, k)  # other shards add mass
    col = X.sum(axis=0).astype(float) + rng.integers(0, 30, k)
    dead = rng.random(k) < 0.2
    row[dead], X[dead] = 0, 0
    total = float(row.sum() + col.sum() + 1)
    P = rng.normal(0, 3, (k, k))
    cfg = ObjectiveConfig(shift=shift)
    out = shard_objective(P, make_shard(X, row, col, total), cfg)
    expect = sum(cell_loss(P[t, u], X[t, u], row[t], col[u], total, shift=shift) for t in range(k) for u in range(k))
    assert out.loss == pytest.approx(expect, rel=1e-10, abs=1e-12)
    assert not out.grad[dead].any()
    for t in range(k):
        for u in range(k):
            if row[t] and col[u]:
                x = float(X[t, u])
                g = (
                    loss_observed(P[t, u], x, row[t], col[u], total, cfg)[1]
                    if x > 0
                    else loss_unobserved(P[t, u], row[t], col[u], total, cfg)[1]
                )
                assert out.grad[t, u] == pytest.approx(g, rel=1e-10, abs=1e-15)
