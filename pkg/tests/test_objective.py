"""Pair and quantization losses plus their gradient at u."""

from __future__ import annotations

import math

import numpy as np
import pytest

from pseudohash import (
    LossConfig,
    PairBatch,
    grad_u,
    log1pexp,
    pair_loss,
    pair_loss_sum,
    quant_loss,
    quant_loss_sum,
    sigmoid,
    total_loss,
)

from gradcheck import central_diff_arrays, max_rel_err, random_setting
from oracles import ref_pair_loss, ref_quant_loss


def test_pair_loss_identical_pair_at_zero_outputs():
    # theta = 0 makes the log-likelihood branch alpha * log(2)
    val = pair_loss([0.0, 0.0], [0.0, 0.0], s=1.0, ind=1, alpha=2.0)
    assert abs(val - 2.0 * math.log(2.0)) < 1e-15
    assert val == 1.3862943611198906


def test_pair_loss_mse_branch():
    u_i = [1.0, 0.5]
    u_j = [0.5, -1.0]
    s = 1.0 / math.sqrt(2.0)
    theta = 0.5 * (1.0 * 0.5 + 0.5 * -1.0)
    want = (s - 1.0 / (1.0 + math.exp(-theta))) ** 2
    assert abs(pair_loss(u_i, u_j, s=s, ind=0, alpha=2.0) - want) < 1e-15


def test_pair_loss_alpha_only_scales_nll_branch():
    u_i, u_j = [0.3, -0.7], [0.9, 0.1]
    a1 = pair_loss(u_i, u_j, s=0.0, ind=1, alpha=1.0)
    a5 = pair_loss(u_i, u_j, s=0.0, ind=1, alpha=5.0)
    np.testing.assert_allclose(a5, 5.0 * a1, rtol=1e-15)
    m1 = pair_loss(u_i, u_j, s=0.5, ind=0, alpha=1.0)
    m5 = pair_loss(u_i, u_j, s=0.5, ind=0, alpha=5.0)
    assert m1 == m5


def test_pair_loss_matches_reference():
    rng = np.random.default_rng(13)
    for _ in range(200):
        k = int(rng.integers(1, 9))
        u_i = rng.normal(size=k)
        u_j = rng.normal(size=k)
        if rng.integers(0, 2):
            s, ind = float(rng.integers(0, 2)), 1
        else:
            s, ind = float(rng.uniform(0.05, 0.95)), 0
        alpha = float(rng.uniform(0.0, 5.0))
        np.testing.assert_allclose(
            pair_loss(u_i, u_j, s=s, ind=ind, alpha=alpha),
            ref_pair_loss(u_i, u_j, s, ind, alpha),
            rtol=1e-12,
        )


def test_pair_loss_rejects_inconsistent_targets():
    with pytest.raises(ValueError, match="indicator 1"):
        pair_loss([0.0], [0.0], s=0.5, ind=1, alpha=2.0)
    with pytest.raises(ValueError, match="indicator 0"):
        pair_loss([0.0], [0.0], s=1.0, ind=0, alpha=2.0)
    with pytest.raises(ValueError):
        pair_loss([0.0], [0.0], s=1.5, ind=1, alpha=2.0)
    with pytest.raises(ValueError):
        pair_loss([0.0], [0.0], s=1.0, ind=1, alpha=-1.0)


def test_quant_loss_worked_value():
    assert quant_loss([0.5, -2.0], [1.0, -1.0]) == 1.25


def test_quant_loss_matches_reference():
    rng = np.random.default_rng(29)
    for _ in range(100):
        k = int(rng.integers(1, 9))
        u = rng.normal(size=k)
        b = np.where(rng.integers(0, 2, size=k) == 1, 1.0, -1.0)
        np.testing.assert_allclose(quant_loss(u, b), ref_quant_loss(u, b), rtol=1e-14)


def test_quant_loss_rejects_nonbinary_codes():
    with pytest.raises(ValueError, match="-1 or \\+1"):
        quant_loss([0.5], [0.0])


def test_sigmoid_and_log1pexp_are_stable():
    assert sigmoid(1000.0) == 1.0
    assert sigmoid(-1000.0) == 0.0
    assert sigmoid(0.0) == 0.5
    assert log1pexp(1000.0) == 1000.0
    assert log1pexp(-1000.0) == 0.0
    np.testing.assert_allclose(log1pexp(0.0), math.log(2.0), rtol=1e-15)
    for t in (-30.0, -2.5, 0.1, 4.0, 30.0):
        # the tanh form trades far-tail relative precision for overflow
        # safety, so compare absolutely there
        np.testing.assert_allclose(sigmoid(t), 1.0 / (1.0 + math.exp(-t)), atol=1e-15)
        np.testing.assert_allclose(log1pexp(t), math.log1p(math.exp(t)), rtol=1e-12)


def test_pair_batch_validation():
    ok = PairBatch([0], [1], [0.5], [0])
    assert len(ok) == 1
    with pytest.raises(ValueError, match="distinct"):
        PairBatch([0], [0], [0.5], [0])
    with pytest.raises(ValueError, match="one length"):
        PairBatch([0], [1, 2], [0.5], [0])
    with pytest.raises(ValueError, match="indicator 1"):
        PairBatch([0], [1], [0.5], [1])
    with pytest.raises(ValueError, match="indicator 0"):
        PairBatch([0], [1], [0.0], [0])
    with pytest.raises(ValueError, match="\\[0, 1\\]"):
        PairBatch([0], [1], [1.5], [1])


def test_within_batch_enumerates_upper_triangle():
    s = np.array([
        [1.0, 0.5, 0.0],
        [0.5, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ])
    ind = np.array([
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 1],
    ])
    pairs = PairBatch.within_batch(s, ind)
    assert len(pairs) == 3
    np.testing.assert_array_equal(pairs.i, [0, 0, 1])
    np.testing.assert_array_equal(pairs.j, [1, 2, 2])
    np.testing.assert_array_equal(pairs.s, [0.5, 0.0, 1.0])
    np.testing.assert_array_equal(pairs.indicator, [0, 1, 1])
    with pytest.raises(ValueError, match="square"):
        PairBatch.within_batch(s[:2], ind[:2])


def test_sums_match_scalar_loops():
    rng = np.random.default_rng(41)
    model, X, codes, pairs = random_setting(rng)
    from pseudohash import forward

    u = forward(model, X).u
    pair_total = sum(
        pair_loss(u[i], u[j], s=s, ind=int(ind), alpha=2.0)
        for i, j, s, ind in zip(pairs.i, pairs.j, pairs.s, pairs.indicator)
    )
    np.testing.assert_allclose(pair_loss_sum(u, pairs, 2.0), pair_total, rtol=1e-12)
    quant_total = sum(quant_loss(u[r], codes[r]) for r in range(u.shape[0]))
    np.testing.assert_allclose(quant_loss_sum(u, codes), quant_total, rtol=1e-12)
    cfg = LossConfig(alpha=2.0, beta=100.0)
    np.testing.assert_allclose(
        total_loss(u, codes, pairs, cfg),
        pair_total + 100.0 * quant_total,
        rtol=1e-12,
    )


def test_total_loss_rejects_out_of_range_pairs():
    cfg = LossConfig()
    u = np.zeros((2, 3))
    b = np.ones((2, 3))
    bad = PairBatch([0], [5], [0.5], [0])
    with pytest.raises(ValueError, match="out of batch"):
        total_loss(u, b, bad, cfg)
    with pytest.raises(ValueError, match="out of batch"):
        grad_u(u, b, bad, cfg)


def test_grad_u_quant_only_when_no_pairs():
    cfg = LossConfig(alpha=2.0, beta=100.0)
    u = np.array([[0.5, -0.25]])
    b = np.array([[1.0, -1.0]])
    empty = PairBatch(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    np.testing.assert_allclose(grad_u(u, b, empty, cfg), 2.0 * 100.0 * (u - b))


def test_grad_u_matches_finite_differences():
    rng = np.random.default_rng(59)
    cfg = LossConfig(alpha=2.0, beta=100.0)
    for _ in range(10):
        model, X, codes, pairs = random_setting(rng)
        from pseudohash import forward

        u = forward(model, X).u.copy()
        analytic = grad_u(u, codes, pairs, cfg)
        numeric = central_diff_arrays(lambda: total_loss(u, codes, pairs, cfg), [u])[0]
        assert max_rel_err([analytic], [numeric]) < 1e-6
