"""Pairwise similarity loss, quantization loss, and their gradients at u.

Each pair (i, j) contributes through theta = 0.5 * u_i . u_j.  When the
pair is completely similar or dissimilar (indicator 1, target s is
exactly 1 or 0), the term is a negative log-likelihood weighted by
alpha; otherwise it is the squared gap between the target similarity
and sigmoid(theta).  A quantization term beta * ||b - u||^2 pulls each
relaxed output toward its current binary code.  Losses are raw sums,
not means: step sizes are expected to absorb the scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossConfig",
    "PairBatch",
    "sigmoid",
    "log1pexp",
    "pair_loss",
    "quant_loss",
    "pair_loss_sum",
    "quant_loss_sum",
    "total_loss",
    "grad_u",
]


@dataclass(frozen=True)
class LossConfig:
    """Loss weights: alpha scales the log-likelihood branch, beta the quantization pull."""

    alpha: float = 2.0
    beta: float = 100.0

    def __post_init__(self) -> None:
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("loss weights must be nonnegative")


def sigmoid(t):
    """Logistic function, numerically stable for any magnitude."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(t, dtype=np.float64)))


def log1pexp(t):
    """log(1 + exp(t)) computed as max(t, 0) + log1p(exp(-|t|)) to avoid overflow."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _check_target(s: float, ind: int) -> None:
    if ind not in (0, 1):
        raise ValueError(f"indicator must be 0 or 1, got {ind!r}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"target similarity must lie in [0, 1], got {s}")
    if ind == 1 and s not in (0.0, 1.0):
        raise ValueError(f"inconsistent pair: indicator 1 requires s in {{0, 1}}, got {s}")
    if ind == 0 and (s == 0.0 or s == 1.0):
        raise ValueError(f"inconsistent pair: indicator 0 requires 0 < s < 1, got {s}")


@dataclass
class PairBatch:
    """Within-batch index pairs with their similarity targets.

    Indices address rows of the mini-batch, i < j for each unordered
    pair.  Construction validates that targets and indicators are
    mutually consistent.
    """

    i: np.ndarray
    j: np.ndarray
    s: np.ndarray
    indicator: np.ndarray

    def __post_init__(self) -> None:
        self.i = np.asarray(self.i, dtype=np.intp)
        self.j = np.asarray(self.j, dtype=np.intp)
        self.s = np.asarray(self.s, dtype=np.float64)
        self.indicator = np.asarray(self.indicator, dtype=np.uint8)
        if not (self.i.ndim == self.j.ndim == self.s.ndim == self.indicator.ndim == 1):
            raise ValueError("pair fields must be one-dimensional")
        if not (len(self.i) == len(self.j) == len(self.s) == len(self.indicator)):
            raise ValueError("pair fields must share one length")
        if np.any(self.i == self.j):
            raise ValueError("pairs must join two distinct items")
        if not np.isin(self.indicator, (0, 1)).all():
            raise ValueError("indicator entries must be 0 or 1")
        if self.s.size and (self.s.min() < 0.0 or self.s.max() > 1.0):
            raise ValueError("target similarities must lie in [0, 1]")
        hard = self.indicator == 1
        if np.any(hard & (self.s != 0.0) & (self.s != 1.0)):
            raise ValueError("inconsistent pair: indicator 1 requires s in {0, 1}")
        if np.any(~hard & ((self.s == 0.0) | (self.s == 1.0))):
            raise ValueError("inconsistent pair: indicator 0 requires 0 < s < 1")

    def __len__(self) -> int:
        return len(self.s)

    @classmethod
    def within_batch(cls, s_block: np.ndarray, ind_block: np.ndarray) -> "PairBatch":
        """All unordered pairs (i < j) from a square similarity block."""
        s_block = np.asarray(s_block)
        if s_block.ndim != 2 or s_block.shape[0] != s_block.shape[1]:
            raise ValueError("expected a square similarity block")
        iu, ju = np.triu_indices(s_block.shape[0], k=1)
        return cls(iu, ju, s_block[iu, ju], np.asarray(ind_block)[iu, ju])


def _check_batch(batch_u, batch_b) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(batch_u, dtype=np.float64)
    b = np.asarray(batch_b, dtype=np.float64)
    if u.ndim != 2 or b.shape != u.shape:
        raise ValueError("batch u and codes must be 2-D arrays of one shape")
    if b.size and not np.isin(b, (-1.0, 1.0)).all():
        raise ValueError("codes must be -1 or +1")
    return u, b


def _check_pairs(pairs: PairBatch, m: int) -> None:
    if len(pairs) and (pairs.i.min() < 0 or pairs.j.min() < 0 or max(pairs.i.max(), pairs.j.max()) >= m):
        raise ValueError("pair index out of batch")


def pair_loss(u_i, u_j, s: float, ind: int, alpha: float) -> float:
    """Loss contribution of one unordered pair."""
    a = np.asarray(u_i, dtype=np.float64)
    b = np.asarray(u_j, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("pair outputs must be 1-D vectors of one length")
    _check_target(float(s), int(ind))
    if alpha < 0.0:
        raise ValueError("alpha must be nonnegative")
    theta = 0.5 * float(a @ b)
    if ind:
        return float(alpha * (log1pexp(theta) - s * theta))
    gap = s - float(sigmoid(theta))
    return gap * gap


def quant_loss(u, b) -> float:
    """Squared distance between one relaxed output and its binary code."""
    uv = np.asarray(u, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if uv.ndim != 1 or uv.shape != bv.shape:
        raise ValueError("quantization inputs must be 1-D vectors of one length")
    if not np.isin(bv, (-1.0, 1.0)).all():
        raise ValueError("codes must be -1 or +1")
    diff = bv - uv
    return float(diff @ diff)


def _pair_terms(u: np.ndarray, pairs: PairBatch, alpha: float) -> np.ndarray:
    theta = 0.5 * np.einsum("ij,ij->i", u[pairs.i], u[pairs.j])
    sig = sigmoid(theta)
    nll = alpha * (log1pexp(theta) - pairs.s * theta)
    gap = pairs.s - sig
    return np.where(pairs.indicator == 1, nll, gap * gap)


def pair_loss_sum(batch_u, pairs: PairBatch, alpha: float) -> float:
    """Sum of pair losses over a mini-batch pair set."""
    u = np.asarray(batch_u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("batch u must be a 2-D array")
    _check_pairs(pairs, u.shape[0])
    if alpha < 0.0:
        raise ValueError("alpha must be nonnegative")
    if not len(pairs):
        return 0.0
    return float(np.sum(_pair_terms(u, pairs, alpha)))


def quant_loss_sum(batch_u, batch_b) -> float:
    """Sum of quantization losses over a mini-batch."""
    u, b = _check_batch(batch_u, batch_b)
    return float(np.sum((b - u) ** 2))


def total_loss(batch_u, batch_b, pairs: PairBatch, cfg: LossConfig) -> float:
    """Pair-loss sum plus beta times the quantization sum."""
    u, b = _check_batch(batch_u, batch_b)
    _check_pairs(pairs, u.shape[0])
    return pair_loss_sum(u, pairs, cfg.alpha) + cfg.beta * quant_loss_sum(u, b)


def grad_u(batch_u, batch_b, pairs: PairBatch, cfg: LossConfig) -> np.ndarray:
    """Exact gradient of ``total_loss`` with respect to each row of u.

    Per pair, the log-likelihood branch contributes
    0.5 * alpha * (sigmoid(theta) - s) times the partner row, and the
    squared-gap branch contributes
    -sigmoid(theta) * (1 - sigmoid(theta)) * (s - sigmoid(theta)) times
    the partner row.  Both rows of a pair receive their contribution.
    The codes b are treated as constants, adding 2 * beta * (u - b).
    """
    u, b = _check_batch(batch_u, batch_b)
    _check_pairs(pairs, u.shape[0])
    grad = 2.0 * cfg.beta * (u - b)
    if len(pairs):
        theta = 0.5 * np.einsum("ij,ij->i", u[pairs.i], u[pairs.j])
        sig = sigmoid(theta)
        coef = np.where(
            pairs.indicator == 1,
            0.5 * cfg.alpha * (sig - pairs.s),
            -sig * (1.0 - sig) * (pairs.s - sig),
        )
        np.add.at(grad, pairs.i, coef[:, None] * u[pairs.j])
        np.add.at(grad, pairs.j, coef[:, None] * u[pairs.i])
    return grad
