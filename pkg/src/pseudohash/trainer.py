"""Mini-batch SGD with an alternating binary-code refresh.

Each iteration forwards one mini-batch, re-signs that batch's codes,
then steps the parameters against the pair and quantization losses with
the codes held fixed.  After the last epoch every code is recomputed
from the final parameters, so the stored codes always match the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hashnet import (
    FeatureMatrix,
    ModelGrads,
    backward,
    encode_all,
    forward,
    init_model,
    sgd_step,
    sign_codes,
)
from .labelspace import LabelMatrix, block_similarity
from .objective import LossConfig, PairBatch, grad_u, pair_loss_sum, quant_loss_sum
from .retrieval import CodeStore

__all__ = [
    "LR_DROP_ITERS",
    "SCHEDULES",
    "STEP_NORM_LIMIT",
    "TrainConfig",
    "TrainResult",
    "clip_grads",
    "lr_at",
    "epoch_batches",
    "train",
]

SCHEDULES = ("every_third_of_epochs", "every_k_iters")

LR_DROP_ITERS = 50  # iteration period of the every_k_iters schedule

# Global-norm cap on one step's gradient.  Healthy runs keep the
# normalized step norm around 1e1; when a batch is dominated by near
# identical feature rows the update feeds back through their Gram
# matrix and the norm runs away by orders of magnitude per epoch, so
# anything past this limit is pathology, not signal.
STEP_NORM_LIMIT = 100.0


@dataclass
class TrainConfig:
    """Everything a training run needs besides the data itself."""

    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.01
    lr_schedule: str = "every_third_of_epochs"
    alpha: float = 2.0
    beta: float = 100.0
    seed: int = 0
    k: int = 16
    hidden_dims: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.lr_schedule not in SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {SCHEDULES}, got {self.lr_schedule!r}")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.k < 1:
            raise ValueError("code length k must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer widths must be positive")

    def loss_config(self) -> LossConfig:
        return LossConfig(alpha=self.alpha, beta=self.beta)


def lr_at(cfg: TrainConfig, epoch: int, iteration: int) -> float:
    """Learning rate for a given epoch and global iteration.

    The default schedule divides by 10 after each third of the epoch
    budget; the alternative divides by 10 every LR_DROP_ITERS
    iterations regardless of epochs.
    """
    if epoch < 0 or iteration < 0:
        raise ValueError("epoch and iteration counters must be nonnegative")
    if cfg.lr_schedule == "every_third_of_epochs":
        if cfg.epochs <= 0:
            return cfg.lr
        return cfg.lr * 10.0 ** -((3 * epoch) // cfg.epochs)
    return cfg.lr * 10.0 ** -(iteration // LR_DROP_ITERS)


def epoch_batches(rng: np.random.Generator, n: int, batch_size: int) -> list[np.ndarray]:
    """One epoch's seeded shuffle cut into consecutive mini-batches.

    Every index appears exactly once per epoch; the last batch is
    smaller when batch_size does not divide n.
    """
    if n < 1:
        raise ValueError("need at least one item")
    if batch_size < 1 or batch_size > n:
        raise ValueError(f"batch_size must lie in [1, {n}], got {batch_size}")
    order = rng.permutation(n)
    return [order[lo:lo + batch_size] for lo in range(0, n, batch_size)]


def clip_grads(grads: ModelGrads, limit: float) -> float:
    """Scale every gradient array so the global norm is at most limit.

    Returns the norm before clipping; arrays are modified in place only
    when the limit is exceeded, so results below it are untouched.
    """
    if limit <= 0.0:
        raise ValueError("norm limit must be positive")
    arrays = [a for pair in grads.layers for a in pair] + [grads.W, grads.v]
    norm = math.sqrt(sum(float(np.sum(a * a)) for a in arrays))
    if norm > limit:
        factor = limit / norm
        for a in arrays:
            a *= factor
    return norm


@dataclass
class TrainResult:
    model: object
    codes: CodeStore
    log: list[dict] = field(default_factory=list)


def train(features: FeatureMatrix, labels: LabelMatrix, cfg: TrainConfig) -> TrainResult:
    """Run the full training loop and return the model, final codes, and log.

    The log carries one record per iteration: epoch, iteration, lr, and
    the batch's pair-loss sum, quantization sum, and weighted total.
    Identical inputs and config give identical results.
    """
    n = features.n
    if n < 2:
        raise ValueError("training needs at least two items")
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds item count {n}")
    aligned = labels.reordered(features.ids)
    X = features.x
    model = init_model(features.d, cfg.hidden_dims, cfg.k, cfg.seed)
    loss_cfg = cfg.loss_config()
    rng = np.random.default_rng(cfg.seed)
    codes = encode_all(model, X)
    log: list[dict] = []
    iteration = 0
    for epoch in range(cfg.epochs):
        for batch in epoch_batches(rng, n, cfg.batch_size):
            lr = lr_at(cfg, epoch, iteration)
            trace = forward(model, X[batch])
            batch_codes = sign_codes(trace.u)
            codes[batch] = batch_codes
            s_block, ind_block = block_similarity(aligned, batch, batch)
            pairs = PairBatch.within_batch(s_block, ind_block)
            pair_sum = pair_loss_sum(trace.u, pairs, cfg.alpha)
            quant_sum = quant_loss_sum(trace.u, batch_codes)
            # The losses are raw sums, so the step normalizes by the number
            # of summed terms (quantization rows plus pairs); otherwise the
            # configured rate would have to shrink with every batch-size or
            # beta change to keep the bias update contractive.
            scale = len(batch) + pairs.i.size
            step_grad = grad_u(trace.u, batch_codes, pairs, loss_cfg) / scale
            grads = backward(model, trace, step_grad)
            clip_grads(grads, STEP_NORM_LIMIT)
            sgd_step(model, grads, lr)
            log.append({
                "epoch": epoch,
                "iteration": iteration,
                "lr": lr,
                "pair_loss": pair_sum,
                "quant_loss": quant_sum,
                "total_loss": pair_sum + cfg.beta * quant_sum,
            })
            iteration += 1
    final_codes = encode_all(model, X)
    return TrainResult(model, CodeStore.from_signs(features.ids, final_codes), log)
