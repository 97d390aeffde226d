"""Training loop: Adam with bias correction, global-norm clipping, and a
learning rate that holds for two epochs then halves every epoch after.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ClozeExample
from .neural import ParamStore
from .reader import ReaderModel, answer, forward_batch

LOSS_FLOOR = 1e-12


@dataclass
class TrainConfig:
    batch_size: int = 64
    base_lr: float = 0.001
    clip_threshold: float = 10.0
    epochs: int = 10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ValueError("adam betas must be in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")


class AdamState:
    """First and second moment accumulators plus the shared step counter."""

    def __init__(self, params: ParamStore):
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.t = 0


def loss_node(pass_result, answer_word: str) -> Tensor:
    """Negative log of the answer's aggregated probability, floored."""
    positions = pass_result.dist.positions.get(answer_word)
    if not positions:
        raise ValueError(
            f"unanswerable example {pass_result.example.id!r}: "
            f"answer {answer_word!r} does not occur in the document"
        )
    return ad.neg(ad.log_floored(ad.sum_at(pass_result.p, positions), LOSS_FLOOR))


def loss(pass_result, answer_word: str) -> float:
    return float(loss_node(pass_result, answer_word).data)


def clip_gradients(
    grads: dict[str, np.ndarray], threshold: float
) -> dict[str, np.ndarray]:
    """Scale all gradients so the global L2 norm is at most the threshold."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    total = 0.0
    for g in grads.values():
        if not np.isfinite(g).all():
            raise ValueError("non-finite gradient")
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm <= threshold:
        return {name: g.copy() for name, g in grads.items()}
    factor = threshold / norm
    return {name: g * factor for name, g in grads.items()}


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum((g * g).sum() for g in grads.values())))


def adam_step(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    config: TrainConfig,
) -> None:
    """Bias-corrected Adam update, applied in place."""
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    state.t += 1
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, t in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for {name}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / corr1
        v_hat = state.v[name] / corr2
        t.data = t.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def lr_schedule(epoch: int, base_lr: float) -> float:
    """Epochs 1 and 2 run at base_lr; every later epoch halves it again."""
    if epoch < 1:
        raise ValueError("epochs are numbered from 1")
    if epoch <= 2:
        return base_lr
    return base_lr / (2.0 ** (epoch - 2))


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    valid_acc: float


class TrainHistory:
    def __init__(self):
        self.rows: list[EpochStats] = []

    def append(self, row: EpochStats) -> None:
        self.rows.append(row)

    def to_csv(self) -> str:
        lines = ["epoch,lr,train_loss,train_acc,valid_acc"]
        for r in self.rows:
            lines.append(
                f"{r.epoch},{r.lr!r},{r.train_loss!r},{r.train_acc!r},{r.valid_acc!r}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    def __eq__(self, other) -> bool:
        return isinstance(other, TrainHistory) and self.to_csv() == other.to_csv()


def _accuracy(model: ReaderModel, examples: list[ClozeExample]) -> float:
    correct = 0
    with ad.no_grad():
        for start in range(0, len(examples), 32):
            chunk = examples[start : start + 32]
            for fp, ex in zip(forward_batch(model, chunk, mode="eval"), chunk):
                if answer(fp.dist) == ex.answer:
                    correct += 1
    return correct / len(examples)


def train(
    model: ReaderModel,
    train_set: list[ClozeExample],
    valid_set: list[ClozeExample],
    config: TrainConfig,
    log=None,
) -> TrainHistory:
    """Seeded shuffled minibatches; per-epoch loss, train and valid accuracy.

    Deterministic for a fixed (model seed, config seed, dataset) triple.
    """
    if not train_set or not valid_set:
        raise ValueError("train and valid sets must be non-empty")
    for ex in train_set:
        if ex.answer is None or ex.answer not in ex.document:
            raise ValueError(
                f"unanswerable example {ex.id!r}: answer must occur in the document"
            )
    state = AdamState(model.params)
    dropout_rng = np.random.default_rng([config.seed, 101])
    history = TrainHistory()
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        lr = lr_schedule(epoch, config.base_lr)
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_set[int(i)] for i in order[start : start + config.batch_size]]
            passes = forward_batch(model, batch, mode="train", rng=dropout_rng)
            losses = [loss_node(fp, ex.answer) for fp, ex in zip(passes, batch)]
            batch_loss = ad.mean_of(losses)
            model.params.zero_grads()
            batch_loss.backward()
            grads = clip_gradients(model.params.grads(), config.clip_threshold)
            adam_step(model.params, grads, state, lr, config)
            total_loss += float(batch_loss.data) * len(batch)
        row = EpochStats(
            epoch=epoch,
            lr=lr,
            train_loss=total_loss / n,
            train_acc=_accuracy(model, train_set),
            valid_acc=_accuracy(model, valid_set),
        )
        history.append(row)
        if log is not None:
            log(row)
    return history
