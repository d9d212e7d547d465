"""Losses, classification metrics, the training loop, and its config."""

from dataclasses import dataclass, field
import json
import time

import numpy as np

from .optim import AdamW, LookAhead, LRSchedule, apply_schedule, build_param_groups
from .tensor import Tensor, ShapeError, apply_op, backward


def mse_loss(pred, target):
    """Mean squared error over all entries, as a differentiable scalar."""
    if not isinstance(target, Tensor):
        target = Tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    value = np.array([[np.mean(diff * diff)]])
    n = diff.size

    def grad(g):
        return (g[0, 0] * 2.0 * diff / n, None)

    return apply_op("mse_loss", (pred, target), value, grad)


def cross_entropy(pred, target_idx):
    """Mean cross entropy of logits against integer class labels.

    Applies a log-softmax internally; `target_idx` is an int array [B].
    """
    idx = np.asarray(target_idx).reshape(-1)
    B, C = pred.shape
    if len(idx) != B:
        raise ShapeError(f"cross_entropy: {B} rows of logits vs {len(idx)} labels")
    if idx.min() < 0 or idx.max() >= C:
        raise ValueError(f"labels must lie in [0, {C}), got range "
                         f"[{idx.min()}, {idx.max()}]")
    z = pred.data - pred.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    value = np.array([[-logp[np.arange(B), idx].mean()]])
    softmax = np.exp(logp)

    def grad(g):
        gz = softmax.copy()
        gz[np.arange(B), idx] -= 1.0
        return (g[0, 0] * gz / B,)

    return apply_op("cross_entropy", (pred,), value, grad)


def metrics(pred_classes, true_classes, n_classes=None):
    """Accuracy and macro F1.

    Macro F1 averages per-class F1 over all `n_classes` labels; a class with
    an empty F1 denominator (absent from both predictions and truth)
    contributes 0.
    """
    pred = np.asarray(pred_classes).reshape(-1)
    true = np.asarray(true_classes).reshape(-1)
    if len(pred) == 0 or len(pred) != len(true):
        raise ValueError(f"need equal, non-empty label vectors; got {len(pred)} vs {len(true)}")
    if n_classes is None:
        n_classes = int(max(pred.max(), true.max())) + 1
    accuracy = float(np.mean(pred == true))
    f1s = []
    for c in range(n_classes):
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return {"accuracy": accuracy, "macro_f1": float(np.mean(f1s))}


@dataclass
class TrainConfig:
    batch_size: int = 512
    epochs: int = 30
    seed: int = 0
    lr: float = 5e-4
    weight_decay: float = 1e-4
    warmup_epochs: int = 10
    min_lr: float = 1e-5
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    loss: str = "cross_entropy"       # or "mse"
    head: str = "mlp"
    hidden: int = 64
    grid: int = 8
    order: int = 3
    grid_range: tuple = (-1.0, 1.0)
    dropout: float = 0.1
    knot_mode: str = "fixed"
    kan_scales_trainable: bool = True
    lookahead: bool = True

    def hparams(self):
        return {"grid": self.grid, "order": self.order, "range": self.grid_range,
                "dropout": self.dropout, "knot_mode": self.knot_mode,
                "kan_scales_trainable": self.kan_scales_trainable}


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)   # per-step dicts
    epochs: list = field(default_factory=list)    # per-epoch summaries

    @property
    def losses(self):
        return [r["loss"] for r in self.records]

    def final_loss(self):
        return self.records[-1]["loss"] if self.records else None

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


class NanLossError(RuntimeError):
    def __init__(self, step, lr, grad_norms):
        self.step, self.lr, self.grad_norms = step, lr, grad_norms
        detail = ", ".join(f"{k}={v:.3e}" for k, v in grad_norms.items())
        super().__init__(
            f"non-finite loss at step {step} (lr={lr:.3e}; grad norms: {detail})")


def _grad_norms(groups):
    norms = {}
    for group in groups:
        total = 0.0
        for _, p in group.params:
            if p.grad is not None:
                total += float(np.sum(p.grad * p.grad))
        norms[group.name] = np.sqrt(total)
    return norms


def _loss_fn(name):
    if name == "mse":
        return mse_loss
    if name == "cross_entropy":
        return cross_entropy
    raise ValueError(f"unknown loss {name!r}; expected 'mse' or 'cross_entropy'")


def train(net, dataset, config, eval_dataset=None):
    """Run the optimizer loop; returns a TrainingLog.

    Deterministic for a fixed config/seed: shuffling, dropout, and every
    update draw from generators seeded from `config.seed`.  A non-finite
    loss aborts with the last learning rate and per-group gradient norms.
    """
    rng = np.random.default_rng(config.seed)
    net.set_rng(np.random.default_rng(config.seed + 1))
    loss_fn = _loss_fn(config.loss)
    groups = build_param_groups(net, lr=config.lr, weight_decay=config.weight_decay)
    opt = AdamW(groups)
    if config.lookahead:
        opt = LookAhead(opt, k=config.lookahead_k, alpha=config.lookahead_alpha)
    schedule = LRSchedule(base_lr=config.lr, total_epochs=config.epochs,
                          warmup_epochs=config.warmup_epochs, min_lr=config.min_lr)
    n = len(dataset)
    batch = min(config.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    feats = dataset.features
    targs = dataset.targets
    log = TrainingLog()
    net.train()
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for b0 in range(0, n, batch):
            rows = order[b0:b0 + batch]
            xb = Tensor(feats[rows])
            apply_schedule(opt.groups, schedule, epoch, b0 // batch, steps_per_epoch)
            lr_now = opt.groups[0].lr
            t0 = time.monotonic()
            net.zero_grad()
            pred = net.forward(xb)
            if config.loss == "cross_entropy":
                loss = loss_fn(pred, targs[rows])
            else:
                loss = loss_fn(pred, Tensor(targs[rows]))
            loss_val = loss.item()
            backward(loss)
            if not np.isfinite(loss_val):
                raise NanLossError(step, lr_now, _grad_norms(opt.groups))
            opt.step()
            wall_ms = (time.monotonic() - t0) * 1e3
            log.records.append({"step": step, "epoch": epoch, "lr": lr_now,
                                "loss": loss_val, "wall_ms": wall_ms})
            step += 1
        summary = {"epoch": epoch, "loss": log.records[-1]["loss"]}
        if eval_dataset is not None and eval_dataset.is_classification:
            summary.update(evaluate(net, eval_dataset))
            net.train()
        log.epochs.append(summary)
    net.eval()
    return log


def predict_classes(net, features):
    from .tensor import no_grad

    net.eval()
    with no_grad():
        logits = net.forward(Tensor(features))
    return np.argmax(logits.data, axis=1)


def evaluate(net, dataset):
    """Accuracy / macro F1 of a classifier on a dataset."""
    pred = predict_classes(net, dataset.features)
    return metrics(pred, dataset.targets, n_classes=dataset.n_classes)


def rmse(net, dataset):
    from .tensor import no_grad

    net.eval()
    with no_grad():
        pred = net.forward(Tensor(dataset.features))
    return float(np.sqrt(np.mean((pred.data - dataset.targets) ** 2)))
