"""AdamW with decoupled decay, the LookAhead wrapper, role-aware parameter
groups, and the linear-warmup + cosine-annealing schedule."""

from dataclasses import dataclass, field, replace
import math

import numpy as np

# knots and normalization affine parameters never receive weight decay
DECAY_EXEMPT_ROLES = frozenset({"knot", "norm_affine", "bias"})


@dataclass
class ParamGroup:
    name: str
    params: list           # [(name, Tensor)]
    lr: float
    weight_decay: float
    base_lr: float = field(default=None)

    def __post_init__(self):
        if self.base_lr is None:
            self.base_lr = self.lr


def build_param_groups(net, lr, weight_decay=1e-4, classifier_lr=None,
                       backbone_prefixes=()):
    """Split a network's parameters into decay/no-decay groups.

    With `backbone_prefixes`, parameters whose names start with one of the
    prefixes get `lr` while the rest get `classifier_lr` (the two-rate
    fine-tuning preset); otherwise everything shares `lr`.
    """
    buckets = {}
    for name, tensor, role in net.param_specs():
        if backbone_prefixes and classifier_lr is not None:
            is_backbone = any(name.startswith(p) for p in backbone_prefixes)
            rate = lr if is_backbone else classifier_lr
            tag = "backbone" if is_backbone else "classifier"
        else:
            rate, tag = lr, "main"
        decay = 0.0 if role in DECAY_EXEMPT_ROLES else weight_decay
        key = (tag, decay, rate)
        buckets.setdefault(key, []).append((name, tensor))
    groups = []
    for (tag, decay, rate), params in sorted(buckets.items(), key=lambda kv: kv[0][0]):
        label = f"{tag}_decay" if decay else f"{tag}_no_decay"
        groups.append(ParamGroup(name=label, params=params, lr=rate, weight_decay=decay))
    return groups


# named learning-rate presets: single-rate training vs two-rate fine-tuning
LR_PRESETS = {
    "scratch": {"lr": 5e-4},
    "finetune": {"backbone_lr": 1e-4, "classifier_lr": 1e-3},
}


class MissingGradient(RuntimeError):
    pass


class AdamW:
    """Adam with decoupled weight decay.

    Decay shrinks the parameter before the adaptive step:
    theta <- theta * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps).
    """

    def __init__(self, groups, betas=(0.9, 0.999), eps=1e-8):
        self.groups = list(groups)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = {}
        self._v = {}

    def zero_grad(self):
        for group in self.groups:
            for _, p in group.params:
                p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for group in self.groups:
            for name, p in group.params:
                if p.grad is None:
                    raise MissingGradient(
                        f"parameter '{name}' in group '{group.name}' has no gradient")
                g = p.grad
                key = id(p)
                if key not in self._m:
                    self._m[key] = np.zeros_like(p.data)
                    self._v[key] = np.zeros_like(p.data)
                m, v = self._m[key], self._v[key]
                if group.weight_decay:
                    p.data *= 1.0 - group.lr * group.weight_decay
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                p.data -= group.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        tensors = {}
        for group in self.groups:
            for name, p in group.params:
                key = id(p)
                if key in self._m:
                    tensors[name] = {"m": self._m[key].ravel().tolist(),
                                     "v": self._v[key].ravel().tolist()}
        return {"step": self.step_count, "moments": tensors}

    def load_state_dict(self, state):
        self.step_count = state["step"]
        for group in self.groups:
            for name, p in group.params:
                if name in state["moments"]:
                    blob = state["moments"][name]
                    self._m[id(p)] = np.asarray(blob["m"]).reshape(p.shape)
                    self._v[id(p)] = np.asarray(blob["v"]).reshape(p.shape)


class LookAhead:
    """Fast/slow weight wrapper: every k inner steps the slow weights move
    toward the fast ones by alpha and the fast weights reset onto them."""

    def __init__(self, inner, k=5, alpha=0.5):
        if k < 1:
            raise ValueError(f"lookahead k must be >= 1, got {k}")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"lookahead alpha must be in [0, 1], got {alpha}")
        self.inner = inner
        self.k = int(k)
        self.alpha = float(alpha)
        self._slow = {id(p): p.data.copy()
                      for group in inner.groups for _, p in group.params}

    @property
    def groups(self):
        return self.inner.groups

    @property
    def step_count(self):
        return self.inner.step_count

    def zero_grad(self):
        self.inner.zero_grad()

    def step(self):
        self.inner.step()
        if self.inner.step_count % self.k == 0:
            self.sync()

    def sync(self):
        for group in self.inner.groups:
            for _, p in group.params:
                slow = self._slow[id(p)]
                slow += self.alpha * (p.data - slow)
                p.data[...] = slow

    def state_dict(self):
        inner = self.inner.state_dict()
        slows = {}
        for group in self.inner.groups:
            for name, p in group.params:
                slows[name] = self._slow[id(p)].ravel().tolist()
        return {"inner": inner, "k": self.k, "alpha": self.alpha, "slow": slows}

    def load_state_dict(self, state):
        self.inner.load_state_dict(state["inner"])
        for group in self.inner.groups:
            for name, p in group.params:
                if name in state["slow"]:
                    self._slow[id(p)] = np.asarray(state["slow"][name]).reshape(p.shape)


@dataclass(frozen=True)
class LRSchedule:
    """Linear warmup from base_lr/10, then cosine annealing to min_lr."""

    base_lr: float
    total_epochs: int
    warmup_epochs: int = 10
    min_lr: float = 1e-5

    def scaled(self, base_lr):
        return replace(self, base_lr=base_lr)


def lr_at(schedule, epoch, step=0, steps_per_epoch=None):
    """Learning rate at a (possibly fractional) epoch position.

    Warmup ramps linearly from base_lr/10 at epoch 0 to base_lr at
    `warmup_epochs`; cosine annealing then lands exactly on min_lr at the
    final epoch.  Positions beyond the schedule clamp to min_lr.
    """
    eta = schedule.base_lr
    pos = float(epoch)
    if steps_per_epoch:
        pos += step / steps_per_epoch
    last = schedule.total_epochs - 1
    if pos < schedule.warmup_epochs:
        start = eta / 10.0
        return start + (eta - start) * (pos / schedule.warmup_epochs)
    if last <= schedule.warmup_epochs:
        return schedule.min_lr if pos >= last else eta
    if pos >= last:
        return schedule.min_lr
    frac = (pos - schedule.warmup_epochs) / (last - schedule.warmup_epochs)
    return schedule.min_lr + 0.5 * (eta - schedule.min_lr) * (1.0 + math.cos(math.pi * frac))


def apply_schedule(groups, schedule, epoch, step=0, steps_per_epoch=None):
    """Set each group's lr from the schedule scaled to its own base rate."""
    for group in groups:
        group.lr = lr_at(schedule.scaled(group.base_lr), epoch, step, steps_per_epoch)
