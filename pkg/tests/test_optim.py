"""AdamW, LookAhead, parameter groups, and the warmup+cosine schedule."""

import numpy as np
import pytest

from trukan import layers as L
from trukan import optim as O
from trukan import tensor as T


def one_param_group(value, lr=0.1, wd=0.0):
    p = T.Tensor(np.array([[value]]), requires_grad=True, name="theta")
    group = O.ParamGroup(name="g", params=[("theta", p)], lr=lr, weight_decay=wd)
    return p, group


def test_adamw_zero_grad_zero_decay_leaves_parameters():
    p, group = one_param_group(1.5, wd=0.0)
    opt = O.AdamW([group])
    p.grad = np.zeros((1, 1))
    opt.step()
    assert p.data[0, 0] == 1.5


def test_adamw_first_step_is_minus_lr():
    p, group = one_param_group(0.0, lr=0.1)
    opt = O.AdamW([group])
    p.grad = np.ones((1, 1))
    opt.step()
    np.testing.assert_allclose(p.data[0, 0], -0.1, rtol=1e-6)


def test_adamw_missing_gradient_names_parameter():
    p, group = one_param_group(0.0)
    opt = O.AdamW([group])
    with pytest.raises(O.MissingGradient, match="theta"):
        opt.step()


def test_adamw_converges_on_quadratic():
    p, group = one_param_group(1.0, lr=0.1)
    opt = O.AdamW([group])
    for _ in range(100):
        opt.zero_grad()
        p.grad = 2.0 * p.data  # d/dtheta theta^2
        opt.step()
    assert abs(p.data[0, 0]) < 0.05


def test_decoupled_decay_exactness():
    # g = 0, wd > 0: each step multiplies by exactly (1 - lr*wd)
    p, group = one_param_group(2.0, lr=0.01, wd=0.1)
    opt = O.AdamW([group])
    expect = 2.0
    for _ in range(5):
        p.grad = np.zeros((1, 1))
        opt.step()
        expect *= 1.0 - 0.01 * 0.1
        np.testing.assert_allclose(p.data[0, 0], expect, rtol=1e-15)


def test_lookahead_alpha_one_sets_slow_to_fast():
    p, group = one_param_group(0.0, lr=0.1)
    opt = O.LookAhead(O.AdamW([group]), k=1, alpha=1.0)
    p.grad = np.ones((1, 1))
    opt.step()
    np.testing.assert_allclose(opt._slow[id(p)][0, 0], p.data[0, 0])


def test_lookahead_interpolation_hand_value():
    p, group = one_param_group(0.0)
    look = O.LookAhead(O.AdamW([group]), k=5, alpha=0.5)
    look._slow[id(p)][...] = 0.0
    p.data[...] = 2.0
    look.sync()
    assert p.data[0, 0] == 1.0  # phi + 0.5*(theta - phi)


def test_lookahead_k1_alpha1_matches_bare_adamw_bitwise():
    def trajectory(wrap):
        p, group = one_param_group(1.0, lr=0.05)
        opt = O.AdamW([group])
        if wrap:
            opt = O.LookAhead(opt, k=1, alpha=1.0)
        history = []
        rng = np.random.default_rng(0)
        for _ in range(50):
            p.grad = 2.0 * p.data + rng.normal(scale=0.01, size=(1, 1))
            opt.step()
            history.append(p.data[0, 0])
        return history

    assert trajectory(False) == trajectory(True)


def test_lookahead_matches_scripted_simulation():
    """K=5, alpha=0.5 trajectory reproduced by an independent script."""
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p, group = one_param_group(1.0, lr=lr)
    opt = O.LookAhead(O.AdamW([group]), k=5, alpha=0.5)

    # scripted oracle: plain-python AdamW + lookahead bookkeeping
    theta, slow, m, v = 1.0, 1.0, 0.0, 0.0
    ours, script = [], []
    for t in range(1, 26):
        g = 2.0 * p.data[0, 0]
        p.grad = np.array([[g]])
        opt.step()
        ours.append(p.data[0, 0])

        gs = 2.0 * theta
        m = b1 * m + (1 - b1) * gs
        v = b2 * v + (1 - b2) * gs * gs
        theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        if t % 5 == 0:
            slow += 0.5 * (theta - slow)
            theta = slow
        script.append(theta)
    np.testing.assert_allclose(ours, script, rtol=1e-12)


def test_lookahead_validates_arguments():
    p, group = one_param_group(0.0)
    with pytest.raises(ValueError):
        O.LookAhead(O.AdamW([group]), k=0)
    with pytest.raises(ValueError):
        O.LookAhead(O.AdamW([group]), alpha=1.5)


# ---------------------------------------------------------------- schedule


def test_schedule_warmup_start_is_exactly_eta_over_ten():
    sched = O.LRSchedule(base_lr=5e-4, total_epochs=40)
    assert O.lr_at(sched, 0) == 5e-5


def test_schedule_reaches_eta_at_warmup_boundary():
    sched = O.LRSchedule(base_lr=5e-4, total_epochs=40)
    assert O.lr_at(sched, 10) == 5e-4


def test_schedule_final_epoch_is_exactly_min_lr():
    sched = O.LRSchedule(base_lr=5e-4, total_epochs=40)
    assert O.lr_at(sched, 39) == 1e-5


def test_schedule_clamps_beyond_the_end():
    sched = O.LRSchedule(base_lr=5e-4, total_epochs=40)
    assert O.lr_at(sched, 120) == 1e-5


def test_schedule_continuous_at_warmup_boundary():
    sched = O.LRSchedule(base_lr=5e-4, total_epochs=40)
    left = O.lr_at(sched, 10 - 1e-9)
    right = O.lr_at(sched, 10 + 1e-9)
    assert abs(left - O.lr_at(sched, 10)) < 1e-12
    assert abs(right - O.lr_at(sched, 10)) < 1e-11


def test_schedule_fractional_epochs_via_steps():
    sched = O.LRSchedule(base_lr=1e-3, total_epochs=20, warmup_epochs=10)
    mid = O.lr_at(sched, 0, step=5, steps_per_epoch=10)
    assert O.lr_at(sched, 0) < mid < O.lr_at(sched, 1)


# ------------------------------------------------------------ param groups


def test_knots_and_norm_affine_are_decay_exempt():
    net = L.Network([
        L.TruKANLayer(3, 2, grid=4, knot_mode="learnable"),
        L.LayerNormLayer(2),
        L.BatchNormLayer(2),
    ])
    groups = O.build_param_groups(net, lr=1e-3, weight_decay=1e-4)
    decay_of = {}
    for group in groups:
        for name, _ in group.params:
            decay_of[name] = group.weight_decay
    for name, wd in decay_of.items():
        if "knots_raw" in name or "gamma" in name or "beta" in name:
            assert wd == 0.0, name
    assert decay_of["layers.0.trunc_coeffs"] == 1e-4


def test_every_parameter_lands_in_exactly_one_group():
    net = L.build_classifier("kan-n", 8, 6, 3)
    groups = O.build_param_groups(net, lr=1e-3)
    seen = [name for g in groups for name, _ in g.params]
    assert sorted(seen) == sorted(name for name, _, _ in net.param_specs())
    assert len(seen) == len(set(seen))


def test_backbone_classifier_two_rate_preset():
    net = L.build_classifier("mlp", 8, 6, 3)
    groups = O.build_param_groups(
        net, lr=1e-4, classifier_lr=1e-3,
        backbone_prefixes=("layers.0.", "layers.1."))
    rates = {name: g.lr for g in groups for name, _ in g.params}
    assert rates["layers.1.weight"] == 1e-4
    assert rates["layers.4.weight"] == 1e-3
