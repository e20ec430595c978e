import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crashbench.distill import (
    MLP,
    DistillBatch,
    DistillConfig,
    DivergenceError,
    ToyTask,
    bce_loss,
    brier_score,
    composite_loss,
    expected_calibration_error,
    feat_loss,
    kd_loss,
    orthonormal_projection,
    pair_layers,
    sigmoid,
    train_toy,
)
from gradcheck import CHECKS
from oracles import bernoulli_kl, logistic


def test_config_defaults():
    c = DistillConfig()
    assert (c.alpha_hard, c.alpha_logit, c.alpha_feat, c.tau) == (0.3, 0.6, 0.1, 4.0)
    assert (c.phase1_steps, c.total_steps, c.n_feature_pairs) == (3000, 4000, 4)
    assert c.phase(2999) == 1 and c.phase(3000) == 2
    for bad in (dict(alpha_feat=-0.1), dict(tau=0), dict(phase1_steps=5000)):
        with pytest.raises(ValueError):
            DistillConfig(**bad)


def test_sigmoid_stable():
    z = np.array([-1000.0, -1.0, 0.0, 1.0, 1000.0])
    p = sigmoid(z)
    assert np.all(np.isfinite(p)) and p[0] == 0.0 and p[-1] == 1.0
    assert p[3] == pytest.approx(logistic(1.0), abs=1e-16)


def test_bce_examples():
    loss, grad = bce_loss(0.0, 1)
    assert loss == pytest.approx(math.log(2)) and grad == -0.5
    loss, grad = bce_loss(0.0, 0)
    assert loss == pytest.approx(math.log(2)) and grad == 0.5
    assert bce_loss(50.0, 1)[0] < 1e-20
    assert np.isfinite(bce_loss(-1000.0, 1)[0])


def test_kd_examples():
    assert kd_loss(1.3, 1.3)[0] == 0.0 and kd_loss(1.3, 1.3)[1] == 0.0
    loss, grad = kd_loss(0.0, 4.0, tau=4.0)
    expect = 16 * bernoulli_kl(logistic(1.0), 0.5)
    assert loss == pytest.approx(expect, rel=1e-12)
    assert loss == pytest.approx(1.7751051467, abs=1e-9)
    assert grad == pytest.approx(4 * (0.5 - logistic(1.0)), rel=1e-12)
    unscaled, _ = kd_loss(0.0, 4.0, tau=4.0, scale=False)
    assert unscaled == pytest.approx(expect / 16)


@settings(max_examples=200, deadline=None)
@given(zs=st.floats(-30, 30), zt=st.floats(-30, 30), tau=st.floats(0.1, 10))
def test_kd_nonnegative_and_zero_on_diagonal(zs, zt, tau):
    assert kd_loss(zs, zt, tau)[0] >= 0.0
    assert kd_loss(zs, zs, tau)[0] == 0.0


def test_feat_examples():
    assert feat_loss([np.ones(3)], [np.ones(3)])[0] == 0.0
    loss, grads = feat_loss([np.array([1.0, 0.0])], [np.zeros(2)])
    assert loss == 0.5 and np.allclose(grads[0], [1.0, 0.0])
    s, t = [np.array([0.3, -1.2]), np.array([2.0])], [np.zeros(2), np.zeros(1)]
    assert feat_loss([2 * v for v in s], t)[0] == pytest.approx(4 * feat_loss(s, t)[0])
    with pytest.raises(ValueError, match="mismatch"):
        feat_loss([np.zeros(3)], [np.zeros(4)])


def solve(f, target, lo, hi):
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if f(mid) < target else (lo, mid)
    return (lo + hi) / 2


def test_composite_all_terms_one():
    zs = -math.log(math.e - 1)  # softplus(-zs) = 1
    zt = solve(lambda v: float(kd_loss(zs, v)[0]), 1.0, zs, zs + 40)
    batch = DistillBatch(np.array([zs]), np.array([zt]), np.array([1.0]), [np.array([1.0])], [np.array([0.0])])
    out = composite_loss(batch, DistillConfig(), 0)
    assert (out.l_bce, out.l_kd, out.l_feat) == pytest.approx((1.0, 1.0, 1.0), abs=1e-12)
    assert out.total == pytest.approx(1.0, abs=1e-12)


def random_batch(rng, n=8):
    return DistillBatch(rng.normal(size=n) * 3, rng.normal(size=n) * 3, rng.integers(0, 2, n).astype(float),
                        [rng.normal(size=(n, 4)) for _ in range(4)], [rng.normal(size=(n, 4)) for _ in range(4)])


def test_phase_boundary(rng):
    c = DistillConfig()
    b = random_batch(rng)
    p1, p2 = composite_loss(b, c, 2999), composite_loss(b, c, 3000)
    assert (p1.phase, p2.phase) == (1, 2)
    assert (p1.l_bce, p1.l_kd, p1.l_feat) == (p2.l_bce, p2.l_kd, p2.l_feat)
    assert p1.total == c.alpha_hard * p1.l_bce + c.alpha_logit * p1.l_kd + c.alpha_feat * p1.l_feat
    assert p2.total == p2.l_bce
    assert all(np.all(g == 0) for g in p2.grad_features)
    for step in (-1, 4000):
        with pytest.raises(ValueError):
            composite_loss(b, c, step)


def test_teacher_equals_student(rng):
    z = rng.normal(size=6)
    y = (sigmoid(z) >= 0.5).astype(float)
    f = [rng.normal(size=(6, 3))]
    out = composite_loss(DistillBatch(z, z, y, f, f), DistillConfig(), 0)
    assert out.l_kd == 0.0 and out.l_feat == 0.0
    assert out.total == pytest.approx(0.3 * out.l_bce)


@pytest.mark.parametrize("name", sorted(CHECKS))
def test_gradients_match_finite_differences(name):
    rng = np.random.default_rng(99)
    assert max(CHECKS[name](rng) for _ in range(100)) < 1e-6


def test_mlp_backward_matches_finite_differences(rng):
    net = MLP([3, 5, 4, 1], rng)
    x = rng.normal(size=(6, 3))
    up = rng.normal(size=6)
    up_acts = [rng.normal(size=(6, 5)), None]

    def objective():
        logit, acts = net.forward(x)
        return float(logit @ up + np.sum(acts[0] * up_acts[0]))

    logit, acts = net.forward(x)
    gw, _ = net.backward(x, acts, up, up_acts)
    for layer, (i, j) in [(0, (1, 2)), (1, (3, 1)), (2, (2, 0))]:
        w = net.weights[layer]
        old = w[i, j]
        w[i, j] = old + 1e-6
        hi = objective()
        w[i, j] = old - 1e-6
        lo = objective()
        w[i, j] = old
        assert gw[layer][i, j] == pytest.approx((hi - lo) / 2e-6, rel=1e-6)


def test_projection_and_pairing(rng):
    p = orthonormal_projection(16, 8, rng)
    assert p.shape == (16, 8) and np.allclose(p.T @ p, np.eye(8))
    assert pair_layers(4, 4, 4) == [(0, 0), (1, 1), (2, 2), (3, 3)]
    assert pair_layers(6, 3, 4) == [(0, 0), (2, 1), (5, 2)]


def test_calibration_metrics():
    y = np.array([0, 1, 1, 0])
    assert brier_score([0, 1, 1, 0], y) == 0.0
    assert brier_score([0.5] * 4, y) == 0.25
    assert expected_calibration_error([0.5] * 4, y) == 0.0
    assert expected_calibration_error([0.9] * 4, y) == pytest.approx(0.4)


def test_zero_steps_leaves_student_unchanged():
    task = ToyTask.make(3, n_test=100)
    res = train_toy(task, DistillConfig(phase1_steps=0, total_steps=0), seed=3)
    fresh = MLP((2, 8, 8, 8, 8, 1), np.random.default_rng([3, 1]))
    assert res.log == []
    assert all(np.array_equal(a, b) for a, b in zip(res.student.weights, fresh.weights))


def test_training_is_deterministic():
    cfg = DistillConfig(phase1_steps=150, total_steps=200)
    a = train_toy(ToyTask.make(7, n_test=200), cfg, seed=7, log_every=10)
    b = train_toy(ToyTask.make(7, n_test=200), cfg, seed=7, log_every=10)
    assert a.log == b.log and a.brier == b.brier
    assert [r["phase"] for r in a.log[14:16]] == [1, 2]


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_student_approaches_bayes_optimal_teacher(seed):
    # Teacher kept in the loss for the whole run (no hard-label-only phase).
    res = train_toy(ToyTask.make(seed), DistillConfig(phase1_steps=4000, total_steps=4000), seed=seed,
                    log_every=4000)
    assert res.mean_abs_gap_to_teacher < 0.05


def test_divergence_reports_step():
    task = ToyTask.make(0, n_test=10)
    task.x_train[:] = np.nan
    with pytest.raises(DivergenceError) as info:
        train_toy(task, DistillConfig(phase1_steps=5, total_steps=10))
    assert info.value.step == 0
