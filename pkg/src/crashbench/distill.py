"""Composite distillation loss, two-phase schedule and a toy teacher/student trainer.

Loss per batch (phase 1)::

    total = a_hard * BCE(z_s, y) + a_logit * KD(z_s, z_t; tau) + a_feat * FEAT(s, t)

In phase 2 (``step >= phase1_steps``) the teacher is dropped and ``total = BCE``.
KD is the Bernoulli KL(teacher || student) of temperature-softened sigmoids,
scaled by ``tau**2``.  All batch losses are means over samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


class DivergenceError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"training diverged (non-finite loss) at step {step}")
        self.step = step


@dataclass(frozen=True)
class DistillConfig:
    alpha_hard: float = 0.3
    alpha_logit: float = 0.6
    alpha_feat: float = 0.1
    tau: float = 4.0
    phase1_steps: int = 3000
    total_steps: int = 4000
    n_feature_pairs: int = 4
    scale_kd_by_tau2: bool = True

    def __post_init__(self):
        if min(self.alpha_hard, self.alpha_logit, self.alpha_feat) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not 0 <= self.phase1_steps <= self.total_steps:
            raise ValueError("need 0 <= phase1_steps <= total_steps")

    def phase(self, step: int) -> int:
        return 1 if step < self.phase1_steps else 2


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def bce_loss(logit, label):
    """Elementwise ``(loss, dloss/dlogit)`` of binary cross-entropy on a logit."""
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    # softplus(z) - y*z rewritten without cancellation: softplus(z) - z = softplus(-z)
    loss = y * softplus(-z) + (1.0 - y) * softplus(z)
    return loss, sigmoid(z) - y


def kd_loss(student_logit, teacher_logit, tau: float = 4.0, scale: bool = True):
    """Elementwise ``(loss, dloss/dstudent_logit)`` of tau-softened Bernoulli KL(teacher || student)."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    a = np.asarray(teacher_logit, dtype=np.float64) / tau
    b = np.asarray(student_logit, dtype=np.float64) / tau
    p_t = sigmoid(a)
    # log sigma(x) = -softplus(-x); log(1 - sigma(x)) = -softplus(x)
    kl = p_t * (softplus(-b) - softplus(-a)) + (1.0 - p_t) * (softplus(b) - softplus(a))
    # exact zero when the distributions coincide, tiny negatives from rounding otherwise
    kl = np.maximum(kl, 0.0)
    grad = (sigmoid(b) - p_t) / tau
    if scale:
        return kl * tau * tau, grad * tau * tau
    return kl, grad


def feat_loss(student_features, teacher_features):
    """Mean over layer pairs of per-vector mean squared error.

    Each entry is a ``[batch, width]`` (or ``[width]``) array; the returned
    loss averages over samples too.  Gradients match the input shapes.
    """
    if len(student_features) != len(teacher_features):
        raise ValueError("student and teacher need the same number of feature layers")
    if not student_features:
        return 0.0, []
    n_pairs = len(student_features)
    total = 0.0
    grads = []
    for s, t in zip(student_features, teacher_features):
        s = np.asarray(s, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if s.shape != t.shape:
            raise ValueError(f"feature shape mismatch {s.shape} vs {t.shape} after projection")
        width = s.shape[-1]
        batch = s.size // width
        diff = s - t
        total += float(np.sum(diff * diff)) / (width * batch)
        grads.append(2.0 * diff / (width * batch * n_pairs))
    return total / n_pairs, grads


@dataclass
class DistillBatch:
    student_logit: np.ndarray
    teacher_logit: np.ndarray
    hard_label: np.ndarray
    student_features: list = field(default_factory=list)
    teacher_features: list = field(default_factory=list)


@dataclass
class LossBreakdown:
    l_bce: float
    l_kd: float
    l_feat: float
    total: float
    phase: int
    grad_logit: np.ndarray
    grad_features: list

    def log_row(self, step: int) -> dict:
        return {"step": step, "l_bce": self.l_bce, "l_kd": self.l_kd, "l_feat": self.l_feat,
                "total": self.total, "phase": self.phase}


def composite_loss(batch: DistillBatch, config: DistillConfig, step: int) -> LossBreakdown:
    """Batch-mean composite loss and gradients w.r.t. student logits and features.

    All three raw terms are always reported; the schedule only changes how
    they are combined.
    """
    if not 0 <= step < config.total_steps:
        raise ValueError(f"step {step} outside [0, {config.total_steps})")
    zs = np.atleast_1d(np.asarray(batch.student_logit, dtype=np.float64))
    n = zs.size
    bce, g_bce = bce_loss(zs, batch.hard_label)
    kd, g_kd = kd_loss(zs, batch.teacher_logit, config.tau, config.scale_kd_by_tau2)
    l_feat, g_feat = feat_loss(batch.student_features, batch.teacher_features)
    l_bce = float(np.mean(bce))
    l_kd = float(np.mean(kd))
    phase = config.phase(step)
    if phase == 1:
        total = config.alpha_hard * l_bce + config.alpha_logit * l_kd + config.alpha_feat * l_feat
        grad_logit = (config.alpha_hard * g_bce + config.alpha_logit * g_kd) / n
        grad_features = [config.alpha_feat * g for g in g_feat]
    else:
        total = l_bce
        grad_logit = g_bce / n
        grad_features = [np.zeros_like(g) for g in g_feat]
    return LossBreakdown(l_bce, l_kd, l_feat, float(total), phase, grad_logit, grad_features)


class MLP:
    """tanh MLP with a scalar logit head.  Hidden activations double as features."""

    def __init__(self, sizes, rng: np.random.Generator, gain: float = 1.0):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(rng.normal(0.0, gain / math.sqrt(fan_in), (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def hidden_widths(self):
        return self.sizes[1:-1]

    def copy(self) -> "MLP":
        other = object.__new__(MLP)
        other.sizes = list(self.sizes)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def forward(self, x):
        """Return ``(logits [batch], hidden activations list)``."""
        h = np.asarray(x, dtype=np.float64)
        acts = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
            acts.append(h)
        logit = (h @ self.weights[-1] + self.biases[-1])[:, 0]
        return logit, acts

    def backward(self, x, acts, grad_logit, grad_acts=None):
        """Parameter gradients given upstream gradients on the logit and on hidden layers."""
        x = np.asarray(x, dtype=np.float64)
        inputs = [x] + acts
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        g = np.asarray(grad_logit, dtype=np.float64)[:, None]
        for layer in range(len(self.weights) - 1, -1, -1):
            gw[layer] = inputs[layer].T @ g
            gb[layer] = g.sum(axis=0)
            if layer == 0:
                break
            g = g @ self.weights[layer].T
            if grad_acts is not None and grad_acts[layer - 1] is not None:
                g = g + grad_acts[layer - 1]
            g = g * (1.0 - inputs[layer] ** 2)
        return gw, gb

    def step(self, gw, gb, lr: float) -> None:
        for w, b, dw, db in zip(self.weights, self.biases, gw, gb):
            w -= lr * dw
            b -= lr * db

    def predict_proba(self, x):
        return sigmoid(self.forward(x)[0])


def orthonormal_projection(in_width: int, out_width: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed ``[in_width, out_width]`` map with orthonormal columns (or rows if widening)."""
    a = rng.normal(size=(max(in_width, out_width), min(in_width, out_width)))
    q, _ = np.linalg.qr(a)
    return q if in_width >= out_width else q.T


def pair_layers(n_teacher: int, n_student: int, n_pairs: int) -> list:
    """Evenly spaced ``(teacher_layer, student_layer)`` hidden-layer pairs, deepest last."""
    n_pairs = min(n_pairs, n_teacher, n_student)
    if n_pairs == 0:
        return []
    t_idx = np.linspace(n_teacher - 1, 0, n_pairs).round().astype(int)[::-1]
    s_idx = np.linspace(n_student - 1, 0, n_pairs).round().astype(int)[::-1]
    return list(zip(t_idx.tolist(), s_idx.tolist()))


@dataclass
class ToyTask:
    """Synthetic binary task whose labels are drawn from the teacher itself.

    The teacher is therefore the Bayes-optimal predictor; label noise is
    highest near its decision boundary.
    """

    teacher: MLP
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @classmethod
    def make(cls, seed: int, n_train: int = 96, n_test: int = 4000,
             teacher_sizes=(2, 16, 16, 16, 16, 1), logit_scale: float = 4.0) -> "ToyTask":
        rng = np.random.default_rng([seed, 0])
        teacher = MLP(teacher_sizes, rng, gain=1.5)
        teacher.weights[-1] *= logit_scale
        x_train = rng.normal(size=(n_train, teacher_sizes[0]))
        x_test = rng.normal(size=(n_test, teacher_sizes[0]))
        y_train = (rng.random(n_train) < teacher.predict_proba(x_train)).astype(np.float64)
        y_test = (rng.random(n_test) < teacher.predict_proba(x_test)).astype(np.float64)
        return cls(teacher, x_train, y_train, x_test, y_test)


def brier_score(p, y) -> float:
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean((p - y) ** 2))


def expected_calibration_error(p, y, n_bins: int = 10) -> float:
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    bins = np.minimum((p * n_bins).astype(int), n_bins - 1)
    ece = 0.0
    for b in range(n_bins):
        m = bins == b
        if m.any():
            ece += m.mean() * abs(p[m].mean() - y[m].mean())
    return float(ece)


@dataclass
class TrainResult:
    student: MLP
    log: list
    brier: float
    ece: float
    mean_abs_gap_to_teacher: float


def train_toy(task: ToyTask, config: DistillConfig = DistillConfig(), seed: int = 0,
              student_sizes=(2, 8, 8, 8, 8, 1), lr: float = 0.05, batch_size: int = 32,
              cosine: bool = False, hard_only: bool = False, log_every: int = 1) -> TrainResult:
    """Mini-batch SGD on the student with hand-derived gradients.

    ``hard_only`` trains the same student on BCE alone for every step, the
    no-teacher baseline.
    """
    if hard_only:
        config = replace(config, phase1_steps=0)
    rng = np.random.default_rng([seed, 1])
    student = MLP(student_sizes, rng)
    t_hidden = task.teacher.hidden_widths
    pairs = pair_layers(len(t_hidden), len(student.hidden_widths), config.n_feature_pairs)
    proj = {
        (ti, si): orthonormal_projection(t_hidden[ti], student.hidden_widths[si], np.random.default_rng([seed, 2, ti]))
        for ti, si in pairs
    }
    teacher_logit_all, teacher_acts_all = task.teacher.forward(task.x_train)
    teacher_targets = [teacher_acts_all[ti] @ proj[(ti, si)] for ti, si in pairs]

    n = task.x_train.shape[0]
    log = []
    for step in range(config.total_steps):
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        x = task.x_train[idx]
        logit, acts = student.forward(x)
        batch = DistillBatch(
            student_logit=logit,
            teacher_logit=teacher_logit_all[idx],
            hard_label=task.y_train[idx],
            student_features=[acts[si] for _, si in pairs],
            teacher_features=[t[idx] for t in teacher_targets],
        )
        out = composite_loss(batch, config, step)
        if not math.isfinite(out.total):
            raise DivergenceError(step)
        if step % log_every == 0:
            log.append(out.log_row(step))
        grad_acts: list = [None] * len(acts)
        for (_, si), g in zip(pairs, out.grad_features):
            grad_acts[si] = g if grad_acts[si] is None else grad_acts[si] + g
        gw, gb = student.backward(x, acts, out.grad_logit, grad_acts)
        rate = lr
        if cosine:
            rate = lr * 0.5 * (1.0 + math.cos(math.pi * step / config.total_steps))
        student.step(gw, gb, rate)

    p = student.predict_proba(task.x_test)
    p_teacher = task.teacher.predict_proba(task.x_test)
    return TrainResult(
        student=student,
        log=log,
        brier=brier_score(p, task.y_test),
        ece=expected_calibration_error(p, task.y_test),
        mean_abs_gap_to_teacher=float(np.mean(np.abs(p - p_teacher))),
    )


def calibration_sweep(seeds, config: DistillConfig = DistillConfig(), **kwargs) -> list:
    """Paired KD vs hard-label runs per seed: ``[(seed, kd_brier, hard_brier), ...]``."""
    rows = []
    for seed in seeds:
        task = ToyTask.make(seed)
        kd = train_toy(task, config, seed=seed, log_every=config.total_steps, **kwargs)
        hard = train_toy(task, config, seed=seed, hard_only=True, log_every=config.total_steps, **kwargs)
        rows.append((seed, kd.brier, hard.brier))
    return rows
