"""Partitioned reconstruction loss and its exact gradient.

Per item::

    recon_i   = ||X_i - g(f(X_i))||^2
    penalty_i = (lam * y_i / mean(C)) * ||C * f(X_i)||^2

summed over the minibatch. The penalty only ever acts on noise-only items
(y = 1) and only on the foreground channels marked in C.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from partae import tensor_ops as ops
from partae.model import normalize
from partae.optimizer import DivergenceError


@dataclass
class TrainItem:
    X: np.ndarray
    y: int = 0
    clean: Optional[np.ndarray] = None
    partly_clean: Optional[np.ndarray] = None  # signal + intrinsic noise, evaluation only

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"noise-only flag must be 0 or 1, got {self.y!r}")


@dataclass
class LossBreakdown:
    total: float
    recon: float
    penalty: float
    per_item: list = field(default_factory=list)


@dataclass
class _Forward:
    Xn: np.ndarray
    pre: np.ndarray
    pooled: np.ndarray
    switches: np.ndarray
    unpooled: np.ndarray
    recon: np.ndarray


def _forward(params, X):
    Xn = normalize(params, X)
    pre = ops.conv_time(params.Wc, Xn)
    pooled, switches = ops.maxpool_time(ops.relu(pre), params.P)
    unpooled = ops.maxunpool_time(pooled, switches, params.P)
    return _Forward(Xn, pre, pooled, switches, unpooled, ops.conv_time(params.Wd, unpooled))


def _penalty_weights(y, mask, lam, K):
    """Per-(item, channel) weights w so that penalty_i = sum_k w[i,k] * sum_j L[i,k,j]^2."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    y = np.asarray(y, dtype=np.float64)
    if mask is None or lam == 0 or not y.any():
        return np.zeros((y.size, K))
    if mask.K != K:
        raise ValueError(f"mask has {mask.K} entries but the model has {K} latents")
    cbar = mask.fg_fraction
    if cbar == 0:
        # Nothing is regularised.
        return np.zeros((y.size, K))
    return (lam / cbar) * y[:, None] * mask.entries[None, :]


def _stack(batch):
    if not batch:
        raise ValueError("empty batch")
    X = np.stack([np.asarray(item.X, dtype=np.float64) for item in batch])
    y = np.array([item.y for item in batch], dtype=np.float64)
    return X, y


def _evaluate(params, inputs, targets, pen_w, with_grad):
    fw = _forward(params, inputs)
    resid = fw.recon - targets
    recon_i = np.sum(resid**2, axis=(-2, -1))
    sq = np.sum(fw.pooled**2, axis=-1)
    penalty_i = np.sum(pen_w * sq, axis=-1)
    total = float(np.sum(recon_i) + np.sum(penalty_i))
    if not np.isfinite(total):
        raise DivergenceError("non-finite loss")
    breakdown = LossBreakdown(
        total=total,
        recon=float(np.sum(recon_i)),
        penalty=float(np.sum(penalty_i)),
        per_item=[(float(r), float(p)) for r, p in zip(recon_i, penalty_i)],
    )
    if not with_grad:
        return breakdown, None

    g_recon = 2.0 * resid
    g_Wd, g_unpooled = ops.conv_time_vjp(params.Wd, fw.unpooled, g_recon)
    g_pooled = ops.maxunpool_vjp(g_unpooled, fw.switches, params.P)
    g_pooled += 2.0 * pen_w[..., None] * fw.pooled
    g_pre = ops.relu_vjp(fw.pre, ops.maxpool_vjp(g_pooled, fw.switches, params.P))
    g_Wc, _ = ops.conv_time_vjp(params.Wc, fw.Xn, g_pre, input_grad=False)
    return breakdown, {"Wc": g_Wc, "Wd": g_Wd}


def partitioned_loss_and_grad(params, X, y, mask, lam, with_grad=True):
    """Loss breakdown and gradients for stacked inputs X of shape (B, H, N)."""
    X = np.asarray(X, dtype=np.float64)
    pen_w = _penalty_weights(y, mask, lam, params.K)
    return _evaluate(params, X, X, pen_w, with_grad)


def reconstruction_loss_and_grad(params, inputs, targets, with_grad=True):
    """Plain reconstruction objective with separate input and target.

    This is the denoising-autoencoder objective when ``inputs`` are
    corrupted versions of ``targets``; it has no notion of labels or masks.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape != targets.shape:
        raise ValueError(f"inputs {inputs.shape} and targets {targets.shape} differ in shape")
    pen_w = np.zeros(inputs.shape[:-2] + (params.K,))
    return _evaluate(params, inputs, targets, pen_w, with_grad)


def loss(params, batch, mask, lam):
    X, y = _stack(batch)
    return partitioned_loss_and_grad(params, X, y, mask, lam, with_grad=False)[0]


def loss_gradient(params, batch, mask, lam):
    """Returns ``(grad_Wc, grad_Wd)`` of the summed minibatch loss."""
    X, y = _stack(batch)
    grads = partitioned_loss_and_grad(params, X, y, mask, lam)[1]
    return grads["Wc"], grads["Wd"]


def _kink_pattern(params, X):
    fw = _forward(params, X)
    return fw.pre > 0, fw.switches


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped: int


def finite_diff_check(params, batch, mask, lam, step=1e-5, max_weights=None, seed=0):
    """Largest relative error between the analytic gradient and central differences."""
    return finite_diff_report(params, batch, mask, lam, step, max_weights, seed).max_rel_error


def finite_diff_report(params, batch, mask, lam, step=1e-5, max_weights=None, seed=0):
    """Compare ``loss_gradient`` against central differences weight by weight.

    Every weight is checked unless ``max_weights`` is given and smaller than
    the parameter count, in which case a seeded random subset is used.
    Weights whose +/- perturbation changes any ReLU sign or pooling switch
    are skipped, since the loss is not differentiable across those kinks.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    X, y = _stack(batch)
    pen_w = _penalty_weights(y, mask, lam, params.K)
    _, grads = _evaluate(params, X, X, pen_w, True)
    base_sign, base_sw = _kink_pattern(params, X)

    slots = [(name, idx) for name in ("Wc", "Wd") for idx in np.ndindex(grads[name].shape)]
    if max_weights is not None and max_weights < len(slots):
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(slots), size=max_weights, replace=False)
        slots = [slots[i] for i in sorted(chosen)]

    worst = 0.0
    checked = skipped = 0
    for name, idx in slots:
        values = []
        kinked = False
        for sign in (1.0, -1.0):
            W = {k: v.copy() for k, v in params.trainables().items()}
            W[name][idx] += sign * step
            p = params.with_weights(W["Wc"], W["Wd"])
            if name == "Wc":
                s, sw = _kink_pattern(p, X)
                if not (np.array_equal(s, base_sign) and np.array_equal(sw, base_sw)):
                    kinked = True
                    break
            values.append(_evaluate(p, X, X, pen_w, False)[0].total)
        if kinked:
            skipped += 1
            continue
        numeric = (values[0] - values[1]) / (2 * step)
        analytic = grads[name][idx]
        denom = max(abs(numeric), abs(analytic))
        if denom > 0:
            worst = max(worst, float(abs(numeric - analytic) / denom))
        checked += 1
    return GradCheckReport(worst, checked, skipped)
