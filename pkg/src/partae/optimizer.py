"""AdaDelta updates with per-weight running averages."""

from dataclasses import dataclass

import numpy as np


class DivergenceError(FloatingPointError):
    """Non-finite loss or gradient; ``iteration`` is set when known."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class AdaDeltaState:
    acc_grad_sq: dict
    acc_update_sq: dict
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def zeros_like(cls, params, rho=0.95, eps=1e-6):
        if not 0 < rho < 1 or eps <= 0:
            raise ValueError("need 0 < rho < 1 and eps > 0")
        shapes = {k: v.shape for k, v in params.trainables().items()}
        return cls(
            {k: np.zeros(s) for k, s in shapes.items()},
            {k: np.zeros(s) for k, s in shapes.items()},
            rho,
            eps,
        )


def adadelta_update(acc_g, acc_dx, g, rho, eps):
    """One AdaDelta step for a single tensor: returns (delta, acc_g, acc_dx)."""
    acc_g = rho * acc_g + (1 - rho) * g * g
    delta = -np.sqrt((acc_dx + eps) / (acc_g + eps)) * g
    acc_dx = rho * acc_dx + (1 - rho) * delta * delta
    return delta, acc_g, acc_dx


def adadelta_step(state, params, grads):
    """Apply one update to every trainable tensor.

    ``grads`` maps trainable names to gradient arrays. Returns the new
    ``(params, state)``; inputs are left untouched.
    """
    trainables = params.trainables()
    if set(grads) != set(trainables):
        raise ValueError(f"gradients for {sorted(grads)} but trainables are {sorted(trainables)}")
    for name, g in grads.items():
        if g.shape != trainables[name].shape or g.shape != state.acc_grad_sq[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {trainables[name].shape}")
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient for {name}")

    new_w, new_g, new_dx = {}, {}, {}
    for name, w in trainables.items():
        delta, new_g[name], new_dx[name] = adadelta_update(
            state.acc_grad_sq[name], state.acc_update_sq[name], grads[name], state.rho, state.eps
        )
        new_w[name] = w + delta
    return (
        params.with_weights(new_w["Wc"], new_w["Wd"]),
        AdaDeltaState(new_g, new_dx, state.rho, state.eps),
    )
