"""Array primitives for the time-convolutional autoencoder.

Every layer acts on arrays whose last two axes are (channels, time); any
leading axes are treated as a batch. Each forward op has a matching
vector-Jacobian product used by the hand-written backward pass.

Filter tensors have shape (taps, in_channels, out_channels). Convolution is
causal with left zero padding, and tap 0 multiplies the current frame::

    y[..., k, n] = sum_m sum_h W[m, h, k] * x[..., h, n - m]
"""

import numpy as np


class ShapeError(ValueError):
    """Raised when array shapes are inconsistent for an operation."""


def _check_conv_shapes(W, X):
    if W.ndim != 3 or X.ndim < 2 or W.shape[1] != X.shape[-2]:
        raise ShapeError(
            f"filter tensor of shape {W.shape} (taps, in, out) is incompatible "
            f"with input of shape {X.shape} (..., in, time)"
        )


def _pad_left(X, width):
    if width == 0:
        return X
    pad = [(0, 0)] * (X.ndim - 1) + [(width, 0)]
    return np.pad(X, pad)


def _pad_right(X, width):
    if width == 0:
        return X
    pad = [(0, 0)] * (X.ndim - 1) + [(0, width)]
    return np.pad(X, pad)


def conv_time(W, X):
    """Causal time convolution, fully connected across channels.

    Returns an array of shape (..., out_channels, N) for X of shape
    (..., in_channels, N); the output has the same number of frames.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    _check_conv_shapes(W, X)
    M = W.shape[0]
    N = X.shape[-1]
    Xp = _pad_left(X, M - 1)
    out = np.matmul(W[0].T, X)
    for m in range(1, M):
        out += np.matmul(W[m].T, Xp[..., M - 1 - m:M - 1 - m + N])
    return out


def conv_time_vjp(W, X, upstream, input_grad=True):
    """Gradients of ``sum(upstream * conv_time(W, X))``.

    Returns ``(grad_W, grad_X)``. Batch axes are summed into ``grad_W``.
    ``grad_X`` is None when ``input_grad`` is False, which skips the
    (unneeded) input gradient for first-layer filters.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    _check_conv_shapes(W, X)
    M, H, K = W.shape
    N = X.shape[-1]
    if upstream.shape != X.shape[:-2] + (K, N):
        raise ShapeError(
            f"upstream of shape {upstream.shape} does not match conv output "
            f"shape {X.shape[:-2] + (K, N)}"
        )

    Xp = _pad_left(X, M - 1)
    Ut = np.swapaxes(upstream, -1, -2)
    batch_axes = tuple(range(X.ndim - 2))
    grad_W = np.empty_like(W)
    for m in range(M):
        grad_W[m] = np.matmul(Xp[..., M - 1 - m:M - 1 - m + N], Ut).sum(axis=batch_axes)

    grad_X = None
    if input_grad:
        Up = _pad_right(upstream, M - 1)
        grad_X = np.matmul(W[0], upstream)
        for m in range(1, M):
            grad_X += np.matmul(W[m], Up[..., m:m + N])
    return grad_W, grad_X


def relu(X):
    return np.maximum(X, 0.0)


def relu_vjp(X, upstream):
    """Pass gradient where the pre-activation is strictly positive (0 at the kink)."""
    return np.where(X > 0, upstream, 0.0)


def maxpool_time(Z, P):
    """Non-overlapping max-pooling along time with window ``P``.

    Returns ``(pooled, switches)``; switches hold the within-window argmax,
    ties resolved to the earliest frame.
    """
    Z = np.asarray(Z, dtype=np.float64)
    N = Z.shape[-1]
    if P < 1 or N % P:
        raise ShapeError(f"pool width {P} does not divide {N} time frames")
    windows = Z.reshape(Z.shape[:-1] + (N // P, P))
    switches = np.argmax(windows, axis=-1)
    pooled = np.take_along_axis(windows, switches[..., None], axis=-1)[..., 0]
    return pooled, switches


def _check_switches(pooled, switches, P):
    if switches.shape != pooled.shape:
        raise ShapeError(
            f"switches of shape {switches.shape} do not match pooled shape {pooled.shape}"
        )
    if switches.size and (switches.min() < 0 or switches.max() >= P):
        raise ValueError(f"switch index outside [0, {P - 1}]")


def maxunpool_time(pooled, switches, P):
    """Approximate inverse of max-pooling: values return to their switch
    positions and every other frame is zero."""
    pooled = np.asarray(pooled, dtype=np.float64)
    switches = np.asarray(switches)
    _check_switches(pooled, switches, P)
    out = np.zeros(pooled.shape + (P,))
    np.put_along_axis(out, switches[..., None], pooled[..., None], axis=-1)
    return out.reshape(pooled.shape[:-1] + (pooled.shape[-1] * P,))


def maxpool_vjp(upstream, switches, P):
    """Gradient of max-pooling routes each pooled gradient to its argmax."""
    return maxunpool_time(upstream, switches, P)


def maxunpool_vjp(upstream, switches, P):
    """Gradient of unpooling gathers the upstream at the switch positions."""
    upstream = np.asarray(upstream, dtype=np.float64)
    N = upstream.shape[-1]
    if N % P:
        raise ShapeError(f"pool width {P} does not divide {N} time frames")
    windows = upstream.reshape(upstream.shape[:-1] + (N // P, P))
    _check_switches(windows[..., 0], np.asarray(switches), P)
    return np.take_along_axis(windows, np.asarray(switches)[..., None], axis=-1)[..., 0]
