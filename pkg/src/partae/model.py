"""Single-layer convolutional partitioned autoencoder.

The encoder normalizes each frequency band, convolves in time (fully
connected across frequency), rectifies and max-pools along time. The decoder
unpools with the stored switches and convolves back to the frequency axis.
There are no bias terms and the decoder output is left in raw input units.
"""

from dataclasses import dataclass, field

import numpy as np

from partae import tensor_ops as ops
from partae.tensor_ops import ShapeError

SIGMA_FLOOR = 1e-4


@dataclass(frozen=True)
class ModelParams:
    Wc: np.ndarray  # (M, H, K) encoder filters
    Wd: np.ndarray  # (M, K, H) decoder filters
    mu: np.ndarray  # (H,)
    sigma: np.ndarray  # (H,)
    P: int = 16

    def __post_init__(self):
        M, H, K = self.Wc.shape
        if self.Wd.shape != (M, K, H):
            raise ShapeError(f"decoder shape {self.Wd.shape} does not match encoder {self.Wc.shape}")
        if self.mu.shape != (H,) or self.sigma.shape != (H,):
            raise ShapeError(f"normalization vectors must have shape ({H},)")
        if not (self.sigma > 0).all():
            raise ValueError("sigma must be strictly positive")

    @property
    def M(self):
        return self.Wc.shape[0]

    @property
    def H(self):
        return self.Wc.shape[1]

    @property
    def K(self):
        return self.Wc.shape[2]

    @property
    def dims(self):
        return self.M, self.H, self.K, self.P

    def trainables(self):
        return {"Wc": self.Wc, "Wd": self.Wd}

    def with_weights(self, Wc, Wd):
        return ModelParams(Wc, Wd, self.mu, self.sigma, self.P)

    def with_normalization(self, mu, sigma):
        return ModelParams(self.Wc, self.Wd, np.asarray(mu, float), np.asarray(sigma, float), self.P)


@dataclass(frozen=True)
class LatentBlock:
    activations: np.ndarray  # (..., K, N // P), non-negative
    switches: np.ndarray  # same shape, values in [0, P)


@dataclass(frozen=True)
class MaskVector:
    """Per-channel foreground indicator, identical for every pooled frame."""

    entries: np.ndarray = field()

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 1 or not np.isin(e, (0, 1)).all():
            raise ValueError("mask entries must be a 1-D array of zeros and ones")
        object.__setattr__(self, "entries", e.astype(np.float64))

    @classmethod
    def leading(cls, K, fg_fraction):
        """Mark the first ``fg_fraction * K`` channels as foreground."""
        n_fg = fg_fraction * K
        if abs(n_fg - round(n_fg)) > 1e-9 or not 0 <= fg_fraction <= 1:
            raise ValueError(f"fg_fraction {fg_fraction} does not select a whole number of {K} channels")
        entries = np.zeros(K)
        entries[: int(round(n_fg))] = 1
        return cls(entries)

    @property
    def K(self):
        return self.entries.size

    @property
    def fg_fraction(self):
        return float(self.entries.mean())


def _orthonormal_columns(rng, rows, cols):
    G = rng.standard_normal((rows, cols))
    if cols > rows:
        return G / np.linalg.norm(G, axis=0)
    Q, R = np.linalg.qr(G)
    # Sign-fix so the factorization is unique given G.
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def init_params(seed, M=9, H=32, K=32, P=16):
    """Random orthogonal initialization for both filter tensors.

    Encoder: K orthonormal vectors of length M*H reshaped to (M, H, K).
    Decoder: one vector of length M*K per output band, orthonormal when
    H <= M*K and otherwise only unit-norm.
    """
    if K > M * H:
        raise ValueError(f"cannot draw {K} orthogonal filters of length {M * H}")
    rng = np.random.default_rng(seed)
    Wc = _orthonormal_columns(rng, M * H, K).reshape(M, H, K)
    Wd = _orthonormal_columns(rng, M * K, H).reshape(M, K, H)
    return ModelParams(Wc, Wd, np.zeros(H), np.ones(H), int(P))


def estimate_normalization(spectrograms, sigma_floor=SIGMA_FLOOR):
    """Per-band mean and population standard deviation over all frames.

    ``spectrograms`` is an iterable of arrays shaped (..., H, N); chunks are
    merged with the pairwise update so the whole set never sits in memory.
    """
    count = 0
    mean = None
    m2 = None
    for S in spectrograms:
        S = np.asarray(S, dtype=np.float64)
        H = S.shape[-2]
        frames = np.moveaxis(S, -2, 0).reshape(H, -1)
        n = frames.shape[1]
        if n == 0:
            continue
        c_mean = frames.mean(axis=1)
        c_m2 = ((frames - c_mean[:, None]) ** 2).sum(axis=1)
        if mean is None:
            count, mean, m2 = n, c_mean, c_m2
            continue
        delta = c_mean - mean
        total = count + n
        mean = mean + delta * n / total
        m2 = m2 + c_m2 + delta**2 * count * n / total
        count = total
    if mean is None:
        raise ValueError("no frames to estimate normalization from")
    if count < 2:
        raise ValueError("need at least 2 frames to estimate normalization")
    sigma = np.maximum(np.sqrt(m2 / count), sigma_floor)
    return mean, sigma


def normalize(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2 or X.shape[-2] != params.H:
        raise ShapeError(f"input of shape {X.shape} does not have {params.H} bands")
    return (X - params.mu[:, None]) / params.sigma[:, None]


def encode(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2 or X.shape[-1] % params.P:
        raise ShapeError(f"input of shape {X.shape} needs a frame count divisible by {params.P}")
    pre = ops.conv_time(params.Wc, normalize(params, X))
    pooled, switches = ops.maxpool_time(ops.relu(pre), params.P)
    return LatentBlock(pooled, switches)


def decode(params, latents):
    acts = latents.activations
    if acts.ndim < 2 or acts.shape[-2] != params.K:
        raise ShapeError(f"latents of shape {acts.shape} do not have {params.K} channels")
    unpooled = ops.maxunpool_time(acts, latents.switches, params.P)
    return ops.conv_time(params.Wd, unpooled)


def mask_latents(latents, mask, keep="foreground"):
    if keep == "foreground":
        gate = mask.entries
    elif keep == "background":
        gate = 1.0 - mask.entries
    else:
        raise ValueError(f"keep must be 'foreground' or 'background', got {keep!r}")
    return LatentBlock(latents.activations * gate[:, None], latents.switches)


def reconstruct_masked(params, X, mask, keep="foreground"):
    """Reconstruct from the kept subset of latent channels, others zeroed.

    Switches come from the unmasked forward pass, so foreground and
    background reconstructions sum to the full reconstruction.
    """
    if mask.K != params.K:
        raise ShapeError(f"mask has {mask.K} entries but the model has {params.K} latents")
    return decode(params, mask_latents(encode(params, X), mask, keep))


def reconstruct_all(params, X, mask):
    """Full, foreground and background reconstructions from one encode."""
    if mask.K != params.K:
        raise ShapeError(f"mask has {mask.K} entries but the model has {params.K} latents")
    lat = encode(params, X)
    return (
        decode(params, lat),
        decode(params, mask_latents(lat, mask, "foreground")),
        decode(params, mask_latents(lat, mask, "background")),
    )
