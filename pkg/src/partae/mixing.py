"""Spectrogram-domain mixing and the generative minibatch sampler.

Magnitude spectrograms are treated as additive. Training items are built on
the fly by cutting random segments out of three long source spectrograms
(signal, intrinsic noise, extrinsic noise) and summing them.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from partae.objective import TrainItem


def energy(S):
    return float(np.sum(np.square(S)))


def snr_db(reference, error):
    return 10.0 * np.log10(energy(reference) / energy(error))


def noise_gain(signal_energy, noise_energy, snr):
    """Scale for the noise so that signal_energy / (gain^2 noise_energy) hits ``snr`` dB."""
    if signal_energy <= 0 or noise_energy <= 0:
        raise ValueError("cannot mix at a target SNR with a zero-energy source")
    return float(np.sqrt(signal_energy / (noise_energy * 10.0 ** (snr / 10.0))))


def mix_to_snr(signal, noise, snr):
    """Return ``(signal + a * noise, a)`` with the in-band SNR equal to ``snr`` dB."""
    signal = np.asarray(signal, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if signal.shape != noise.shape:
        raise ValueError(f"signal {signal.shape} and noise {noise.shape} differ in shape")
    a = noise_gain(energy(signal), energy(noise), snr)
    return signal + a * noise, a


@dataclass(frozen=True)
class SourcePool:
    """Long band-limited magnitude spectrograms, each (H, frames)."""

    signal: np.ndarray
    intrinsic: np.ndarray
    extrinsic: np.ndarray
    freqs: np.ndarray

    def __post_init__(self):
        H = self.freqs.size
        for name in ("signal", "intrinsic", "extrinsic"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != H:
                raise ValueError(f"{name} pool has shape {arr.shape}, expected ({H}, frames)")
            if (arr < 0).any():
                raise ValueError(f"{name} pool has negative magnitudes")

    @property
    def H(self):
        return self.freqs.size

    @cached_property
    def energies(self):
        return energy(self.signal), energy(self.intrinsic), energy(self.extrinsic)

    @property
    def min_frames(self):
        return min(self.signal.shape[1], self.intrinsic.shape[1], self.extrinsic.shape[1])


@dataclass(frozen=True)
class MixConfig:
    intrinsic_snr_db: float = -10.0
    extrinsic_snr_db: float = -30.0
    segment_frames: int = 512
    noise_only_fraction: float = 0.25
    # RMS per cell of the scaled extrinsic noise pool; fixes the raw-unit scale
    # that the reconstruction term is measured in.
    level: float = 1.0
    validation_fraction: float = 0.2

    def __post_init__(self):
        if not 0 <= self.noise_only_fraction < 1:
            raise ValueError("noise_only_fraction must lie in [0, 1)")
        if self.segment_frames < 1 or self.level <= 0:
            raise ValueError("segment_frames and level must be positive")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")

    @property
    def dae_corruption_snr_db(self):
        """Extrinsic level relative to signal + intrinsic noise, from pool energies."""
        return self.extrinsic_snr_db + 10.0 * np.log10(1.0 + 10.0 ** (-self.intrinsic_snr_db / 10.0))


def pool_gains(pool, cfg):
    """Per-source multipliers (signal, intrinsic, extrinsic) from whole-pool energies.

    Noise gains realize the configured SNRs relative to the signal pool, then a
    common factor sets the scaled extrinsic pool to ``cfg.level`` RMS.
    """
    e_sig, e_int, e_ext = pool.energies
    g_int = noise_gain(e_sig, e_int, cfg.intrinsic_snr_db)
    g_ext = noise_gain(e_sig, e_ext, cfg.extrinsic_snr_db)
    ext_rms = g_ext * np.sqrt(e_ext / pool.extrinsic.size)
    c = cfg.level / ext_rms
    return c, c * g_int, c * g_ext


def count_noise_only(fraction, batch_size):
    """Round half up, so 25% of 16 is exactly 4."""
    return int(np.floor(fraction * batch_size + 0.5))


def _start_range(frames, seg, cfg, split):
    boundary = int(frames * (1.0 - cfg.validation_fraction))
    lo, hi = (0, boundary - seg) if split == "train" else (boundary, frames - seg)
    if hi < lo:
        raise ValueError(
            f"{split} region of a {frames}-frame pool cannot hold a {seg}-frame segment"
        )
    return lo, hi


def _segments(source, n, rng, cfg, split):
    lo, hi = _start_range(source.shape[1], cfg.segment_frames, cfg, split)
    starts = rng.integers(lo, hi + 1, size=n)
    idx = starts[:, None] + np.arange(cfg.segment_frames)
    return np.moveaxis(source[:, idx], 1, 0)


def sample_components(pool, cfg, n, rng, split="train"):
    """Scaled (signal, intrinsic, extrinsic) segments, each (n, H, segment_frames)."""
    if pool.min_frames < cfg.segment_frames:
        raise ValueError(f"pool of {pool.min_frames} frames is shorter than {cfg.segment_frames}")
    g_sig, g_int, g_ext = pool_gains(pool, cfg)
    return (
        g_sig * _segments(pool.signal, n, rng, cfg, split),
        g_int * _segments(pool.intrinsic, n, rng, cfg, split),
        g_ext * _segments(pool.extrinsic, n, rng, cfg, split),
    )


def sample_batch(pool, cfg, batch_size, rng, split="train"):
    """Draw one minibatch of TrainItems.

    Exactly ``round(noise_only_fraction * batch_size)`` items (the last ones)
    are noise-only: an extrinsic segment with y = 1. The rest mix one random
    segment from each source and carry the clean and partly clean references.
    """
    n_noise = count_noise_only(cfg.noise_only_fraction, batch_size)
    if not 0 <= n_noise < batch_size:
        raise ValueError(f"batch of {batch_size} cannot hold {n_noise} noise-only items")
    n_sig = batch_size - n_noise
    S, I, E = sample_components(pool, cfg, n_sig, rng, split)
    g_ext = pool_gains(pool, cfg)[2]
    noise_only = g_ext * _segments(pool.extrinsic, n_noise, rng, cfg, split)
    items = [TrainItem(S[i] + I[i] + E[i], 0, clean=S[i], partly_clean=S[i] + I[i]) for i in range(n_sig)]
    items += [
        TrainItem(noise_only[i], 1, clean=np.zeros_like(noise_only[i]), partly_clean=np.zeros_like(noise_only[i]))
        for i in range(n_noise)
    ]
    return items
