"""Deterministic synthetic sources standing in for field recordings.

Foreground is birdsong-like: bouts of short frequency-modulated syllables
inside the analysis band, separated by silence, so most frames are empty.
Noise is dense: spectrally tilted broadband noise with slow level
fluctuation and random percussive bursts.
"""

from dataclasses import dataclass

import numpy as np

from partae.audio import DEFAULT_SAMPLE_RATE, AudioClip, band_spectrogram
from partae.mixing import SourcePool


@dataclass(frozen=True)
class NoiseParams:
    tilt_db_per_octave: float = -3.0
    transient_rate: float = 3.0  # bursts per second
    transient_gain: float = 1.2  # burst peak amplitude relative to background RMS
    fluctuation_db: float = 1.0  # std of the slow level fluctuation
    rms: float = 0.1


MATCHED_NOISE = NoiseParams()
UNMATCHED_EXTRINSIC_NOISE = NoiseParams(tilt_db_per_octave=6.0, transient_rate=8.0, transient_gain=1.0)


def _smooth_random(rng, n, sr, rate_hz):
    """Zero-mean, unit-std random process with a bandwidth of about ``rate_hz``."""
    n_knots = max(int(n / sr * rate_hz) + 2, 2)
    knots = rng.standard_normal(n_knots)
    x = np.interp(np.linspace(0, n_knots - 1, n), np.arange(n_knots), knots)
    x -= x.mean()
    return x / (x.std() + 1e-12)


def birdsong(rng, duration=30.0, sr=DEFAULT_SAMPLE_RATE):
    n = int(round(duration * sr))
    out = np.zeros(n)
    t = rng.uniform(0.2, 1.0)
    while t < duration:
        n_syll = rng.integers(5, 13)
        for _ in range(n_syll):
            d = rng.uniform(0.05, 0.12)
            start = int(t * sr)
            m = min(int(d * sr), n - start)
            if m <= 0:
                break
            f0 = rng.uniform(4500.0, 6800.0)
            f1 = rng.uniform(2300.0, f0 - 1000.0)
            tau = np.arange(m) / sr
            freq = f0 * (f1 / f0) ** (tau / d)
            phase = 2 * np.pi * np.cumsum(freq) / sr
            env = np.sin(np.pi * tau / d) ** 2
            out[start:start + m] += rng.uniform(0.3, 0.8) * env * np.sin(phase + rng.uniform(0, 2 * np.pi))
            t += d + rng.uniform(0.12, 0.35)
        t += rng.uniform(1.0, 3.0)
    return AudioClip(out, sr)


def _tilted_noise(rng, n, sr, tilt_db_per_octave):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    ref = 3500.0
    shape = (np.maximum(f, 100.0) / ref) ** (tilt_db_per_octave / (20 * np.log10(2)))
    x = np.fft.irfft(spec * shape, n)
    return x / x.std()


def noise(rng, params, duration=30.0, sr=DEFAULT_SAMPLE_RATE):
    n = int(round(duration * sr))
    x = _tilted_noise(rng, n, sr, params.tilt_db_per_octave)
    x *= 10 ** (params.fluctuation_db * _smooth_random(rng, n, sr, 4.0) / 20)

    n_bursts = rng.poisson(params.transient_rate * duration)
    burst_src = _tilted_noise(rng, n, sr, params.tilt_db_per_octave)
    for _ in range(n_bursts):
        start = rng.integers(0, n)
        decay = rng.uniform(0.005, 0.03)
        m = min(int(6 * decay * sr), n - start)
        env = np.exp(-np.arange(m) / (decay * sr))
        x[start:start + m] += params.transient_gain * rng.uniform(0.5, 1.0) * env * burst_src[start:start + m]
    return AudioClip(params.rms * x / x.std(), sr)


def synth_audio(seed, kind="matched", duration=30.0):
    """Audio clips ``{"signal", "intrinsic", "extrinsic"}`` for a seed.

    Matched: both noises come from the same generator settings (independent
    draws). Unmatched: the extrinsic noise uses a second generator with a
    different spectral tilt and burst rate.
    """
    if kind not in ("matched", "unmatched"):
        raise ValueError(f"kind must be 'matched' or 'unmatched', got {kind!r}")
    sig_rng, int_rng, ext_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    ext_params = MATCHED_NOISE if kind == "matched" else UNMATCHED_EXTRINSIC_NOISE
    return {
        "signal": birdsong(sig_rng, duration),
        "intrinsic": noise(int_rng, MATCHED_NOISE, duration),
        "extrinsic": noise(ext_rng, ext_params, duration),
    }


def pool_from_clips(clips):
    specs = {k: band_spectrogram(c) for k, c in clips.items()}
    freqs = specs["signal"].freqs
    for s in specs.values():
        if not np.array_equal(s.freqs, freqs):
            raise ValueError("sources do not share a frequency band")
    return SourcePool(specs["signal"].values, specs["intrinsic"].values, specs["extrinsic"].values, freqs)


def synth_sources(seed, kind="matched", duration=30.0):
    """Band-limited spectrogram pools for the synthetic sources."""
    return pool_from_clips(synth_audio(seed, kind, duration))


def active_frame_fraction(S, rel_threshold=0.1):
    """Share of frames whose energy exceeds ``rel_threshold`` of the loudest frame."""
    e = np.sum(np.square(S), axis=0)
    return float(np.mean(e > rel_threshold * e.max()))


def long_term_spectrum_db(S):
    return 10 * np.log10(np.mean(np.square(S), axis=1))
