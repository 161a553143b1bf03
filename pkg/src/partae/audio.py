"""Audio I/O and magnitude spectrograms."""

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

DEFAULT_SAMPLE_RATE = 22050
DEFAULT_FFT = 128
DEFAULT_HOP = 64
DEFAULT_BAND = (1700.0, 7200.0)
DEFAULT_BINS = 32


class WavError(ValueError):
    """Unreadable, unsupported, truncated or empty WAV file."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("audio clip must be a non-empty mono signal")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Non-negative magnitudes of shape (bins, frames) with bin centre frequencies."""

    values: np.ndarray
    freqs: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.freqs.size:
            raise ValueError(
                f"values of shape {self.values.shape} do not match {self.freqs.size} frequencies"
            )
        if (self.values < 0).any():
            raise ValueError("spectrogram values must be non-negative")

    @property
    def bins(self):
        return self.values.shape[0]

    @property
    def frames(self):
        return self.values.shape[1]

    @property
    def band(self):
        return float(self.freqs[0]), float(self.freqs[-1])


def load_wav(path):
    """Read 16-bit PCM or 32-bit float WAV as mono floats in [-1, 1]."""
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise WavError(f"{path}: {exc}") from exc
    except Exception as exc:  # scipy surfaces short headers as struct.error
        raise WavError(f"{path}: truncated or malformed header ({exc})") from exc
    for w in caught:
        if "EOF" in str(w.message):
            raise WavError(f"{path}: truncated file ({w.message})")

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported sample format {data.dtype}; need 16-bit PCM or 32-bit float")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise WavError(f"{path}: {samples.shape[1]} channels; only mono or stereo is supported")
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise WavError(f"{path}: no audio samples")
    return AudioClip(samples, int(rate))


def write_wav(path, clip):
    """Write a clip as 32-bit float WAV (lossless for the synthetic pools)."""
    wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))


def stft_magnitude(clip, fft_size=DEFAULT_FFT, hop=DEFAULT_HOP, window="hann"):
    """One-sided STFT magnitudes, (fft_size // 2 + 1) x T.

    Frame t covers samples [t * hop, t * hop + fft_size); no padding is
    applied, so T = (len - fft_size) // hop + 1.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size < fft_size:
        raise ValueError(f"clip of {x.size} samples is shorter than one {fft_size}-sample frame")
    frames = np.lib.stride_tricks.sliding_window_view(x, fft_size)[::hop]
    win = get_window(window, fft_size)
    mags = np.abs(np.fft.rfft(frames * win, axis=1)).T
    freqs = np.fft.rfftfreq(fft_size, 1.0 / clip.sample_rate)
    return Spectrogram(mags, freqs)


def band_select(spec, f_lo=DEFAULT_BAND[0], f_hi=DEFAULT_BAND[1], n_bins=DEFAULT_BINS):
    """Keep the contiguous bins whose centre frequency lies in [f_lo, f_hi].

    When ``n_bins`` is given the selection must contain exactly that many
    bins; otherwise the error lists bands that would.
    """
    if not f_lo < f_hi:
        raise ValueError(f"empty band [{f_lo}, {f_hi}]")
    nyquist = spec.freqs[-1]
    if f_hi > nyquist:
        raise ValueError(f"band upper edge {f_hi} Hz exceeds Nyquist {nyquist} Hz")
    idx = np.flatnonzero((spec.freqs >= f_lo) & (spec.freqs <= f_hi))
    if n_bins is not None and idx.size != n_bins:
        df = spec.freqs[1] - spec.freqs[0]
        first = int(np.ceil(f_lo / df))
        options = []
        for start in range(max(0, first - 2), first + 3):
            stop = start + n_bins - 1
            if stop < spec.freqs.size:
                options.append(f"bins {start}..{stop} = [{start * df:.1f}, {stop * df:.1f}] Hz")
        raise ValueError(
            f"band [{f_lo}, {f_hi}] Hz holds {idx.size} bins, need {n_bins}; achievable: "
            + "; ".join(options)
        )
    if idx.size == 0:
        raise ValueError(f"no bins inside [{f_lo}, {f_hi}] Hz")
    return Spectrogram(spec.values[idx], spec.freqs[idx])


def band_spectrogram(clip):
    """STFT plus band selection with the default analysis settings."""
    if clip.sample_rate != DEFAULT_SAMPLE_RATE:
        raise ValueError(f"expected {DEFAULT_SAMPLE_RATE} Hz audio, got {clip.sample_rate} Hz (no resampling)")
    return band_select(stft_magnitude(clip))


def write_spectrogram_csv(path, values, freqs):
    """One row per frequency bin: ``freq_hz,t0,t1,...`` under a header row."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz"] + [f"t{i}" for i in range(values.shape[1])])
        for f, row in zip(freqs, values):
            w.writerow([repr(float(f))] + [repr(float(v)) for v in row])


def read_spectrogram_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    return body[:, 1:], body[:, 0]
