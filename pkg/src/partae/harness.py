"""Training loop, evaluation metrics and the foreground-fraction sweep."""

import csv
import dataclasses
import io
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from partae.mixing import (
    MixConfig,
    count_noise_only,
    energy,
    mix_to_snr,
    sample_batch,
    sample_components,
)
from partae.model import MaskVector, encode, estimate_normalization, init_params, mask_latents, decode
from partae.objective import TrainItem, partitioned_loss_and_grad, reconstruction_loss_and_grad
from partae.optimizer import AdaDeltaState, DivergenceError, adadelta_step

MODES = ("partitioned", "dae", "plain")
SNR_ERROR_FLOOR = 1e-12

# Independent random streams derived from the run seed.
_TRAIN, _NORM, _VALID, _INIT = range(4)


def stream_rng(seed, stream, index=0):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "partitioned"
    lam: float = 0.75
    fg_fraction: float = 0.75
    noise_only_fraction: float = 0.25
    batch_size: int = 16
    iterations: int = 20_000
    seed: int = 0
    M: int = 9
    H: int = 32
    K: int = 32
    P: int = 16
    mix: MixConfig = field(default_factory=MixConfig)
    eval_every: int = 100
    rho: float = 0.95
    eps: float = 1e-6
    norm_batches: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        MaskVector.leading(self.K, self.fg_fraction)
        if self.mix.segment_frames % self.P:
            raise ValueError(f"segment of {self.mix.segment_frames} frames is not divisible by pool width {self.P}")
        if self.batch_size < 1 or self.iterations < 0 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be positive, iterations non-negative")
        n_noise = count_noise_only(self.noise_only_fraction, self.batch_size)
        if not 0 <= n_noise < self.batch_size:
            raise ValueError("noise-only fraction leaves no signal items in a batch")

    @property
    def mask(self):
        return MaskVector.leading(self.K, self.fg_fraction)

    @property
    def batch_mix(self):
        return dataclasses.replace(self.mix, noise_only_fraction=self.noise_only_fraction)

    def as_dict(self):
        d = dataclasses.asdict(self)
        mix = d.pop("mix")
        d.update({f"mix.{k}": v for k, v in mix.items()})
        return d


@dataclass
class TrainingLog:
    total: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    penalty: list = field(default_factory=list)

    def append(self, lb):
        self.total.append(lb.total)
        self.recon.append(lb.recon)
        self.penalty.append(lb.penalty)

    def smoothed(self, window=100):
        """Trailing moving average of the total loss (shorter near the start)."""
        x = np.asarray(self.total)
        c = np.concatenate([[0.0], np.cumsum(x)])
        i = np.arange(1, x.size + 1)
        lo = np.maximum(i - window, 0)
        return (c[i] - c[lo]) / (i - lo)

    def rows(self, every, start=0):
        for it in range(every - 1, len(self.total), every):
            yield start + it + 1, self.total[it], self.recon[it], self.penalty[it]

    def write_csv(self, path, every, start=0):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss", "recon", "penalty"])
            for row in self.rows(every, start):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


@dataclass
class TrainResult:
    params: object
    state: AdaDeltaState
    log: TrainingLog
    iteration: int


def corrupt(X, extrinsic, snr):
    """Denoising-autoencoder corruption: add the extrinsic segment at ``snr`` dB relative to X."""
    return mix_to_snr(X, extrinsic, snr)[0]


def dae_batch(pool, mix, batch_size, rng, split="train"):
    """(inputs, targets) for the denoising baseline.

    Targets are signal-plus-intrinsic segments; inputs add an extrinsic
    segment as the corruption. No labels or masks are involved.
    """
    S, I, E = sample_components(pool, mix, batch_size, rng, split)
    targets = S + I
    inputs = np.stack([corrupt(t, e, mix.dae_corruption_snr_db) for t, e in zip(targets, E)])
    return inputs, targets


def _draw(cfg, pool, rng):
    """One training batch for the configured mode: (inputs, targets, y)."""
    if cfg.mode == "dae":
        inputs, targets = dae_batch(pool, cfg.batch_mix, cfg.batch_size, rng)
        return inputs, targets, None
    items = sample_batch(pool, cfg.batch_mix, cfg.batch_size, rng)
    X = np.stack([it.X for it in items])
    return X, X, np.array([it.y for it in items])


def _step_loss(cfg, params, inputs, targets, y):
    if cfg.mode == "partitioned":
        return partitioned_loss_and_grad(params, inputs, y, cfg.mask, cfg.lam)
    return reconstruction_loss_and_grad(params, inputs, targets)


def initial_params(cfg, pool):
    """Orthogonal init plus normalization statistics from a pre-pass of sampled inputs."""
    params = init_params(stream_rng(cfg.seed, _INIT).integers(2**63), cfg.M, cfg.H, cfg.K, cfg.P)
    if pool.H != cfg.H:
        raise ValueError(f"pool has {pool.H} bands but the model expects {cfg.H}")
    batches = (_draw(cfg, pool, stream_rng(cfg.seed, _NORM, i))[0] for i in range(cfg.norm_batches))
    return params.with_normalization(*estimate_normalization(batches))


def train(cfg, pool, resume=None, progress=None):
    """Run ``cfg.iterations`` AdaDelta steps.

    Batch ``i`` is drawn from a stream seeded by (cfg.seed, i), so a run
    resumed from ``TrainResult`` continues exactly where it stopped.
    """
    if resume is None:
        params = initial_params(cfg, pool)
        state = AdaDeltaState.zeros_like(params, cfg.rho, cfg.eps)
        start = 0
    else:
        params, state, start = resume.params, resume.state, resume.iteration
    log = TrainingLog()
    for it in range(start, start + cfg.iterations):
        inputs, targets, y = _draw(cfg, pool, stream_rng(cfg.seed, _TRAIN, it))
        try:
            lb, grads = _step_loss(cfg, params, inputs, targets, y)
            params, state = adadelta_step(state, params, grads)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), iteration=it) from exc
        log.append(lb)
        if progress is not None and (it + 1) % cfg.eval_every == 0:
            progress(it + 1, lb)
    return TrainResult(params, state, log, start + cfg.iterations)


def snr_db(estimate, reference):
    """10 log10(reference energy / error energy), error energy floored."""
    err = max(energy(np.asarray(reference) - np.asarray(estimate)), SNR_ERROR_FLOOR)
    return float(10.0 * np.log10(energy(reference) / err))


@dataclass
class EvalReport:
    snr_vs_clean_db: float
    snr_vs_input_db: float
    snr_vs_partly_clean_db: float
    fg_latent_energy_ratio: float
    n_signal_items: int
    n_noise_items: int
    loss_curve: list = field(default_factory=list)


def validation_items(pool, mix, seed, n_signal=64, n_noise=32, min_song=0.1, chunk=32):
    """Held-out items drawn from the validation frame range.

    Signal items are kept only when their clean segment carries at least
    ``min_song`` of the mean clean-segment energy, so every per-item SNR has
    a non-silent reference.
    """
    rng = stream_rng(seed, _VALID)
    no_noise = dataclasses.replace(mix, noise_only_fraction=0.0)
    probe = sample_components(pool, no_noise, 256, stream_rng(seed, _VALID, 1), "validation")[0]
    threshold = min_song * np.mean(np.sum(probe**2, axis=(1, 2)))
    signal = []
    for _ in range(1000):
        for item in sample_batch(pool, no_noise, chunk, rng, "validation"):
            e = energy(item.clean)
            if e > 0 and e >= threshold:
                signal.append(item)
        if len(signal) >= n_signal:
            break
    else:
        raise RuntimeError("validation region holds too little foreground")
    noise_mix = dataclasses.replace(mix, noise_only_fraction=n_noise / (n_noise + 1))
    noise_items = [it for it in sample_batch(pool, noise_mix, n_noise + 1, rng, "validation") if it.y == 1]
    return signal[:n_signal] + noise_items[:n_noise]


def evaluate(params, mask, items, loss_curve=()):
    """Denoising metrics on validation items.

    With a mask the denoised output is the foreground-only reconstruction;
    without one (DAE, plain AE) it is the full reconstruction.
    """
    signal = [it for it in items if it.y == 0]
    noise_only = [it for it in items if it.y == 1]
    if not signal:
        raise ValueError("no signal items to evaluate")
    if any(it.clean is None or it.partly_clean is None for it in signal):
        raise ValueError("validation items need clean and partly clean references")

    X = np.stack([it.X for it in signal])
    lat = encode(params, X)
    full = decode(params, lat)
    denoised = full if mask is None else decode(params, mask_latents(lat, mask, "foreground"))
    clean = [snr_db(d, it.clean) for d, it in zip(denoised, signal)]
    partly = [snr_db(d, it.partly_clean) for d, it in zip(denoised, signal)]
    vs_input = [snr_db(f, it.X) for f, it in zip(full, signal)]

    ratio = float("nan")
    if mask is not None and noise_only:
        gate = mask.entries[:, None]
        fg_sig = np.sum((lat.activations * gate) ** 2, axis=(-2, -1)).mean()
        lat_n = encode(params, np.stack([it.X for it in noise_only]))
        fg_noise = np.sum((lat_n.activations * gate) ** 2, axis=(-2, -1)).mean()
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = float(np.float64(fg_noise) / np.float64(fg_sig))

    return EvalReport(
        snr_vs_clean_db=float(np.mean(clean)),
        snr_vs_input_db=float(np.mean(vs_input)),
        snr_vs_partly_clean_db=float(np.mean(partly)),
        fg_latent_energy_ratio=ratio,
        n_signal_items=len(signal),
        n_noise_items=len(noise_only),
        loss_curve=list(loss_curve),
    )


SWEEP_COLUMNS = (
    "mode",
    "fraction",
    "seed",
    "snr_vs_clean",
    "snr_vs_input",
    "snr_vs_partly_clean",
    "fg_latent_energy_ratio",
)


def run_cell(base_cfg, pool, mode, fraction, seed, val_items):
    """Train and evaluate one sweep cell; ``seconds`` is wall time and stays out of the CSV."""
    cfg = dataclasses.replace(base_cfg, mode=mode, fg_fraction=fraction, seed=seed)
    t0 = time.perf_counter()
    result = train(cfg, pool)
    mask = cfg.mask if mode == "partitioned" else None
    report = evaluate(result.params, mask, val_items, loss_curve=result.log.smoothed()[:: cfg.eval_every])
    return {
        "mode": mode,
        "fraction": fraction if mode == "partitioned" else "",
        "seed": seed,
        "snr_vs_clean": report.snr_vs_clean_db,
        "snr_vs_input": report.snr_vs_input_db,
        "snr_vs_partly_clean": report.snr_vs_partly_clean_db,
        "fg_latent_energy_ratio": report.fg_latent_energy_ratio,
        "seconds": time.perf_counter() - t0,
    }


def _cell_job(args):
    base_cfg, kind, duration, mode, fraction, seed = args
    from partae.synth import synth_sources

    pool = synth_sources(seed, kind, duration)
    return run_cell(base_cfg, pool, mode, fraction, seed, validation_items(pool, base_cfg.mix, seed))


def sweep_fg_fraction(base_cfg, fractions, seeds, kind="matched", duration=30.0, pools=None, workers=1):
    """Train/evaluate one partitioned model per (seed, fraction) plus one DAE per seed.

    Each seed drives both the synthetic pools and training. Rows come back
    in a fixed order (seed, then fractions, then the DAE) regardless of
    ``workers``.
    """
    for f in fractions:
        MaskVector.leading(base_cfg.K, f)
    jobs = []
    for seed in seeds:
        for f in fractions:
            jobs.append((base_cfg, kind, duration, "partitioned", f, seed))
        jobs.append((base_cfg, kind, duration, "dae", base_cfg.fg_fraction, seed))

    if pools is not None:
        rows = []
        for job in jobs:
            _, _, _, mode, f, seed = job
            pool = pools[seed]
            rows.append(run_cell(base_cfg, pool, mode, f, seed, validation_items(pool, base_cfg.mix, seed)))
        return rows
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_cell_job, jobs))
    return [_cell_job(job) for job in jobs]


def sweep_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()


def write_timed_csv(path, rows):
    """Sweep rows plus per-cell wall time, for runtime reporting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS + ("seconds",))
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS + ("seconds",)])
