import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partae.mixing import (
    MixConfig,
    SourcePool,
    count_noise_only,
    energy,
    mix_to_snr,
    noise_gain,
    pool_gains,
    sample_batch,
    sample_components,
    snr_db,
)


def _pool(frames=3000, H=32, seed=0):
    rng = np.random.default_rng(seed)
    return SourcePool(
        signal=rng.uniform(0, 1, (H, frames)),
        intrinsic=rng.uniform(0, 2, (H, frames)),
        extrinsic=rng.uniform(0, 3, (H, frames)),
        freqs=np.arange(H, dtype=float),
    )


def test_gain_for_equal_energies():
    x = np.ones((4, 5))
    mixed, a = mix_to_snr(x, x.copy(), -10.0)
    assert a == pytest.approx(np.sqrt(10.0), rel=1e-14)
    np.testing.assert_allclose(mixed, x * (1 + np.sqrt(10.0)))


@given(st.floats(-40, 40), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_mix_hits_target_snr(snr, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, 1, (8, 16))
    n = rng.uniform(0, 1, (8, 16))
    mixed, a = mix_to_snr(s, n, snr)
    assert abs(snr_db(s, mixed - s) - snr) < 1e-9


def test_zero_energy_source_rejected():
    with pytest.raises(ValueError):
        noise_gain(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        mix_to_snr(np.zeros(3), np.ones(3), 0.0)
    with pytest.raises(ValueError):
        mix_to_snr(np.ones(3), np.ones(4), 0.0)


@pytest.mark.parametrize("fraction,batch,expected", [(0.25, 16, 4), (0.5, 16, 8), (0.0, 16, 0), (0.25, 2, 1), (0.25, 6, 2)])
def test_noise_only_count_rounds_half_up(fraction, batch, expected):
    assert count_noise_only(fraction, batch) == expected


def test_pool_gains_realise_snrs_and_level():
    pool = _pool()
    cfg = MixConfig(level=0.5)
    c, gi, ge = pool_gains(pool, cfg)
    es, ei, ee = pool.energies
    assert 10 * np.log10(c**2 * es / (gi**2 * ei)) == pytest.approx(-10.0, abs=1e-9)
    assert 10 * np.log10(c**2 * es / (ge**2 * ee)) == pytest.approx(-30.0, abs=1e-9)
    assert np.sqrt(ge**2 * ee / pool.extrinsic.size) == pytest.approx(0.5, rel=1e-12)


def test_dae_corruption_snr():
    # extrinsic relative to signal + intrinsic, with intrinsic 10 dB above signal
    assert MixConfig().dae_corruption_snr_db == pytest.approx(-30 + 10 * np.log10(11), abs=1e-12)


def test_batch_composition():
    pool = _pool()
    items = sample_batch(pool, MixConfig(), 16, np.random.default_rng(0))
    assert len(items) == 16
    assert [it.y for it in items].count(1) == 4
    assert all(it.y == 1 for it in items[12:])
    for it in items:
        assert it.X.shape == (32, 512)
    for it in items[:12]:
        assert np.all(it.partly_clean >= it.clean)
        assert np.all(it.X >= it.partly_clean)
    for it in items[12:]:
        assert not it.clean.any()


def test_batch_deterministic():
    pool = _pool()
    a = sample_batch(pool, MixConfig(), 16, np.random.default_rng(42))
    b = sample_batch(pool, MixConfig(), 16, np.random.default_rng(42))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.X, y.X)
    c = sample_batch(pool, MixConfig(), 16, np.random.default_rng(43))
    assert not np.array_equal(a[0].X, c[0].X)


def test_segments_are_pool_slices():
    H, frames = 4, 2000
    ramp = np.tile(np.arange(frames, dtype=float) + 1, (H, 1))
    pool = SourcePool(ramp, ramp, ramp, np.arange(H, dtype=float))
    cfg = MixConfig(segment_frames=64)
    c = pool_gains(pool, cfg)[0]
    S, _, _ = sample_components(pool, cfg, 20, np.random.default_rng(1))
    for seg in S / c:
        np.testing.assert_allclose(np.diff(seg[0]), 1.0)
        assert seg[0, -1] <= 0.8 * frames


def test_validation_region_is_disjoint():
    H, frames = 2, 5000
    ramp = np.tile(np.arange(frames, dtype=float) + 1, (H, 1))
    pool = SourcePool(ramp, ramp, ramp, np.arange(H, dtype=float))
    cfg = MixConfig(segment_frames=100)
    c = pool_gains(pool, cfg)[0]
    rng = np.random.default_rng(0)
    train = sample_components(pool, cfg, 200, rng, "train")[0] / c
    valid = sample_components(pool, cfg, 200, rng, "valid")[0] / c
    assert train[:, 0, -1].max() <= 4000 + 1e-9
    assert valid[:, 0, 0].min() >= 4001 - 1e-9


def test_pool_too_short():
    with pytest.raises(ValueError):
        sample_batch(_pool(frames=400), MixConfig(), 16, np.random.default_rng(0))


def test_pool_validation():
    with pytest.raises(ValueError):
        SourcePool(np.ones((3, 10)), np.ones((3, 10)), np.ones((2, 10)), np.arange(3.0))
    with pytest.raises(ValueError):
        SourcePool(-np.ones((3, 10)), np.ones((3, 10)), np.ones((3, 10)), np.arange(3.0))


def test_energy():
    assert energy(np.array([3.0, 4.0])) == 25.0
