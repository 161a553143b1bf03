import numpy as np
import pytest

from partae.synth import active_frame_fraction, long_term_spectrum_db, synth_audio, synth_sources


@pytest.fixture(scope="module")
def matched():
    return synth_sources(0, "matched", duration=10.0)


@pytest.fixture(scope="module")
def unmatched():
    return synth_sources(0, "unmatched", duration=10.0)


def test_shapes(matched):
    assert matched.H == 32
    assert matched.signal.shape == matched.intrinsic.shape == matched.extrinsic.shape
    assert matched.min_frames == (10 * 22050 - 128) // 64 + 1


def test_foreground_is_sparse(matched):
    assert active_frame_fraction(matched.signal) < 0.5


def test_noise_is_dense(matched):
    assert active_frame_fraction(matched.intrinsic) > 0.9
    assert active_frame_fraction(matched.extrinsic) > 0.9


def test_matched_noises_share_spectrum(matched):
    diff = long_term_spectrum_db(matched.intrinsic) - long_term_spectrum_db(matched.extrinsic)
    assert np.abs(diff).max() < 1.0


def test_unmatched_noises_differ(unmatched):
    diff = long_term_spectrum_db(unmatched.intrinsic) - long_term_spectrum_db(unmatched.extrinsic)
    diff -= diff.mean()
    assert (np.abs(diff) > 3.0).sum() >= 8


def test_matched_draws_are_independent(matched):
    assert not np.allclose(matched.intrinsic, matched.extrinsic)


def test_deterministic():
    a = synth_audio(7, duration=2.0)
    b = synth_audio(7, duration=2.0)
    c = synth_audio(8, duration=2.0)
    for k in a:
        np.testing.assert_array_equal(a[k].samples, b[k].samples)
    assert not np.array_equal(a["signal"].samples, c["signal"].samples)


def test_signal_and_intrinsic_shared_across_kinds():
    a = synth_audio(3, "matched", duration=2.0)
    b = synth_audio(3, "unmatched", duration=2.0)
    np.testing.assert_array_equal(a["signal"].samples, b["signal"].samples)
    np.testing.assert_array_equal(a["intrinsic"].samples, b["intrinsic"].samples)


def test_bad_kind():
    with pytest.raises(ValueError):
        synth_audio(0, "other")
