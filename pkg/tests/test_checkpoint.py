import struct

import numpy as np
import pytest

from partae import checkpoint
from partae.model import init_params


def _params():
    rng = np.random.default_rng(0)
    return init_params(4, M=3, H=5, K=4, P=2).with_normalization(rng.random(5), 0.1 + rng.random(5))


def test_layout_header():
    p = _params()
    blob = checkpoint.dumps(p)
    assert blob[:8] == b"PARTAE01"
    assert struct.unpack("<4I", blob[8:24]) == (3, 5, 4, 2)
    assert len(blob) == 24 + 8 * (3 * 5 * 4 * 2 + 5 * 2)
    wc = np.frombuffer(blob[24:24 + 8 * 60], dtype="<f8").reshape(3, 5, 4)
    np.testing.assert_array_equal(wc, p.Wc)


def test_round_trip_bit_exact(tmp_path):
    p = _params()
    path = tmp_path / "m.bin"
    checkpoint.save(path, p)
    q, state, it = checkpoint.load(path)
    assert state is None and it == 0
    for a, b in ((p.Wc, q.Wc), (p.Wd, q.Wd), (p.mu, q.mu), (p.sigma, q.sigma)):
        assert a.tobytes() == b.tobytes()
    assert q.P == 2
    assert path.read_bytes() == checkpoint.dumps(q)


def test_rejects_bad_files():
    blob = checkpoint.dumps(_params())
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"NOTPARTAE" + blob[9:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-3])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob + b"GARBAGE!")
