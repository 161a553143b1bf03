"""Binary checkpoint container.

Layout (all little-endian)::

    b"PARTAE01"
    M, H, K, P                      uint32 x 4
    Wc   (M*H*K float64, C order over (M, H, K))
    Wd   (M*K*H float64, C order over (M, K, H))
    mu   (H float64)
    sigma (H float64)

optionally followed by an optimizer section::

    b"ADLSTATE"
    iteration                       uint64
    rho, eps                        float64 x 2
    Eg[Wc], Eg[Wd], Edx[Wc], Edx[Wd]  float64, same layouts as above
"""

import struct

import numpy as np

from partae.model import ModelParams
from partae.optimizer import AdaDeltaState

MAGIC = b"PARTAE01"
STATE_TAG = b"ADLSTATE"
_F8 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def dumps(params, state=None, iteration=0):
    M, H, K, P = params.dims
    parts = [MAGIC, struct.pack("<4I", M, H, K, P)]
    for arr in (params.Wc, params.Wd, params.mu, params.sigma):
        parts.append(np.ascontiguousarray(arr, dtype=_F8).tobytes())
    if state is not None:
        parts.append(STATE_TAG)
        parts.append(struct.pack("<Q2d", iteration, state.rho, state.eps))
        for acc in (state.acc_grad_sq, state.acc_update_sq):
            for name in ("Wc", "Wd"):
                parts.append(np.ascontiguousarray(acc[name], dtype=_F8).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def floats(self, shape):
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype=_F8).astype(np.float64).reshape(shape)

    def at_end(self):
        return self.pos == len(self.buf)


def loads(buf):
    """Parse a checkpoint; returns ``(params, state, iteration)``.

    ``state`` is None (and ``iteration`` 0) when no optimizer section is present.
    """
    r = _Reader(buf)
    if bytes(r.take(8)) != MAGIC:
        raise CheckpointError("not a PARTAE01 checkpoint")
    M, H, K, P = struct.unpack("<4I", r.take(16))
    Wc = r.floats((M, H, K))
    Wd = r.floats((M, K, H))
    mu = r.floats((H,))
    sigma = r.floats((H,))
    params = ModelParams(Wc, Wd, mu, sigma, P)
    if r.at_end():
        return params, None, 0
    if bytes(r.take(8)) != STATE_TAG:
        raise CheckpointError("unknown section after model weights")
    iteration, rho, eps = struct.unpack("<Q2d", r.take(24))
    acc = []
    for _ in range(2):
        acc.append({"Wc": r.floats((M, H, K)), "Wd": r.floats((M, K, H))})
    if not r.at_end():
        raise CheckpointError("trailing bytes after optimizer state")
    state = AdaDeltaState(acc[0], acc[1], rho, eps)
    return params, state, iteration


def save(path, params, state=None, iteration=0):
    with open(path, "wb") as fh:
        fh.write(dumps(params, state, iteration))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
