import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partae import checkpoint
from partae.model import init_params
from partae.optimizer import AdaDeltaState, DivergenceError, adadelta_step, adadelta_update


def scalar_adadelta(gs, rho=0.95, eps=1e-6):
    """Reference AdaDelta on a single scalar weight, in plain Python floats."""
    w, eg, edx = 0.0, 0.0, 0.0
    deltas = []
    for g in gs:
        eg = rho * eg + (1 - rho) * g * g
        d = -math.sqrt((edx + eps) / (eg + eps)) * g
        edx = rho * edx + (1 - rho) * d * d
        w += d
        deltas.append(d)
    return w, deltas


def test_first_step_value():
    delta, acc_g, acc_dx = adadelta_update(np.array(0.0), np.array(0.0), np.array(1.0), 0.95, 1e-6)
    assert acc_g == pytest.approx(0.05, abs=1e-15)
    # Oracle: -sqrt(1e-6 / 0.050001), evaluated independently at high precision.
    assert float(delta) == pytest.approx(-4.4720912343e-3, abs=1e-8)
    assert float(delta) == scalar_adadelta([1.0])[1][0]


def test_zero_gradient_leaves_params_and_decays_state():
    p = init_params(0, M=2, H=3, K=2, P=1)
    state = AdaDeltaState.zeros_like(p)
    state.acc_grad_sq["Wc"][:] = 2.0
    state.acc_update_sq["Wd"][:] = 3.0
    zero = {k: np.zeros_like(v) for k, v in p.trainables().items()}
    p2, s2 = adadelta_step(state, p, zero)
    np.testing.assert_array_equal(p2.Wc, p.Wc)
    np.testing.assert_array_equal(p2.Wd, p.Wd)
    np.testing.assert_allclose(s2.acc_grad_sq["Wc"], 0.95 * 2.0)
    np.testing.assert_allclose(s2.acc_update_sq["Wd"], 0.95 * 3.0)


@given(gs=st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=30))
@settings(max_examples=100, deadline=None)
def test_matches_scalar_reference_and_sign(gs):
    acc_g = acc_dx = np.zeros(1)
    w = np.zeros(1)
    ref_w, ref_deltas = scalar_adadelta(gs)
    for g, ref_d in zip(gs, ref_deltas):
        prev_dx = acc_dx.copy()
        delta, acc_g, acc_dx = adadelta_update(acc_g, acc_dx, np.array([g]), 0.95, 1e-6)
        assert delta[0] == ref_d
        assert abs(delta[0]) == pytest.approx(math.sqrt((prev_dx[0] + 1e-6) / (acc_g[0] + 1e-6)) * abs(g), rel=1e-15)
        if g != 0:
            assert np.sign(delta[0]) == -np.sign(g)
        assert acc_g[0] >= 0 and acc_dx[0] >= 0
        w = w + delta
    assert w[0] == ref_w


def test_step_is_deterministic_and_pure():
    p = init_params(1, M=3, H=4, K=2, P=1)
    rng = np.random.default_rng(0)
    grads = {k: rng.standard_normal(v.shape) for k, v in p.trainables().items()}
    s = AdaDeltaState.zeros_like(p)
    a = adadelta_step(s, p, grads)
    b = adadelta_step(s, p, grads)
    assert not s.acc_grad_sq["Wc"].any()
    assert a[0].Wc.tobytes() == b[0].Wc.tobytes()
    assert a[1].acc_update_sq["Wd"].tobytes() == b[1].acc_update_sq["Wd"].tobytes()


def test_nonfinite_gradient_aborts():
    p = init_params(0, M=2, H=3, K=2, P=1)
    grads = {k: np.zeros_like(v) for k, v in p.trainables().items()}
    grads["Wd"][0, 0, 0] = np.nan
    with pytest.raises(DivergenceError):
        adadelta_step(AdaDeltaState.zeros_like(p), p, grads)


def test_shape_mismatch_rejected():
    p = init_params(0, M=2, H=3, K=2, P=1)
    grads = {"Wc": np.zeros((1, 1, 1)), "Wd": np.zeros_like(p.Wd)}
    with pytest.raises(ValueError):
        adadelta_step(AdaDeltaState.zeros_like(p), p, grads)


def test_state_round_trips_through_checkpoint():
    p = init_params(2, M=3, H=4, K=5, P=2)
    rng = np.random.default_rng(3)
    s = AdaDeltaState.zeros_like(p, rho=0.9, eps=1e-7)
    for _ in range(3):
        grads = {k: rng.standard_normal(v.shape) for k, v in p.trainables().items()}
        p, s = adadelta_step(s, p, grads)
    blob = checkpoint.dumps(p, s, iteration=3)
    p2, s2, it = checkpoint.loads(blob)
    assert it == 3 and s2.rho == 0.9 and s2.eps == 1e-7
    assert checkpoint.dumps(p2, s2, 3) == blob
    for acc, acc2 in ((s.acc_grad_sq, s2.acc_grad_sq), (s.acc_update_sq, s2.acc_update_sq)):
        for k in acc:
            assert acc[k].tobytes() == acc2[k].tobytes()
