import numpy as np
import pytest


def loop_conv(W, X):
    """Direct nested-loop evaluation of the causal time convolution."""
    M, H, K = W.shape
    N = X.shape[1]
    y = np.zeros((K, N))
    for k in range(K):
        for n in range(N):
            s = 0.0
            for m in range(M):
                if n - m < 0:
                    continue
                for h in range(H):
                    s += W[m, h, k] * X[h, n - m]
            y[k, n] = s
    return y


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return g


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    denom = np.maximum(np.abs(a), np.abs(b))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, np.abs(a - b) / denom, 0.0)
    return float(r.max()) if r.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    label, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    _acceptance[label] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_acceptance, key=lambda s: (int("".join(c for c in s if c.isdigit())), s)):
        status, title, detail = _acceptance[label]
        terminalreporter.write_line(f"[{status}] {label}. {title}" + (f" -- {detail}" if detail else ""))
