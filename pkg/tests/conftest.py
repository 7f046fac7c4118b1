import numpy as np
import pytest

from kalman_cl.network import HeadMask, init_params


def reference_grad(layers, x, y, active):
    """Per-sample gradient by explicit chain rule, one sample at a time.

    Written independently of ``kalman_cl.network.backward`` so the two can be
    checked against each other.
    """
    acts = [x]
    pres = []
    h = x
    for i, (w, b) in enumerate(layers):
        z = w @ h + b
        pres.append(z)
        h = z if i == len(layers) - 1 else np.where(z > 0, z, 0.0)
        acts.append(h)
    z = pres[-1][list(active)]
    p = np.exp(z - np.logaddexp.reduce(z))
    onehot = np.array([1.0 if c == y else 0.0 for c in active])
    dz = np.zeros(len(pres[-1]))
    dz[list(active)] = p - onehot
    out = []
    for i in reversed(range(len(layers))):
        w, _ = layers[i]
        out.append((np.outer(dz, acts[i]).ravel(), dz.copy()))
        if i:
            dz = (w.T @ dz) * (pres[i - 1] > 0)
    flat = []
    for gw, gb in reversed(out):
        flat += [gw, gb]
    return np.concatenate(flat)


@pytest.fixture
def small_net():
    return init_params([5, 7, 4], seed=3)


@pytest.fixture
def toy_batch():
    gen = np.random.default_rng(11)
    x = gen.uniform(0, 1, size=(8, 5))
    y = gen.choice([1, 3], size=8)
    return x, y, HeadMask((1, 3))


def central_difference(fn, values, step=1e-5):
    """Central finite-difference gradient of ``fn`` at the flat vector ``values``."""
    out = np.empty_like(values)
    for i in range(values.size):
        hi, lo = values.copy(), values.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (fn(hi) - fn(lo)) / (2 * step)
    return out


def relative_errors(analytic, numeric, floor=1e-7):
    """Relative error on the entries where either gradient is above ``floor``."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    keep = scale > floor
    return np.abs(analytic - numeric)[keep] / scale[keep]


_ACCEPTANCE: list[str] = []


@pytest.fixture
def record():
    """Log one acceptance line; it is echoed in the terminal summary."""
    def _record(criterion, passed, detail):
        _ACCEPTANCE.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
