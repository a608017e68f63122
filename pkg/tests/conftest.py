import numpy as np
import pytest

from sodkit import autodiff as ad

GRAD_H = 1e-4
GRAD_RTOL = 1e-4


def numeric_grad(fn, x, h=GRAD_H):
    """Central-difference gradient of scalar fn at x, one element at a time."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = fn(x)
        flat[i] = keep - h
        down = fn(x)
        flat[i] = keep
        gf[i] = (up - down) / (2.0 * h)
    return g


def rel_err(got, want):
    denom = max(np.abs(got).max(initial=0.0), np.abs(want).max(initial=0.0), 1.0)
    return np.abs(got - want).max() / denom


def check_grad(build, x0, rtol=GRAD_RTOL):
    """build(tensor) -> scalar Tensor.  Compares backprop against central
    differences on a fresh copy of x0."""
    t = ad.Tensor(x0.copy(), requires_grad=True)
    loss = build(t)
    loss.backward()
    want = numeric_grad(lambda a: float(build(ad.Tensor(a.copy())).data), x0.copy())
    err = rel_err(t.grad, want)
    assert err < rtol, f"gradient mismatch: rel err {err:.3e}"
    return err


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
