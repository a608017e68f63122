"""Gradient checks for every differentiable op plus graph-mechanics tests.

Numeric comparisons use central differences; inputs are chosen away from
kinks (relu/abs at zero, clamp edges, pooling ties) so the analytic and
numeric derivatives agree to first order.
"""

import numpy as np
import pytest

from sodkit import autodiff as ad
from conftest import check_grad


def spread_values(shape, rng, gap=0.1):
    """Distinct values with pairwise gaps well above the probe step, so
    max-pooling sees no near-ties."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2.0) * gap
    return vals.reshape(shape)


def test_add_mul_chain(rng):
    x0 = rng.standard_normal((3, 4))
    check_grad(lambda t: ((t + 2.0) * t - t / 3.0).sum(), x0)


def test_reflected_scalar_ops(rng):
    x0 = rng.uniform(0.5, 1.5, (2, 3))
    check_grad(lambda t: (1.0 - t).sum(), x0)
    check_grad(lambda t: (2.0 / t).sum(), x0)
    check_grad(lambda t: (-t).sum(), x0)


def test_broadcasting_grads(rng):
    a0 = rng.standard_normal((2, 3, 4))
    b0 = rng.standard_normal((3, 1))
    check_grad(lambda t: (t * ad.Tensor(b0)).sum(), a0)
    check_grad(lambda t: (ad.Tensor(a0) * t).sum(), b0)
    check_grad(lambda t: (ad.Tensor(a0) + t).mean(), b0)


def test_relu(rng):
    x0 = rng.standard_normal((4, 4))
    x0[np.abs(x0) < 0.05] = 0.5    # keep clear of the kink
    check_grad(lambda t: t.relu().sum(), x0)


def test_sigmoid_extremes_stable():
    x = ad.Tensor(np.array([-745.0, -30.0, 0.0, 30.0, 745.0]), requires_grad=True)
    y = x.sigmoid()
    assert np.all(np.isfinite(y.data))
    y.sum().backward()
    assert np.all(np.isfinite(x.grad))


def test_sigmoid_log_abs_clamp(rng):
    x0 = rng.standard_normal((3, 3))
    check_grad(lambda t: t.sigmoid().sum(), x0)
    p0 = rng.uniform(0.5, 2.0, (3, 3))
    check_grad(lambda t: t.log().sum(), p0)
    a0 = rng.standard_normal((3, 3))
    a0[np.abs(a0) < 0.05] = -0.5
    check_grad(lambda t: t.abs().sum(), a0)
    c0 = rng.uniform(-1.0, 1.0, (3, 3))
    c0[np.abs(np.abs(c0) - 0.5) < 0.05] = 0.0    # away from clamp edges
    check_grad(lambda t: t.clamp(-0.5, 0.5).sum(), c0)


def test_clamp_grad_zero_outside():
    x = ad.Tensor(np.array([-2.0, 0.0, 2.0]), requires_grad=True)
    x.clamp(-1.0, 1.0).sum().backward()
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_sum_mean_reshape(rng):
    x0 = rng.standard_normal((2, 3, 4))
    check_grad(lambda t: t.sum(), x0)
    check_grad(lambda t: t.mean(), x0)
    check_grad(lambda t: (t.reshape(6, 4) * t.reshape(6, 4)).sum(), x0)


def test_concat_narrow(rng):
    a0 = rng.standard_normal((2, 3, 2, 2))
    b0 = rng.standard_normal((2, 2, 2, 2))
    check_grad(lambda t: ad.concat([t, ad.Tensor(b0)], axis=1).sum(), a0)
    check_grad(lambda t: ad.narrow(t, 1, 1, 2).sum(), a0)
    check_grad(lambda t: (ad.narrow(t, 1, 0, 1) * ad.narrow(t, 1, 2, 1)).sum(), a0)


def test_linear(rng):
    x0 = rng.standard_normal((4, 6))
    w0 = rng.standard_normal((3, 6))
    b0 = rng.standard_normal(3)
    check_grad(lambda t: ad.linear(t, ad.Tensor(w0), ad.Tensor(b0)).sum(), x0)
    check_grad(lambda t: ad.linear(ad.Tensor(x0), t, ad.Tensor(b0)).sum(), w0)
    check_grad(lambda t: ad.linear(ad.Tensor(x0), ad.Tensor(w0), t).sum(), b0)


@pytest.mark.parametrize("s,p,d", [(1, 1, 1), (2, 1, 1), (1, 2, 2)])
def test_conv2d_grads(rng, s, p, d):
    x0 = rng.standard_normal((2, 2, 6, 6))
    w0 = rng.standard_normal((3, 2, 3, 3))
    b0 = rng.standard_normal(3)
    check_grad(lambda t: ad.conv2d(t, ad.Tensor(w0), ad.Tensor(b0), s, p, d).sum(), x0)
    check_grad(lambda t: ad.conv2d(ad.Tensor(x0), t, ad.Tensor(b0), s, p, d).sum(), w0)
    check_grad(lambda t: ad.conv2d(ad.Tensor(x0), ad.Tensor(w0), t, s, p, d).sum(), b0)


def test_conv2d_skips_input_grad_for_constants(rng):
    x = ad.Tensor(rng.standard_normal((1, 2, 5, 5)))    # no grad wanted
    w = ad.Tensor(rng.standard_normal((2, 2, 3, 3)), requires_grad=True)
    b = ad.Tensor(np.zeros(2), requires_grad=True)
    ad.conv2d(x, w, b, 1, 1, 1).sum().backward()
    assert x.grad is None and w.grad is not None


def test_maxpool2d_grads(rng):
    x0 = spread_values((2, 2, 6, 6), rng)
    check_grad(lambda t: ad.maxpool2d(t, 2, 2, 0).sum(), x0)
    check_grad(lambda t: (ad.maxpool2d(t, 3, 1, 1) * ad.maxpool2d(t, 3, 1, 1)).sum(), x0)


def test_bilinear_grads(rng):
    x0 = rng.standard_normal((2, 3, 4, 5))
    check_grad(lambda t: ad.bilinear_resize(t, 9, 7).sum(), x0)
    check_grad(lambda t: (ad.bilinear_upsample(t, 2) * 0.5).sum(), x0)
    check_grad(lambda t: ad.bilinear_resize(t, 2, 3).sum(), x0)    # downscale


def test_pad_edge_br_grads(rng):
    x0 = rng.standard_normal((2, 2, 3, 3))
    check_grad(lambda t: ad.pad_edge_br(t, 1, 1).sum(), x0)
    check_grad(lambda t: ad.pad_edge_br(t, 1, 0).sum(), x0)
    check_grad(lambda t: ad.pad_edge_br(t, 0, 1).sum(), x0)


def test_global_avg_pool_grads(rng):
    x0 = rng.standard_normal((2, 4, 3, 3))
    check_grad(lambda t: (ad.global_avg_pool(t) * ad.global_avg_pool(t)).sum(), x0)


def test_aliased_operand(rng):
    x0 = rng.standard_normal((3, 3))
    check_grad(lambda t: (t + t).sum(), x0)
    check_grad(lambda t: (t * t).sum(), x0)


def test_repeated_backward_accumulates(rng):
    x = ad.Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    (x * 3.0).sum().backward()
    first = x.grad.copy()
    (x * 3.0).sum().backward()
    assert np.array_equal(x.grad, 2.0 * first)
    x.zero_grad()
    assert x.grad is None


def test_detach_blocks_gradient(rng):
    x = ad.Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    (x.detach() * x).sum().backward()
    assert np.allclose(x.grad, x.data)    # only the live branch contributes


def test_backward_requires_scalar(rng):
    x = ad.Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_constant_graph_records_nothing():
    a = ad.Tensor(np.ones((2, 2)))
    out = (a * 3.0 + 1.0).relu()
    assert out._backward is None and out._parents == ()


def test_diamond_graph_grad(rng):
    # two paths from x to the loss; contributions must sum once each
    x = ad.Tensor(np.array([2.0]), requires_grad=True)
    y = x * 3.0
    loss = (y * y + y).sum()
    loss.backward()
    # d/dx of 9x^2 + 3x is 18x + 3 = 39 at x=2
    assert np.allclose(x.grad, [39.0])
