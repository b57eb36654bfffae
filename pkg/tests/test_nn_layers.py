import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbctmar.nn.layers import ConcatPad, Conv2d, InstanceNorm, MaxPool2x2, ReLU, UpsampleBilinear2x
from cbctmar.nn.loss import bce_loss, sigmoid
from cbctmar.nn.unet import UNet

from oracles import central_diff, layer_grad_errors, rel_error

TOL = 1e-4


def conv(cin, cout, k, rng):
    c = Conv2d(cin, cout, k)
    c.init_he_uniform(rng)
    c.bias[...] = rng.standard_normal(cout)
    return c


@pytest.mark.parametrize("make", [
    lambda r: conv(3, 4, 3, r), lambda r: conv(3, 2, 1, r), lambda r: ReLU(), lambda r: InstanceNorm(),
    lambda r: MaxPool2x2(), lambda r: UpsampleBilinear2x()], ids=["conv3", "conv1", "relu", "norm", "pool", "up"])
def test_layer_gradients(make, rng):
    x = rng.standard_normal((2, 3, 8, 8))
    assert max(layer_grad_errors(make(rng), x, rng)) < TOL


def test_concat_pad_gradient(rng):
    cat = ConcatPad()
    dec, skip = rng.standard_normal((2, 3, 4, 5)), rng.standard_normal((2, 2, 5, 7))
    out = cat.forward(dec, skip)
    assert out.shape == (2, 5, 5, 7)
    np.testing.assert_array_equal(out[:, 2:, 4, :], 0)
    r = rng.standard_normal(out.shape)
    gd, gs = cat.backward(r)
    f = lambda: float(np.sum(cat.forward(dec, skip) * r))  # noqa: E731
    assert rel_error(gd, central_diff(f, dec)) < TOL
    assert rel_error(gs, central_diff(f, skip)) < TOL
    with pytest.raises(ValueError):
        cat.forward(skip, dec)


def test_layer_shapes_and_examples(rng):
    x = rng.standard_normal((2, 1, 7, 9))
    c = Conv2d(1, 1, 3)
    c.weight[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(c.forward(x), x)
    assert MaxPool2x2().forward(x).shape == (2, 1, 3, 4)
    assert UpsampleBilinear2x().forward(x).shape == (2, 1, 14, 18)
    y = InstanceNorm().forward(rng.standard_normal((3, 4, 6, 5)) * 7 + 3)
    np.testing.assert_allclose(y.mean(axis=(2, 3)), 0, atol=1e-6)
    np.testing.assert_allclose(y.var(axis=(2, 3)), 1, atol=1e-6)
    with pytest.raises(ValueError):
        Conv2d(2, 1).forward(x)


def test_upsample_constant_and_linear_interior():
    x = np.full((1, 1, 3, 3), 2.5)
    np.testing.assert_allclose(UpsampleBilinear2x().forward(x), 2.5)
    row = np.arange(6, dtype=float)[None, None, None, :].repeat(2, axis=2)
    up = UpsampleBilinear2x().forward(row)[0, 0, 0]
    # half-pixel centres: output i samples (i + 0.5)/2 - 0.5, clamped
    pos = np.clip((np.arange(12) + 0.5) / 2 - 0.5, 0, 5)
    np.testing.assert_allclose(up, pos)


def test_bce_examples_and_gradient(rng):
    t = (rng.random((2, 1, 5, 6)) > 0.5).astype(float)
    loss, _ = bce_loss(np.zeros(t.shape), t)
    assert loss == pytest.approx(np.log(2), rel=1e-12)
    loss, _ = bce_loss(np.where(t > 0, 20.0, -20.0), t)
    assert 0 <= loss < 1e-8
    x = rng.standard_normal(t.shape) * 3
    _, g = bce_loss(x, t)
    assert rel_error(g, central_diff(lambda: bce_loss(x, t)[0], x, h=1e-4)) < 1e-6
    with pytest.raises(ValueError):
        bce_loss(x, t * 2)
    with pytest.raises(ValueError):
        bce_loss(x, t[:1])


@given(st.floats(-800, 800), st.integers(0, 1))
def test_bce_nonnegative_and_stable(v, y):
    loss, g = bce_loss(np.array([[v]]), np.array([[float(y)]]))
    assert loss >= 0 and np.isfinite(loss) and np.isfinite(g).all()
    assert 0 <= sigmoid(np.array([v]))[0] <= 1


def unet_grad_error(depth, base, h, w, n, rng, n_coords=12):
    net = UNet(depth, base).init(int(rng.integers(1 << 30)))
    for c in net.conv_layers():
        c.bias[...] = 0.1 * rng.standard_normal(c.bias.shape)
    x = rng.standard_normal((n, 1, h, w))
    r = rng.standard_normal((n, 1, h, w))
    net.forward(x)
    dx = net.backward(r)
    f = lambda: float(np.sum(net.forward(x) * r))  # noqa: E731
    errs = []
    coords = list(rng.choice(x.size, min(n_coords, x.size), replace=False))
    errs.append(rel_error(dx.reshape(-1)[coords], central_diff(f, x, coords=coords)))
    grads = [g.copy() for g in net.grads]
    for p, g in zip(net.params, grads):
        coords = list(rng.choice(p.size, min(3, p.size), replace=False))
        errs.append(rel_error(g.reshape(-1)[coords], central_diff(f, p, coords=coords)))
    return max(errs)


@pytest.mark.parametrize("shape", [(2, 2, 8, 8, 1), (2, 2, 9, 11, 2), (3, 2, 13, 8, 1)])
def test_unet_gradient(shape, rng):
    assert unet_grad_error(*shape, rng) < TOL


@given(st.integers(16, 40), st.integers(16, 40))
def test_unet_preserves_size(h, w):
    net = UNet(4, 2).init(0)
    assert net.forward(np.ones((1, 1, h, w))).shape == (1, 1, h, w)


def test_unet_examples(rng):
    net = UNet(4, 8).init(1)
    assert net.forward(rng.random((1, 1, 37, 53))).shape == (1, 1, 37, 53)
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 1, 15, 40)))
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 2, 32, 32)))
    net.final.weight[...] = 0
    net.final.bias[...] = 0
    np.testing.assert_array_equal(net.forward(rng.random((1, 1, 16, 16))), 0)
    ratio = UNet(4, 16).n_params() / UNet(4, 8).n_params()
    assert 3.8 < ratio < 4.0
