"""Network layers with hand-written forward and backward passes.

Every layer caches what its backward pass needs during ``forward`` and
returns the input gradient from ``backward``. Layers holding parameters
expose them through ``params`` and their gradients through ``grads`` (same
order), which is what the optimizer and the model file writer iterate over.

Tensors are NCHW numpy arrays; the dtype of the input is preserved.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _kernels


class Layer:
    params: list[np.ndarray] = []
    grads: list[np.ndarray] = []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Conv2d(Layer):
    """Stride-1 convolution with 'same' zero padding (odd kernel sizes)."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, dtype=np.float64):
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, kernel
        self.weight = np.zeros((out_ch, in_ch, kernel, kernel), dtype=dtype)
        self.bias = np.zeros(out_ch, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._cols = None
        self._shape = None

    @property
    def params(self):
        return [self.weight, self.bias]

    @property
    def grads(self):
        return [self.dweight, self.dbias]

    def init_he_uniform(self, rng: np.random.Generator) -> None:
        fan_in = self.in_ch * self.k * self.k
        bound = np.sqrt(6.0 / fan_in)
        self.weight[...] = rng.uniform(-bound, bound, self.weight.shape)
        self.bias[...] = 0.0

    def forward(self, x):
        if x.shape[1] != self.in_ch:
            raise ValueError(f"expected {self.in_ch} input channels, got {x.shape[1]}")
        self._shape = x.shape
        out, self._cols = _conv_same(x, self.weight.astype(x.dtype, copy=False))
        return out + self.bias.astype(x.dtype, copy=False)[None, :, None, None]

    def backward(self, grad):
        n, c, h, w = self._shape
        g2 = grad.transpose(0, 2, 3, 1).reshape(n * h * w, self.out_ch)
        self.dweight[...] = (g2.T @ self._cols).reshape(self.weight.shape)
        self.dbias[...] = g2.sum(axis=0)
        self._cols = None
        # input gradient = 'same' correlation with the flipped, transposed kernel
        wf = self.weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).astype(grad.dtype)
        dx, _ = _conv_same(grad, wf)
        return dx


def _conv_same(x, weight):
    """'same' zero-padded correlation; returns (output, im2col matrix)."""
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    p = k // 2
    if k == 1:
        cols = x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    elif k == 3:
        cols = _kernels.im2col3(np.ascontiguousarray(x))
    else:
        xp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=x.dtype)
        xp[:, p:p + h, p:p + w] = x.transpose(0, 2, 3, 1)
        win = sliding_window_view(xp, (k, k), axis=(1, 2))  # n,h,w,c,k,k
        cols = win.reshape(n * h * w, c * k * k)
    out = cols @ weight.reshape(o, -1).T
    return out.reshape(n, h, w, o).transpose(0, 3, 1, 2), cols


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return grad * self._mask


class InstanceNorm(Layer):
    """Per-(sample, channel) standardization without affine parameters."""

    def __init__(self, eps: float = 1e-5):
        self.eps = eps

    def forward(self, x):
        mean = x.mean(axis=(2, 3), keepdims=True)
        xc = x - mean
        var = (xc * xc).mean(axis=(2, 3), keepdims=True)
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._y = xc * self._inv
        return self._y

    def backward(self, grad):
        y = self._y
        gm = grad.mean(axis=(2, 3), keepdims=True)
        gym = (grad * y).mean(axis=(2, 3), keepdims=True)
        return self._inv * (grad - gm - y * gym)


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""

    def forward(self, x):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        self._shape = x.shape
        blocks = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        self._arg = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self._shape
        h2, w2 = h // 2, w // 2
        blocks = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
        np.put_along_axis(blocks, self._arg[..., None], grad[..., None], axis=-1)
        blocks = blocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        out = np.zeros((n, c, h, w), dtype=grad.dtype)
        out[:, :, :2 * h2, :2 * w2] = blocks.reshape(n, c, 2 * h2, 2 * w2)
        return out


def _up1d(x, axis):
    # half-pixel-centre linear interpolation by 2 with edge clamping:
    # out[2k] = .25 x[k-1] + .75 x[k], out[2k+1] = .75 x[k] + .25 x[k+1]
    x = np.moveaxis(x, axis, -1)
    prev = np.concatenate([x[..., :1], x[..., :-1]], axis=-1)
    nxt = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],), dtype=x.dtype)
    out[..., 0::2] = 0.25 * prev + 0.75 * x
    out[..., 1::2] = 0.75 * x + 0.25 * nxt
    return np.moveaxis(out, -1, axis)


def _up1d_adjoint(g, axis):
    g = np.moveaxis(g, axis, -1)
    even, odd = g[..., 0::2], g[..., 1::2]
    out = 0.75 * even + 0.75 * odd
    # contributions of x[k] through prev (to even[k+1]) and nxt (to odd[k-1])
    out[..., :-1] += 0.25 * even[..., 1:]
    out[..., 0] += 0.25 * even[..., 0]
    out[..., 1:] += 0.25 * odd[..., :-1]
    out[..., -1] += 0.25 * odd[..., -1]
    return np.moveaxis(out, -1, axis)


class UpsampleBilinear2x(Layer):
    """Bilinear x2 upsampling, align_corners=False semantics.

    Output sample ``i`` reads the input at ``(i + 0.5) / 2 - 0.5``, clamped to
    the valid range.
    """

    def forward(self, x):
        return _up1d(_up1d(x, 2), 3)

    def backward(self, grad):
        return _up1d_adjoint(_up1d_adjoint(grad, 3), 2)


class ConcatPad(Layer):
    """Zero-pad the decoder tensor on the right/bottom to the skip's size,
    then concatenate ``[skip, decoder]`` along channels."""

    def forward(self, dec, skip):
        n, c, h, w = dec.shape
        hs, ws = skip.shape[2:]
        if h > hs or w > ws:
            raise ValueError(f"decoder {h}x{w} larger than skip {hs}x{ws}")
        self._dec_shape = dec.shape
        self._skip_ch = skip.shape[1]
        out = np.zeros((n, self._skip_ch + c, hs, ws), dtype=dec.dtype)
        out[:, :self._skip_ch] = skip
        out[:, self._skip_ch:, :h, :w] = dec
        return out

    def backward(self, grad):
        n, c, h, w = self._dec_shape
        return grad[:, self._skip_ch:, :h, :w], grad[:, :self._skip_ch]
