"""Four-level U-Net for projection-domain metal segmentation.

Channel plan for ``base`` channels and ``depth`` levels: encoder block ``d``
has two 3x3 convolutions with ``base * 2**d`` output channels, each followed
by ReLU and instance norm, then 2x2 max pooling. Decoder block ``d`` (run from
the deepest level up) upsamples bilinearly, applies a 3x3 convolution
(+ReLU+norm) down to ``base * 2**d`` channels, pads to the encoder skip and
concatenates, then applies two more 3x3 conv/ReLU/norm units. A final 1x1
convolution produces one logit channel.
"""
from __future__ import annotations

import numpy as np

from .layers import ConcatPad, Conv2d, InstanceNorm, MaxPool2x2, ReLU, UpsampleBilinear2x


class ConvUnit:
    """conv3x3 -> ReLU -> instance norm."""

    def __init__(self, in_ch, out_ch, dtype):
        self.conv = Conv2d(in_ch, out_ch, 3, dtype=dtype)
        self.relu = ReLU()
        self.norm = InstanceNorm()

    def forward(self, x):
        return self.norm.forward(self.relu.forward(self.conv.forward(x)))

    def backward(self, g):
        return self.conv.backward(self.relu.backward(self.norm.backward(g)))


class UNet:
    def __init__(self, depth: int = 4, base_channels: int = 8, dtype=np.float64):
        if depth < 1 or base_channels < 1:
            raise ValueError("depth and base_channels must be positive")
        self.depth = depth
        self.base_channels = base_channels
        self.dtype = np.dtype(dtype)
        ch = [base_channels * 2 ** d for d in range(depth)]
        self.enc = []
        for d in range(depth):
            cin = 1 if d == 0 else ch[d - 1]
            self.enc.append((ConvUnit(cin, ch[d], dtype), ConvUnit(ch[d], ch[d], dtype)))
        self.pools = [MaxPool2x2() for _ in range(depth)]
        self.dec = {}
        for d in reversed(range(depth)):
            cin = ch[d] if d == depth - 1 else ch[d + 1]
            self.dec[d] = (
                UpsampleBilinear2x(),
                ConvUnit(cin, ch[d], dtype),
                ConcatPad(),
                ConvUnit(2 * ch[d], ch[d], dtype),
                ConvUnit(ch[d], ch[d], dtype),
            )
        self.final = Conv2d(ch[0], 1, 1, dtype=dtype)

    # parameter order is the model-file order
    def conv_layers(self) -> list[Conv2d]:
        convs = []
        for a, b in self.enc:
            convs += [a.conv, b.conv]
        for d in reversed(range(self.depth)):
            _, up, _, c1, c2 = self.dec[d]
            convs += [up.conv, c1.conv, c2.conv]
        convs.append(self.final)
        return convs

    @property
    def params(self) -> list[np.ndarray]:
        return [p for c in self.conv_layers() for p in c.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for c in self.conv_layers() for g in c.grads]

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def init(self, seed: int) -> "UNet":
        rng = np.random.default_rng(seed)
        for c in self.conv_layers():
            c.init_he_uniform(rng)
        return self

    def set_params(self, arrays) -> None:
        for p, a in zip(self.params, arrays, strict=True):
            if p.shape != a.shape:
                raise ValueError(f"parameter shape {a.shape} != {p.shape}")
            p[...] = a

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def min_size(self) -> int:
        return 2 ** self.depth

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected input of shape (n, 1, h, w), got {x.shape}")
        if min(x.shape[2:]) < self.min_size():
            raise ValueError(
                f"input {x.shape[2]}x{x.shape[3]} too small for depth {self.depth}"
                f" (need >= {self.min_size()})")
        x = x.astype(self.dtype, copy=False)
        skips = []
        for d in range(self.depth):
            a, b = self.enc[d]
            x = b.forward(a.forward(x))
            skips.append(x)
            x = self.pools[d].forward(x)
        for d in reversed(range(self.depth)):
            up, uc, cat, c1, c2 = self.dec[d]
            x = uc.forward(up.forward(x))
            x = cat.forward(x, skips[d])
            x = c2.forward(c1.forward(x))
        return self.final.forward(x)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Backpropagate ``d loss / d logits``; fills every conv's grads."""
        g = self.final.backward(grad.astype(self.dtype, copy=False))
        skip_grads = [None] * self.depth
        for d in range(self.depth):
            up, uc, cat, c1, c2 = self.dec[d]
            g = c1.backward(c2.backward(g))
            g, skip_grads[d] = cat.backward(g)
            g = up.backward(uc.backward(g))
        for d in reversed(range(self.depth)):
            a, b = self.enc[d]
            g = self.pools[d].backward(g) + skip_grads[d]
            g = a.backward(b.backward(g))
        return g
