"""Paired image/mask augmentations.

Each transform fires independently with probability ``p``. Geometric
transforms move image (bilinear) and mask (nearest neighbour) together;
areas moved in from outside are zero.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

SHIFT_FRAC = 0.10
ZOOM_RANGE = (0.9, 1.1)
ROTATE_DEG = 15.0
ELASTIC_ALPHA = 8.0
ELASTIC_SIGMA = 4.0
NOISE_STD_FRAC = 0.05
MULT_RANGE = (0.9, 1.1)


def _binary(m):
    return (m > 0.5).astype(np.uint8)


def _affine(img, mask, mat):
    """Apply ``out[o] = in[mat @ (o - c) + c]`` about the image centre."""
    c = (np.asarray(img.shape) - 1) / 2.0
    offset = c - mat @ c
    im = ndimage.affine_transform(img, mat, offset=offset, order=1, mode="constant", cval=0.0)
    mk = ndimage.affine_transform(mask, mat, offset=offset, order=0, mode="constant", cval=0)
    return im, _binary(mk)


def hflip(img, mask):
    return img[:, ::-1].copy(), mask[:, ::-1].copy()


def vflip(img, mask):
    return img[::-1].copy(), mask[::-1].copy()


def shift(img, mask, dy: int, dx: int):
    out_i = np.zeros_like(img)
    out_m = np.zeros_like(mask)
    h, w = img.shape
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out_i[yd, xd] = img[ys, xs]
    out_m[yd, xd] = mask[ys, xs]
    return out_i, out_m


def zoom(img, mask, factor: float):
    return _affine(img, mask, np.eye(2) / factor)


def rotate(img, mask, deg: float):
    a = np.deg2rad(deg)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return _affine(img, mask, R)


def elastic(img, mask, rng, alpha=ELASTIC_ALPHA, sigma=ELASTIC_SIGMA):
    h, w = img.shape
    dy = ndimage.gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma, mode="constant") * alpha
    dx = ndimage.gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma, mode="constant") * alpha
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    coords = np.array([yy + dy, xx + dx])
    im = ndimage.map_coordinates(img, coords, order=1, mode="constant", cval=0.0)
    mk = ndimage.map_coordinates(mask, coords, order=0, mode="constant", cval=0)
    return im, _binary(mk)


def mask_dropout(img, mask, rng):
    """Remove one connected metal region from the mask and flatten it in the image."""
    lab, n = ndimage.label(mask, structure=np.ones((3, 3)))
    if n == 0:
        return img, mask
    k = int(rng.integers(1, n + 1))
    sel = lab == k
    img = img.copy()
    img[sel] = img.mean()
    mask = mask.copy()
    mask[sel] = 0
    return img, mask


def augment(img: np.ndarray, mask: np.ndarray, rng: np.random.Generator, p: float = 0.2):
    """Random augmentation of one (image, mask) pair; returns new arrays."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    img = np.asarray(img)
    mask = np.asarray(mask, dtype=np.uint8)
    if p == 0:
        return img.copy(), mask.copy()
    h, w = img.shape
    if rng.random() < p:
        img, mask = hflip(img, mask)
    if rng.random() < p:
        img, mask = vflip(img, mask)
    if rng.random() < p:
        my, mx = int(SHIFT_FRAC * h), int(SHIFT_FRAC * w)
        img, mask = shift(img, mask, int(rng.integers(-my, my + 1)), int(rng.integers(-mx, mx + 1)))
    if rng.random() < p:
        img, mask = zoom(img, mask, rng.uniform(*ZOOM_RANGE))
    if rng.random() < p:
        img, mask = rotate(img, mask, rng.uniform(-ROTATE_DEG, ROTATE_DEG))
    if rng.random() < p:
        img, mask = elastic(img, mask, rng)
    if rng.random() < p:
        img, mask = mask_dropout(img, mask, rng)
    if rng.random() < p:
        sigma = rng.uniform(0.0, NOISE_STD_FRAC) * float(np.max(img))
        img = img + rng.normal(0.0, 1.0, img.shape) * sigma
    if rng.random() < p:
        img = img * rng.uniform(*MULT_RANGE, img.shape)
    return img.astype(np.float64, copy=False), mask
