"""Training samples: max-normalized projection images with binary masks,
as full views and/or metal-bearing quadrant crops."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STRATEGIES = ("full", "crops", "full+crops")
REFERENCE_DETECTOR_PX = 948 * 740
REFERENCE_MIN_METAL_PX = 100


def normalize_max(img: np.ndarray) -> np.ndarray:
    """Divide by the image maximum (left unchanged when the maximum is not positive)."""
    img = np.asarray(img, dtype=np.float64)
    m = float(img.max())
    return img / m if m > 0 else img.copy()


def default_min_metal_px(nu: int, nv: int) -> int:
    """The 100-pixel crop rule scaled to a detector of nu x nv pixels."""
    return max(1, int(round(REFERENCE_MIN_METAL_PX * nu * nv / REFERENCE_DETECTOR_PX)))


def quadrants(arr: np.ndarray) -> list[np.ndarray]:
    """Top-left, top-right, bottom-left, bottom-right; odd remainders go to
    the bottom/right pieces."""
    h2, w2 = arr.shape[0] // 2, arr.shape[1] // 2
    return [arr[:h2, :w2], arr[:h2, w2:], arr[h2:, :w2], arr[h2:, w2:]]


def make_crops(img: np.ndarray, mask: np.ndarray, min_metal_px: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if img.shape != mask.shape:
        raise ValueError("image and mask shapes differ")
    return [(i.copy(), m.copy()) for i, m in zip(quadrants(img), quadrants(mask))
            if int(m.sum()) >= min_metal_px]


@dataclass
class SampleSet:
    images: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    tags: list = field(default_factory=list)

    def add(self, img, mask, tag: str) -> None:
        img = np.asarray(img, dtype=np.float64)
        mask = np.asarray(mask, dtype=np.uint8)
        if img.shape != mask.shape:
            raise ValueError(f"image {img.shape} and mask {mask.shape} differ")
        self.images.append(img)
        self.masks.append(mask)
        self.tags.append(tag)

    def __len__(self):
        return len(self.images)

    def count(self, tag: str) -> int:
        return sum(t == tag for t in self.tags)


def build_samples(views, masks, strategy: str, min_metal_px: int) -> SampleSet:
    """Samples from paired projection views and trace masks.

    ``full`` keeps every view, ``crops`` only the metal-bearing quadrants,
    ``full+crops`` both. Each sample is normalized by its own maximum.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    out = SampleSet()
    for img, m in zip(views, masks):
        if strategy in ("full", "full+crops"):
            out.add(normalize_max(img), m, "full")
        if strategy in ("crops", "full+crops"):
            for ci, cm in make_crops(np.asarray(img, dtype=np.float64), np.asarray(m), min_metal_px):
                out.add(normalize_max(ci), cm, "crop")
    return out
