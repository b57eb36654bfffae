"""Training loop, early stopping and inference."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import rng as rngmod
from ..metrics import Confusion, confusion, dsc
from .augment import augment
from .data import STRATEGIES, SampleSet, normalize_max
from .loss import bce_loss
from .optim import Adam, lr_schedule
from .unet import UNet

DEFAULT_SEEDS = (2060, 12060, 22060)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    betas: tuple[float, float] = (0.9, 0.999)
    lr_start: float = 1e-4
    lr_end: float = 1e-6
    lr_decay_epochs: int = 25
    patience: int = 5
    aug_prob: float = 0.2
    seed: int = 2060
    strategy: str = "full+crops"
    base_channels: int = 8
    depth: int = 4
    max_epochs: int = 50
    dtype: str = "float32"

    def __post_init__(self):
        if not 0 < self.lr_end <= self.lr_start:
            raise ValueError("need 0 < lr_end <= lr_start")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 <= self.aug_prob <= 1:
            raise ValueError("aug_prob must lie in [0, 1]")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_dsc: float


def _batches(shapes, batch_size, gen):
    """Shape-homogeneous batches of sample indices, shuffled."""
    buckets: dict = {}
    for i in gen.permutation(len(shapes)):
        buckets.setdefault(shapes[i], []).append(int(i))
    batches = []
    for key in sorted(buckets):
        idx = buckets[key]
        batches += [idx[s:s + batch_size] for s in range(0, len(idx), batch_size)]
    order = gen.permutation(len(batches))
    return [batches[k] for k in order]


def _stack(arrs, dtype):
    return np.stack(arrs)[:, None].astype(dtype)


def evaluate_set(net: UNet, samples: SampleSet, batch_size: int = 8) -> tuple[float, float]:
    """(mean BCE, DSC of the aggregated confusion) over a sample set."""
    if len(samples) == 0:
        return math.nan, math.nan
    shapes = [im.shape for im in samples.images]
    groups: dict = {}
    for i, s in enumerate(shapes):
        groups.setdefault(s, []).append(i)
    total_loss, n_px = 0.0, 0
    conf = Confusion(0, 0, 0, 0)
    for s in sorted(groups):
        idx = groups[s]
        for k in range(0, len(idx), batch_size):
            b = idx[k:k + batch_size]
            x = _stack([samples.images[i] for i in b], net.dtype)
            y = _stack([samples.masks[i] for i in b], net.dtype)
            logits = net.forward(x)
            loss, _ = bce_loss(logits, y)
            total_loss += loss * y.size
            n_px += y.size
            conf = conf + confusion(logits >= 0, y > 0.5)
    return total_loss / n_px, dsc(conf)


def train(train_set: SampleSet, val_set: SampleSet, cfg: TrainConfig, log=None) -> tuple[UNet, list[EpochRecord]]:
    """Adam with the log-linear schedule; keeps the parameters of the epoch
    with the lowest validation loss and stops after ``patience`` epochs
    without improvement."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    dtype = np.dtype(cfg.dtype)
    net = UNet(cfg.depth, cfg.base_channels, dtype).init(cfg.seed)
    for im in train_set.images + val_set.images:
        if min(im.shape) < net.min_size():
            raise ValueError(f"sample {im.shape} smaller than {net.min_size()} pixels")
    opt = Adam(net.params, cfg.betas)
    gen = rngmod.generator(cfg.seed, 3)
    history: list[EpochRecord] = []
    best_loss, best_params, stale = math.inf, net.copy_params(), 0
    for epoch in range(cfg.max_epochs):
        lr = lr_schedule(epoch, cfg.lr_start, cfg.lr_end, cfg.lr_decay_epochs)
        imgs, msks = [], []
        for im, mk in zip(train_set.images, train_set.masks):
            a, b = augment(im, mk, gen, cfg.aug_prob)
            imgs.append(a)
            msks.append(b)
        sum_loss, n_seen = 0.0, 0
        for b in _batches([im.shape for im in imgs], cfg.batch_size, gen):
            x = _stack([imgs[i] for i in b], dtype)
            y = _stack([msks[i] for i in b], dtype)
            loss, grad = bce_loss(net.forward(x), y)
            net.backward(grad)
            opt.step(net.grads, lr)
            sum_loss += loss * len(b)
            n_seen += len(b)
        val_loss, val_dsc = evaluate_set(net, val_set)
        rec = EpochRecord(epoch, lr, sum_loss / n_seen, val_loss, val_dsc)
        history.append(rec)
        if log is not None:
            log(rec)
        if val_loss < best_loss:
            best_loss, best_params, stale = val_loss, net.copy_params(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    net.set_params(best_params)
    return net, history


def infer(net: UNet, image: np.ndarray) -> np.ndarray:
    """Binary trace of one projection view: sigmoid(logit) >= 0.5."""
    x = normalize_max(image)[None, None].astype(net.dtype)
    return (net.forward(x)[0, 0] >= 0).astype(np.uint8)


def infer_stack(net: UNet, views: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Traces for a (n_views, nv, nu) stack, each view normalized by its maximum."""
    out = np.zeros(views.shape, dtype=np.uint8)
    for s in range(0, views.shape[0], batch_size):
        x = np.stack([normalize_max(v) for v in views[s:s + batch_size]])[:, None].astype(net.dtype)
        out[s:s + batch_size] = (net.forward(x)[:, 0] >= 0)
    return out


def history_csv(history: list[EpochRecord]) -> str:
    lines = ["epoch,lr,train_loss,val_loss,val_dsc"]
    for r in history:
        lines.append(f"{r.epoch},{r.lr:.10e},{r.train_loss:.10f},{r.val_loss:.10f},"
                     + ("n/a" if math.isnan(r.val_dsc) else f"{r.val_dsc:.10f}"))
    return "\n".join(lines) + "\n"
