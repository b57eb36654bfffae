"""Toy U-Net metal segmenter with explicit backward passes."""
from .data import SampleSet, build_samples, default_min_metal_px, normalize_max
from .layers import ConcatPad, Conv2d, InstanceNorm, MaxPool2x2, ReLU, UpsampleBilinear2x
from .loss import bce_loss, sigmoid
from .optim import Adam, lr_schedule
from .train import DEFAULT_SEEDS, EpochRecord, TrainConfig, evaluate_set, history_csv, infer, infer_stack, train
from .unet import UNet

__all__ = [
    "Adam", "ConcatPad", "Conv2d", "DEFAULT_SEEDS", "EpochRecord", "InstanceNorm", "MaxPool2x2", "ReLU",
    "SampleSet", "TrainConfig", "UNet", "UpsampleBilinear2x", "bce_loss", "build_samples",
    "default_min_metal_px", "evaluate_set", "history_csv", "infer", "infer_stack", "lr_schedule",
    "normalize_max", "sigmoid", "train",
]
