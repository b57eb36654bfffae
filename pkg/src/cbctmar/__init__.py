"""Projection-domain metal segmentation for cone-beam CT metal artifact
reduction: phantom simulation, FDK reconstruction, baselines, a toy U-Net
and the evaluation protocol."""
from ._kernels import backend, set_backend, use_backend
from .experiment import generate_dataset, run_experiment, train_models
from .geometry import ScanGeometry
from .pipeline import PipelineConfig, Physics, generate_training_scan
from .stacks import ProjectionStack, TraceStack
from .volume import Grid, Mask3, MaterialVolume, PhantomSpec, Volume3

__version__ = "0.1.0"

__all__ = [
    "Grid", "Mask3", "MaterialVolume", "PhantomSpec", "PipelineConfig", "Physics", "ProjectionStack",
    "ScanGeometry", "TraceStack", "Volume3", "backend", "generate_dataset", "generate_training_scan",
    "run_experiment", "set_backend", "train_models", "use_backend",
]
