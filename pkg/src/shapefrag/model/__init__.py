"""Shape-conditioned fragment sequence model (desk scale)."""

from .batching import Batch, collate
from .config import ModelConfig, OptimConfig
from .network import Logits, ShapeToFragments, build_model, decode_step, encode
from .sampling import GenerationResult, generate, nucleus_sample, nucleus_set
from .training import TrainingSample, augment, grad, loss, make_samples, train

__all__ = [
    "Batch",
    "GenerationResult",
    "Logits",
    "ModelConfig",
    "OptimConfig",
    "ShapeToFragments",
    "TrainingSample",
    "augment",
    "build_model",
    "collate",
    "decode_step",
    "encode",
    "generate",
    "grad",
    "loss",
    "make_samples",
    "nucleus_sample",
    "nucleus_set",
    "train",
]
