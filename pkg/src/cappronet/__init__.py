"""Capsule projection heads: classify by the length of a feature's
projection onto one learned subspace per class."""

from .capsule import (
    CapsuleSubspace,
    ProjectionResult,
    SigmaMode,
    capsule_length,
    hyperpower_step,
    length_gradient,
    project,
    refresh_sigma,
    visualize_coords,
    weight_norm_length,
)
from .heads import CapsuleHead, GroupNeuronHead, HeadOutput, LinearHead
from .backbone import Mlp
from .train import Model, RunRecord, TrainConfig, compare_heads, evaluate, train

__version__ = "0.1.0"
