"""Learned flight policy for the quadsitl simulator.

A two-branch convolutional network maps a rendered forward view of the
obstacle field to the simulator's seven-value action: a NED position
delta (three values) and a target orientation quaternion (four values).
Training data comes straight from mission telemetry; inference is served
over the simulator's newline-delimited JSON policy protocol.
"""

from .dataset import TrainingSample, samples_from_records, samples_from_telemetry
from .loss import seven_value_loss
from .model import TwoBranchPolicyNet, conv_stack_widths, flat_width
from .rasterize import rasterize, rasterize_rays
from .serve import PolicyServer
from .train import (
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "TrainingSample",
    "samples_from_records",
    "samples_from_telemetry",
    "seven_value_loss",
    "TwoBranchPolicyNet",
    "conv_stack_widths",
    "flat_width",
    "rasterize",
    "rasterize_rays",
    "PolicyServer",
    "TrainingDiverged",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
