"""Groupwise rectified flow: per-group noise schedules over orthogonal frequency bases."""

from .basis import OrthoBasis, blur_basis, dct2_basis, identity_basis, make_basis
from .flow import FlowConfig, corrupt, simple_config, velocity
from .grouping import GroupPartition, GroupSchedule, group_alphas, make_partition, make_schedule, make_uniform_schedule
from .net import VectorFieldNet, build
from .sampler import encode, make_grid, sample
from .trainer import TrainConfig, train

__all__ = [
    "FlowConfig",
    "GroupPartition",
    "GroupSchedule",
    "OrthoBasis",
    "TrainConfig",
    "VectorFieldNet",
    "blur_basis",
    "build",
    "corrupt",
    "dct2_basis",
    "encode",
    "group_alphas",
    "identity_basis",
    "make_basis",
    "make_grid",
    "make_partition",
    "make_schedule",
    "make_uniform_schedule",
    "sample",
    "simple_config",
    "train",
    "velocity",
]

__version__ = "0.1.0"
