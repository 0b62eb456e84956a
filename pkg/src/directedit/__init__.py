"""Inversion-free editing of synthetic videos with closed-form rectified-flow fields."""
from .core import (
    NULL_CONDITION,
    NULL_ID,
    Condition,
    EditSchedule,
    InvalidArgument,
    SeedSpec,
    make_schedule,
    seed_noise,
)
from .dag import DagConfig
from .engine import EditResult, run_edit
from .fields import AnalyticField, Delta, IsotropicGaussian, Mixture
from .safc import MaskConfig

__version__ = "0.1.0"

__all__ = [
    "NULL_CONDITION", "NULL_ID", "Condition", "EditSchedule", "InvalidArgument", "SeedSpec",
    "make_schedule", "seed_noise", "DagConfig", "EditResult", "run_edit", "AnalyticField",
    "Delta", "IsotropicGaussian", "Mixture", "MaskConfig",
]
