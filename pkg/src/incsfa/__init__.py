"""Covariance-free incremental slow feature analysis on streams."""

from .ccipca import AmnesicSchedule, PrincipalComponentSet, ccipca_update
from .errors import (
    ChecksumError,
    ConfigError,
    DataError,
    FormatError,
    IncSFAError,
    InvalidInputError,
    NotTrainedError,
)
from .mca import McaRateSchedule, SlowFeatureSet, mca_update
from .oracle import BatchSFAModel, batch_sfa
from .unit import IncSFAUnit, UnitConfig

__version__ = "0.1.0"

__all__ = [
    "AmnesicSchedule",
    "BatchSFAModel",
    "ChecksumError",
    "ConfigError",
    "DataError",
    "FormatError",
    "IncSFAError",
    "IncSFAUnit",
    "InvalidInputError",
    "McaRateSchedule",
    "NotTrainedError",
    "PrincipalComponentSet",
    "SlowFeatureSet",
    "UnitConfig",
    "batch_sfa",
    "ccipca_update",
    "mca_update",
]
