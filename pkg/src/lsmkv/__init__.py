"""An embedded LSM-tree key-value store with the Garnering merge policy."""
from .core import (
    GiB,
    KiB,
    MiB,
    CorruptionError,
    Garnering,
    Leveling,
    LSMError,
    NoFilter,
    OptimizedFilter,
    PolicyConfig,
    UniformFilter,
)
from .db import DB, Snapshot, WriteStall
from .stats import AmplificationStats

__all__ = [
    "AmplificationStats",
    "CorruptionError",
    "DB",
    "GiB",
    "Garnering",
    "KiB",
    "LSMError",
    "Leveling",
    "MiB",
    "NoFilter",
    "OptimizedFilter",
    "PolicyConfig",
    "Snapshot",
    "UniformFilter",
    "WriteStall",
]
