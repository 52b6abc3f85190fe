"""Simulator for Byzantine-robust, compressed distributed SGD with double momentum."""
from byzsim._kernels import active as active_backend
from byzsim.aggregate import AggregatorSpec
from byzsim.attack import AttackSpec
from byzsim.compress import CompressorSpec
from byzsim.data import Dataset, PartitionScheme
from byzsim.engine import RunConfig, Simulation, Variant, run

__all__ = [
    "AggregatorSpec",
    "AttackSpec",
    "CompressorSpec",
    "Dataset",
    "PartitionScheme",
    "RunConfig",
    "Simulation",
    "Variant",
    "active_backend",
    "run",
]
__version__ = "0.1.0"
