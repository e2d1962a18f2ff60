"""Cycle-level model of a many-ported shared SRAM for ADAS SoCs."""

from .config import InterleaveScheme, SimConfig, TimingConfig, TopologyConfig
from .engine import Simulator, run, sweep
from .metrics import RunReport
from .workload import WorkloadSpec

__all__ = [
    "InterleaveScheme", "SimConfig", "TimingConfig", "TopologyConfig",
    "Simulator", "run", "sweep", "RunReport", "WorkloadSpec",
]
__version__ = "0.1.0"
