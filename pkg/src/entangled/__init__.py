"""Agent-based simulator of an economy of interacting companies in a periodic trait space."""

from .economy import Economy, calibrate, init_economy, run_simulation
from .kernel import InteractionKernel, build_kernel
from .params import EconomyParams, ParameterError
from .records import RunRecord, Snapshot
from .runner import SweepGrid, run_ensemble, run_sweep

__all__ = [
    "Economy", "EconomyParams", "InteractionKernel", "ParameterError", "RunRecord", "Snapshot",
    "SweepGrid", "build_kernel", "calibrate", "init_economy", "run_ensemble", "run_simulation", "run_sweep",
]
__version__ = "0.1.0"
