"""Energy-optimal SAV and GSAV solvers for gradient flows on periodic grids."""

from .audit import EnergyRecord, audit_step, check_run, compare_runs
from .integrators import (
    BDF_TABLES,
    ConfigurationError,
    NumericalFailure,
    Scheme,
    SchemeOptions,
    SchemeState,
    advance,
    init_state,
    modified_energy,
    startup,
    step,
)
from .models import ModelKind, ModelSpec, make_initial, make_model, total_energy
from .spectral import PeriodicGrid, build_grid

__version__ = "0.1.0"

__all__ = [
    "BDF_TABLES",
    "ConfigurationError",
    "EnergyRecord",
    "ModelKind",
    "ModelSpec",
    "NumericalFailure",
    "PeriodicGrid",
    "Scheme",
    "SchemeOptions",
    "SchemeState",
    "advance",
    "audit_step",
    "build_grid",
    "check_run",
    "compare_runs",
    "init_state",
    "make_initial",
    "make_model",
    "modified_energy",
    "startup",
    "step",
    "total_energy",
]
