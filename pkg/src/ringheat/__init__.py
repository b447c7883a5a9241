"""Stationary energy currents for a stochastic Klein-Gordon ring with two heat baths."""

from .model import (
    CouplingSpec,
    CustomTableCoupling,
    DeltaPairCoupling,
    ModeIndex,
    NonlinearitySpec,
    PowerLawCoupling,
    SystemParams,
    validate_coupling,
    coupling_fourier,
)
from .dynamics import DriftSystem, TruncatedState, assemble_drift, current_form, apply_drift

__version__ = "0.1.0"
