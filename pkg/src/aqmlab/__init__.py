"""Congestion-control analysis laboratory: fluid models of window-based TCP
under RED and threshold queue policies, their stability and bifurcation
structure, and a packet-level discrete-event simulator for validation."""

from .params import (
    CompoundParams,
    IllinoisParams,
    NetworkParams,
    ProtocolSpec,
    RedParams,
    ThresholdParams,
    Variant,
)
from .fluid import (
    Equilibrium,
    FluidSystemKind,
    History,
    Trajectory,
    equilibrium_no_averaging,
    equilibrium_threshold,
    equilibrium_with_averaging,
    integrate_dde,
    oscillation_metrics,
)

__all__ = [
    "CompoundParams",
    "IllinoisParams",
    "NetworkParams",
    "ProtocolSpec",
    "RedParams",
    "ThresholdParams",
    "Variant",
    "Equilibrium",
    "FluidSystemKind",
    "History",
    "Trajectory",
    "equilibrium_no_averaging",
    "equilibrium_threshold",
    "equilibrium_with_averaging",
    "integrate_dde",
    "oscillation_metrics",
]

__version__ = "0.1.0"
