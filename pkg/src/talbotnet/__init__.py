"""Serial optical neural networks: temporal phase-step weights between
dispersive interconnects at pulse-train self-imaging conditions."""

__version__ = "0.1.0"

from .core import (
    ComplexField,
    GddValue,
    PulseShape,
    TimeGrid,
    ValidationError,
    make_grid,
    propagate_gdd,
    synth_pulse_train,
    talbot_gdd,
)
from .network import NetworkSpec, ParamSet, forward, preset
from .grad import backward, loss_mse

__all__ = [
    "ComplexField",
    "GddValue",
    "PulseShape",
    "TimeGrid",
    "ValidationError",
    "make_grid",
    "propagate_gdd",
    "synth_pulse_train",
    "talbot_gdd",
    "NetworkSpec",
    "ParamSet",
    "forward",
    "preset",
    "backward",
    "loss_mse",
]
