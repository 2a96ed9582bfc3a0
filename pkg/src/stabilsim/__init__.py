"""Netlist-driven analog circuit simulation and voltage-regulation analysis.

The package splits into netlist (text format), devices (models), engine
(MNA + Newton + transient), analysis (regulation metrics and studies),
corpus (bundled reference circuit and tables) and cli (the stabilsim
command). Hot numeric kernels run from a compiled extension when available,
with a pure-Python fallback selected at import time (see stabilsim._kernels).
"""

from ._kernels import compiled_available, use_backend
from .analysis import (
    Ieee1159Config,
    OvervoltageAssessment,
    RegulationReport,
    RpmVoltageMap,
    StudyRow,
    SweepResult,
    VehicleReport,
    ieee1159_overvoltage,
    line_regulation,
    parameter_study,
    power_dissipation_check,
    rpm_to_input_voltage,
    steady_state_voltage,
    sweep_result,
    vehicle_experiment,
)
from .devices import (
    BjtModel,
    CapacitorModel,
    DiodeModel,
    ResistorModel,
    SourceModel,
)
from .engine import (
    MnaSystem,
    OperatingPoint,
    SolverOptions,
    SweepData,
    Waveform,
    assemble_mna,
    dc_operating_point,
    dc_sweep,
    solve_linear,
    transient,
)
from .errors import (
    DuplicateNameError,
    EmptySeriesError,
    InsufficientPointsError,
    NetlistSyntaxError,
    NoConvergenceError,
    SingularMatrixError,
    SingularTopologyError,
    StabilsimError,
    UnknownDeviceKindError,
    UnknownNodeError,
    WindowTooLongError,
)
from .netlist import Netlist, parse, parse_value, serialize, validate

__version__ = "1.0.0"

__all__ = [
    "BjtModel",
    "CapacitorModel",
    "DiodeModel",
    "DuplicateNameError",
    "EmptySeriesError",
    "Ieee1159Config",
    "InsufficientPointsError",
    "MnaSystem",
    "Netlist",
    "NetlistSyntaxError",
    "NoConvergenceError",
    "OperatingPoint",
    "OvervoltageAssessment",
    "RegulationReport",
    "ResistorModel",
    "RpmVoltageMap",
    "SingularMatrixError",
    "SingularTopologyError",
    "SolverOptions",
    "SourceModel",
    "StabilsimError",
    "StudyRow",
    "SweepData",
    "SweepResult",
    "UnknownDeviceKindError",
    "UnknownNodeError",
    "VehicleReport",
    "Waveform",
    "WindowTooLongError",
    "assemble_mna",
    "compiled_available",
    "dc_operating_point",
    "dc_sweep",
    "ieee1159_overvoltage",
    "line_regulation",
    "parameter_study",
    "parse",
    "parse_value",
    "power_dissipation_check",
    "rpm_to_input_voltage",
    "serialize",
    "solve_linear",
    "steady_state_voltage",
    "sweep_result",
    "transient",
    "use_backend",
    "validate",
    "vehicle_experiment",
]
