"""Joint design for RIS-aided full-duplex integrated sensing and communication.

A full-duplex base station receives uplink users (directly and via an RIS)
while probing a point target. The sum rate is maximized by block coordinate
ascent over the probing beamformer, user powers, receive filters and RIS
phases, subject to a radar SINR floor and power budgets.
"""

from .errors import (FeasibilityLossError, InfeasibleScenarioError, InvalidInputError,
                     InvalidStateError)
from .scenario import (ChannelSet, ScenarioConfig, desk_config, draw_channels, load_config,
                       paper_config)
from .system import (ConstraintResiduals, DesignVariables, EffectiveChannels, assemble_effective,
                     constraint_residuals, radar_sinr, sum_rate, user_sinrs)
from .qcqp import QcqpProblem, QcqpSolution, QuadForm
from .blocks import (AuxVariables, update_aux, update_beamformer, update_power,
                     update_radar_filter, update_user_filters)
from .pdd import PhaseCoefficients, PddState, build_phase_coefficients, optimize_phase
from .optimizer import IterationRecord, OptimizerState, initialize, run, step
from .harness import ExperimentSpec, ResultRecord, run_experiment, summarize

__version__ = "0.1.0"

__all__ = [
    "FeasibilityLossError", "InfeasibleScenarioError", "InvalidInputError", "InvalidStateError",
    "ChannelSet", "ScenarioConfig", "desk_config", "draw_channels", "load_config", "paper_config",
    "ConstraintResiduals", "DesignVariables", "EffectiveChannels", "assemble_effective",
    "constraint_residuals", "radar_sinr", "sum_rate", "user_sinrs",
    "QcqpProblem", "QcqpSolution", "QuadForm",
    "AuxVariables", "update_aux", "update_beamformer", "update_power", "update_radar_filter",
    "update_user_filters",
    "PhaseCoefficients", "PddState", "build_phase_coefficients", "optimize_phase",
    "IterationRecord", "OptimizerState", "initialize", "run", "step",
    "ExperimentSpec", "ResultRecord", "run_experiment", "summarize",
]
