"""Intrinsically stable model predictive control for humanoid gait generation.

The package models each horizontal axis as a linear inverted pendulum with
the ZMP velocity as input, and adds a stability constraint that keeps the
CoM bounded with respect to the ZMP. Submodules:

``lip``          pendulum model, DCM decomposition, exact discretization
``footsteps``    timing rule and candidate footstep generation
``qp``           dense dual active-set QP solver
``tails``        stability and terminal constraints for the three tails
``controller``   the IS-MPC iteration and a standard-MPC baseline
``feasibility``  feasibility intervals and the recursive-feasibility bound
``sim``          scenario configuration, closed-loop runs and CSV logs
"""

from __future__ import annotations

from .controller import ControllerKind, MpcConfig, MpcController
from .footsteps import FootstepPlan, KinematicLimits, CruiseParams, step_duration
from .lip import LipParams
from .qp import ActiveSetSolver, QpProblem, QpStatus, solve
from .sim import Scenario, builtin, load_config, run_scenario
from .tails import Tail, TailKind

__all__ = [
    "ActiveSetSolver",
    "ControllerKind",
    "CruiseParams",
    "FootstepPlan",
    "KinematicLimits",
    "LipParams",
    "MpcConfig",
    "MpcController",
    "QpProblem",
    "QpStatus",
    "Scenario",
    "Tail",
    "TailKind",
    "builtin",
    "load_config",
    "run_scenario",
    "solve",
    "step_duration",
]
