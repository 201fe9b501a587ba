"""Predictive safety filter for a simulated racing vehicle.

Library layout:

* ``vehicle``   -- dynamic bicycle model, Pacejka tires, analytic Jacobians
* ``track``     -- constant-curvature track, frame transforms, corner errors
* ``relative``  -- track-relative dynamics, steady states, linearization
* ``terminal``  -- LMI synthesis and nonlinear verification of the terminal set
* ``qp``        -- dense QP solvers (active set; soft-penalty projected Newton)
* ``ocp``       -- real-time-iteration SQP over a horizon
* ``filter``    -- the online safety filter
* ``sim``       -- closed-loop batch simulator, policies, logging
* ``service``   -- live driving session over websockets
* ``cli``       -- command-line entry point
"""

from .vehicle import (VehicleParams, VehicleState, ControlInput, TireForces,
                      tire_forces, continuous_dynamics, discrete_step,
                      dynamics_jacobians)
from .track import (Track, TrackSegment, CenterlinePose, TrackRelativeState,
                    TrackError, ProjectionError, corner_errors,
                    lookahead_curvature, load_track, LookaheadConfig)
from .relative import (SteadyState, SteadyStateError, LinearizedModel,
                       compute_steady_state, linearize_relative,
                       relative_step, relative_dynamics_cont, CurvatureSingularity)
from .terminal import (TerminalSet, SynthesisConfig, SynthesisReport,
                       VerificationReport, SynthesisError, synthesize,
                       check_lyapunov_decrease, verify_nonlinear,
                       shrink_until_verified, membership)
from .qp import solve_qp, solve_penalty_qp, QpResult
from .ocp import (StageProblem, Solution, SqpSettings, sqp_step,
                  shift_warm_start, solve_to_convergence)
from .filter import SafetyFilter, FilterConfig, FilterResult, intervention_norm
from .sim import (PolicySpec, SimConfig, SimLog, ClosedLoop, run_episode,
                  policy_eval, export_log, parse_log, save_log, load_log)

__version__ = "0.1.0"
