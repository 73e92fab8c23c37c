"""Physics-informed neural surrogates and predictive control for pipe flow.

The package trains steady-state and transient flow networks purely from the
conservation-law residuals of 1-D single-phase pipe flow, validates them
against a built-in staggered-grid finite-difference plant, and closes the
loop with a constrained model predictive controller that uses the transient
network as its predictor.
"""

from .forwardsim import ControlSchedule, Trajectory, pinc_forward, window_seam_gap
from .metrics import fit_compare, mape, mean_fit_over_probes, speed_ratio
from .mpc import (
    ClosedLoopHistory,
    MpcConfig,
    MpcSolution,
    PlantPredictor,
    SurrogatePredictor,
    closed_loop,
    solve_horizon,
)
from .network import (
    EvalResult,
    NetworkArchitecture,
    NetworkModel,
    deserialize_model,
    eval_with_input_derivatives,
    forward,
    forward_with_jacobian,
    init_params,
    load_model,
    objective_gradient,
    save_model,
    serialize_model,
)
from .physics import (
    FluidSystem,
    NormalizationRefs,
    PhysicsError,
    eos_density,
    friction_factor,
    reynolds,
)
from .plant import (
    PlantError,
    PlantGrid,
    PlantState,
    face_mass_flow,
    probe_state,
    simulate_plant,
    steady_solve,
    steady_solve_comp,
    steady_solve_inc,
    step_transient,
)
from .sampling import SampleBatch, build_training_sets, lhs
from .training import (
    AdamSettings,
    LbfgsSettings,
    LossReport,
    LossWeights,
    TrainingConfig,
    TrainingError,
    adam_run,
    best_of_seeds,
    lbfgs_run,
    train_steady,
    train_transient,
)

__version__ = "0.1.0"
