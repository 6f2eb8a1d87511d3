"""Two-type mutation-selection models, forward and backward in time.

Forward dynamics: finite-N Moran particle system, its deterministic
(mutation-selection ODE) and diffusion (Wright-Fisher) limits. Backward
dynamics: killed and pruned-lookdown ancestral selection graphs, whose
line-counting processes carry the stationary type and ancestral-type
distributions through moment duality.
"""
from ._backend import backend_name
from .ctmc import (
    DELTA,
    AbsorptionReport,
    CtmcPath,
    GeneratorSpec,
    StopRule,
    estimate_absorption,
    linecount_spec,
    simulate_ctmc,
)
from .deterministic import error_threshold_curve, solve_ode, z_at, z_infinity
from .diffusion import (
    fixation_probability,
    simulate_wf,
    wf_terminal_batch,
    wright_expectation,
    wright_moments,
)
from .errors import (
    ConstraintViolationError,
    ConvergenceError,
    InvalidGeneratorError,
    LodsimError,
    ParameterRegimeError,
    ToleranceError,
)
from .killed_asg import (
    absorption_profile,
    duality_check,
    first_step_w,
    killed_asg_generator,
    sampling_recursion_solve,
)
from .model import (
    DetParams,
    DiffusionParams,
    MoranParams,
    read_param_file,
    scale_to_diffusion,
    validate,
)
from .moran import (
    EventStream,
    FrequencyPath,
    frequency_on_grid,
    generate_event_stream,
    propagate_types,
    sample_initial_types,
)
from .pruned_ldasg import (
    ancestral_h,
    ancestral_scan,
    fearnhead_solve,
    geometric_gof,
    geometric_parameter,
    geometric_tails,
    ldasg_generator,
    proof_structure_check,
    simulate_ldasg_levels,
    stationary_tail_empirical,
)
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    "RngStream",
    # model
    "MoranParams", "DetParams", "DiffusionParams", "validate",
    "scale_to_diffusion", "read_param_file",
    # ctmc
    "DELTA", "GeneratorSpec", "StopRule", "CtmcPath", "AbsorptionReport",
    "simulate_ctmc", "estimate_absorption", "linecount_spec",
    # forward
    "solve_ode", "z_at", "z_infinity", "error_threshold_curve",
    "simulate_wf", "wf_terminal_batch", "fixation_probability",
    "wright_moments", "wright_expectation",
    "EventStream", "FrequencyPath", "generate_event_stream",
    "propagate_types", "sample_initial_types", "frequency_on_grid",
    # backward
    "killed_asg_generator", "absorption_profile", "sampling_recursion_solve",
    "first_step_w", "duality_check",
    "ldasg_generator", "simulate_ldasg_levels", "geometric_parameter",
    "geometric_tails", "fearnhead_solve", "stationary_tail_empirical",
    "geometric_gof",
    "ancestral_h", "ancestral_scan", "proof_structure_check",
    # errors
    "LodsimError", "ConstraintViolationError", "ParameterRegimeError",
    "ConvergenceError", "ToleranceError", "InvalidGeneratorError",
]
