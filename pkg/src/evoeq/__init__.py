"""Causal space-time solvers for first-order evolution systems.

Submodules
- timegrid: weighted time calculus (d0, d0_inv, fractional variants)
- matlaw:   material laws in the time-integral variable and coercivity checks
- spatial:  staggered-grid skew-adjoint block operators
- noise:    Q-Wiener sampling and the left-point stochastic integral
- solver:   one-step marching and the Picard fixed-point driver
- models:   ready-made first-order systems and independent reference solvers
- cli:      config-driven runs and the verification suites
"""

from .errors import ParameterError, ShapeError
from .models import (
    MODEL_NAMES,
    ModelSpec,
    assemble_block,
    assemble_law,
    build,
    certified_constant,
    mild_wave_reference,
    solve_model,
    variational_heat_reference,
)
from .matlaw import (
    MaterialLaw,
    apply_material,
    block_indicator_law,
    fractional_diagonal_law,
    lipschitz_budget,
    pencil_law,
    verify_coercivity,
)
from .noise import (
    SigmaSpec,
    WienerPath,
    affine_sigma,
    coarsen_path,
    ito_integral,
    lambda_sequence,
    pointwise_sigma,
    sample_path,
    verify_ito_isometry,
)
from .spatial import (
    BlockOperator,
    SpaceDescriptor,
    build_curl_pair,
    build_grad_div,
    build_laplacian_block,
)
from .solver import (
    EvoProblem,
    NonConvergenceError,
    SolveReport,
    SolverError,
    march,
    solve_additive,
    solve_deterministic,
    solve_ivp,
    solve_multiplicative,
)
from .timegrid import (
    TimeGrid,
    Trajectory,
    d0,
    d0_frac,
    d0_inv,
    fourier_laplace_diag,
    gl_convolve,
    gl_weights,
    weighted_norm,
)

__all__ = [
    "ParameterError",
    "ShapeError",
    "MODEL_NAMES",
    "ModelSpec",
    "assemble_block",
    "assemble_law",
    "build",
    "certified_constant",
    "mild_wave_reference",
    "solve_model",
    "variational_heat_reference",
    "EvoProblem",
    "NonConvergenceError",
    "SolveReport",
    "SolverError",
    "march",
    "solve_additive",
    "solve_deterministic",
    "solve_ivp",
    "solve_multiplicative",
    "MaterialLaw",
    "apply_material",
    "block_indicator_law",
    "fractional_diagonal_law",
    "lipschitz_budget",
    "pencil_law",
    "verify_coercivity",
    "SigmaSpec",
    "WienerPath",
    "affine_sigma",
    "coarsen_path",
    "ito_integral",
    "lambda_sequence",
    "pointwise_sigma",
    "sample_path",
    "verify_ito_isometry",
    "BlockOperator",
    "SpaceDescriptor",
    "build_curl_pair",
    "build_grad_div",
    "build_laplacian_block",
    "TimeGrid",
    "Trajectory",
    "d0",
    "d0_frac",
    "d0_inv",
    "fourier_laplace_diag",
    "gl_convolve",
    "gl_weights",
    "weighted_norm",
]

__version__ = "0.1.0"
