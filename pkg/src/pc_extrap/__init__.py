"""Optimal and minimax-robust extrapolation for processes with periodically stationary increments."""

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    EmptyInputError,
    GridMismatchError,
    IllConditionedOperatorError,
    InconsistencyError,
    InsufficientHistoryError,
    NearSingularDensityError,
    PCExtrapError,
    PreconditionError,
)
from .extrapolate import (
    EstimateReport,
    ExtrapolationProblem,
    SpectralCharacteristic,
    check_orthogonality,
    mse,
    solve_c,
    solve_extrapolation,
    spectral_characteristic,
)
from .increments import (
    BlockFunction,
    CoefficientFunction,
    IncrementParams,
    ProcessPath,
    apply_D_tau,
    b_function,
    block_decompose,
    coefficient_blocks,
    fourier_block,
    increment_path,
    representation_terms,
    v_function,
)
from .minimax import (
    DensityClassSpec,
    LeastFavorableResult,
    certify_saddle,
    robust_value,
    solve_least_favorable_D0,
    solve_least_favorable_D1delta,
)
from .saddle import SaddleResult, build_Q, saddle_bound, synthesize_least_favorable, top_eigen
from .simulate import (
    OracleReport,
    SynthesisConfig,
    empirical_mse,
    oracle_mmse,
    scenario_density,
    synthesize_increments,
)
from .spectral import (
    BlockToeplitzOperator,
    IncrementKernel,
    QuadratureGrid,
    SpectralDensityModel,
    check_minimality,
    fourier_block_coeffs,
    structural_function,
)

__version__ = "0.1.0"
