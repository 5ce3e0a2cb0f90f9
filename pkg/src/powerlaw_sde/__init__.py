"""powerlaw_sde: the SDE with quadratic state-dependent gradient noise.

Simulation (Euler-Maruyama, frozen-coefficient discretization, synchronous
coupling), the analytic power-law stationary density and its verification,
contraction/ergodicity constants, and first-exit-time estimation by Monte
Carlo, double-integral quadrature, and a boundary-value ODE oracle.
"""

from .errors import ParameterError, SimulationError
from .params import (
    ContractionConstants,
    DecoupledParams,
    FullParams,
    contraction_constants,
    decouple,
    drift_diffusion,
    ergodicity_check,
    moment_finite,
    tail_index,
)
from .simulate import (
    CoupledBatch,
    SimConfig,
    TrajectoryBatch,
    couple_paths,
    discretization_gap,
    simulate_batch,
    simulate_discrete_chain,
)
from .stationary import (
    DensityTable,
    PhiFactor,
    density,
    fp_residual,
    ks_statistic,
    normalizing_constant,
    sample_stationary,
    stationary_moment,
)
from .exit_times import (
    ExitProblem,
    ExitTimeEstimate,
    SandwichReport,
    asymptotic_sweep,
    exit_time_mc,
    exit_time_ode_oracle,
    exit_time_quadrature,
    fourth_moment_bound,
    oscillation_probability,
    oscillation_sweep,
    quasi_potential,
    sandwich_check,
)
from .metrics import (
    SampleSet,
    contraction_fit,
    empirical_moment,
    sliced_w2,
    w2_empirical_1d,
)
from .sgd_noise import SgdLabConfig, sgd_noise_experiment

__version__ = "0.1.0"

__all__ = [
    "ParameterError", "SimulationError",
    "FullParams", "DecoupledParams", "ContractionConstants",
    "drift_diffusion", "tail_index", "moment_finite",
    "contraction_constants", "ergodicity_check", "decouple",
    "SimConfig", "TrajectoryBatch", "CoupledBatch",
    "simulate_batch", "simulate_discrete_chain", "couple_paths", "discretization_gap",
    "PhiFactor", "DensityTable", "density", "normalizing_constant",
    "stationary_moment", "fp_residual", "sample_stationary", "ks_statistic",
    "ExitProblem", "ExitTimeEstimate", "SandwichReport",
    "exit_time_mc", "exit_time_quadrature", "exit_time_ode_oracle",
    "quasi_potential", "asymptotic_sweep", "fourth_moment_bound",
    "oscillation_probability", "oscillation_sweep", "sandwich_check",
    "SampleSet", "w2_empirical_1d", "sliced_w2", "contraction_fit", "empirical_moment",
    "SgdLabConfig", "sgd_noise_experiment",
    "__version__",
]
