"""kinklab: metastable kink dynamics of the 1-d stochastic Allen-Cahn equation.

A numerical laboratory around the slow manifold of multi-kink profiles:
closed-form heteroclinic building blocks, Fermi-coordinate splittings,
spectral-gap oracles for the linearized operator, semi-implicit SPDE
integration with Q-Wiener forcing, the reduced interface SDE with exact and
projected coefficients, and Monte Carlo experiments for tracking, stability
and correlation structure.
"""

from .errors import (
    ConfigError,
    ConstraintInfeasibleError,
    DomainViolationError,
    FermiFailureError,
    InvalidArgumentError,
    KinkLabError,
    NumericalFailureError,
    TubeExitError,
)
from .grid import Grid, GridFunction
from .heteroclinic import (
    QUARTIC,
    Potential,
    chi_constant,
    rescaled_profile,
    u_het,
    u_het_deriv,
)
from .manifold import (
    FermiSplit,
    KinkConfig,
    MassKinkConfig,
    admissible,
    analytic_inverse,
    build_profile,
    exit_check,
    fermi_split,
    fermi_split_mass,
    gram_matrix,
    initial_kink_positions,
    mass_chart,
    mass_config,
    mass_tangent,
    metric_tensor,
    metric_tensor_analytic,
    profile_mass,
    tangent,
    tangent_deriv,
)
from .noise import (
    BrownianPath,
    NoiseIncrement,
    NoiseModel,
    apply_Q,
    build_noise,
    cosine_basis,
    mode_cluster_alphas,
    noise_stream,
    q_bilinear,
    sample_increment,
)
from .reduced_sde import (
    SdeCoefficients,
    SdeState,
    coefficients,
    diffusion_sigma,
    drift_b,
    full_step,
    heun_step_projected_ac,
    ito_strat_crosscheck,
    projected_step_ac,
    projected_step_mac,
)
from .spde import (
    DT_MAX,
    OperatorParts,
    SpdeState,
    ac_step,
    assemble_laplacian,
    lyapunov_energy,
    mac_step,
    make_step_solver,
    operator_parts,
)
from .spectral import (
    SpectralReport,
    SubspaceGapResult,
    assemble_linearized,
    assemble_linearized_at,
    brute_force_subspace_max,
    constrained_gap,
    constrained_rayleigh_max,
    near_zero_count,
    stability_form,
    subspace_gap_bound,
    sym_eigh,
    whole_line_spectrum,
)

__version__ = "0.1.0"
