"""parakpz: spectral paracontrolled solver for the KPZ equation on a
periodic approximation of the real line, with directed-polymer tooling."""

from .spectral import (
    Grid,
    GridField,
    DyadicPartition,
    WeightSpec,
    make_dyadic_partition,
    lp_block,
    spectral_derivative,
    weight_eval,
    weighted_sup_norm,
    read_field,
    write_field,
)
from .spaces import (
    TimeField,
    besov_norm,
    parabolic_norm,
    holder_equiv_norm,
    interpolation_probe,
)
from .paraproducts import (
    TimeSmoother,
    make_time_smoother,
    para_lower,
    para_upper,
    resonant,
    para_modified,
    commutator_C,
    commutator_modified,
    commutator_time,
    heat_apply,
)
from .noise import (
    NoisePath,
    EnhancedData,
    TREE_NAMES,
    sample_noise,
    mollify,
    sample_initial,
    stationary_initial,
    renorm_constants,
    build_trees,
    asymmetric_resonant,
    rescale_translate,
    ydist,
    save_enhanced,
    load_enhanced,
    zero_enhanced,
)
from .config import (
    Config,
    ConfigError,
    validate_exponents,
    load_config,
    emit_config,
)
from .solver import (
    ParaFunction,
    LinearProblem,
    SolveReport,
    NonContractionError,
    paracontrolled_product,
    reconstruction_residual,
    solve_linear,
)
from .equations import (
    solve_rhe,
    solve_rhe_backward,
    solve_sharp,
    solve_kolmogorov,
    solve_YR,
)
from .kpz import (
    PositivityError,
    KPZResult,
    exp_map,
    log_map,
    solve_kpz,
    solve_kpz_direct,
    lower_bound_check,
    stability_check,
)
from .polymer import (
    KernelRejectedError,
    TransitionKernel,
    PolymerPath,
    transition_kernel,
    compose_kernels,
    sample_polymer,
    exp_moment_estimate,
    girsanov_sde_sample,
    radon_nikodym_weight,
    free_energy_check,
    variational_gap,
)

__version__ = "0.1.0"
