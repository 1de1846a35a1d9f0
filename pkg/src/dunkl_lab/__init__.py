"""Numerical laboratory for reflection-weighted harmonic analysis on R^N:
root systems with multiplicity weights, weighted quadrature, differential-
difference operators and the associated integral kernel and transform, the
subordinated (Poisson-type) semigroup, vector Riesz-type singular operators
with dimension-free norm certificates, convexity-function (Bellman) checks,
and an inequality harness for the dual-pairing estimates."""

from .root_system import (
    KIND_GENERAL,
    KIND_PRODUCT,
    KIND_RANK_ONE,
    RootSystemError,
    RootSystemSpec,
    make_root_system,
    reflect,
    root_system_from_json,
    root_system_to_json,
    weight_density,
)
from .quadrature import (
    GridFunction,
    QuadratureError,
    QuadratureGrid,
    ball_measure,
    build_grid,
    integrate,
    lp_norm,
    sample_on_grid,
)
from .dunkl_core import (
    DunklError,
    KernelEval,
    PolyGaussian,
    apply_dunkl_operator,
    carre_du_champ,
    dunkl_kernel,
    dunkl_laplacian,
    symmetrize,
)
from .transform import (
    SpectralFunction,
    apply_multiplier,
    compute_normalizer,
    forward,
    inverse,
    inverse_partial,
    plancherel_residual,
)
from .semigroup import (
    KernelBoundReport,
    PoissonEvaluator,
    check_kernel_bounds,
    kernel_derivative_bound,
    kernel_resolvable,
    make_poisson_evaluator,
    poisson_apply,
    poisson_kernel,
    poisson_kernel_mass,
    semigroup_residuals,
)
from .riesz import (
    FamilySpec,
    RatioReport,
    RieszParams,
    hilbert_apply,
    norm_ratio_experiment,
    riesz_apply,
    riesz_identity_residual,
    riesz_vector_magnitude,
    weighted_mass,
)
from .bellman import (
    BellmanParams,
    TauWeights,
    bellman_B,
    bellman_hessian,
    beta_eval,
    certificate_margins,
    elementary_lemma_margins,
    mollified_B,
)
from .harness import (
    HarnessState,
    PipelineRow,
    build_state,
    composition_decay_report,
    compute_I,
    cutoff_phi,
    dual_identity_residual,
    kappa_of_n,
    laplace_on_bellman_residual,
    lower_estimate_slack,
    nu,
    nu_second_integral,
    one_dim_pipeline,
    pipeline_rows,
    pipeline_to_csv,
    polarization_invariance,
    t_quadrature,
    truncated_pairing_lhs,
    upper_estimate_report,
)
from .cli import RunConfig, main, run_suite
from .reporting import VerificationReport, content_hash

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
