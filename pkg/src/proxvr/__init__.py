"""Variance-reduced stochastic proximal methods on quadratic finite sums.

The package builds synthetic quadratic instances with controllable Hessian
dissimilarity, runs five stochastic methods (SGD, SVRG, L-SVRG, SPPM,
L-SVRP) behind one stepping interface, evaluates the contraction theory
attached to the loopless proximal method, and reproduces the empirical
versus theoretical rate study at desk scale.  See the ``proxvr`` command
line for the packaged workflows.
"""

from proxvr.errors import (
    InsufficientDecayError,
    ManifestError,
    NumericalFailure,
    ParameterDomainError,
    ProxNonConvergence,
)
from proxvr.harness import (
    CellResult,
    FitResult,
    GridResult,
    RateReport,
    RunConfig,
    build_manifest,
    compare_rates,
    fit_rate,
    mix_seed,
    run_cell,
    run_grid,
)
from proxvr.optimizers import (
    MethodConfig,
    OptimizerState,
    RunRecord,
    init_state,
    lsvrg_step,
    lsvrp_step,
    run,
    sgd_step,
    sppm_step,
    svrg_run,
    svrg_step,
)
from proxvr.problems import (
    ProblemStats,
    QuadraticProblem,
    check_hessian_similarity,
    compute_stats,
    f_value,
    generate_quadratic,
    grad_component,
    grad_full,
    hessian_dissimilarity,
    load_problem,
    save_problem,
)
from proxvr.prox import (
    QuadraticProxCache,
    prox_iterative,
    prox_quadratic,
    verify_prox_contraction,
)
from proxvr.theory import (
    RateBound,
    TheoryParams,
    CertificateVerdict,
    convex_gap_bound,
    certificate_recipe,
    fallback_stepsize,
    iteration_complexity,
    lyapunov,
    rate_bound,
    stepsize_condition,
    certificate_conditions,
    theoretical_rate,
    theoretical_stepsize,
)

__version__ = "0.1.0"
