"""Conservation laws with discontinuous fluxes and their particle-system limit.

Pieces: flux models F(x, rho) = lambda(x) h(rho) with mollified speed fields;
steady-state families m_alpha; a well-balanced Godunov solver with an exact
Riemann reference; adapted entropy audits; an exact event-driven zero range
process simulator with its basic coupling; and the hydrodynamic-limit harness
plus the ``discoflux`` CLI.
"""

from .errors import (
    CflViolationError,
    ClosureDomainError,
    ConfigError,
    DiscofluxError,
    EventBudgetExceededError,
    OrderingBrokenError,
    SeriesDivergenceError,
    SteadyStateInfeasibleError,
    UnsupportedRegimeError,
)
from .flux_model import (
    Closure,
    FluxModel,
    LinearClosure,
    MollifiedSpeedField,
    MollifierKernel,
    ParabolicClosure,
    RateFunction,
    SaturatingClosure,
    SeriesClosure,
    SpeedField,
    closure_from_rate,
    constant_speed,
    eval_flux,
    identity_rate,
    indicator_rate,
    mollified_speed,
    step_speed,
    table_rate,
)
from .steady_states import (
    SteadyStateFamily,
    envelope_alpha,
    solve_steady,
    steady_at,
    steady_profile,
)
from .fv_solver import (
    Grid1D,
    GridSolution,
    RiemannSolution,
    SolutionSeries,
    interface_flux,
    riemann_exact,
    solve,
    solve_series,
    step,
    total_mass,
)
from .entropy_audit import (
    ConcentrationSummary,
    EntropyReport,
    TestFunction,
    YoungMeasureEstimate,
    alpha_library,
    entropy_residual,
    initial_recovery,
    mirrored_torus_evaluator,
    residual_report,
    series_from_evaluator,
    test_function_library,
    young_concentration,
)
from .zrp_core import (
    Configuration,
    EquilibriumTables,
    JumpKernel,
    RunStats,
    ZrpModel,
    block_average,
    block_average_profile,
    empirical_pairing,
    gillespie_step,
    mean_occupation,
    partition_function,
    run_events,
    run_until,
    run_until_with_stats,
    sample_equilibrium,
    sample_product_measure,
    sample_site,
    zrp_model,
)
from .coupling import (
    CoupledConfiguration,
    CoupledTrajectory,
    DiscrepancyTrace,
    coupled_from_profiles,
    coupled_step,
    discrepancy,
    microscopic_entropy,
    ordered_preservation,
    record_coupled_trajectory,
    run_coupled_until,
    trace_discrepancy,
    uncoupled_pairs,
)
from .hydro_harness import (
    ConvergenceReport,
    EpsilonReport,
    ExperimentConfig,
    emit_report,
    epsilon_cauchy_ok,
    equilibrium_fluctuation_scale,
    hydro_decrease_ok,
    load_config,
    riemann_profile,
    run_epsilon_study,
    run_hydro,
    young_estimates,
)
from .fenwick import CumulativeRateIndex
from .rng import stream

__version__ = "0.1.0"
