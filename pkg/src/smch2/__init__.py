"""Pseudospectral pathwise simulator and Monte Carlo laboratory for a
stochastic modified two-component Camassa-Holm system on the torus.

The package integrates the coupled velocity/density system with
multiplicative noise, tracks conserved energy, slope thresholds, particle
characteristics, and momentum signs, and estimates blow-up / global
existence probabilities against closed-form bounds.
"""

from .errors import (
    ConfigRejected,
    DecayViolation,
    GridMismatch,
    InvalidC,
    InvalidEpsilon,
    InvalidGrid,
    InvalidKappa,
    InvalidParams,
    JacobianCollapse,
    NonFiniteField,
    RegimeViolation,
    Smch2Error,
    SpecViolation,
    UnsupportedMethod,
)
from .grid import (
    Field,
    Frame,
    MollifierKind,
    SpectralGrid,
    State,
    dealias_field,
    derivative,
    evaluate_at,
    field_from_function,
    helmholtz_inverse,
    hs_inner,
    l2_inner,
    make_grid,
    mollify,
    scale,
    sobolev_norm,
    w1inf_norm,
    zero_field,
)
from .rhs import DriftOptions, drift, drift_arrays, f1, f2, cutoff_chi
from .noise import (
    BrownianPath,
    GeneralNoise,
    LinearNoise,
    NoiseSpec,
    NonlinearNoise,
    ZeroNoise,
    coarsen,
    constant_fn,
    correlated_pair,
    exponential_processes,
    noise_coefficient,
    path_seed,
    sample_brownian,
)
from .particles import (
    MonitorKind,
    ParticleSet,
    RiccatiMonitor,
    advect,
    advect_stages,
    cubic_integral,
    make_particles,
    momentum,
    riccati_constant,
    riccati_residuals,
    riccati_step_check,
    sign_signature,
)
from .stepping import (
    Method,
    RunResult,
    StepperConfig,
    StopReason,
    reconstruct_physical,
    run_path,
    step_direct,
    step_transformed,
)
from .diagnostics import (
    FittedConstants,
    ScanResult,
    ThresholdKind,
    ThresholdReport,
    check_strong_noise_regime,
    commutator_probe,
    energy,
    energy_inequality_probe,
    escape_bound,
    fit_constants,
    mollified_pairing_probe,
    random_smooth_field,
    regime_envelope,
    regime_ray,
    regime_scan,
    report_break_cubic,
    report_break_slope,
    report_global_weak,
    report_strong_noise,
    threshold_break_cubic,
    threshold_break_slope,
    threshold_global_weak,
)
from .ensemble import (
    BoundKind,
    EnsembleSummary,
    Verdict,
    breaking_bound_mc,
    compare_blowup_to_bound,
    escape_experiment,
    run_ensemble,
    wilson_interval,
)
from .cli import (
    BreakingProfile,
    GaussianBump,
    RunConfig,
    RunManifest,
    SmoothedPeakon,
    ZeroProfile,
    make_initial_data,
    parse_config,
    place_particles,
    run_scenario,
    serialize,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
