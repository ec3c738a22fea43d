"""Configuration, initial data, scenario drivers, and run persistence.

The config format is YAML with seven optional sections (grid, initial,
noise, stepper, ensemble, outputs, bounds); every key has a documented
default, so the empty document is a valid config.  `run_scenario` executes
one named verification pipeline, writes per-path CSV series plus a YAML
manifest that suffices to reproduce the run, and returns the manifest.
"""

from __future__ import annotations

import csv
import importlib.metadata
import math
import time
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path
from typing import List, Optional, Union

import click
import numpy as np
import yaml
from scipy.special import erfc

from .diagnostics import (
    FittedConstants,
    ThresholdReport,
    energy,
    escape_bound,
    fit_constants,
    report_break_cubic,
    report_break_slope,
    report_global_weak,
    report_strong_noise,
    threshold_break_slope,
)
from .ensemble import (
    BoundKind,
    EnsembleSummary,
    breaking_bound_mc,
    compare_blowup_to_bound,
    escape_experiment,
    run_ensemble,
)
from .errors import ConfigRejected, DecayViolation, InvalidParams, Smch2Error
from .grid import Field, SpectralGrid, derivative, field_from_function, make_grid, sobolev_norm, zero_field
from .noise import (
    GeneralNoise,
    LinearNoise,
    NonlinearNoise,
    NoiseSpec,
    ZeroNoise,
    constant_fn,
    path_seed,
)
from .particles import (
    MonitorKind,
    cubic_integral,
    make_particles,
    momentum,
    riccati_residuals,
)
from .stepping import Method, RunResult, StepperConfig, StopReason

SCENARIOS = (
    "conserve",
    "blowup-slope",
    "blowup-cubic",
    "global-weak",
    "strong-noise",
    "escape-bound",
    "sign-preserve",
)
CSV_COLUMNS = ("t", "Hs_u", "Hs_g", "w1inf_u", "w1inf_g", "min_ux", "energy", "beta")
SCHEMA_VERSION = 1
DECAY_TOL = 1e-12
CONSERVE_TOL = 1e-6
N_PARTICLES = 64
PARTICLE_FLOOR = 1e-3  # min |V1(0)| relative to its max for a tracked particle
BOUND_MC_PATHS = 10_000
BOUND_MC_SEED_INDEX = 999_983  # disjoint from PDE path indices by construction
KEEP_PATHS = 4  # full series retained (and dumped to CSV) per ensemble


def _version() -> str:
    try:
        return importlib.metadata.version("smch2")
    except importlib.metadata.PackageNotFoundError:
        return "0.0.0+local"


# ---------------------------------------------------------------------------
# Declarative configuration blocks.  Everything is a plain frozen dataclass
# of scalars so that parse_config(serialize(config)) == config holds exactly.


@dataclass(frozen=True)
class GridConfig:
    n: int = 256
    L: float = 20.0


@dataclass(frozen=True)
class GaussianBump:
    amplitude: float = 1.0
    width: float = 2.0
    center: float = 0.0


@dataclass(frozen=True)
class SmoothedPeakon:
    """Peakon profile e^{-|x|} convolved with a Gaussian of standard
    deviation `smoothing`, so the data is smooth with nearly-peaked shape."""

    amplitude: float = 1.0
    smoothing: float = 0.1
    center: float = 0.0


@dataclass(frozen=True)
class BreakingProfile:
    """Odd profile slope_target * x * exp(-x^2/width^2) whose minimum slope
    is exactly slope_target at x = 0; accepted only when that slope lies
    strictly below the wave-breaking threshold for its own energy, noise
    bound b_sup, and constant c."""

    slope_target: float = -4.0
    c: float = 0.5
    b_sup: float = 0.25
    width: float = 0.6


@dataclass(frozen=True)
class ZeroProfile:
    pass


InitialSpec = Union[GaussianBump, SmoothedPeakon, BreakingProfile, ZeroProfile]

_PROFILE_KIND = {
    GaussianBump: "gaussian",
    SmoothedPeakon: "peakon",
    BreakingProfile: "breaking",
    ZeroProfile: "zero",
}


@dataclass(frozen=True)
class NoiseConfig:
    family: str = "zero"  # zero | linear | nonlinear | general
    b: float = 0.5  # linear family: constant coefficient b(t) = b
    a: float = 1.0  # nonlinear family: constant coefficient a(t) = a
    theta: float = 1.0  # nonlinear family: growth exponent
    kappa: float = 1.0  # correlation of the two driving processes
    n_modes: int = 16  # general family: number of forced modes
    s: float = 2.0  # general family: Sobolev index of the mode envelope

    def make(self) -> NoiseSpec:
        if self.family == "zero":
            return ZeroNoise(kappa=self.kappa)
        if self.family == "linear":
            return LinearNoise.from_constant(self.b, kappa=self.kappa)
        if self.family == "nonlinear":
            return NonlinearNoise.from_constant(self.a, self.theta, kappa=self.kappa)
        if self.family == "general":
            return GeneralNoise(n_modes=self.n_modes, s=self.s, kappa=self.kappa)
        raise InvalidParams(f"unknown noise family {self.family!r}")


@dataclass(frozen=True)
class StepperBlock:
    method: str = Method.TRANSFORMED_RK4.value
    dt: float = 1e-3
    blowup_w1inf: float = 1e3
    blowup_hs: float = 1e6
    s_monitor: float = 2.0


@dataclass(frozen=True)
class EnsembleBlock:
    n_paths: int = 1
    master_seed: int = 12345
    horizon: float = 10.0


@dataclass(frozen=True)
class OutputsBlock:
    stride: int = 10
    directory: str = "runs"


@dataclass(frozen=True)
class BoundsBlock:
    lambda1: float = 2.0  # exponent of the escape bound 1 - R^(-2 lambda1)
    r: float = 2.0  # escape level R
    alpha: float = 1.0  # scalar-noise coefficient of the escape experiment


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = GridConfig()
    u0: InitialSpec = GaussianBump()
    g0: InitialSpec = ZeroProfile()
    noise: NoiseConfig = NoiseConfig()
    stepper: StepperBlock = StepperBlock()
    ensemble: EnsembleBlock = EnsembleBlock()
    outputs: OutputsBlock = OutputsBlock()
    bounds: BoundsBlock = BoundsBlock()

    def build_grid(self) -> SpectralGrid:
        return make_grid(self.grid.n, self.grid.L)

    def build_initial(self, grid: SpectralGrid) -> tuple:
        return make_initial_data(self.u0, grid), make_initial_data(self.g0, grid)

    def stepper_config(self) -> StepperConfig:
        return StepperConfig(
            method=Method(self.stepper.method),
            dt=self.stepper.dt,
            t_end=self.ensemble.horizon,
            blowup_w1inf=self.stepper.blowup_w1inf,
            blowup_hs=self.stepper.blowup_hs,
            s_monitor=self.stepper.s_monitor,
            stride=self.outputs.stride,
        )


def profile_as_dict(spec: InitialSpec) -> dict:
    kind = _PROFILE_KIND[type(spec)]
    if isinstance(spec, GaussianBump):
        return {"kind": kind, "amplitude": spec.amplitude, "width": spec.width, "center": spec.center}
    if isinstance(spec, SmoothedPeakon):
        return {
            "kind": kind,
            "amplitude": spec.amplitude,
            "smoothing": spec.smoothing,
            "center": spec.center,
        }
    if isinstance(spec, BreakingProfile):
        return {
            "kind": kind,
            "slope_target": spec.slope_target,
            "c": spec.c,
            "b_sup": spec.b_sup,
            "width": spec.width,
        }
    return {"kind": kind}


def config_as_dict(config: RunConfig) -> dict:
    return {
        "grid": {"n": config.grid.n, "L": config.grid.L},
        "initial": {"u": profile_as_dict(config.u0), "gamma": profile_as_dict(config.g0)},
        "noise": {
            "family": config.noise.family,
            "b": config.noise.b,
            "a": config.noise.a,
            "theta": config.noise.theta,
            "kappa": config.noise.kappa,
            "n_modes": config.noise.n_modes,
            "s": config.noise.s,
        },
        "stepper": {
            "method": config.stepper.method,
            "dt": config.stepper.dt,
            "blowup_w1inf": config.stepper.blowup_w1inf,
            "blowup_hs": config.stepper.blowup_hs,
            "s_monitor": config.stepper.s_monitor,
        },
        "ensemble": {
            "n_paths": config.ensemble.n_paths,
            "master_seed": config.ensemble.master_seed,
            "horizon": config.ensemble.horizon,
        },
        "outputs": {"stride": config.outputs.stride, "directory": config.outputs.directory},
        "bounds": {
            "lambda1": config.bounds.lambda1,
            "r": config.bounds.r,
            "alpha": config.bounds.alpha,
        },
    }


def serialize(config: RunConfig) -> str:
    return yaml.safe_dump(config_as_dict(config), sort_keys=False)


# ---------------------------------------------------------------------------
# Parsing with field-level error accumulation.


def _as_int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError
    return v


def _as_float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError
    return float(v)


def _as_str(v):
    if not isinstance(v, str):
        raise ValueError
    return v


def _section(raw, name: str, errs: List[str]) -> dict:
    v = raw.get(name)
    if v is None:
        return {}
    if not isinstance(v, dict):
        errs.append(f"section {name!r} must be a mapping")
        return {}
    return dict(v)


def _take(d: dict, section: str, key: str, default, conv, errs: List[str], check=None, explain: str = ""):
    v = d.pop(key, default)
    try:
        v = conv(v)
    except (TypeError, ValueError):
        errs.append(f"{section}.{key}: cannot interpret {v!r}")
        return default
    if check is not None and not check(v):
        errs.append(f"{section}.{key}: {explain} (got {v!r})")
        return default
    return v


def _reject_leftovers(d: dict, section: str, errs: List[str]) -> None:
    for key in d:
        errs.append(f"{section}.{key}: unknown key")


_INITIAL_KINDS = ("zero", "gaussian", "peakon", "breaking")


def _parse_profile(raw, name: str, default: InitialSpec, errs: List[str]) -> InitialSpec:
    if raw is None:
        return default
    if not isinstance(raw, dict):
        errs.append(f"{name} must be a mapping with a 'kind' key")
        return default
    d = dict(raw)
    kind = _take(
        d, name, "kind", None,
        lambda v: _as_str(v) if v is not None else None,
        errs,
        check=lambda v: v in _INITIAL_KINDS,
        explain=f"kind must be one of {list(_INITIAL_KINDS)}",
    )
    if kind == "gaussian":
        spec = GaussianBump(
            amplitude=_take(d, name, "amplitude", 1.0, _as_float, errs),
            width=_take(d, name, "width", 2.0, _as_float, errs, lambda v: v > 0, "width must be positive"),
            center=_take(d, name, "center", 0.0, _as_float, errs),
        )
    elif kind == "peakon":
        spec = SmoothedPeakon(
            amplitude=_take(d, name, "amplitude", 1.0, _as_float, errs),
            smoothing=_take(
                d, name, "smoothing", 0.1, _as_float, errs, lambda v: v > 0, "smoothing must be positive"
            ),
            center=_take(d, name, "center", 0.0, _as_float, errs),
        )
    elif kind == "breaking":
        bp = BreakingProfile()
        spec = BreakingProfile(
            slope_target=_take(
                d, name, "slope_target", bp.slope_target, _as_float, errs,
                lambda v: v < 0, "slope_target must be negative",
            ),
            c=_take(d, name, "c", bp.c, _as_float, errs, lambda v: 0 < v < 1, "c must lie in (0, 1)"),
            b_sup=_take(d, name, "b_sup", bp.b_sup, _as_float, errs, lambda v: v >= 0, "b_sup must be >= 0"),
            width=_take(d, name, "width", bp.width, _as_float, errs, lambda v: v > 0, "width must be positive"),
        )
    else:
        spec = ZeroProfile()
    _reject_leftovers(d, name, errs)
    return spec


_NOISE_FAMILIES = ("zero", "linear", "nonlinear", "general")
_METHODS = tuple(m.value for m in Method)
_TOP_KEYS = ("grid", "initial", "noise", "stepper", "ensemble", "outputs", "bounds")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML config; raise ConfigRejected carrying all
    field-level messages at once."""
    try:
        raw = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigRejected([f"config is not well-formed YAML: {exc}"]) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigRejected(["config top level must be a mapping of sections"])
    errs: List[str] = []
    for key in raw:
        if key not in _TOP_KEYS:
            errs.append(f"{key}: unknown section (expected one of {list(_TOP_KEYS)})")

    g = _section(raw, "grid", errs)
    grid = GridConfig(
        n=_take(g, "grid", "n", 256, _as_int, errs, lambda v: v >= 16 and v % 2 == 0, "n must be even and >= 16"),
        L=_take(g, "grid", "L", 20.0, _as_float, errs, lambda v: v > 0, "L must be positive"),
    )
    _reject_leftovers(g, "grid", errs)

    init = _section(raw, "initial", errs)
    u0 = _parse_profile(init.pop("u", None), "initial.u", GaussianBump(), errs)
    g0 = _parse_profile(init.pop("gamma", None), "initial.gamma", ZeroProfile(), errs)
    _reject_leftovers(init, "initial", errs)

    nz = _section(raw, "noise", errs)
    noise = NoiseConfig(
        family=_take(
            nz, "noise", "family", "zero", _as_str, errs,
            lambda v: v in _NOISE_FAMILIES, f"family must be one of {list(_NOISE_FAMILIES)}",
        ),
        b=_take(nz, "noise", "b", 0.5, _as_float, errs),
        a=_take(nz, "noise", "a", 1.0, _as_float, errs),
        theta=_take(nz, "noise", "theta", 1.0, _as_float, errs, lambda v: v > 0, "theta must be positive"),
        kappa=_take(
            nz, "noise", "kappa", 1.0, _as_float, errs, lambda v: -1 <= v <= 1, "kappa must lie in [-1, 1]"
        ),
        n_modes=_take(nz, "noise", "n_modes", 16, _as_int, errs, lambda v: v >= 1, "n_modes must be >= 1"),
        s=_take(nz, "noise", "s", 2.0, _as_float, errs, lambda v: v > 1.5, "s must exceed 3/2"),
    )
    _reject_leftovers(nz, "noise", errs)

    st = _section(raw, "stepper", errs)
    stepper = StepperBlock(
        method=_take(
            st, "stepper", "method", Method.TRANSFORMED_RK4.value, _as_str, errs,
            lambda v: v in _METHODS, f"method must be one of {list(_METHODS)}",
        ),
        dt=_take(st, "stepper", "dt", 1e-3, _as_float, errs, lambda v: v > 0, "dt must be positive"),
        blowup_w1inf=_take(
            st, "stepper", "blowup_w1inf", 1e3, _as_float, errs, lambda v: v > 0, "must be positive"
        ),
        blowup_hs=_take(st, "stepper", "blowup_hs", 1e6, _as_float, errs, lambda v: v > 0, "must be positive"),
        s_monitor=_take(
            st, "stepper", "s_monitor", 2.0, _as_float, errs, lambda v: v > 1.5, "s_monitor must exceed 3/2"
        ),
    )
    _reject_leftovers(st, "stepper", errs)

    en = _section(raw, "ensemble", errs)
    ens = EnsembleBlock(
        n_paths=_take(en, "ensemble", "n_paths", 1, _as_int, errs, lambda v: v >= 1, "n_paths must be >= 1"),
        master_seed=_take(
            en, "ensemble", "master_seed", 12345, _as_int, errs, lambda v: v >= 0, "master_seed must be >= 0"
        ),
        horizon=_take(en, "ensemble", "horizon", 10.0, _as_float, errs, lambda v: v > 0, "horizon must be positive"),
    )
    _reject_leftovers(en, "ensemble", errs)

    ou = _section(raw, "outputs", errs)
    outputs = OutputsBlock(
        stride=_take(ou, "outputs", "stride", 10, _as_int, errs, lambda v: v >= 1, "stride must be >= 1"),
        directory=_take(ou, "outputs", "directory", "runs", _as_str, errs),
    )
    _reject_leftovers(ou, "outputs", errs)

    bo = _section(raw, "bounds", errs)
    bounds = BoundsBlock(
        lambda1=_take(bo, "bounds", "lambda1", 2.0, _as_float, errs, lambda v: v > 0, "lambda1 must be positive"),
        r=_take(bo, "bounds", "r", 2.0, _as_float, errs, lambda v: v > 1, "r must exceed 1"),
        alpha=_take(bo, "bounds", "alpha", 1.0, _as_float, errs),
    )
    _reject_leftovers(bo, "bounds", errs)

    if errs:
        raise ConfigRejected(errs)
    config = RunConfig(
        grid=grid, u0=u0, g0=g0, noise=noise, stepper=stepper,
        ensemble=ens, outputs=outputs, bounds=bounds,
    )
    _validate_config(config, errs)
    if errs:
        raise ConfigRejected(errs)
    return config


def _validate_config(config: RunConfig, errs: List[str]) -> None:
    """Cross-field checks: stepper/noise compatibility, grid and initial-data
    construction, and the breaking-profile slope threshold."""
    method = config.stepper.method
    family = config.noise.family
    if method == Method.TRANSFORMED_RK4.value:
        if family not in ("zero", "linear"):
            errs.append(
                f"stepper.method: {method} needs zero or linear noise, not family {family!r}"
            )
        elif config.noise.kappa != 1.0:
            errs.append(f"stepper.method: {method} needs noise.kappa = 1 (one shared driving process)")
    if method == Method.MILSTEIN_LINEAR.value and family == "general":
        errs.append("stepper.method: milstein-linear does not support the general noise family")
    try:
        config.noise.make()
    except Smch2Error as exc:
        errs.append(f"noise: {exc}")
    try:
        config.stepper_config()
    except Smch2Error as exc:
        errs.append(f"stepper: {exc}")

    try:
        grid = config.build_grid()
    except Smch2Error as exc:
        errs.append(f"grid: {exc}")
        return
    fields = {}
    for label, spec in (("initial.u", config.u0), ("initial.gamma", config.g0)):
        try:
            fields[label] = make_initial_data(spec, grid)
        except Smch2Error as exc:
            errs.append(f"{label}: {exc}")
    if len(fields) < 2:
        return
    if isinstance(config.u0, BreakingProfile):
        u0f, g0f = fields["initial.u"], fields["initial.gamma"]
        e0 = energy(u0f, g0f)
        thr = threshold_break_slope(e0, config.u0.b_sup, config.u0.c)
        realized = float(np.min(derivative(u0f).values))
        if not realized < thr:
            errs.append(
                f"initial.u: breaking profile slope {realized:.6g} must lie below the "
                f"computed breaking threshold {thr:.6g} for energy {e0:.6g}, "
                f"b_sup {config.u0.b_sup}, c {config.u0.c}"
            )


# ---------------------------------------------------------------------------
# Initial-data synthesis.


def _smoothed_peakon_values(x: np.ndarray, sigma: float) -> np.ndarray:
    """Closed form of e^{-|x|} convolved with a Gaussian of standard
    deviation sigma (exact, via the complementary error function)."""
    z = x / (sigma * math.sqrt(2.0))
    zs = sigma / math.sqrt(2.0)
    with np.errstate(under="ignore"):
        left = np.exp(-x) * erfc(zs - z)
        right = np.exp(x) * erfc(zs + z)
        return 0.5 * math.exp(0.5 * sigma * sigma) * (left + right)


def make_initial_data(spec: InitialSpec, grid: SpectralGrid) -> Field:
    """Evaluate a profile on the grid, enforcing boundary decay below
    1e-12 relative to the profile's peak (DecayViolation otherwise)."""
    if isinstance(spec, ZeroProfile):
        return zero_field(grid)
    if isinstance(spec, GaussianBump):
        f = field_from_function(
            grid, lambda x: spec.amplitude * np.exp(-(((x - spec.center) / spec.width) ** 2))
        )
    elif isinstance(spec, SmoothedPeakon):
        f = field_from_function(
            grid, lambda x: spec.amplitude * _smoothed_peakon_values(x - spec.center, spec.smoothing)
        )
    elif isinstance(spec, BreakingProfile):
        f = field_from_function(
            grid, lambda x: spec.slope_target * x * np.exp(-((x / spec.width) ** 2))
        )
    else:
        raise InvalidParams(f"unknown initial-data spec {spec!r}")
    _check_decay(f, spec)
    return f


def _check_decay(f: Field, spec: InitialSpec) -> None:
    vals = f.values
    peak = max(1.0, float(np.max(np.abs(vals))))
    edge = max(abs(float(vals[0])), abs(float(vals[-1])))
    if edge >= DECAY_TOL * peak:
        raise DecayViolation(
            f"{_PROFILE_KIND[type(spec)]} profile does not decay at the domain edge: "
            f"|u(-L)| or |u(L-dx)| = {edge:.3e} >= {DECAY_TOL:.0e} x peak {peak:.3e}; "
            f"enlarge L or shrink the profile"
        )


# ---------------------------------------------------------------------------
# Scenario drivers.


@dataclass
class RunManifest:
    scenario: str
    config: dict
    version: str
    schema: int
    verdict: dict
    wall_time: float
    out_dir: str
    fitted_constants: Optional[dict] = None
    threshold_reports: List[dict] = dc_field(default_factory=list)
    stop_records: List[dict] = dc_field(default_factory=list)
    summary: Optional[dict] = None

    def passed(self) -> bool:
        return bool(self.verdict.get("passed"))

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "schema": self.schema,
            "version": self.version,
            "verdict": dict(self.verdict),
            "wall_time": self.wall_time,
            "out_dir": self.out_dir,
            "config": self.config,
            "fitted_constants": self.fitted_constants,
            "threshold_reports": list(self.threshold_reports),
            "summary": self.summary,
            "stop_records": list(self.stop_records),
        }


@dataclass
class _Outcome:
    verdict: dict
    summary: Optional[EnsembleSummary] = None
    reports: List[ThresholdReport] = dc_field(default_factory=list)
    fits: Optional[FittedConstants] = None
    extra_summary: Optional[dict] = None
    kept: List[RunResult] = dc_field(default_factory=list)


def _run_pde_ensemble(config: RunConfig, keep: int, bound_value=math.nan,
                      bound_kind=BoundKind.NONE, **path_kwargs) -> EnsembleSummary:
    grid = config.build_grid()
    u0f, g0f = config.build_initial(grid)
    return run_ensemble(
        u0f,
        g0f,
        config.noise.make(),
        config.stepper_config(),
        config.ensemble.n_paths,
        config.ensemble.master_seed,
        bound_value=bound_value,
        bound_kind=bound_kind,
        keep_results=keep,
        **path_kwargs,
    )


def _scenario_conserve(config: RunConfig) -> _Outcome:
    if config.noise.family not in ("zero", "linear"):
        raise ConfigRejected(
            ["conserve: the conserved energy lives in the transformed frame; use zero or linear noise"]
        )
    if config.stepper.method != Method.TRANSFORMED_RK4.value:
        raise ConfigRejected(["conserve: requires stepper.method transformed-rk4"])
    keep = min(config.ensemble.n_paths, 64)
    summary = _run_pde_ensemble(config, keep=keep)
    drifts = []
    for res in summary.results:
        scale = res.energy[0] if res.energy[0] > 0 else 1.0
        drifts.append(float(np.max(np.abs(res.energy / scale - 1.0))))
    max_drift = max(drifts) if drifts else math.nan
    passed = summary.n_completed == summary.n_paths and max_drift < CONSERVE_TOL
    verdict = {
        "passed": passed,
        "detail": (
            f"max relative energy drift {max_drift:.3e} over {len(drifts)} recorded paths "
            f"(tolerance {CONSERVE_TOL:.0e}); {summary.n_completed}/{summary.n_paths} completed"
        ),
        "max_drift": max_drift,
    }
    return _Outcome(verdict=verdict, summary=summary, kept=summary.results)


def _breaking_event_bound(config: RunConfig, c: float) -> float:
    """Lower bound on the breaking probability: the all-t event probability
    for exp(int b dW + int (b_sup - b^2)/2 dt) >= c.  With zero noise the
    process is identically 1 > c, so the bound is exactly 1."""
    if config.noise.family == "zero":
        return 1.0
    b = config.noise.b
    return breaking_bound_mc(
        constant_fn(b),
        b * b,
        c,
        config.ensemble.horizon,
        config.stepper.dt,
        BOUND_MC_PATHS,
        path_seed(config.ensemble.master_seed, BOUND_MC_SEED_INDEX),
    )


def _scenario_blowup(config: RunConfig, flavor: str) -> _Outcome:
    name = f"blowup-{flavor}"
    if not isinstance(config.u0, BreakingProfile):
        raise ConfigRejected([f"{name}: requires initial.u.kind breaking"])
    if config.noise.family not in ("zero", "linear"):
        raise ConfigRejected([f"{name}: requires zero or linear noise"])
    grid = config.build_grid()
    u0f, g0f = config.build_initial(grid)
    e0 = energy(u0f, g0f)
    b = config.noise.b if config.noise.family == "linear" else 0.0
    b_sup = b * b
    if flavor == "slope":
        observed = float(np.min(derivative(u0f).values))
        report = report_break_slope(e0, b_sup, config.u0.c, observed)
        bound_kind = BoundKind.BREAK_SLOPE
    else:
        observed = cubic_integral(u0f)
        report = report_break_cubic(e0, b_sup, config.u0.c, observed)
        bound_kind = BoundKind.BREAK_CUBIC
    if not report.satisfied:
        raise ConfigRejected(
            [
                f"{name}: observed {flavor} statistic {observed:.6g} does not lie below the "
                f"breaking threshold {report.threshold:.6g} under the configured noise "
                f"(b_sup {b_sup}); steepen the profile or weaken the noise"
            ]
        )
    bound = _breaking_event_bound(config, config.u0.c)
    x_star = float(grid.x[int(np.argmin(derivative(u0f).values))])
    summary = _run_pde_ensemble(
        config,
        keep=min(config.ensemble.n_paths, KEEP_PATHS),
        bound_value=bound,
        bound_kind=bound_kind,
        particles0=make_particles(np.array([x_star])),
        monitor_kind=MonitorKind.SLOPE_G if flavor == "slope" else MonitorKind.CUBIC_N,
        monitor_index=0,
    )
    residuals = [
        float(np.max(riccati_residuals(res.monitor)))
        for res in summary.results
        if res.monitor is not None and len(res.monitor.times) >= 2
    ]
    cmp = compare_blowup_to_bound(summary, bound)
    verdict = cmp.as_dict()
    verdict["max_riccati_residual"] = max(residuals) if residuals else math.nan
    verdict["detail"] = (
        f"blow-up fraction {cmp.p_hat:.4f} + 3 SE ({3 * cmp.se:.4f}) vs lower bound {bound:.4f}; "
        f"{summary.n_blowup}/{summary.n_paths} paths blew up"
    )
    return _Outcome(verdict=verdict, summary=summary, reports=[report], kept=summary.results)


def _scenario_global_weak(config: RunConfig) -> _Outcome:
    if config.noise.family != "linear":
        raise ConfigRejected(["global-weak: requires linear noise"])
    grid = config.build_grid()
    u0f, g0f = config.build_initial(grid)
    s = config.stepper.s_monitor
    fits = fit_constants(grid, seed=config.ensemble.master_seed, s=s)
    observed = sobolev_norm(u0f, s) ** 2 + sobolev_norm(g0f, s) ** 2
    b = config.noise.b
    try:
        report = report_global_weak(b * b, fits, config.bounds.lambda1, config.bounds.r, observed)
    except InvalidParams as exc:
        raise ConfigRejected([f"bounds: {exc}"]) from exc
    if not report.satisfied:
        raise ConfigRejected(
            [
                f"global-weak: initial H^s size {observed:.6g} exceeds the smallness "
                f"threshold {report.threshold:.6g}; shrink the data or strengthen the noise"
            ]
        )
    bound = escape_bound(config.bounds.lambda1, config.bounds.r)
    summary = _run_pde_ensemble(
        config,
        keep=min(config.ensemble.n_paths, KEEP_PATHS),
        bound_value=bound,
        bound_kind=BoundKind.GLOBAL_WEAK,
    )
    p_surv = summary.n_completed / summary.n_paths
    se = math.sqrt(p_surv * (1.0 - p_surv) / summary.n_paths)
    passed = summary.n_blowup == 0 and p_surv + 3.0 * se >= bound
    verdict = {
        "passed": passed,
        "detail": (
            f"survival fraction {p_surv:.4f} + 3 SE ({3 * se:.4f}) vs bound {bound:.4f}; "
            f"{summary.n_blowup} blow-ups"
        ),
        "p_survive": p_surv,
        "se": se,
        "bound": bound,
    }
    return _Outcome(verdict=verdict, summary=summary, reports=[report], fits=fits, kept=summary.results)


def _scenario_strong_noise(config: RunConfig) -> _Outcome:
    if config.noise.family != "nonlinear":
        raise ConfigRejected(["strong-noise: requires nonlinear noise"])
    a, theta = config.noise.a, config.noise.theta
    fits = None
    k_fit = 0.0
    if theta == 0.5:
        grid = config.build_grid()
        fits = fit_constants(grid, seed=config.ensemble.master_seed, s=config.stepper.s_monitor)
        k_fit = fits.k_fit
    report = report_strong_noise(a * a, a * a, theta, k_fit)
    if not report.satisfied:
        raise ConfigRejected(
            ["strong-noise: the damping regime needs theta > 1/2 (or theta = 1/2 with 2 a_star > K + a_sup)"]
        )
    summary = _run_pde_ensemble(config, keep=min(config.ensemble.n_paths, KEEP_PATHS))
    passed = summary.n_blowup == 0 and summary.n_nonfinite == 0
    verdict = {
        "passed": passed,
        "detail": (
            f"{summary.n_blowup} blow-ups and {summary.n_nonfinite} non-finite paths out of "
            f"{summary.n_paths} to t = {config.ensemble.horizon}"
        ),
    }
    return _Outcome(verdict=verdict, summary=summary, reports=[report], fits=fits, kept=summary.results)


def _scenario_escape(config: RunConfig) -> _Outcome:
    lam, r = config.bounds.lambda1, config.bounds.r
    n = config.ensemble.n_paths
    p_hat, bound = escape_experiment(
        constant_fn(config.bounds.alpha),
        lam,
        r,
        config.ensemble.horizon,
        config.stepper.dt,
        n,
        config.ensemble.master_seed,
    )
    se = math.sqrt(p_hat * (1.0 - p_hat) / n)
    passed = p_hat + 3.0 * se >= bound
    verdict = {
        "passed": passed,
        "detail": f"stay-below fraction {p_hat:.4f} + 3 SE ({3 * se:.4f}) vs bound {bound:.4f}",
        "p_hat": p_hat,
        "se": se,
        "bound": bound,
    }
    extra = {"p_hat": p_hat, "bound": bound, "n_paths": n, "se": se}
    return _Outcome(verdict=verdict, extra_summary=extra)


def place_particles(u0f: Field, n_particles: int = N_PARTICLES, floor: float = PARTICLE_FLOOR):
    """Choose up to n_particles grid points where the initial momentum
    V1 = (1 - dxx) u0 is at least `floor` times its max size, spread evenly.
    Keeping labels away from near-zero momentum makes the sign signature a
    meaningful invariant (it is exactly preserved along characteristics)."""
    v1 = momentum(u0f)
    vals = np.abs(v1.values)
    vmax = float(vals.max())
    if vmax == 0.0:
        raise InvalidParams("particle placement needs nonzero initial momentum")
    idx = np.nonzero(vals >= floor * vmax)[0]
    # spacing >= 1 because the sample count never exceeds len(idx), so the
    # truncated linspace is strictly increasing (no duplicate labels)
    take = np.linspace(0, len(idx) - 1, min(n_particles, len(idx))).astype(int)
    return make_particles(u0f.grid.x[idx[take]])


def _scenario_sign_preserve(config: RunConfig) -> _Outcome:
    if config.noise.family not in ("zero", "linear") or config.noise.kappa != 1.0:
        raise ConfigRejected(
            ["sign-preserve: requires zero or linear noise with kappa = 1 (shared driving process)"]
        )
    grid = config.build_grid()
    u0f, _ = config.build_initial(grid)
    particles0 = place_particles(u0f)
    summary = _run_pde_ensemble(config, keep=config.ensemble.n_paths, particles0=particles0)
    n_constant = 0
    for res in summary.results:
        sig = res.signatures
        if sig is not None and len(sig) and bool(np.all(sig == sig[0])):
            n_constant += 1
    passed = summary.n_completed == summary.n_paths and n_constant == len(summary.results)
    verdict = {
        "passed": passed,
        "detail": (
            f"sign signature constant on {n_constant}/{len(summary.results)} paths with "
            f"{particles0.q.size} tracked particles; {summary.n_completed}/{summary.n_paths} completed"
        ),
        "n_constant": n_constant,
        "n_particles": int(particles0.q.size),
    }
    return _Outcome(verdict=verdict, summary=summary, kept=summary.results)


_SCENARIO_FNS = {
    "conserve": _scenario_conserve,
    "blowup-slope": lambda c: _scenario_blowup(c, "slope"),
    "blowup-cubic": lambda c: _scenario_blowup(c, "cubic"),
    "global-weak": _scenario_global_weak,
    "strong-noise": _scenario_strong_noise,
    "escape-bound": _scenario_escape,
    "sign-preserve": _scenario_sign_preserve,
}


# ---------------------------------------------------------------------------
# Persistence.


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_path_csv(path, res: RunResult) -> None:
    cols = (res.times, res.hs_u, res.hs_g, res.w1inf_u, res.w1inf_g, res.min_ux, res.energy, res.beta)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in zip(*cols):
            w.writerow([format(float(v), ".17g") for v in row])


def _write_summary_table(path, records: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "seed", "stop_reason", "stop_time"])
        for rec in records:
            w.writerow([rec["index"], rec["seed"], rec["stop_reason"], format(float(rec["stop_time"]), ".17g")])


def _write_scalar_table(path, summary: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for key, value in summary.items():
            w.writerow([key, value])


def run_scenario(name: str, config: RunConfig) -> RunManifest:
    """Execute one named verification pipeline and persist its outputs
    (per-path CSV series, a summary table, and manifest.yaml) under
    <outputs.directory>/<scenario>."""
    if name not in SCENARIOS:
        raise InvalidParams(f"unknown scenario {name!r}; choose from {list(SCENARIOS)}")
    start = time.perf_counter()
    outcome = _SCENARIO_FNS[name](config)
    wall = time.perf_counter() - start
    out_dir = Path(config.outputs.directory) / name
    summary = outcome.summary
    manifest = RunManifest(
        scenario=name,
        config=config_as_dict(config),
        version=_version(),
        schema=SCHEMA_VERSION,
        verdict=outcome.verdict,
        wall_time=wall,
        out_dir=str(out_dir),
        fitted_constants=outcome.fits.as_dict() if outcome.fits is not None else None,
        threshold_reports=[r.as_dict() for r in outcome.reports],
        stop_records=summary.stop_records if summary is not None else [],
        summary=summary.as_dict() if summary is not None else outcome.extra_summary,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, res in enumerate(outcome.kept):
        write_path_csv(out_dir / f"path_{i:03d}.csv", res)
    if summary is not None:
        _write_summary_table(out_dir / "summary.csv", summary.stop_records)
    elif outcome.extra_summary:
        _write_scalar_table(out_dir / "summary.csv", _plain(outcome.extra_summary))
    (out_dir / "manifest.yaml").write_text(yaml.safe_dump(_plain(manifest.as_dict()), sort_keys=False))
    return manifest


def apply_overrides(
    config: RunConfig,
    paths: Optional[int] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> RunConfig:
    ens, outs = config.ensemble, config.outputs
    if paths is not None:
        ens = replace(ens, n_paths=paths)
    if seed is not None:
        ens = replace(ens, master_seed=seed)
    if out is not None:
        outs = replace(outs, directory=str(out))
    return replace(config, ensemble=ens, outputs=outs)


@click.command()
@click.argument("scenario", type=click.Choice(SCENARIOS))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML config file (defaults apply when omitted).")
@click.option("--paths", type=int, default=None, help="Override ensemble.n_paths.")
@click.option("--seed", type=int, default=None, help="Override ensemble.master_seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Override outputs.directory.")
def main(scenario, config_path, paths, seed, out):
    """Run one verification scenario and exit 0 on PASS, 2 on FAIL, 1 on error."""
    try:
        text = Path(config_path).read_text() if config_path else ""
        config = apply_overrides(parse_config(text), paths=paths, seed=seed, out=out)
        manifest = run_scenario(scenario, config)
    except Smch2Error as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(1)
    status = "PASS" if manifest.passed() else "FAIL"
    click.echo(f"{scenario}: {status} — {manifest.verdict['detail']}")
    click.echo(f"outputs in {manifest.out_dir}")
    raise SystemExit(0 if manifest.passed() else 2)


if __name__ == "__main__":
    main()
