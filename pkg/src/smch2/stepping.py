"""Pathwise time stepping with blow-up stopping logic.

Two routes to a sample path:

  * direct Ito schemes on the stochastic system itself (Euler-Maruyama, and
    Milstein when the diffusion is linear in the state), and
  * classical RK4 on the pathwise-transformed system: for linear
    multiplicative noise, v = beta^{-1} (u, gamma) with
    beta = exp(int b dW - int b^2/2 dt) solves the random PDE
    dv/dt = beta(t) * drift(v), deterministic in time path by path.

Runs stop at the first of: non-finite state, W^{1,inf} threshold crossing,
or H^s threshold crossing — an operational stand-in for the maximal
existence time, justified by the blow-up scenario equivalence (at wave
breaking the slope diverges, so any large threshold is crossed).  Checks run
on physical-frame norms at the start of every micro-step; diagnostics are
recorded every output stride plus at the stop step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    InvalidParams,
    JacobianCollapse,
    NonFiniteField,
    UnsupportedMethod,
)
from .grid import Field, Frame, State, evaluate_at, require_finite, require_same_grid
from .noise import (
    BrownianPath,
    GeneralNoise,
    LinearNoise,
    NoiseSpec,
    NonlinearNoise,
    ZeroNoise,
    correlated_pair,
    path_seed,
    sample_brownian,
)
from .particles import (
    QX_FLOOR,
    SIGN_ZERO_BAND,
    MonitorKind,
    ParticleSet,
    RiccatiMonitor,
    advect_stages,
    cubic_integral,
    make_particles,
    momentum,
    riccati_constant,
    sign_signature,
)
from .rhs import DEFAULT_OPTS, DriftOptions, drift_arrays


class Method(Enum):
    EULER_MARUYAMA = "euler-maruyama"
    MILSTEIN_LINEAR = "milstein-linear"
    TRANSFORMED_RK4 = "transformed-rk4"


class StopReason(Enum):
    COMPLETED = "completed"
    BLOWUP_W1INF = "blowup-w1inf"
    BLOWUP_HS = "blowup-hs"
    NON_FINITE = "non-finite"


@dataclass(frozen=True)
class StepperConfig:
    method: Method = Method.TRANSFORMED_RK4
    dt: float = 1e-3
    t_end: float = 1.0
    blowup_w1inf: float = 1e3
    blowup_hs: float = 1e6
    s_monitor: float = 2.0
    stride: int = 10
    opts: DriftOptions = DEFAULT_OPTS

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParams(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise InvalidParams(f"t_end {self.t_end} must be at least dt {self.dt}")
        if not (self.blowup_w1inf > 0 and self.blowup_hs > 0):
            raise InvalidParams("blow-up thresholds must be positive")
        if self.stride < 1:
            raise InvalidParams(f"stride must be at least 1, got {self.stride}")

    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise InvalidParams(
                f"t_end {self.t_end} is not an integer multiple of dt {self.dt}"
            )
        return n


@dataclass
class RunResult:
    """Recorded diagnostics of one path, truncated at the stop time.

    `beta` is the exponential-transform factor (1 for deterministic runs,
    NaN for noise families that admit no scalar transform).  `energy` is the
    transformed-frame H^1 energy when the transform exists, otherwise the
    physical H^1 energy.  `final_u` / `final_g` hold the physical-frame fields
    at `stop_time`, for cross-integrator comparisons.
    """

    times: np.ndarray
    hs_u: np.ndarray
    hs_g: np.ndarray
    w1inf_u: np.ndarray
    w1inf_g: np.ndarray
    min_ux: np.ndarray
    energy: np.ndarray
    beta: np.ndarray
    stop_reason: StopReason
    stop_time: float
    seed: int
    sig_times: Optional[np.ndarray] = None
    signatures: Optional[np.ndarray] = None
    particle_q: Optional[np.ndarray] = None
    particle_qx: Optional[np.ndarray] = None
    monitor: Optional[RiccatiMonitor] = None
    final_u: Optional[Field] = None
    final_g: Optional[Field] = None

    def blew_up(self) -> bool:
        return self.stop_reason in (StopReason.BLOWUP_W1INF, StopReason.BLOWUP_HS)


class _Diag(NamedTuple):
    hs_u: float
    hs_g: float
    w1_u: float
    w1_g: float
    min_ux: float
    h1_u2: float
    h1_g2: float
    pu: np.ndarray
    pg: Optional[np.ndarray]


def _spectral_diag(grid, u, g, ux, gx, ws, wk1) -> _Diag:
    """Norm bundle of one (u, gamma) sample: H^s_monitor and W^{1,inf} norms,
    minimum slope, squared H^1 norms, and the power spectra for reuse."""
    nrm = grid.dx / grid.n
    uh = np.fft.fft(u)
    pu = uh.real**2 + uh.imag**2
    hs_u = math.sqrt(nrm * float(ws @ pu))
    h1_u2 = nrm * float(wk1 @ pu)
    w1_u = max(np.abs(u).max(), np.abs(ux).max())
    if g.any():
        gh = np.fft.fft(g)
        pg = gh.real**2 + gh.imag**2
        hs_g = math.sqrt(nrm * float(ws @ pg))
        h1_g2 = nrm * float(wk1 @ pg)
        w1_g = float(max(np.abs(g).max(), np.abs(gx).max()))
    else:
        pg = None
        hs_g = h1_g2 = w1_g = 0.0
    return _Diag(hs_u, hs_g, float(w1_u), w1_g, float(ux.min()), h1_u2, h1_g2, pu, pg)


def _check_stop(d: _Diag, scale: float, cfg: StepperConfig) -> Optional[StopReason]:
    """First-triggered stop reason on physical norms (scale maps the current
    frame's norms to physical ones; 1 for physical-frame states)."""
    w1 = scale * (d.w1_u + d.w1_g)
    hs = scale * (d.hs_u + d.hs_g)
    if not math.isfinite(w1 + hs):
        return StopReason.NON_FINITE
    if w1 >= cfg.blowup_w1inf:
        return StopReason.BLOWUP_W1INF
    if hs >= cfg.blowup_hs:
        return StopReason.BLOWUP_HS
    return None


class _Recorder:
    def __init__(self):
        self.rows = []

    def note(self, t, d: _Diag, scale, energy, beta):
        self.rows.append(
            (
                t,
                scale * d.hs_u,
                scale * d.hs_g,
                scale * d.w1_u,
                scale * d.w1_g,
                scale * d.min_ux,
                energy,
                beta,
            )
        )

    def arrays(self):
        cols = np.array(self.rows, dtype=float).T
        return cols


class _Tracker:
    """Particle set, sign signatures, and the optional Riccati monitor."""

    def __init__(self, particles: ParticleSet, monitor_kind, monitor_index, qx_floor, zero_band, K):
        self.particles = particles
        self.alive = True
        self.monitor_index = monitor_index
        self.qx_floor = qx_floor
        self.zero_band = zero_band
        self.monitor = (
            RiccatiMonitor(kind=monitor_kind, K=K) if monitor_kind is not None else None
        )
        self.sig_times = []
        self.signatures = []
        self.q_hist = []
        self.qx_hist = []

    def sample(self, t, v1_field: Field, beta: float) -> None:
        if not self.alive:
            return
        self.sig_times.append(t)
        self.signatures.append(
            sign_signature(momentum(v1_field), self.particles, self.zero_band)
        )
        self.q_hist.append(self.particles.q.copy())
        self.qx_hist.append(self.particles.qx.copy())
        if self.monitor is None:
            return
        qx_i = self.particles.qx[self.monitor_index]
        if qx_i <= self.qx_floor:
            return  # flow map collapsed at the tracked particle: classical window over
        if self.monitor.kind is MonitorKind.SLOPE_G:
            q_i = self.particles.q[self.monitor_index : self.monitor_index + 1]
            value = float(evaluate_at(v1_field, q_i, nderiv=1)[0])
        else:
            value = cubic_integral(v1_field)
        self.monitor.append(t, value, beta)

    def advance(self, fields, betas, dt) -> None:
        if not self.alive:
            return
        try:
            self.particles = advect_stages(self.particles, fields, betas, dt)
        except (JacobianCollapse, NonFiniteField):
            self.alive = False

    def results(self):
        if not self.sig_times:
            return {}
        return {
            "sig_times": np.asarray(self.sig_times),
            "signatures": np.asarray(self.signatures, dtype=int),
            "particle_q": np.asarray(self.q_hist),
            "particle_qx": np.asarray(self.qx_hist),
            "monitor": self.monitor,
        }


def reconstruct_physical(v_state: State, beta_now: float) -> State:
    """Physical-frame state (beta v1, beta v2) from a transformed state."""
    if v_state.frame is not Frame.TRANSFORMED:
        raise InvalidParams("reconstruct_physical expects a transformed-frame state")
    g = v_state.first.grid
    return State(
        first=Field(grid=g, values=beta_now * v_state.first.values),
        second=Field(grid=g, values=beta_now * v_state.second.values),
        t=v_state.t,
        frame=Frame.PHYSICAL,
    )


def _rk4_stages(grid, v1, v2, b0, bm, be, dt, opts, k1u, k1g):
    """Remaining RK4 stages given the stage-1 slope; returns the updated
    arrays plus the stage fields of the first component (for particle
    advection at matching stage positions)."""
    a2 = v1 + 0.5 * dt * k1u
    c2 = v2 + 0.5 * dt * k1g
    d2u, d2g, _, _ = drift_arrays(grid, a2, c2, opts)
    k2u, k2g = bm * d2u, bm * d2g
    a3 = v1 + 0.5 * dt * k2u
    c3 = v2 + 0.5 * dt * k2g
    d3u, d3g, _, _ = drift_arrays(grid, a3, c3, opts)
    k3u, k3g = bm * d3u, bm * d3g
    a4 = v1 + dt * k3u
    c4 = v2 + dt * k3g
    d4u, d4g, _, _ = drift_arrays(grid, a4, c4, opts)
    k4u, k4g = be * d4u, be * d4g
    v1n = v1 + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    v2n = v2 + dt / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
    return v1n, v2n, (a2, a3, a4)


def step_transformed(
    v_state: State,
    beta_now: float,
    dt: float,
    beta_mid: Optional[float] = None,
    beta_end: Optional[float] = None,
    opts: DriftOptions = DEFAULT_OPTS,
) -> State:
    """One classical RK4 step of dv/dt = beta(t) drift(v).

    beta is frozen per stage: `beta_now` at the left endpoint and, when
    given, `beta_mid` at the two half-stages and `beta_end` at the right
    endpoint (all three default to `beta_now`).
    """
    if v_state.frame is not Frame.TRANSFORMED:
        raise InvalidParams("step_transformed expects a transformed-frame state")
    if not beta_now > 0:
        raise InvalidParams(f"beta must be positive, got {beta_now}")
    bm = beta_now if beta_mid is None else beta_mid
    be = beta_now if beta_end is None else beta_end
    g = v_state.first.grid
    v1, v2 = v_state.first.values, v_state.second.values
    d1u, d1g, _, _ = drift_arrays(g, v1, v2, opts)
    v1n, v2n, _ = _rk4_stages(
        g, v1, v2, beta_now, bm, be, dt, opts, beta_now * d1u, beta_now * d1g
    )
    if not (np.all(np.isfinite(v1n)) and np.all(np.isfinite(v2n))):
        raise NonFiniteField("transformed step produced non-finite values")
    return State(
        first=Field(grid=g, values=v1n),
        second=Field(grid=g, values=v2n),
        t=v_state.t + dt,
        frame=Frame.TRANSFORMED,
    )


def _milstein_ok(spec: NoiseSpec) -> bool:
    # diffusion linear in the state (exactly, or with the coefficient frozen
    # at the left endpoint), so the one-step noise factor exp(c dW - c^2 dt/2)
    # is exact for the frozen coefficient
    return isinstance(spec, (ZeroNoise, LinearNoise, NonlinearNoise))


def _direct_update(grid, u, g, du, dg, ux, gx, spec, t, dw1, dw2, dt, method, diag, wse, stack):
    """One EM / Milstein update from precomputed drift and diagnostics."""
    un = u + dt * du
    gn = g + dt * dg
    if isinstance(spec, ZeroNoise):
        return un, gn
    if isinstance(spec, GeneralNoise):
        nrm = grid.dx / grid.n
        hs_u = math.sqrt(nrm * float(wse @ diag.pu))
        hs_g = 0.0 if diag.pg is None else math.sqrt(nrm * float(wse @ diag.pg))
        env = spec.f_fn(diag.w1_u + diag.w1_g) * (1.0 + hs_u + hs_g)
        kick = env * (dw1 @ stack)
        return un + kick, gn + kick
    if isinstance(spec, LinearNoise):
        c = spec.coefficient(t)
    else:
        c = spec.coefficient(t, diag.w1_u + diag.w1_g)
    if method is Method.MILSTEIN_LINEAR:
        # Apply the state-linear noise factor in exact exponential form.  It
        # matches the classical Milstein correction to strong order 1, but its
        # one-step log-growth  c dW - c^2 dt / 2  is negative on average at
        # every volatility, so large-norm paths cannot be amplified through a
        # sign flip of the truncated factor 1 + c dW + (c^2/2)(dW^2 - dt).
        return (
            un * np.exp(c * dw1 - 0.5 * c * c * dt),
            gn * np.exp(c * dw2 - 0.5 * c * c * dt),
        )
    un = un + c * u * dw1
    gn = gn + c * g * dw2
    return un, gn


def step_direct(
    state: State,
    spec: NoiseSpec,
    dW,
    dt: float,
    opts: DriftOptions = DEFAULT_OPTS,
    method: Method = Method.EULER_MARUYAMA,
) -> State:
    """One direct Ito step: u + drift dt + diffusion dW (+ Milstein term).

    `dW` is a scalar (shared by both components), a pair (correlated
    drivers), or a mode-increment array for the finite noise stack.
    """
    if state.frame is not Frame.PHYSICAL:
        raise InvalidParams("step_direct expects a physical-frame state")
    if method is Method.TRANSFORMED_RK4:
        raise UnsupportedMethod("step_direct covers the direct Ito methods only")
    if method is Method.MILSTEIN_LINEAR and not _milstein_ok(spec):
        raise UnsupportedMethod(
            "the Milstein correction needs a diffusion linear in the state"
        )
    g = state.first.grid
    u, ga = state.first.values, state.second.values
    if isinstance(dW, tuple):
        dw1, dw2 = dW
    else:
        dw1 = dw2 = dW
    du, dg, ux, gx = drift_arrays(g, u, ga, opts)
    ws = (1.0 + g.k**2) ** 2.0
    wk1 = 1.0 + g.k**2
    diag = _spectral_diag(g, u, ga, ux, gx, ws, wk1)
    wse = (1.0 + g.k**2) ** spec.s if isinstance(spec, GeneralNoise) else None
    stack = spec.mode_stack(g) if isinstance(spec, GeneralNoise) else None
    un, gn = _direct_update(
        g, u, ga, du, dg, ux, gx, spec, state.t, dw1, dw2, dt, method, diag, wse, stack
    )
    if not (np.all(np.isfinite(un)) and np.all(np.isfinite(gn))):
        raise NonFiniteField("direct step produced non-finite values")
    return State(
        first=Field(grid=g, values=un),
        second=Field(grid=g, values=gn),
        t=state.t + dt,
        frame=Frame.PHYSICAL,
    )


def _beta_series(spec, dt, n_steps, increments):
    """beta at step endpoints and midpoints (left-point Ito sums; W linearly
    interpolated inside a step, so midpoint sums are endpoint averages)."""
    if isinstance(spec, ZeroNoise):
        return np.ones(n_steps + 1), np.ones(n_steps)
    t = dt * np.arange(n_steps)
    b = np.asarray([spec.coefficient(tm) for tm in t])
    s = np.empty(n_steps + 1)
    s[0] = 0.0
    np.cumsum(b * increments, out=s[1:])
    q = np.empty(n_steps + 1)
    q[0] = 0.0
    np.cumsum(b * b * dt, out=q[1:])
    beta = np.exp(s - 0.5 * q)
    beta_mid = np.exp(0.5 * (s[:-1] + s[1:]) - 0.25 * (q[:-1] + q[1:]))
    return beta, beta_mid


def run_path(
    u0: Field,
    g0: Field,
    spec: NoiseSpec,
    cfg: StepperConfig,
    seed: int,
    particles0=None,
    monitor_kind: Optional[MonitorKind] = None,
    monitor_index: int = 0,
    qx_floor: float = QX_FLOOR,
    zero_band: float = SIGN_ZERO_BAND,
    driving: Optional[BrownianPath] = None,
) -> RunResult:
    """Integrate one path to t_end or the first threshold crossing.

    Records the diagnostic series every `cfg.stride` micro-steps (plus the
    stop step); optionally tracks particles from labels `particles0` and one
    Riccati monitor rooted at `particles0[monitor_index]`.  Per-path noise is
    derived from `seed` alone, so results are reproducible and ensemble
    members are independent.  Passing `driving` pins the Wiener increments
    explicitly (e.g. a `coarsen`ed refinement of one path) so the same
    realization can be integrated at several step sizes; it requires a
    single shared driving process (kappa = 1).
    """
    require_same_grid(u0, g0)
    require_finite(u0)
    require_finite(g0)
    grid = u0.grid
    n_steps = cfg.n_steps()

    if cfg.method is Method.TRANSFORMED_RK4:
        if not isinstance(spec, (ZeroNoise, LinearNoise)):
            raise UnsupportedMethod(
                "the exponential transform needs zero or linear multiplicative noise"
            )
        if getattr(spec, "kappa", 1.0) != 1.0:
            raise UnsupportedMethod(
                "the exponential transform needs one shared driving process"
            )
    if cfg.method is Method.MILSTEIN_LINEAR and not _milstein_ok(spec):
        raise UnsupportedMethod(
            "the Milstein correction needs a diffusion linear in the state"
        )
    if monitor_kind is not None:
        if particles0 is None:
            raise InvalidParams("a Riccati monitor needs tracked particles")
        if not isinstance(spec, (ZeroNoise, LinearNoise)):
            raise UnsupportedMethod("Riccati monitors need the transformed frame")

    # Driving increments, split deterministically from the path seed.
    if driving is not None:
        if isinstance(spec, GeneralNoise):
            raise InvalidParams("explicit driving applies to scalar-noise families")
        if getattr(spec, "kappa", 1.0) != 1.0:
            raise InvalidParams("explicit driving needs one shared process (kappa=1)")
        if abs(driving.dt - cfg.dt) > 1e-12 * max(1.0, cfg.dt):
            raise InvalidParams(
                f"driving path dt {driving.dt} does not match stepper dt {cfg.dt}"
            )
        if driving.n_steps < n_steps:
            raise InvalidParams(
                f"driving path has {driving.n_steps} steps, run needs {n_steps}"
            )
        dw1 = dw2 = driving.increments[:n_steps]
        modes = None
    elif isinstance(spec, ZeroNoise):
        dw1 = dw2 = np.zeros(n_steps)
        modes = None
    elif isinstance(spec, GeneralNoise):
        rng = np.random.Generator(np.random.Philox(key=path_seed(seed, 0)))
        modes = rng.standard_normal((n_steps, spec.n_modes)) * math.sqrt(cfg.dt)
        dw1 = dw2 = None
    else:
        p1 = sample_brownian(path_seed(seed, 0), cfg.dt, n_steps)
        if spec.kappa == 1.0:
            dw1 = dw2 = p1.increments
        else:
            _, p2 = correlated_pair(p1, spec.kappa, path_seed(seed, 1))
            dw1, dw2 = p1.increments, p2.increments
        modes = None

    ws = (1.0 + grid.k**2) ** cfg.s_monitor
    wk1 = 1.0 + grid.k**2
    wse = (1.0 + grid.k**2) ** spec.s if isinstance(spec, GeneralNoise) else None
    stack = spec.mode_stack(grid) if isinstance(spec, GeneralNoise) else None

    tracker = None
    if particles0 is not None:
        if not isinstance(particles0, ParticleSet):
            particles0 = make_particles(np.asarray(particles0, dtype=float))
        du0, dg0, ux0, gx0 = drift_arrays(grid, u0.values, g0.values, cfg.opts)
        d0 = _spectral_diag(grid, u0.values, g0.values, ux0, gx0, ws, wk1)
        K = riccati_constant(d0.h1_u2 + d0.h1_g2) if monitor_kind is not None else 1.0
        tracker = _Tracker(particles0, monitor_kind, monitor_index, qx_floor, zero_band, K)

    if cfg.method is Method.TRANSFORMED_RK4:
        beta, beta_mid = _beta_series(spec, cfg.dt, n_steps, dw1)
        rec, reason, stop_t, fin_u, fin_g = _loop_transformed(
            grid, u0, g0, cfg, beta, beta_mid, ws, wk1, tracker
        )
    else:
        rec, reason, stop_t, fin_u, fin_g = _loop_direct(
            grid, u0, g0, spec, cfg, dw1, dw2, modes, ws, wk1, wse, stack, tracker
        )

    cols = rec.arrays()
    extras = tracker.results() if tracker is not None else {}
    extras["final_u"] = Field(grid=grid, values=fin_u)
    extras["final_g"] = Field(grid=grid, values=fin_g)
    return RunResult(
        times=cols[0],
        hs_u=cols[1],
        hs_g=cols[2],
        w1inf_u=cols[3],
        w1inf_g=cols[4],
        min_ux=cols[5],
        energy=cols[6],
        beta=cols[7],
        stop_reason=reason,
        stop_time=stop_t,
        seed=int(seed),
        **extras,
    )


def _loop_transformed(grid, u0, g0, cfg, beta, beta_mid, ws, wk1, tracker):
    dt = cfg.dt
    n_steps = cfg.n_steps()
    v1 = u0.values.copy()
    v2 = g0.values.copy()
    rec = _Recorder()
    reason, stop_t = StopReason.COMPLETED, cfg.t_end
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for m in range(n_steps + 1):
            t = m * dt
            b0 = float(beta[m])
            d1u, d1g, ux, gx = drift_arrays(grid, v1, v2, cfg.opts)
            d = _spectral_diag(grid, v1, v2, ux, gx, ws, wk1)
            stop = _check_stop(d, b0, cfg)
            at_stride = (m % cfg.stride == 0) or (m == n_steps) or stop
            if at_stride:
                rec.note(t, d, b0, d.h1_u2 + d.h1_g2, b0)
                if tracker is not None and stop is None:
                    tracker.sample(t, Field(grid=grid, values=v1), b0)
            if stop is not None:
                reason, stop_t = stop, t
                break
            if m == n_steps:
                break
            bm, be = float(beta_mid[m]), float(beta[m + 1])
            v1n, v2n, stages = _rk4_stages(
                grid, v1, v2, b0, bm, be, dt, cfg.opts, b0 * d1u, b0 * d1g
            )
            if tracker is not None:
                fields = (
                    Field(grid=grid, values=v1),
                    Field(grid=grid, values=stages[0]),
                    Field(grid=grid, values=stages[1]),
                    Field(grid=grid, values=stages[2]),
                )
                tracker.advance(fields, (b0, bm, bm, be), dt)
            v1, v2 = v1n, v2n
    b_last = float(beta[m])
    return rec, reason, stop_t, b_last * v1, b_last * v2


def _loop_direct(grid, u0, g0, spec, cfg, dw1, dw2, modes, ws, wk1, wse, stack, tracker):
    dt = cfg.dt
    n_steps = cfg.n_steps()
    u = u0.values.copy()
    g = g0.values.copy()
    rec = _Recorder()
    reason, stop_t = StopReason.COMPLETED, cfg.t_end

    linear = isinstance(spec, LinearNoise)
    if linear:
        beta, _ = _beta_series(spec, dt, n_steps, dw1)
    elif isinstance(spec, ZeroNoise):
        beta = np.ones(n_steps + 1)
    else:
        beta = None  # no scalar transform for these families

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for m in range(n_steps + 1):
            t = m * dt
            du, dg, ux, gx = drift_arrays(grid, u, g, cfg.opts)
            d = _spectral_diag(grid, u, g, ux, gx, ws, wk1)
            stop = _check_stop(d, 1.0, cfg)
            at_stride = (m % cfg.stride == 0) or (m == n_steps) or stop
            if at_stride:
                if beta is None:
                    b_now, energy = math.nan, d.h1_u2 + d.h1_g2
                else:
                    b_now = float(beta[m])
                    energy = (d.h1_u2 + d.h1_g2) / (b_now * b_now)
                rec.note(t, d, 1.0, energy, b_now)
                if tracker is not None and stop is None:
                    b_v = 1.0 if beta is None else float(beta[m])
                    v1f = Field(grid=grid, values=u / b_v)
                    tracker.sample(t, v1f, b_v)
            if stop is not None:
                reason, stop_t = stop, t
                break
            if m == n_steps:
                break
            if tracker is not None:
                # dq/dt = beta v1(q) = u(q): the physical field advects labels
                uf = Field(grid=grid, values=u)
                tracker.advance((uf, uf, uf, uf), (1.0, 1.0, 1.0, 1.0), dt)
            step_dw1 = modes[m] if modes is not None else dw1[m]
            step_dw2 = None if modes is not None else dw2[m]
            u, g = _direct_update(
                grid, u, g, du, dg, ux, gx, spec, t, step_dw1, step_dw2, dt,
                cfg.method, d, wse, stack,
            )
    return rec, reason, stop_t, u, g
