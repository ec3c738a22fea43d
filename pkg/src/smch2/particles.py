"""Particle trajectories along characteristics and the scalar blow-up monitors.

Characteristics solve dq/dt = beta v1(t, q) with Jacobian dq_x/dt =
beta v1_x(t, q) q_x; the Jacobian stays positive while the solution is
classical and collapses to zero at wave breaking.  The momentum variable
V = (1 - dxx) v has a sign that is transported along characteristics, and
two scalar monitors — the slope g(t) = v1_x(q(t)) at a tracked particle and
the cubic slope integral N(t) = int v1_x^3 dx — obey one-sided Riccati
inequalities

    dg/dt <= beta K^2 - (beta/2) g^2
    dN/dt <= (15 beta / 4) K^4 - (beta / (4 K^2)) N^2

with K = (sqrt(2)/2) sqrt(E0), E0 the conserved H1 energy of the data.
Off-grid values are obtained by trigonometric interpolation, consistent with
the spatial discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidParams, JacobianCollapse, NonFiniteField
from .grid import Field, derivative, evaluate_at

#: Jacobian size below which the tracked particle has left the classical
#: window (the flow map has effectively collapsed); monitors stop sampling.
QX_FLOOR = 1e-8

#: |V1| below this counts as sign 0, to avoid flapping at a zero crossing.
SIGN_ZERO_BAND = 1e-10


@dataclass(frozen=True)
class ParticleSet:
    """Labels x0, current positions q, and Jacobians qx = dq/dx at time t."""

    x0: np.ndarray
    q: np.ndarray
    qx: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not (self.x0.shape == self.q.shape == self.qx.shape):
            raise InvalidParams("x0, q, qx must share one shape")
        if self.x0.ndim != 1:
            raise InvalidParams("particle arrays must be one-dimensional")


def make_particles(x0) -> ParticleSet:
    """Particles at rest: q = x0, unit Jacobian, t = 0."""
    lab = np.asarray(x0, dtype=float)
    return ParticleSet(x0=lab, q=lab.copy(), qx=np.ones_like(lab))


def _value_and_slope(f: Field, pts: np.ndarray):
    """Trigonometric interpolation of f and f_x at arbitrary points.

    Shares one phase matrix between the two evaluations (the advection step
    needs both at every stage).
    """
    g = f.grid
    fh = np.fft.fft(f.values)
    phase = np.exp(1j * np.outer(np.asarray(pts, dtype=float) + g.L, g.k))
    val = (phase @ fh).real / g.n
    slope = (phase @ (g.ik * fh)).real / g.n
    return val, slope


def advect_stages(
    particles: ParticleSet,
    fields: Sequence[Field],
    betas: Sequence[float],
    dt: float,
) -> ParticleSet:
    """One classical RK4 step of the characteristic system.

    `fields` and `betas` hold v1 and beta at the four stage times
    (t, t + dt/2, t + dt/2, t + dt); passing the same field and beta four
    times recovers the frozen-field step.
    """
    q, qx = particles.q, particles.qx
    v, s = _value_and_slope(fields[0], q)
    k1, l1 = betas[0] * v, betas[0] * s * qx
    v, s = _value_and_slope(fields[1], q + 0.5 * dt * k1)
    k2, l2 = betas[1] * v, betas[1] * s * (qx + 0.5 * dt * l1)
    v, s = _value_and_slope(fields[2], q + 0.5 * dt * k2)
    k3, l3 = betas[2] * v, betas[2] * s * (qx + 0.5 * dt * l2)
    v, s = _value_and_slope(fields[3], q + dt * k3)
    k4, l4 = betas[3] * v, betas[3] * s * (qx + dt * l3)
    q_new = q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    qx_new = qx + dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(qx_new))):
        raise NonFiniteField("particle positions left the finite range")
    if np.any(qx_new <= 0.0):
        raise JacobianCollapse(
            f"Jacobian reached {qx_new.min():.3e} at t={particles.t + dt:.6g}"
        )
    return ParticleSet(x0=particles.x0, q=q_new, qx=qx_new, t=particles.t + dt)


def advect(particles: ParticleSet, v1: Field, beta_now: float, dt: float) -> ParticleSet:
    """Frozen-field RK4 step: v1 and beta held fixed across the stages."""
    return advect_stages(particles, (v1, v1, v1, v1), (beta_now,) * 4, dt)


def momentum(v: Field) -> Field:
    """The momentum variable (1 - dxx) v, as the multiplier 1 + k^2."""
    g = v.grid
    vh = np.fft.fft(v.values)
    return Field(grid=g, values=np.fft.ifft((1.0 + g.k**2) * vh).real)


def sign_signature(
    V1: Field, particles: ParticleSet, zero_band: float = SIGN_ZERO_BAND
) -> np.ndarray:
    """Sign (-1/0/+1) of V1 interpolated at each particle position."""
    val = evaluate_at(V1, particles.q)
    out = np.sign(val).astype(int)
    out[np.abs(val) < zero_band] = 0
    return out


def cubic_integral(v1: Field) -> float:
    """The cubic slope integral int (v1_x)^3 dx (exact rectangle rule)."""
    d = derivative(v1)
    return float(v1.grid.dx * np.sum(d.values**3))


class MonitorKind(Enum):
    SLOPE_G = "slope"
    CUBIC_N = "cubic"


def riccati_constant(e0: float) -> float:
    """K = (sqrt(2)/2) sqrt(E0) from the conserved energy of the data."""
    if e0 < 0:
        raise InvalidParams(f"energy must be nonnegative, got {e0}")
    return 0.5 * math.sqrt(2.0) * math.sqrt(e0)


@dataclass
class RiccatiMonitor:
    """Sampled series of one scalar monitor with its one-sided Riccati bound."""

    kind: MonitorKind
    K: float
    times: list = dc_field(default_factory=list)
    values: list = dc_field(default_factory=list)
    betas: list = dc_field(default_factory=list)

    def __post_init__(self):
        if not self.K > 0:
            raise InvalidParams(f"monitor constant K must be positive, got {self.K}")

    def append(self, t: float, value: float, beta: float) -> None:
        self.times.append(float(t))
        self.values.append(float(value))
        self.betas.append(float(beta))

    def rhs(self, value: float, beta: float) -> float:
        """The Riccati upper bound for d(value)/dt at the given sample."""
        if self.kind is MonitorKind.SLOPE_G:
            return beta * self.K**2 - 0.5 * beta * value**2
        return 3.75 * beta * self.K**4 - beta / (4.0 * self.K**2) * value**2


def riccati_step_check(monitor: RiccatiMonitor, dt: float) -> float:
    """Residual (delta value / dt) - rhs(left sample) for the last two samples.

    Nonpositive up to discretization error while the bound holds.
    """
    if len(monitor.values) < 2:
        raise InvalidParams("need two consecutive monitor samples")
    v0, v1 = monitor.values[-2], monitor.values[-1]
    return (v1 - v0) / dt - monitor.rhs(v0, monitor.betas[-2])


def riccati_residuals(monitor: RiccatiMonitor) -> np.ndarray:
    """Residuals for every consecutive sample pair, using recorded times."""
    t = np.asarray(monitor.times)
    v = np.asarray(monitor.values)
    b = np.asarray(monitor.betas)
    if t.size < 2:
        return np.empty(0)
    rhs = np.array([monitor.rhs(vi, bi) for vi, bi in zip(v[:-1], b[:-1])])
    return np.diff(v) / np.diff(t) - rhs
