"""Brownian paths, noise coefficient families, and exponential processes.

Three multiplicative noise families drive the system:

  * LinearNoise:      h1 = b(t) u dW,  h2 = b(t) gamma dW
  * NonlinearNoise:   h = a(t) (1 + w1inf(u) + w1inf(gamma))^theta (u, gamma) dW
  * GeneralNoise:     a finite stack of Fourier-mode diffusions whose
                      Hilbert-Schmidt norm obeys
                      f(w1inf sums) * (1 + H^s norms) by construction

plus ZeroNoise for deterministic runs (the linear family's declared bounds
exclude b identically zero, so the deterministic limit is its own variant).
Both driving processes may be correlated through kappa; the linear and
nonlinear families use a single scalar Wiener process (kappa = 1) by default.

Stochastic integrals are discretized at the left endpoint (Ito). Seeds split
from a master seed via a counter-mode scheme keyed on (master_seed, path
index), so ensembles are order-independent.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import InvalidKappa, InvalidParams, SpecViolation
from .grid import Frame, SpectralGrid, State, sobolev_norm, w1inf_norm

#: relative slack when checking declared coefficient bounds at runtime
_BOUND_TOL = 1e-9


def _const_fn(c: float, t: float) -> float:
    return c


def constant_fn(c: float) -> Callable[[float], float]:
    """A pickle-friendly constant function of time (usable across workers)."""
    return functools.partial(_const_fn, float(c))


def _identity(r: float) -> float:
    return r


@dataclass(frozen=True)
class BrownianPath:
    """Seeded increment sequence of one scalar Wiener process."""

    seed: int
    dt: float
    n_steps: int
    increments: np.ndarray = field(repr=False)

    def cumulative(self) -> np.ndarray:
        """W at the n_steps + 1 grid times, starting from W(0) = 0."""
        w = np.empty(self.n_steps + 1)
        w[0] = 0.0
        np.cumsum(self.increments, out=w[1:])
        return w


def path_seed(master_seed: int, index: int) -> int:
    """Derive the per-path seed for path `index` from a master seed.

    Uses a splittable counter scheme (SeedSequence spawn keys), so the seed
    for any index can be computed independently and in any order.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


def sample_brownian(seed: int, dt: float, n_steps: int) -> BrownianPath:
    """Gaussian increments with variance dt; identical seed, identical path."""
    if not dt > 0:
        raise InvalidParams(f"dt must be positive, got {dt}")
    if not n_steps >= 0:
        raise InvalidParams(f"n_steps must be nonnegative, got {n_steps}")
    inc = _rng(seed).standard_normal(int(n_steps)) * math.sqrt(dt)
    return BrownianPath(seed=int(seed), dt=float(dt), n_steps=int(n_steps), increments=inc)


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """The same Wiener path sampled `factor` times more coarsely.

    Groups of `factor` consecutive increments are summed, so refinement
    studies can compare integrators across step sizes on one shared path.
    """
    if factor < 1 or path.n_steps % factor:
        raise InvalidParams(
            f"factor {factor} must divide the path's {path.n_steps} steps"
        )
    inc = path.increments.reshape(-1, factor).sum(axis=1)
    return BrownianPath(
        seed=path.seed,
        dt=path.dt * factor,
        n_steps=path.n_steps // factor,
        increments=inc,
    )


def correlated_pair(path1: BrownianPath, kappa: float, seed2: int):
    """Second Wiener path with d<W1, W2> = kappa dt.

    W2 increments are kappa dW1 + sqrt(1 - kappa^2) dWperp with dWperp
    independent and drawn from seed2.
    """
    if not -1.0 <= kappa <= 1.0:
        raise InvalidKappa(f"correlation must lie in [-1, 1], got {kappa}")
    perp = sample_brownian(seed2, path1.dt, path1.n_steps)
    inc2 = kappa * path1.increments + math.sqrt(1.0 - kappa * kappa) * perp.increments
    path2 = BrownianPath(
        seed=int(seed2), dt=path1.dt, n_steps=path1.n_steps, increments=inc2
    )
    return path1, path2


@dataclass(frozen=True)
class ZeroNoise:
    """Deterministic runs: both diffusion terms vanish identically."""

    kappa: float = 1.0


@dataclass(frozen=True)
class LinearNoise:
    """h1 = b(t) u dW, h2 = b(t) gamma dW with 0 < b_star <= b(t)^2 <= b_sup."""

    b_fn: Callable[[float], float]
    b_star: float
    b_sup: float
    kappa: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.b_star <= self.b_sup):
            raise InvalidParams(
                f"need 0 < b_star <= b_sup, got b_star={self.b_star}, b_sup={self.b_sup}"
            )
        if not -1.0 <= self.kappa <= 1.0:
            raise InvalidKappa(f"correlation must lie in [-1, 1], got {self.kappa}")

    @classmethod
    def from_constant(cls, b: float, kappa: float = 1.0) -> "LinearNoise":
        return cls(b_fn=constant_fn(b), b_star=b * b, b_sup=b * b, kappa=kappa)

    def coefficient(self, t: float) -> float:
        b = float(self.b_fn(t))
        b2 = b * b
        lo = self.b_star * (1.0 - _BOUND_TOL) - _BOUND_TOL
        hi = self.b_sup * (1.0 + _BOUND_TOL) + _BOUND_TOL
        if not (lo <= b2 <= hi):
            raise SpecViolation(
                f"b(t)^2 = {b2} left declared bounds [{self.b_star}, {self.b_sup}] at t={t}"
            )
        return b


@dataclass(frozen=True)
class NonlinearNoise:
    """h = a(t) (1 + w1inf(u) + w1inf(gamma))^theta (u, gamma) dW."""

    a_fn: Callable[[float], float]
    theta: float
    a_star: float
    a_sup: float
    kappa: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.a_star <= self.a_sup):
            raise InvalidParams(
                f"need 0 < a_star <= a_sup, got a_star={self.a_star}, a_sup={self.a_sup}"
            )
        if not self.theta > 0:
            raise InvalidParams(f"theta must be positive, got {self.theta}")
        if not -1.0 <= self.kappa <= 1.0:
            raise InvalidKappa(f"correlation must lie in [-1, 1], got {self.kappa}")

    @classmethod
    def from_constant(cls, a: float, theta: float, kappa: float = 1.0) -> "NonlinearNoise":
        return cls(
            a_fn=constant_fn(a), theta=theta, a_star=a * a, a_sup=a * a, kappa=kappa
        )

    def coefficient(self, t: float, w1_sum: float) -> float:
        a = float(self.a_fn(t))
        a2 = a * a
        lo = self.a_star * (1.0 - _BOUND_TOL) - _BOUND_TOL
        hi = self.a_sup * (1.0 + _BOUND_TOL) + _BOUND_TOL
        if not (lo <= a2 <= hi):
            raise SpecViolation(
                f"a(t)^2 = {a2} left declared bounds [{self.a_star}, {self.a_sup}] at t={t}"
            )
        try:
            grow = (1.0 + w1_sum) ** self.theta
        except OverflowError:
            # saturate instead of raising so a diverging path is reported as
            # non-finite by the stepper rather than aborting the run
            grow = math.inf
        return a * grow


@dataclass(frozen=True)
class GeneralNoise:
    """Finite stack of Fourier-mode diffusions with declared growth envelope.

    Mode k carries weight sigma_k (default 2^-k); the whole stack is scaled by
    f(w1inf(u) + w1inf(gamma)) * (1 + ||u||_{H^s} + ||gamma||_{H^s}) and
    normalized so its Hilbert-Schmidt norm equals that envelope exactly.
    f must be non-decreasing with f(0) = 0 so the zero state stays fixed.
    """

    n_modes: int = 16
    sigma: tuple = ()
    f_fn: Callable[[float], float] = _identity
    s: float = 2.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.n_modes < 1:
            raise InvalidParams(f"need at least one mode, got {self.n_modes}")
        if not self.sigma:
            object.__setattr__(
                self, "sigma", tuple(2.0 ** (-k) for k in range(1, self.n_modes + 1))
            )
        if len(self.sigma) != self.n_modes:
            raise InvalidParams(
                f"sigma length {len(self.sigma)} != n_modes {self.n_modes}"
            )
        if not -1.0 <= self.kappa <= 1.0:
            raise InvalidKappa(f"correlation must lie in [-1, 1], got {self.kappa}")

    def mode_stack(self, grid: SpectralGrid) -> np.ndarray:
        """(n_modes, n) array of mode shapes, orthonormalized in H^s so the
        stack's Hilbert-Schmidt norm is exactly the declared envelope."""
        shapes = np.empty((self.n_modes, grid.n))
        hsw = (1.0 + grid.k**2) ** self.s
        total = 0.0
        for m in range(self.n_modes):
            wav = (m // 2) + 1
            phase = np.pi * wav * (grid.x + grid.L) / grid.L
            shapes[m] = np.cos(phase) if m % 2 == 0 else np.sin(phase)
            fh = np.fft.fft(shapes[m])
            hs2 = grid.dx / grid.n * np.dot(hsw, fh.real**2 + fh.imag**2)
            shapes[m] /= math.sqrt(hs2)
            total += self.sigma[m] ** 2
        return shapes / math.sqrt(total) * np.asarray(self.sigma)[:, None]


NoiseSpec = Union[ZeroNoise, LinearNoise, NonlinearNoise, GeneralNoise]


def noise_coefficient(spec: NoiseSpec, t: float, state: State):
    """Diffusion coefficient at (t, state) for the physical-frame equations.

    ZeroNoise -> 0.0; LinearNoise -> b(t); NonlinearNoise -> the scalar
    a(t)(1 + w1inf(u) + w1inf(gamma))^theta; GeneralNoise -> a pair of
    (n_modes, n) coefficient stacks for the two components.
    Raises SpecViolation if a(t)^2 or b(t)^2 leaves its declared bounds.
    """
    if state.frame is not Frame.PHYSICAL:
        raise InvalidParams("noise coefficients are defined on physical-frame states")
    if isinstance(spec, ZeroNoise):
        return 0.0
    if isinstance(spec, LinearNoise):
        return spec.coefficient(t)
    w1_sum = w1inf_norm(state.first) + w1inf_norm(state.second)
    if isinstance(spec, NonlinearNoise):
        return spec.coefficient(t, w1_sum)
    if isinstance(spec, GeneralNoise):
        grid = state.grid
        stack = spec.mode_stack(grid)
        envelope = spec.f_fn(w1_sum) * (
            1.0
            + sobolev_norm(state.first, spec.s)
            + sobolev_norm(state.second, spec.s)
        )
        return envelope * stack, envelope * stack
    raise InvalidParams(f"unknown noise spec {spec!r}")


def exponential_processes(path: BrownianPath, b_fn: Callable[[float], float]):
    """Left-point Ito discretization of the exponential processes.

    beta(t) = exp(int b dW - int b^2/2 dt), alpha(t) = exp(int b dW), both on
    the path's time grid (length n_steps + 1, starting at 1).
    """
    t = path.dt * np.arange(path.n_steps)
    b = np.asarray([float(b_fn(tm)) for tm in t])
    stoch = np.empty(path.n_steps + 1)
    stoch[0] = 0.0
    np.cumsum(b * path.increments, out=stoch[1:])
    quad = np.empty(path.n_steps + 1)
    quad[0] = 0.0
    np.cumsum(b * b * path.dt, out=quad[1:])
    return np.exp(stoch - 0.5 * quad), np.exp(stoch)
