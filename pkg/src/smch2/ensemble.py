"""Monte Carlo orchestration: seeded path ensembles, blow-up probability
estimates with Wilson intervals, and scalar-process experiments for the
probabilistic bounds.

All "for all t" events are estimated on a finite horizon [0, T], which
over-estimates the infinite-horizon bound events (and blow-up counts
under-estimate the blow-up probability), so one-sided verdicts remain
conservative in the detecting direction.  Seeds split from the master seed
per path index, so ensembles are order-independent and reproducible.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from .errors import InvalidC, InvalidParams, NonFiniteField
from .diagnostics import escape_bound
from .grid import Field
from .noise import NoiseSpec, path_seed
from .stepping import RunResult, StepperConfig, StopReason, run_path


class BoundKind(Enum):
    ESCAPE = "escape"
    GLOBAL_WEAK = "global-weak"
    BREAK_SLOPE = "break-slope"
    BREAK_CUBIC = "break-cubic"
    NONE = "none"


def wilson_interval(k: int, n: int, z: float = 1.959964) -> tuple:
    """Wilson 95% confidence interval for a binomial proportion (stable near
    0 and 1, unlike the Wald interval)."""
    if n < 1 or not 0 <= k <= n:
        raise InvalidParams(f"need 0 <= k <= n with n >= 1, got k={k}, n={n}")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class EnsembleSummary:
    n_paths: int
    n_blowup: int
    n_completed: int
    n_nonfinite: int
    p_hat: float
    ci_low: float
    ci_high: float
    bound_value: float = math.nan
    bound_kind: BoundKind = BoundKind.NONE
    stop_records: List[dict] = dc_field(default_factory=list)
    results: List[RunResult] = dc_field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "n_blowup": self.n_blowup,
            "n_completed": self.n_completed,
            "n_nonfinite": self.n_nonfinite,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "bound_value": self.bound_value,
            "bound_kind": self.bound_kind.value,
        }


def _worker_count() -> int:
    raw = os.environ.get("SMCH2_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise InvalidParams(f"SMCH2_THREADS must be an integer, got {raw!r}") from exc
    return os.cpu_count() or 1


def run_ensemble(
    u0: Field,
    g0: Field,
    spec: NoiseSpec,
    cfg: StepperConfig,
    n_paths: int,
    master_seed: int,
    bound_value: float = math.nan,
    bound_kind: BoundKind = BoundKind.NONE,
    keep_results: int = 0,
    **path_kwargs,
) -> EnsembleSummary:
    """Run n_paths independent seeded paths and aggregate stop reasons.

    Paths may run on a thread pool (capped by SMCH2_THREADS); aggregation is
    ordered by path index, so concurrency never changes the summary.  Paths
    that fail numerically are counted as non-finite rather than aborting the
    ensemble.  The first `keep_results` full RunResults are retained.
    """
    if n_paths < 1:
        raise InvalidParams(f"need at least one path, got {n_paths}")
    seeds = [path_seed(master_seed, i) for i in range(n_paths)]

    def one(seed: int) -> Optional[RunResult]:
        try:
            return run_path(u0, g0, spec, cfg, seed, **path_kwargs)
        except (NonFiniteField, FloatingPointError):
            return None

    workers = min(_worker_count(), n_paths)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]

    n_blow = n_done = n_bad = 0
    records = []
    kept = []
    for i, res in enumerate(results):
        if res is None:
            n_bad += 1
            records.append(
                {"index": i, "seed": seeds[i], "stop_reason": "non-finite", "stop_time": math.nan}
            )
            continue
        if res.blew_up():
            n_blow += 1
        elif res.stop_reason is StopReason.COMPLETED:
            n_done += 1
        else:
            n_bad += 1
        records.append(
            {
                "index": i,
                "seed": seeds[i],
                "stop_reason": res.stop_reason.value,
                "stop_time": res.stop_time,
            }
        )
        if len(kept) < keep_results:
            kept.append(res)
    lo, hi = wilson_interval(n_blow, n_paths)
    return EnsembleSummary(
        n_paths=n_paths,
        n_blowup=n_blow,
        n_completed=n_done,
        n_nonfinite=n_bad,
        p_hat=n_blow / n_paths,
        ci_low=lo,
        ci_high=hi,
        bound_value=bound_value,
        bound_kind=bound_kind,
        stop_records=records,
        results=kept,
    )


def escape_experiment(
    alpha_fn: Callable[[float], float],
    lam: float,
    r: float,
    horizon: float,
    dt: float,
    n_paths: int,
    seed: int,
) -> tuple:
    """Estimate P{exp(int alpha dW - int lambda alpha^2 dt) stays <= R on
    [0, horizon]} against the closed-form lower bound 1 - R^(-2 lambda).

    The finite horizon makes the estimate an over-estimate of the bound's
    infinite-horizon event, so p_hat >= bound - sampling error is expected.
    Returns (p_hat, bound).
    """
    if not (lam > 0 and r > 1):
        raise InvalidParams(f"need lambda > 0 and R > 1, got {lam}, {r}")
    if not (dt > 0 and horizon >= dt and n_paths >= 1):
        raise InvalidParams("need dt > 0, horizon >= dt, n_paths >= 1")
    n_steps = int(round(horizon / dt))
    t = dt * np.arange(n_steps)
    a = np.asarray([float(alpha_fn(tm)) for tm in t])
    drift = -lam * a * a * dt
    log_r = math.log(r)
    sd = math.sqrt(dt)
    n_ok = 0
    for i in range(n_paths):
        rng = np.random.Generator(np.random.Philox(key=path_seed(seed, i)))
        x = np.cumsum(a * (sd * rng.standard_normal(n_steps)) + drift)
        if x.max() <= log_r:
            n_ok += 1
    return n_ok / n_paths, escape_bound(lam, r)


def breaking_bound_mc(
    b_fn: Callable[[float], float],
    b_sup: float,
    c: float,
    horizon: float,
    dt: float,
    n_paths: int,
    seed: int,
) -> float:
    """Estimate P{exp(int b dW + int (b_sup - b^2)/2 dt) >= c on [0, horizon]},
    the barrier event whose probability lower-bounds the wave-breaking
    probability (finite horizon makes this an over-estimate)."""
    if not 0.0 < c < 1.0:
        raise InvalidC(f"c must lie in (0, 1), got {c}")
    if not (b_sup > 0 and dt > 0 and horizon >= dt and n_paths >= 1):
        raise InvalidParams("need b_sup > 0, dt > 0, horizon >= dt, n_paths >= 1")
    n_steps = int(round(horizon / dt))
    t = dt * np.arange(n_steps)
    b = np.asarray([float(b_fn(tm)) for tm in t])
    if np.any(b * b > b_sup * (1.0 + 1e-9)):
        raise InvalidParams("b(t)^2 exceeds its declared upper bound b_sup")
    drift = 0.5 * (b_sup - b * b) * dt
    log_c = math.log(c)
    sd = math.sqrt(dt)
    n_ok = 0
    for i in range(n_paths):
        rng = np.random.Generator(np.random.Philox(key=path_seed(seed, i)))
        z = np.cumsum(b * (sd * rng.standard_normal(n_steps)) + drift)
        if z.min() >= log_c:
            n_ok += 1
    return n_ok / n_paths


@dataclass(frozen=True)
class Verdict:
    passed: bool
    p_hat: float
    se: float
    bound: float

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "p_hat": self.p_hat,
            "se": self.se,
            "bound": self.bound,
        }


def compare_blowup_to_bound(summary: EnsembleSummary, bound: float) -> Verdict:
    """One-sided consistency of the blow-up fraction with a lower bound:
    PASS iff p_hat + 3 SE >= bound."""
    p = summary.p_hat
    se = math.sqrt(p * (1.0 - p) / summary.n_paths)
    return Verdict(passed=bool(p + 3.0 * se >= bound), p_hat=p, se=se, bound=bound)
