"""Monte Carlo estimators and analytical checks for outage and diversity.

Estimation outage is the event that the fused distortion of a random
snapshot exceeds a threshold.  This module estimates outage curves and
related averages under three transmit policies (equal split, optimal, and
optimal with per-sensor caps), evaluates the large-deviation rate function
that governs how outage decays with the sensor count, and provides the
bound/sandwich checks used to validate those claims empirically.

Trials are keyed by (seed, trial index) and processed in fixed-size chunks,
so every estimate is bit-identical for a given seed regardless of how many
worker processes execute the chunks.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import ClassVar, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .allocation import (
    capped_mse_batch,
    equal_power_mse_batch,
    min_power_total_batch,
    sum_power_mse_batch,
)
from .channel import NetworkModel, sample_batch
from .errors import ConvergenceFailure, DivergentMGF, InsufficientData
from .model import Snapshot, equal_allocation, signal_contributions

#: Trials per work unit.  Fixed independently of the worker count so that
#: floating-point reduction order (and hence every digit of the output)
#: does not depend on parallelism.
CHUNK_TRIALS = 1 << 16


# ---------------------------------------------------------------------------
# Transmit policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EqualPolicy:
    """Every sensor transmits the same power."""

    label: ClassVar[str] = "equal"


@dataclass(frozen=True)
class OptimalPolicy:
    """Distortion-minimizing allocation under the sum power budget."""

    label: ClassVar[str] = "optimal"


@dataclass(frozen=True)
class CappedPolicy:
    """Optimal allocation with a uniform per-sensor transmit cap.

    The cap scales with the budget: P_max = cap_scale * P_tot / K.
    """

    cap_scale: float = 1.5
    label: ClassVar[str] = "capped"

    def __post_init__(self):
        if not self.cap_scale > 0:
            raise ValueError("cap_scale must be > 0")


Policy = Union[EqualPolicy, OptimalPolicy, CappedPolicy]


def _policy_mse(
    model: NetworkModel, k: int, policy: Policy, p_tot: float, seed: int, start: int, n: int
) -> np.ndarray:
    """Per-trial fused distortion for one chunk; +inf marks zero-power trials."""
    s, gamma = sample_batch(model, k, seed, start, n)
    sigma_sq = model.prior.variance_theta
    if isinstance(policy, EqualPolicy):
        return equal_power_mse_batch(gamma, s, sigma_sq, p_tot)
    if isinstance(policy, OptimalPolicy):
        return sum_power_mse_batch(gamma, s, sigma_sq, p_tot)[0]
    if isinstance(policy, CappedPolicy):
        return capped_mse_batch(gamma, s, sigma_sq, p_tot, policy.cap_scale * p_tot / k)
    raise TypeError(f"unknown policy {policy!r}")


# ---------------------------------------------------------------------------
# Chunked (optionally multiprocess) trial execution
# ---------------------------------------------------------------------------


def _chunk_ranges(trials: int) -> list[tuple[int, int]]:
    return [(start, min(CHUNK_TRIALS, trials - start)) for start in range(0, trials, CHUNK_TRIALS)]


def _map_chunks(worker, payload: tuple, trials: int, workers: int) -> list:
    tasks = [(payload, start, n) for start, n in _chunk_ranges(trials)]
    if workers <= 1 or len(tasks) == 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, tasks))


def _outage_worker(task) -> int:
    (model, k, policy, d0, p_tot, seed), start, n = task
    mse = _policy_mse(model, k, policy, p_tot, seed, start, n)
    return int(np.count_nonzero(mse > d0))


def _distortion_worker(task) -> tuple[float, int, int]:
    (model, k, policy, p_tot, seed), start, n = task
    mse = _policy_mse(model, k, policy, p_tot, seed, start, n)
    finite = np.isfinite(mse)
    return float(mse[finite].sum()), int(finite.sum()), int(n - finite.sum())


def _active_worker(task) -> int:
    (model, k, p_tot, seed), start, n = task
    s, gamma = sample_batch(model, k, seed, start, n)
    _, k1 = sum_power_mse_batch(gamma, s, model.prior.variance_theta, p_tot)
    return int(k1.sum())


def _min_power_worker(task) -> tuple[float, float, int, int]:
    (model, k, d0, seed), start, n = task
    s, gamma = sample_batch(model, k, seed, start, n)
    sigma_sq = model.prior.variance_theta
    optimal, _, feasible = min_power_total_batch(gamma, s, sigma_sq, d0)
    equal = _equal_budget_batch(gamma[feasible], s[feasible], sigma_sq, d0)
    n_feasible = int(feasible.sum())
    return float(optimal[feasible].sum()), float(equal.sum()), n_feasible, int(n - n_feasible)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutageEstimate:
    """Monte Carlo outage probability with its binomial confidence half-width."""

    count: int
    trials: int

    @property
    def probability(self) -> float:
        return self.count / self.trials

    @property
    def half_width_95(self) -> float:
        p = self.probability
        return 1.96 * math.sqrt(p * (1.0 - p) / self.trials)


@dataclass(frozen=True)
class AverageDistortion:
    """Sample-mean distortion; zero-power trials are excluded and counted."""

    mean: float
    excluded: int
    trials: int


@dataclass(frozen=True)
class MinPowerSummary:
    """Mean total power of the minimum-power allocation vs the equal-power baseline.

    The baseline is the smallest uniform budget meeting the target for each
    snapshot.  Infeasible snapshots are excluded from both means and counted.
    """

    mean_optimal_w: float
    mean_equal_w: float
    infeasible: int
    trials: int


def _validate_run(trials: int, d0: Optional[float] = None) -> None:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if d0 is not None and not d0 > 0:
        raise ValueError("the distortion threshold must be > 0")


def _deterministic_floor(model: NetworkModel, k: int) -> Optional[float]:
    """Distortion floor when it does not depend on the random draws."""
    if model.observation.kind != "fixed":
        return None
    sigma_sq = np.asarray(model.observation.sigma_sq, dtype=float)
    gamma = model.prior.variance_theta / (
        np.full(k, float(sigma_sq)) if sigma_sq.ndim == 0 else sigma_sq
    )
    return model.prior.variance_theta / float(gamma.sum())


def outage_probability(
    model: NetworkModel,
    k: int,
    policy: Policy,
    d0: float,
    p_tot: float,
    trials: int,
    seed: int,
    *,
    workers: int = 1,
) -> OutageEstimate:
    """Fraction of random snapshots whose fused distortion exceeds ``d0``.

    Zero-power trials count as outage.  A threshold at or below the
    deterministic distortion floor cannot be met by any allocation; that
    case returns certain outage immediately with a warning.
    """
    _validate_run(trials, d0)
    floor = _deterministic_floor(model, k)
    if floor is not None and d0 <= floor:
        warnings.warn(
            f"threshold {d0:.6g} is at or below the distortion floor {floor:.6g}; "
            "outage is 1 for every realization",
            stacklevel=2,
        )
        return OutageEstimate(count=trials, trials=trials)
    counts = _map_chunks(_outage_worker, (model, k, policy, d0, p_tot, seed), trials, workers)
    return OutageEstimate(count=sum(counts), trials=trials)


def average_distortion(
    model: NetworkModel,
    k: int,
    policy: Policy,
    p_tot: float,
    trials: int,
    seed: int,
    *,
    workers: int = 1,
) -> AverageDistortion:
    """Sample-mean fused distortion over random snapshots."""
    _validate_run(trials)
    parts = _map_chunks(_distortion_worker, (model, k, policy, p_tot, seed), trials, workers)
    total = sum(part[0] for part in parts)
    finite = sum(part[1] for part in parts)
    excluded = sum(part[2] for part in parts)
    mean = total / finite if finite else math.nan
    return AverageDistortion(mean=mean, excluded=excluded, trials=trials)


def active_fraction(
    model: NetworkModel, k: int, p_tot: float, trials: int, seed: int, *, workers: int = 1
) -> float:
    """Mean fraction of sensors kept on by the optimal allocation."""
    _validate_run(trials)
    totals = _map_chunks(_active_worker, (model, k, p_tot, seed), trials, workers)
    return sum(totals) / (trials * k)


def average_min_power(
    model: NetworkModel, k: int, d0: float, trials: int, seed: int, *, workers: int = 1
) -> MinPowerSummary:
    """Mean total power needed to hit the distortion target, optimal vs equal split."""
    _validate_run(trials, d0)
    parts = _map_chunks(_min_power_worker, (model, k, d0, seed), trials, workers)
    sum_opt = sum(part[0] for part in parts)
    sum_eq = sum(part[1] for part in parts)
    feasible = sum(part[2] for part in parts)
    infeasible = sum(part[3] for part in parts)
    if feasible == 0:
        return MinPowerSummary(math.nan, math.nan, infeasible, trials)
    return MinPowerSummary(sum_opt / feasible, sum_eq / feasible, infeasible, trials)


def _equal_budget_batch(
    gamma: np.ndarray, s: np.ndarray, sigma_theta_sq: float, d0: float
) -> np.ndarray:
    """Smallest uniform budget meeting the target, per row (rows must be feasible).

    The fused SNR total is strictly increasing in the budget, so a doubling
    bracket plus bisection converges for every feasible row.
    """
    n, k = gamma.shape
    if n == 0:
        return np.zeros(0)
    required = sigma_theta_sq / d0
    inv_gamma = 1.0 / gamma
    denom = k * (1.0 + inv_gamma)

    def total_r(p: np.ndarray) -> np.ndarray:
        ps = p[:, None] * s
        return np.sum(ps / (inv_gamma * ps + denom), axis=1)

    hi = np.ones(n)
    for _ in range(4000):
        unmet = total_r(hi) < required
        if not unmet.any():
            break
        hi[unmet] *= 4.0
    else:
        raise ConvergenceFailure("equal-power budget bracket did not close")

    lo = np.zeros(n)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        met = total_r(mid) >= required
        hi = np.where(met, mid, hi)
        lo = np.where(met, lo, mid)
    return hi


# ---------------------------------------------------------------------------
# Distortion floor of the large-network limit
# ---------------------------------------------------------------------------


def d_infinity(model: NetworkModel, p_tot: float, *, k: int = 1) -> float:
    """Large-K limit of the equal-power distortion at a fixed total budget.

    Equals the signal variance over (budget times the expected sensor
    merit).  The merit expectation is exact for fixed observation variances
    and a fixed-seed 10^6-draw estimate otherwise; see
    :func:`fadefusion.channel.mean_merit`.
    """
    from .channel import mean_merit

    if not p_tot > 0:
        raise ValueError("p_tot must be > 0")
    return model.prior.variance_theta / (p_tot * mean_merit(model, k))


# ---------------------------------------------------------------------------
# Rate functions and tail bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RateFunctionQuery:
    """A tail point ``a`` plus the distribution whose sample mean is bounded.

    Exactly one of ``mean_b`` (exponential distribution with that mean) or
    ``samples`` (an empirical sample set) must be given.
    """

    a: float
    mean_b: Optional[float] = None
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be > 0")
        if (self.mean_b is None) == (self.samples is None):
            raise ValueError("provide exactly one of mean_b or samples")
        if self.mean_b is not None and not self.mean_b > 0:
            raise ValueError("mean_b must be > 0")
        if self.samples is not None:
            samples = np.asarray(self.samples, dtype=float)
            if samples.size < 2:
                raise ValueError("need at least two samples")
            object.__setattr__(self, "samples", samples)


def rate_function_exponential(a: float, mean_b: float) -> float:
    """Closed-form rate function of an exponential distribution with mean ``mean_b``."""
    if not (a > 0 and mean_b > 0):
        raise ValueError("a and mean_b must be > 0")
    ratio = a / mean_b
    return ratio - math.log(ratio) - 1.0


def rate_function_numeric(
    query: RateFunctionQuery, *, theta_tol: float = 1e-12, full_output: bool = False
):
    """Rate function by maximizing theta*a - log M(theta) over the MGF domain.

    The maximand is concave, so its derivative is decreasing and the
    maximizer is located by bracketed root finding to ``theta_tol``.
    Raises DivergentMGF when the supremum runs off to the domain boundary
    (for empirical samples: ``a`` outside the open sample range).
    """
    a = query.a
    if query.mean_b is not None:
        b = query.mean_b
        mean = b
        domain_sup = 1.0 / b

        def slope(theta: float) -> float:
            return a - b / (1.0 - b * theta)

        def log_mgf(theta: float) -> float:
            return -math.log1p(-b * theta)

    else:
        x = query.samples
        mean = float(np.mean(x))
        domain_sup = math.inf
        if a >= float(np.max(x)) or a <= float(np.min(x)):
            raise DivergentMGF(
                "supremum attained at the MGF domain boundary; "
                "a lies outside the open sample range"
            )

        def slope(theta: float) -> float:
            weights = theta * x
            weights = weights - np.max(weights)
            w = np.exp(weights)
            return a - float((x * w).sum() / w.sum())

        def log_mgf(theta: float) -> float:
            return float(logsumexp(theta * x) - math.log(x.size))

    if a == mean:
        return (0.0, 0.0) if full_output else 0.0

    if a > mean:  # upper tail: maximizer at positive theta
        lo = 0.0
        if math.isfinite(domain_sup):
            for j in range(1, 200):
                hi = domain_sup * (1.0 - 2.0**-j)
                if slope(hi) < 0:
                    break
                lo = hi
            else:
                raise DivergentMGF("no interior maximizer below the MGF domain boundary")
        else:
            hi = 1.0
            for _ in range(400):
                if slope(hi) < 0:
                    break
                lo, hi = hi, hi * 2.0
            else:
                raise DivergentMGF("slope never turned negative; supremum diverges")
    else:  # lower tail: maximizer at negative theta
        hi = 0.0
        lo = -1.0
        for _ in range(400):
            if slope(lo) > 0:
                break
            hi, lo = lo, lo * 2.0
        else:
            raise DivergentMGF("slope never turned positive; supremum diverges")

    theta_star = brentq(slope, lo, hi, xtol=theta_tol)
    value = max(theta_star * a - log_mgf(theta_star), 0.0)
    return (value, theta_star) if full_output else value


def chernoff_bound(k: int, rate_value: float) -> float:
    """Upper bound exp(-K * I) on the tail probability of a K-sample mean."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if rate_value < 0:
        raise ValueError("rate_value must be >= 0")
    return math.exp(-k * rate_value)


# ---------------------------------------------------------------------------
# Law-of-large-numbers sandwich for the equal-power fused SNR
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SandwichCheck:
    """Bounds L <= fused SNR <= U for the equal-power split of one snapshot."""

    lower: float
    upper: float
    fused_snr: float
    ok: bool

    @property
    def lower_margin(self) -> float:
        return self.fused_snr - self.lower

    @property
    def upper_margin(self) -> float:
        return self.upper - self.fused_snr


def sandwich_check(snapshot: Snapshot, p_tot: float) -> SandwichCheck:
    """Check the linearization bounds on the equal-power fused SNR.

    The upper bound drops the self-interference denominator term; the lower
    bound subtracts its worst case.  Both collapse onto the exact value for
    noiseless sensors, whose correction term carries a 1/gamma factor.
    """
    if not p_tot > 0:
        raise ValueError("p_tot must be > 0")
    k = snapshot.k
    upper = p_tot / k * float(np.sum(snapshot.eta))
    correction = (p_tot / k) ** 2 * float(np.sum(snapshot.inv_gamma * snapshot.s**2))
    lower = upper - correction
    fused = float(np.sum(signal_contributions(snapshot, equal_allocation(snapshot, p_tot))))
    tol = 1e-12 * max(1.0, abs(upper))
    ok = (fused >= lower - tol) and (fused <= upper + tol)
    return SandwichCheck(lower=lower, upper=upper, fused_snr=fused, ok=ok)


# ---------------------------------------------------------------------------
# Diversity order from outage curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through (log10 budget, -log10 outage) points."""

    points: tuple[tuple[float, float], ...]
    slope: float
    intercept: float
    residual: float


def diversity_slope(
    p_tot: Sequence[float],
    outage: Sequence[float],
    *,
    trials: Optional[int] = None,
    min_count: int = 30,
    max_outage: float = 0.3,
) -> SlopeFit:
    """Fit the log-log slope of an outage-vs-budget curve.

    Only points inside the fit window enter the regression: outage at most
    ``max_outage`` (past the pre-asymptotic knee) and, when ``trials`` is
    given, at least ``min_count / trials`` (enough positive counts to trust
    the estimate).  Raises InsufficientData with fewer than two usable
    points.
    """
    p = np.asarray(p_tot, dtype=float)
    q = np.asarray(outage, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p_tot and outage must have equal length")
    keep = (q > 0) & (q <= max_outage) & (p > 0)
    if trials is not None:
        keep &= q >= min_count / trials
    if int(keep.sum()) < 2:
        raise InsufficientData(
            f"only {int(keep.sum())} points inside the fit window; need at least 2"
        )
    x = np.log10(p[keep])
    y = -np.log10(q[keep])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((slope * x + intercept - y) ** 2)))
    return SlopeFit(
        points=tuple((float(a), float(b)) for a, b in zip(x, y)),
        slope=float(slope),
        intercept=float(intercept),
        residual=residual,
    )


__all__ = [
    "CHUNK_TRIALS",
    "EqualPolicy",
    "OptimalPolicy",
    "CappedPolicy",
    "Policy",
    "OutageEstimate",
    "AverageDistortion",
    "MinPowerSummary",
    "RateFunctionQuery",
    "SandwichCheck",
    "SlopeFit",
    "outage_probability",
    "average_distortion",
    "active_fraction",
    "average_min_power",
    "d_infinity",
    "rate_function_exponential",
    "rate_function_numeric",
    "chernoff_bound",
    "sandwich_check",
    "diversity_slope",
]
