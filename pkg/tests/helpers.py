"""Shared fixtures-by-hand: random instances and independent oracles."""

from __future__ import annotations

import numpy as np

import fadefusion as ff


def random_snapshot(rng: np.random.Generator, k: int | None = None, kmax: int = 8) -> ff.Snapshot:
    """Moderate-condition random instance: gamma in [0.5, 200], s in [0.05, 20]."""
    if k is None:
        k = int(rng.integers(1, kmax + 1))
    gamma = 10 ** rng.uniform(-0.3, 2.3, k)
    s = 10 ** rng.uniform(-1.3, 1.3, k)
    return ff.Snapshot.from_arrays(1.0, gamma, s)


def matrix_mse_inline(snapshot: ff.Snapshot, allocation: ff.Allocation) -> float:
    """Test-local BLUE variance from first principles (gain vector + noise matrix)."""
    sig = snapshot.prior.variance_theta
    amp = allocation.as_array / sig
    g = snapshot.s  # unit channel-noise convention
    obs_var = sig * snapshot.inv_gamma
    h = np.sqrt(amp * g)
    big_r = np.diag(obs_var * amp * g + 1.0)
    quad = float(h @ np.linalg.inv(big_r) @ h)
    return np.inf if quad == 0 else 1.0 / quad


def min_power_dual_oracle(snapshot: ff.Snapshot, d0: float, iters: int = 300):
    """Min-power totals by direct bisection on the dual multiplier.

    Independent of the closed form's prefix scan: for a multiplier lam the
    per-sensor contribution is r(lam) = gamma * (1 - (lam*eta)**-0.5)+, and
    lam is bisected until the contributions sum to the required total.
    Returns (alpha, total_power).
    """
    required = snapshot.prior.variance_theta / d0
    eta, gamma, s = snapshot.eta, snapshot.gamma, snapshot.s
    usable = eta > 0

    def r_of(lam: float) -> np.ndarray:
        with np.errstate(divide="ignore"):
            raw = gamma * np.maximum(1.0 - 1.0 / np.sqrt(lam * np.where(usable, eta, 1.0)), 0.0)
        return np.where(usable, raw, 0.0)

    hi = 1.0
    while r_of(hi).sum() < required:
        hi *= 2.0
        assert hi < 1e300, "oracle bracket failed; instance infeasible?"
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if r_of(mid).sum() < required:
            lo = mid
        else:
            hi = mid
    r = r_of(hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(r > 0, r * gamma / (s * (gamma - r)), 0.0)
    total = float(np.sum(alpha * (1.0 + snapshot.inv_gamma)))
    return alpha, total


def l2_grid_oracle(snapshot: ff.Snapshot, d0: float, n_grid: int = 2001) -> float:
    """Best sum of squared powers on a dense grid of the constraint surface.

    K = 2 or 3 only.  The constraint is tight at the optimum (the objective
    grows with every contribution), so the grid walks sum(r) = required.
    Returns the smallest grid value of sum P^2 (an upper bound on the true
    optimum within grid resolution).
    """
    k = snapshot.k
    assert k in (2, 3)
    required = snapshot.prior.variance_theta / d0
    gamma, s = snapshot.gamma, snapshot.s
    inv_gamma = snapshot.inv_gamma

    def sum_sq(r: np.ndarray) -> float:
        if np.any(r < 0) or np.any(r >= gamma) or np.any((r > 0) & (s == 0)):
            return np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(r > 0, r * gamma / (s * (gamma - r)), 0.0)
        p = alpha * (1.0 + inv_gamma)
        return float(np.sum(p * p))

    best = np.inf
    grid0 = np.linspace(0.0, min(gamma[0] * (1 - 1e-9), required), n_grid)
    if k == 2:
        for r0 in grid0:
            best = min(best, sum_sq(np.array([r0, required - r0])))
    else:
        for r0 in grid0[:: max(1, n_grid // 201)]:
            rest = required - r0
            grid1 = np.linspace(0.0, min(gamma[1] * (1 - 1e-9), rest), 201)
            for r1 in grid1:
                best = min(best, sum_sq(np.array([r0, r1, rest - r1])))
    return best
