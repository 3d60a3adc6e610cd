"""Signal/sensor/channel data model and BLUE fusion distortion.

A network snapshot fixes, for each of K sensors, an observation SNR
``gamma`` (signal variance over observation-noise variance) and a channel
SNR ``s`` (channel power gain over channel noise variance, in 1/W).  Each
sensor amplifies-and-forwards its observation with a power budget
``alpha_prime`` (the amplifying factor scaled by the signal variance), and
the fusion center combines the received values with the best linear
unbiased estimator.  This module holds those types plus the closed-form
estimator variance and its explicit matrix-form twin used as a test oracle.

All powers are in watts; dB conversions happen at the config boundary only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import AllPowerZero

#: Observation SNR of a sensor whose observation noise is exactly zero.
#: Stored as IEEE +inf so that 1/gamma terms vanish exactly.
NOISELESS = math.inf


def _check_positive(name: str, value: float, allow_inf: bool = False) -> float:
    value = float(value)
    if math.isnan(value) or value <= 0 or (math.isinf(value) and not allow_inf):
        raise ValueError(f"{name} must be strictly positive and finite, got {value}")
    return value


@dataclass(frozen=True)
class SignalPrior:
    """Second-order prior of the observed signal: its variance, in signal power units."""

    variance_theta: float

    def __post_init__(self):
        object.__setattr__(
            self, "variance_theta", _check_positive("variance_theta", self.variance_theta)
        )


@dataclass(frozen=True)
class SensorSite:
    """One sensor: observation SNR ``gamma`` and channel SNR ``s``.

    ``gamma`` is dimensionless and strictly positive; ``NOISELESS``
    (``math.inf``) marks a sensor with zero observation noise so that the
    1/gamma limit is exact.  ``s`` is in 1/W and may be zero (a channel in a
    deep fade contributes nothing).
    """

    gamma: float
    s: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", _check_positive("gamma", self.gamma, allow_inf=True))
        s = float(self.s)
        if math.isnan(s) or math.isinf(s) or s < 0:
            raise ValueError(f"s must be finite and >= 0, got {s}")
        object.__setattr__(self, "s", s)

    @classmethod
    def noiseless(cls, s: float) -> "SensorSite":
        return cls(gamma=NOISELESS, s=s)

    @property
    def inv_gamma(self) -> float:
        return 0.0 if math.isinf(self.gamma) else 1.0 / self.gamma

    @property
    def merit(self) -> float:
        """Combined channel/observation quality s / (1 + 1/gamma)."""
        return self.s / (1.0 + self.inv_gamma)


def merit(sensor: SensorSite) -> float:
    """Figure of merit s / (1 + 1/gamma); equals s itself for a noiseless sensor."""
    return sensor.merit


@dataclass(frozen=True)
class Snapshot:
    """One realization of the network: a signal prior plus K sensor sites.

    Sensor order is identity: ranking and allocation results always refer
    back to these indices.
    """

    prior: SignalPrior
    sensors: tuple[SensorSite, ...]

    def __post_init__(self):
        sensors = tuple(self.sensors)
        if len(sensors) < 1:
            raise ValueError("a snapshot needs at least one sensor")
        if not all(isinstance(site, SensorSite) for site in sensors):
            raise TypeError("sensors must be SensorSite instances")
        object.__setattr__(self, "sensors", sensors)

    @classmethod
    def from_arrays(
        cls, sigma_theta_sq: float, gamma: Iterable[float], s: Iterable[float]
    ) -> "Snapshot":
        gamma = list(gamma)
        s = list(s)
        if len(gamma) != len(s):
            raise ValueError("gamma and s must have equal length")
        return cls(
            prior=SignalPrior(sigma_theta_sq),
            sensors=tuple(SensorSite(g, v) for g, v in zip(gamma, s)),
        )

    @property
    def k(self) -> int:
        return len(self.sensors)

    @cached_property
    def gamma(self) -> np.ndarray:
        return np.array([site.gamma for site in self.sensors])

    @cached_property
    def inv_gamma(self) -> np.ndarray:
        return np.array([site.inv_gamma for site in self.sensors])

    @cached_property
    def s(self) -> np.ndarray:
        return np.array([site.s for site in self.sensors])

    @cached_property
    def eta(self) -> np.ndarray:
        return self.s / (1.0 + self.inv_gamma)


@dataclass(frozen=True)
class Allocation:
    """Per-sensor amplification budgets alpha'_k (power units), all >= 0."""

    alpha_prime: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(a) for a in self.alpha_prime)
        if any(math.isnan(a) or math.isinf(a) or a < 0 for a in values):
            raise ValueError("alpha_prime entries must be finite and >= 0")
        object.__setattr__(self, "alpha_prime", values)

    def __len__(self) -> int:
        return len(self.alpha_prime)

    @cached_property
    def as_array(self) -> np.ndarray:
        return np.array(self.alpha_prime)

    def transmit_powers(self, snapshot: Snapshot) -> np.ndarray:
        """Per-sensor transmit powers P_k = alpha'_k (1 + 1/gamma_k), watts."""
        _check_length(snapshot, self)
        return self.as_array * (1.0 + snapshot.inv_gamma)

    def total_power(self, snapshot: Snapshot) -> float:
        return float(np.sum(self.transmit_powers(snapshot)))


def _check_length(snapshot: Snapshot, allocation: Allocation) -> None:
    if len(allocation) != snapshot.k:
        raise ValueError(
            f"allocation length {len(allocation)} does not match K={snapshot.k}"
        )


def transmit_power(alpha_prime: float, gamma: float) -> float:
    """Average transmit power alpha' (1 + 1/gamma) spent by one sensor."""
    if alpha_prime < 0:
        raise ValueError("alpha_prime must be >= 0")
    inv_gamma = 0.0 if math.isinf(gamma) else 1.0 / _check_positive("gamma", gamma, True)
    return alpha_prime * (1.0 + inv_gamma)


def signal_contributions(snapshot: Snapshot, allocation: Allocation) -> np.ndarray:
    """Per-sensor terms r_k = alpha' s / (alpha' s / gamma + 1) of the fused SNR.

    Each r_k lives in [0, gamma_k); sensors with alpha'=0 or s=0 contribute 0.
    """
    _check_length(snapshot, allocation)
    x = allocation.as_array * snapshot.s
    return x / (snapshot.inv_gamma * x + 1.0)


def blue_mse(snapshot: Snapshot, allocation: Allocation) -> float:
    """Variance of the BLUE fusion estimate, in the units of the signal variance.

    Raises AllPowerZero when every sensor contributes zero signal power, so
    callers (e.g. Monte Carlo loops) decide deliberately how to count the
    undefined/infinite-distortion case.
    """
    total = float(np.sum(signal_contributions(snapshot, allocation)))
    if total == 0.0:
        raise AllPowerZero("no sensor carries signal power; distortion is unbounded")
    return snapshot.prior.variance_theta / total


def blue_mse_matrix_oracle(snapshot: Snapshot, allocation: Allocation) -> float:
    """BLUE variance computed from the explicit gain vector and noise matrix.

    Decomposes each composed channel SNR with a unit channel-noise
    convention (xi^2 = 1, hence g = s), assembles the received-signal gain
    vector h and the diagonal noise covariance R, and evaluates
    (h^T R^-1 h)^-1 through a dense linear solve.  Kept deliberately on a
    different numerical path from ``blue_mse``; used as a test oracle.
    """
    _check_length(snapshot, allocation)
    sigma_theta_sq = snapshot.prior.variance_theta
    amp = allocation.as_array / sigma_theta_sq  # alpha_k
    g = snapshot.s  # channel power gain under xi^2 = 1
    obs_var = sigma_theta_sq * snapshot.inv_gamma  # sigma_k^2 (0 for noiseless)
    h = np.sqrt(amp * g)
    noise = np.diag(obs_var * amp * g + 1.0)
    quad = float(h @ np.linalg.solve(noise, h))
    if quad == 0.0:
        raise AllPowerZero("no sensor carries signal power; distortion is unbounded")
    return 1.0 / quad


def equal_allocation(snapshot: Snapshot, total_power: float) -> Allocation:
    """Split the budget so every sensor transmits exactly total_power / K watts."""
    if total_power < 0:
        raise ValueError("total_power must be >= 0")
    share = total_power / snapshot.k
    return Allocation(tuple(share / (1.0 + site.inv_gamma) for site in snapshot.sensors))


def equal_power_mse(snapshot: Snapshot, total_power: float) -> float:
    """BLUE variance under the equal-power split, evaluated in closed form."""
    if not total_power > 0:
        raise ValueError("total_power must be > 0")
    k = snapshot.k
    ps = total_power * snapshot.s
    total = float(np.sum(ps / (snapshot.inv_gamma * ps + k * (1.0 + snapshot.inv_gamma))))
    if total == 0.0:
        raise AllPowerZero("no sensor carries signal power; distortion is unbounded")
    return snapshot.prior.variance_theta / total


def distortion_floor(snapshot: Snapshot) -> float:
    """Infimum of achievable distortion: signal variance over the sum of usable gammas.

    Only sensors with a live channel (s > 0) can contribute; the floor is
    approached, never attained, as their budgets grow without bound.
    """
    usable = snapshot.s > 0
    total = float(np.sum(snapshot.gamma[usable]))
    if total == 0.0:
        return math.inf
    return snapshot.prior.variance_theta / total
