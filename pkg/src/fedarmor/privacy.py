"""Parameter clipping, sensitivity arithmetic, and Gaussian noise channels.

The uplink releases each client's full trained parameter vector, clipped
to L2 norm C. With every local dataset at least m examples, the uplink
sensitivity is 2C/m, and the noise scale for L exposures at privacy
budget epsilon is c * L * (2C/m) / epsilon, with the standard Gaussian-
mechanism multiplier c = sqrt(2 ln(1.25/delta)) unless overridden.

This module implements the calibration arithmetic as specified; it does
not attempt to certify the (epsilon, delta) guarantee itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "PrivacySpec",
    "NoiseChannel",
    "clip_params",
    "uplink_sensitivity",
    "noise_scale",
    "default_noise_multiplier",
    "gaussian_perturb",
]


def clip_params(w: np.ndarray, clip_bound: float) -> np.ndarray:
    """Rescale w onto the L2 ball of radius clip_bound; inside it, identity."""
    if clip_bound <= 0:
        raise DomainError("clip bound must be positive")
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm <= clip_bound:
        return w.copy()
    return w * (clip_bound / norm)


def uplink_sensitivity(clip_bound: float, min_dataset_size: int) -> float:
    """Worst-case uplink change between neighboring datasets: 2C/m."""
    if clip_bound <= 0:
        raise DomainError("clip bound must be positive")
    if min_dataset_size < 1:
        raise DomainError("minimum dataset size must be at least 1")
    return 2.0 * clip_bound / min_dataset_size


def noise_scale(multiplier: float, exposures: int, sensitivity: float, epsilon_dp: float) -> float:
    """Gaussian sigma for `exposures` releases: c * L * sensitivity / epsilon."""
    if epsilon_dp <= 0:
        raise DomainError("epsilon_dp must be positive")
    if multiplier <= 0 or exposures < 1 or sensitivity <= 0:
        raise DomainError("multiplier, exposures and sensitivity must be positive")
    return multiplier * exposures * sensitivity / epsilon_dp


def default_noise_multiplier(delta_dp: float) -> float:
    """Standard Gaussian-mechanism constant sqrt(2 ln(1.25/delta))."""
    if not 0.0 < delta_dp < 1.0:
        raise DomainError("delta_dp must lie in (0, 1)")
    return math.sqrt(2.0 * math.log(1.25 / delta_dp))


@dataclass(frozen=True)
class PrivacySpec:
    """DP budget and channel calibration inputs.

    sigma_down_override replaces the derived downlink scale when set; the
    downlink otherwise reuses the uplink calibration (the downlink
    sensitivity is taken equal to the uplink one).
    """

    epsilon_dp: float
    delta_dp: float
    clip_bound: float
    min_dataset_size: int
    exposures: int = 1
    noise_multiplier: float | None = None
    sigma_down_override: float | None = None

    def __post_init__(self):
        if self.epsilon_dp <= 0:
            raise DomainError("epsilon_dp must be positive")
        if not 0.0 < self.delta_dp < 1.0:
            raise DomainError("delta_dp must lie in (0, 1)")
        if self.clip_bound <= 0:
            raise DomainError("clip_bound must be positive")
        if self.min_dataset_size < 1:
            raise DomainError("min_dataset_size must be at least 1")
        if self.exposures < 1:
            raise DomainError("exposures must be at least 1")
        if self.noise_multiplier is None:
            object.__setattr__(self, "noise_multiplier", default_noise_multiplier(self.delta_dp))
        elif self.noise_multiplier <= 0:
            raise DomainError("noise_multiplier must be positive")
        if self.sigma_down_override is not None and self.sigma_down_override < 0:
            raise DomainError("sigma_down_override must be non-negative")

    @property
    def sensitivity_up(self) -> float:
        return uplink_sensitivity(self.clip_bound, self.min_dataset_size)

    @property
    def sigma_up(self) -> float:
        return noise_scale(self.noise_multiplier, self.exposures, self.sensitivity_up, self.epsilon_dp)

    @property
    def sigma_down(self) -> float:
        if self.sigma_down_override is not None:
            return self.sigma_down_override
        return noise_scale(self.noise_multiplier, self.exposures, self.sensitivity_up, self.epsilon_dp)


@dataclass(frozen=True)
class NoiseChannel:
    """A Gaussian N(0, sigma^2) link fed by its own derived rng stream."""

    sigma: float
    rng: np.random.Generator

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")


def gaussian_perturb(w: np.ndarray, channel: NoiseChannel) -> np.ndarray:
    """w plus i.i.d. N(0, sigma^2) per coordinate; sigma=0 is the identity."""
    w = np.asarray(w, dtype=np.float64)
    if channel.sigma == 0.0:
        return w.copy()
    return w + channel.rng.normal(0.0, channel.sigma, size=w.shape)
