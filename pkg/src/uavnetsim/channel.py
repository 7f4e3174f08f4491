"""Received-power models and the threshold delivery abstraction.

``friis`` is deterministic free-space propagation. ``nakagami`` uses log-distance
mean path loss, anchored to the free-space value at 1 m, times a unit-mean
gamma power fade of shape ``m``. A frame is delivered when its instantaneous
received power reaches the receiver sensitivity; there is no contention model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
MODELS = ("friis", "nakagami")


class ChannelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    model: str = "friis"
    tx_power: float = 20.0  # dBm, 100 mW
    frequency: float = 2.4e9
    sensitivity: float = -83.0
    path_loss_exponent: float = 2.75
    nakagami_m: float = 2.0
    phy_bitrate: float = 24e6

    def __post_init__(self):
        if self.model not in MODELS:
            raise ChannelConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if not self.frequency > 0:
            raise ChannelConfigError("frequency must be > 0")
        if self.model == "nakagami" and self.path_loss_exponent < 2:
            raise ChannelConfigError("path_loss_exponent must be >= 2 for nakagami")
        if self.nakagami_m < 0.5:
            raise ChannelConfigError("nakagami_m must be >= 0.5")
        if not self.phy_bitrate > 0:
            raise ChannelConfigError("phy_bitrate must be > 0")

    @property
    def reference_loss(self) -> float:
        """Free-space loss at 1 m in dB."""
        return 20.0 * math.log10(4.0 * math.pi * self.frequency / SPEED_OF_LIGHT)

    @property
    def exponent(self) -> float:
        return 2.0 if self.model == "friis" else self.path_loss_exponent


def _check_distance(d: float) -> None:
    if not d > 0:
        raise ValueError(f"distance must be > 0, got {d}")


def friis_rx_power(params: ChannelParams, d: float) -> float:
    _check_distance(d)
    return params.tx_power - 20.0 * math.log10(4.0 * math.pi * d * params.frequency / SPEED_OF_LIGHT)


def mean_rx_power(params: ChannelParams, d: float) -> float:
    """Mean received power in dBm under the active model."""
    _check_distance(d)
    if params.model == "friis":
        return friis_rx_power(params, d)
    return params.tx_power - params.reference_loss - 10.0 * params.path_loss_exponent * math.log10(d)


def nakagami_fade(params: ChannelParams, rng: np.random.Generator, size=None):
    m = params.nakagami_m
    return rng.gamma(m, 1.0 / m, size)


def nakagami_rx_power(params: ChannelParams, d: float, rng: np.random.Generator) -> float:
    _check_distance(d)
    mean_dbm = params.tx_power - params.reference_loss - 10.0 * params.path_loss_exponent * math.log10(d)
    fade = float(nakagami_fade(params, rng))
    if fade <= 0.0:
        return -math.inf
    return mean_dbm + 10.0 * math.log10(fade)


def max_range(params: ChannelParams) -> float:
    """Distance at which the mean received power equals the sensitivity."""
    budget = params.tx_power - params.reference_loss - params.sensitivity
    if budget <= 0:
        raise ChannelConfigError(
            "sensitivity must be below tx_power minus the 1 m loss "
            f"({params.tx_power - params.reference_loss:.2f} dBm)")
    return 10.0 ** (budget / (10.0 * params.exponent))


def fade_threshold(params: ChannelParams, d: float) -> float:
    """Smallest unit-mean fade that still reaches the sensitivity at ``d``."""
    return 10.0 ** ((params.sensitivity - mean_rx_power(params, d)) / 10.0)


def delivered(params: ChannelParams, d: float, rng: np.random.Generator | None = None) -> bool:
    _check_distance(d)
    if params.model == "friis":
        return friis_rx_power(params, d) >= params.sensitivity
    return float(nakagami_fade(params, rng)) >= fade_threshold(params, d)


class LinkBudget:
    """Vectorized delivery decisions for a fixed channel configuration."""

    def __init__(self, params: ChannelParams):
        self.params = params
        self.d_max = max_range(params)
        self._log_budget = (params.tx_power - params.reference_loss - params.sensitivity) / 10.0
        self._exp = params.exponent

    def thresholds(self, dist: np.ndarray) -> np.ndarray:
        """Per-link fade thresholds; Friis links are 0 (always) or inf (never)."""
        dist = np.maximum(dist, 1e-9)
        if self.params.model == "friis":
            rx = self.params.tx_power - 20.0 * np.log10(
                4.0 * np.pi * dist * self.params.frequency / SPEED_OF_LIGHT)
            return np.where(rx >= self.params.sensitivity, 0.0, np.inf)
        return 10.0 ** (self._exp * np.log10(dist) - self._log_budget)

    def draw(self, thresholds: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One independent delivery decision per entry of ``thresholds``."""
        if self.params.model == "friis":
            return thresholds == 0.0
        return nakagami_fade(self.params, rng, thresholds.shape) >= thresholds

    def draw_one(self, threshold: float, rng: np.random.Generator) -> bool:
        if self.params.model == "friis":
            return threshold == 0.0
        return float(nakagami_fade(self.params, rng)) >= threshold

    def serialization_delay(self, size_bytes: int) -> float:
        return size_bytes * 8.0 / self.params.phy_bitrate
