"""Uplink geometry, fading, achievable rate, and transmission energy.

Devices are dropped uniformly over a square cell with the base station at
the center. The channel power gain combines distance path loss with
unit-mean exponential fading (Rayleigh amplitude fading in the power
domain), each device gets its own fixed bandwidth slice, and an upload of
dim model coordinates quantized to b bits carries dim * b payload bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RadioParams:
    """Link-budget constants. SI units: watts, hertz, meters, W/Hz."""

    tx_power: float = 0.1
    bandwidth: float = 1e7
    noise_psd: float = 1e-13
    area_side: float = 100.0
    pathloss_exponent: float = 2.0

    def __post_init__(self):
        for name in ("tx_power", "bandwidth", "noise_psd", "area_side", "pathloss_exponent"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class Topology:
    """Device drop for one independent run; base station at the cell center."""

    device_positions: np.ndarray  # (N, 2) meters
    bs_position: np.ndarray       # (2,) meters

    def distances(self) -> np.ndarray:
        delta = self.device_positions - self.bs_position
        return np.hypot(delta[:, 0], delta[:, 1])


@dataclass(frozen=True)
class ChannelDraw:
    """Per-device power gains for one transmission slot."""

    gains: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        object.__setattr__(self, "gains", gains)
        if gains.size and np.any(gains <= 0):
            raise ValueError("channel gains must be strictly positive")


def place_devices(num_devices: int, params: RadioParams, rng: np.random.Generator) -> Topology:
    """Drop num_devices i.i.d. uniform positions on the square cell."""
    if num_devices < 1:
        raise ValueError("need at least one device")
    positions = rng.uniform(0.0, params.area_side, size=(num_devices, 2))
    center = np.array([params.area_side / 2.0, params.area_side / 2.0])
    return Topology(device_positions=positions, bs_position=center)


def channel_gain(distance, params: RadioParams, rng: np.random.Generator):
    """Power gain g * distance**-pathloss_exponent with g ~ Exp(1).

    The conditional mean given the distance is distance**-pathloss_exponent.
    Accepts a scalar or an array of distances (independent fading per entry).
    """
    dist = np.asarray(distance, dtype=float)
    if np.any(dist <= 0):
        raise ValueError("distance must be strictly positive")
    fading = rng.exponential(1.0, size=dist.shape)
    gain = fading * dist ** (-params.pathloss_exponent)
    if dist.ndim == 0:
        return float(gain)
    return gain


def draw_gains(topology: Topology, params: RadioParams, rng: np.random.Generator,
               seed: int | None = None) -> ChannelDraw:
    """One fading realization for every device in the topology."""
    return ChannelDraw(gains=channel_gain(topology.distances(), params, rng), seed=seed)


def achievable_rate(gain, params: RadioParams):
    """Shannon rate B * log2(1 + P*h / (N0*B)) in bits/second."""
    h = np.asarray(gain, dtype=float)
    if np.any(h <= 0):
        raise ValueError("channel gain must be strictly positive")
    snr = params.tx_power * h / (params.noise_psd * params.bandwidth)
    rate = params.bandwidth * np.log2(1.0 + snr)
    if h.ndim == 0:
        return float(rate)
    return rate


def uplink_energy(dim: int, n_bits, rate: float, params: RadioParams,
                  n_max: int | None = None) -> tuple[float, float]:
    """Transmission time and energy for uploading a dim-vector at n_bits each.

    The payload is dim * n_bits bits, so time = dim * n_bits / rate and
    energy = tx_power * time. n_max only bounds n_bits when given; a
    full-precision vector is simply the n_bits = n_max case.
    """
    if dim < 0:
        raise ValueError("dimension must be non-negative")
    if rate <= 0:
        raise ValueError("rate must be strictly positive")
    if n_bits < 1 or (n_max is not None and n_bits > n_max):
        raise ValueError(f"precision {n_bits} outside [1, {n_max}]")
    seconds = dim * n_bits / rate
    return seconds, params.tx_power * seconds
