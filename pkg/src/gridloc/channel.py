"""Synthetic LoS/NLoS channel realizations and noisy received snapshots.

Simplified parametric model: one LoS path per station at the geometric
arrival angle with a unit-magnitude random-phase gain, plus a small random
number of NLoS paths with circular Gaussian gains at angles drawn uniformly
over the station's field of view. Noise is circular complex Gaussian with
identity covariance, so snr_linear multiplies the channel power directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .scene import Scene, aoa, steering, ula_response, wrap_angle


@dataclass(frozen=True)
class ChannelConfig:
    nlos_paths_min: int = 1
    nlos_paths_max: int = 3
    nlos_power_ratio: float = 0.1
    los_blocked_prob: float = 0.0

    def __post_init__(self):
        if self.nlos_paths_min < 0 or self.nlos_paths_max < self.nlos_paths_min:
            raise ValueError("NLoS path count range must be non-negative and ordered")
        if self.nlos_power_ratio < 0:
            raise ValueError("nlos_power_ratio must be >= 0")
        if not 0.0 <= self.los_blocked_prob <= 1.0:
            raise ValueError("los_blocked_prob must be a probability")

    @property
    def mean_nlos_paths(self):
        return 0.5 * (self.nlos_paths_min + self.nlos_paths_max)


@dataclass(frozen=True)
class StationPaths:
    """Path parameters for one station: LoS gain/angle plus NLoS lists.

    los_aoa is global; nlos_aoas are local (array frame), matching the angle
    dictionary's parameterization. A blocked LoS is encoded as los_gain 0.
    """

    los_gain: complex
    los_aoa: float
    nlos_gains: np.ndarray
    nlos_aoas: np.ndarray


@dataclass(frozen=True)
class ChannelRealization:
    position: np.ndarray
    stations: tuple  # one StationPaths per station, in scene order


@dataclass(frozen=True)
class ReceivedSignal:
    """Stacked noisy snapshot with its SNR."""

    y: np.ndarray
    snr_db: float
    station_slices: tuple

    @property
    def snr_linear(self):
        return 10.0 ** (self.snr_db / 10.0)


def sample_channel(scene: Scene, p, cfg: ChannelConfig, rng) -> ChannelRealization:
    """Draw one channel realization for an emitter at p inside the target area."""
    p = np.asarray(p, dtype=float)
    if not scene.area.contains(p):
        raise GeometryError(f"position {tuple(p)} outside the target area")
    per_path_var = (cfg.nlos_power_ratio / cfg.mean_nlos_paths
                    if cfg.mean_nlos_paths > 0 else 0.0)
    stations = []
    for st in scene.stations:
        theta = aoa(p, st)
        gain = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
        if cfg.los_blocked_prob > 0.0 and rng.random() < cfg.los_blocked_prob:
            gain = 0.0 + 0.0j
        count = int(rng.integers(cfg.nlos_paths_min, cfg.nlos_paths_max + 1))
        angles = rng.uniform(-np.pi / 2, np.pi / 2, size=count)
        gains = (np.sqrt(per_path_var / 2.0)
                 * (rng.normal(size=count) + 1j * rng.normal(size=count)))
        stations.append(StationPaths(complex(gain), float(theta), gains, angles))
    return ChannelRealization(p, tuple(stations))


def channel_vector(scene: Scene, realization: ChannelRealization) -> np.ndarray:
    """Stacked channel h (length sum N_m) of a realization."""
    parts = []
    for st, paths in zip(scene.stations, realization.stations):
        h = paths.los_gain * steering(st, paths.los_aoa)
        for g, ang in zip(paths.nlos_gains, paths.nlos_aoas):
            h = h + g * ula_response(st.num_antennas, st.element_spacing, ang)
        parts.append(h)
    return np.concatenate(parts)


def synthesize(scene: Scene, realization: ChannelRealization, snr_db, rng,
               noiseless: bool = False) -> ReceivedSignal:
    """y = sqrt(snr_linear) * h + n with unit-covariance complex noise."""
    h = channel_vector(scene, realization)
    omega = 10.0 ** (snr_db / 10.0)
    y = np.sqrt(omega) * h
    if not noiseless:
        n = (rng.normal(size=h.size) + 1j * rng.normal(size=h.size)) / np.sqrt(2.0)
        y = y + n
    return ReceivedSignal(y, float(snr_db), scene.dictionary.y_slices)
