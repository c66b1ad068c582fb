"""Multi-tier random deployment: PPP sampling, path loss, fading, received power."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Distances below this are clamped to avoid the d^-alpha singularity at 0.
DISTANCE_FLOOR_M = 1.0


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a power level from dBm to watts."""
    p = float(p_dbm)
    if not math.isfinite(p):
        raise ValueError(f"power in dBm must be finite, got {p_dbm!r}")
    return 10.0 ** ((p - 30.0) / 10.0)


def watts_to_dbm(p_watts: float) -> float:
    p = float(p_watts)
    if not (math.isfinite(p) and p > 0):
        raise ValueError(f"power in watts must be finite and > 0, got {p_watts!r}")
    return 10.0 * math.log10(p) + 30.0


def zero_forcing_array_gain(n_antennas: int, n_streams: int) -> float:
    """Per-stream array gain (M - N + 1)/N of a zero-forcing massive-MIMO macro BS."""
    if n_antennas < n_streams or n_streams < 1:
        raise ValueError("need n_antennas >= n_streams >= 1")
    return (n_antennas - n_streams + 1) / n_streams


@dataclass(frozen=True)
class Region:
    """Disc-shaped simulation window."""

    radius: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be > 0, got {self.radius}")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def contains(self, points: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=1)
        return d <= self.radius * (1 + 1e-12)


@dataclass(frozen=True)
class TierConfig:
    """One deployment tier (macro / pico / femto)."""

    tier_id: str
    tx_power_dbm: float
    density: float  # BSs per m^2
    array_gain: float = 1.0
    path_loss_exponent: float = 4.0

    def __post_init__(self):
        if self.density < 0:
            raise ValueError(f"density must be >= 0, got {self.density}")
        if self.path_loss_exponent <= 2:
            raise ValueError("path_loss_exponent must be > 2 for finite mean interference")
        if self.array_gain < 1:
            raise ValueError(f"array_gain must be >= 1, got {self.array_gain}")

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)


def sample_ppp(density: float, region: Region, rng: np.random.Generator) -> np.ndarray:
    """Draw one homogeneous PPP realization; returns an (n, 2) position array."""
    if density < 0:
        raise ValueError(f"density must be >= 0, got {density}")
    n = int(rng.poisson(density * region.area))
    r = region.radius * np.sqrt(rng.random(n))
    theta = 2.0 * math.pi * rng.random(n)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return pts + np.asarray(region.center)


def sample_uniform(n: int, region: Region, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. uniform points in the region (binomial point process)."""
    r = region.radius * np.sqrt(rng.random(n))
    theta = 2.0 * math.pi * rng.random(n)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return pts + np.asarray(region.center)


@dataclass(frozen=True)
class NetworkSnapshot:
    """One random draw of BS positions per tier plus user positions."""

    region: Region
    tiers: tuple[TierConfig, ...]
    bs_positions: tuple[np.ndarray, ...]  # one (n_i, 2) array per tier
    users: np.ndarray  # (n_users, 2)
    rng_seed: int

    def __post_init__(self):
        if len(self.tiers) != len(self.bs_positions):
            raise ValueError("one position array per tier required")

    @property
    def n_bs(self) -> int:
        return sum(len(p) for p in self.bs_positions)


def sample_network(
    region: Region,
    tiers: list[TierConfig],
    n_users: int,
    seed: int,
    guaranteed_bs: str | None = None,
) -> NetworkSnapshot:
    """Draw BS positions per tier (PPP) and uniform user positions.

    guaranteed_bs: None, "center" or "uniform" -- adds one extra BS of the
    first tier so every draw has coverage.
    """
    rng = np.random.default_rng(seed)
    positions = []
    for i, tier in enumerate(tiers):
        pts = sample_ppp(tier.density, region, rng)
        if i == 0 and guaranteed_bs is not None:
            if guaranteed_bs == "center":
                extra = np.asarray([region.center], dtype=float)
            elif guaranteed_bs == "uniform":
                extra = sample_uniform(1, region, rng)
            else:
                raise ValueError(f"unknown guaranteed_bs mode {guaranteed_bs!r}")
            pts = np.vstack([extra, pts])
        positions.append(pts)
    users = sample_uniform(n_users, region, rng)
    return NetworkSnapshot(region, tuple(tiers), tuple(positions), users, seed)


def link_distances(point: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Euclidean distances from one point to many, clamped to the 1 m floor."""
    if len(positions) == 0:
        return np.empty(0)
    d = np.linalg.norm(np.atleast_2d(positions) - np.asarray(point), axis=1)
    return np.maximum(d, DISTANCE_FLOOR_M)


def avg_received_power(tx_power: float, array_gain: float, distance, alpha: float):
    """Fading-averaged received power tx * gain * d^-alpha.

    distance may be a scalar or an array; all entries must be > 0.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0 (clamp to the 1 m floor upstream)")
    if alpha <= 2:
        raise ValueError(f"alpha must be > 2, got {alpha}")
    out = tx_power * array_gain * d ** (-alpha)
    return float(out) if np.isscalar(distance) else out


@dataclass(frozen=True)
class ChannelDraw:
    """One small-scale fading draw on a link."""

    small_scale_gain: float  # unit-mean exponential (Rayleigh power)
    distance: float

    def __post_init__(self):
        if self.small_scale_gain < 0:
            raise ValueError("small_scale_gain must be >= 0")
        if self.distance <= 0:
            raise ValueError("distance must be > 0")


def rayleigh_power_gains(rng: np.random.Generator, size=None):
    """Unit-mean exponential power gains (Rayleigh amplitude fading)."""
    return rng.exponential(1.0, size)


def instantaneous_gain(channel: ChannelDraw, alpha: float) -> float:
    """Instantaneous link power gain: fading times path loss."""
    if alpha <= 2:
        raise ValueError(f"alpha must be > 2, got {alpha}")
    return channel.small_scale_gain * channel.distance ** (-alpha)
