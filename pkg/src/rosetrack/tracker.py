"""Particle filter over the target position: predict, update, resample,
estimate, and the stable/lost track-status rule.

The state is position-only with random-walk prediction. The measurement
model weights particles against the filtered cloud with a Gaussian kernel,
either on the cloud centroid (default; robust for small compact clusters)
or on the nearest measured point (config switch). Weights are normalised in
log space so a distant cloud can never underflow the whole weight vector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud


class TrackStatus(enum.Enum):
    SEARCHING = "searching"
    STABLE = "stable"
    LOST = "lost"


@dataclass(frozen=True)
class TrackerParams:
    n_particles: int = 500
    sigma_pred: float = 0.1
    sigma_meas: float = 0.15
    sigma_threshold: float | None = None  # defaults to 1.5 * sigma_pred
    lost_after_misses: int = 10
    surveillance_lo: tuple[float, float, float] = (1.0, -4.0, 0.2)
    surveillance_hi: tuple[float, float, float] = (8.0, 4.0, 3.0)
    likelihood: str = "centroid"  # or "nearest"

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.sigma_pred < 0 or self.sigma_meas <= 0:
            raise ValueError("sigma_pred must be >= 0 and sigma_meas > 0")
        if self.lost_after_misses < 1:
            raise ValueError("lost_after_misses must be >= 1")
        if self.likelihood not in ("centroid", "nearest"):
            raise ValueError("likelihood must be 'centroid' or 'nearest'")

    @property
    def stability_threshold(self) -> float:
        return self.sigma_threshold if self.sigma_threshold is not None else 1.5 * self.sigma_pred


@dataclass(frozen=True)
class Particle:
    """One position hypothesis with its importance weight."""

    position: tuple[float, float, float]
    weight: float

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("particle weight must be finite and >= 0")


@dataclass
class ParticleSet:
    positions: np.ndarray          # (n, 3) world frame
    weights: np.ndarray            # (n,) normalised
    rng: np.random.Generator
    last_measurement_age: int = 0
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(tuple(p), float(w)) for p, w in zip(self.positions, self.weights)]


@dataclass(frozen=True)
class TrackEstimate:
    position: np.ndarray
    sigma_particles: float
    status: TrackStatus
    t: float


def init_filter(params: TrackerParams, seed) -> ParticleSet:
    """Particles uniform over the surveillance volume with uniform weights."""
    lo = np.asarray(params.surveillance_lo, dtype=float)
    hi = np.asarray(params.surveillance_hi, dtype=float)
    if not np.all(hi > lo):
        raise ValueError("surveillance volume must have positive extent")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    positions = rng.uniform(lo, hi, size=(params.n_particles, 3))
    weights = np.full(params.n_particles, 1.0 / params.n_particles)
    return ParticleSet(positions, weights, rng)


def predict(pset: ParticleSet, params: TrackerParams) -> ParticleSet:
    """Random-walk step: add zero-mean Gaussian noise per axis; weights kept."""
    if params.sigma_pred == 0.0:
        positions = pset.positions.copy()
    else:
        positions = pset.positions + pset.rng.normal(0.0, params.sigma_pred,
                                                     size=pset.positions.shape)
    return replace(pset, positions=positions, weights=pset.weights.copy())


def _measurement_distances(pset: ParticleSet, cloud: PointCloud, params: TrackerParams):
    if params.likelihood == "centroid":
        z = cloud.xyz.mean(axis=0)
        return np.linalg.norm(pset.positions - z, axis=1)
    dist, _ = cKDTree(cloud.xyz).query(pset.positions, k=1)
    return dist


def update(pset: ParticleSet, cloud: PointCloud, params: TrackerParams) -> ParticleSet:
    """Bayes update against the filtered cloud.

    An empty cloud only bumps the missing-measurement age. Otherwise weights
    get multiplied by exp(-d^2 / (2 sigma_meas^2)) with d the distance to the
    cloud centroid (or nearest point) and are renormalised.
    """
    if not len(cloud):
        return replace(pset, positions=pset.positions.copy(), weights=pset.weights.copy(),
                       last_measurement_age=pset.last_measurement_age + 1)
    d = _measurement_distances(pset, cloud, params)
    loglik = -0.5 * (d / params.sigma_meas) ** 2
    loglik -= loglik.max()
    weights = pset.weights * np.exp(loglik)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        # degenerate likelihood: keep positions, flatten weights, flag the set
        weights = np.full(len(pset), 1.0 / len(pset))
        return replace(pset, positions=pset.positions.copy(), weights=weights,
                       last_measurement_age=0, degenerate=True)
    return replace(pset, positions=pset.positions.copy(), weights=weights / total,
                   last_measurement_age=0, degenerate=False)


def systematic_indices(weights: np.ndarray, offset: float) -> np.ndarray:
    """Ancestor indices for systematic resampling with one uniform offset.

    offset must lie in [0, 1/n). Pointer j = offset + j/n selects the particle
    whose cumulative-weight interval contains it.
    """
    n = len(weights)
    if not 0.0 <= offset < 1.0 / n:
        raise ValueError("offset must be in [0, 1/n)")
    cum = np.cumsum(weights)
    cum[-1] = 1.0  # guard against accumulated rounding
    pointers = offset + np.arange(n) / n
    return np.searchsorted(cum, pointers, side="right")


def resample(pset: ParticleSet) -> ParticleSet:
    """Systematic resampling; output weights are uniform.

    The expected copy count of particle i is n * w_i, exact to within one
    copy for the systematic scheme.
    """
    n = len(pset)
    offset = pset.rng.random() / n
    idx = systematic_indices(pset.weights, offset)
    return replace(pset, positions=pset.positions[idx].copy(),
                   weights=np.full(n, 1.0 / n))


def estimate(pset: ParticleSet, t: float, params: TrackerParams) -> TrackEstimate:
    """Weighted mean plus spread; Lost beats the spread test.

    sigma_particles is the average of the weighted per-axis standard
    deviations; the track is Stable when it is under the stability threshold.
    """
    w = pset.weights
    mean = w @ pset.positions
    var = w @ (pset.positions - mean) ** 2
    sigma = float(np.mean(np.sqrt(var)))
    if pset.last_measurement_age >= params.lost_after_misses:
        status = TrackStatus.LOST
    elif not pset.degenerate and sigma < params.stability_threshold:
        status = TrackStatus.STABLE
    else:
        status = TrackStatus.SEARCHING
    return TrackEstimate(mean, sigma, status, t)


def step(pset: ParticleSet, cloud: PointCloud | None, t: float,
         params: TrackerParams) -> tuple[ParticleSet, TrackEstimate]:
    """One filter tick: predict always; update + resample only on a new cloud.

    The estimate is taken from the weighted set before resampling so
    resampling noise never degrades the reported state. A delivered-but-empty
    cloud counts as a missing measurement (age bump, no reweighting).
    """
    pset = predict(pset, params)
    if cloud is None:
        return pset, estimate(pset, t, params)
    pset = update(pset, cloud, params)
    est = estimate(pset, t, params)
    if len(cloud):
        pset = resample(pset)
    return pset, est
