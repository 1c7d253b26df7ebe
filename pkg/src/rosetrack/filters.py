"""Per-frame cloud filtering: range/ground gating, background subtraction,
radius outlier removal, statistical outlier removal.

All filters are contractions: the output is a subset of the input with order
preserved and coordinates untouched. Neighbor queries go through a k-d tree;
``brute_force=True`` switches to the O(n^2) path, which must agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Frame, PointCloud

if TYPE_CHECKING:
    from .background import OccupancyOctree


@dataclass(frozen=True)
class FilterParams:
    near_min: float = 0.5
    far_max: float = 200.0
    ground_margin: float = 0.3
    ror_radius: float = 0.5
    ror_min_neighbors: int = 2
    sor_k: int = 8
    sor_alpha: float = 1.0

    def __post_init__(self):
        if self.near_min >= self.far_max:
            raise ValueError("near_min must be below far_max")
        if self.ror_radius <= 0:
            raise ValueError("ror_radius must be positive")
        if self.ror_min_neighbors < 1:
            raise ValueError("ror_min_neighbors must be >= 1")
        if self.sor_k < 1:
            raise ValueError("sor_k must be >= 1")
        if self.sor_alpha <= 0:
            raise ValueError("sor_alpha must be positive")


def range_filter(cloud: PointCloud, params: FilterParams, ground_z: float,
                 sensor_origin=(0.0, 0.0, 0.0)) -> PointCloud:
    """Drop ground-plane points and returns outside [near_min, far_max].

    Keeps points with z above ground_z + ground_margin whose distance from
    the sensor origin lies in the range window.
    """
    if cloud.frame_id is not Frame.WORLD:
        raise ValueError("range_filter expects a world-frame cloud")
    if not len(cloud):
        return cloud.select(np.zeros(0, dtype=bool))
    d = np.linalg.norm(cloud.xyz - np.asarray(sensor_origin, dtype=float), axis=1)
    keep = (cloud.xyz[:, 2] > ground_z + params.ground_margin) \
        & (d >= params.near_min) & (d <= params.far_max)
    return cloud.select(keep)


def subtract_background(cloud: PointCloud, octree: "OccupancyOctree") -> PointCloud:
    """Remove points whose voxel is occupied in the (inflated) background map."""
    if not len(cloud):
        return cloud.select(np.zeros(0, dtype=bool))
    return cloud.select(~octree.contains_points(cloud.xyz))


def radius_outlier_removal(cloud: PointCloud, radius: float, min_neighbors: int,
                           brute_force: bool = False) -> PointCloud:
    """Keep a point iff at least min_neighbors other points lie within radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = len(cloud)
    if n == 0:
        return cloud.select(np.zeros(0, dtype=bool))
    if brute_force:
        d = np.linalg.norm(cloud.xyz[:, None, :] - cloud.xyz[None, :, :], axis=2)
        counts = np.sum(d <= radius, axis=1) - 1  # drop self
    else:
        tree = cKDTree(cloud.xyz)
        counts = np.array(tree.query_ball_point(cloud.xyz, radius,
                                                return_length=True)) - 1
    return cloud.select(counts >= min_neighbors)


def statistical_outlier_removal(cloud: PointCloud, k: int, alpha: float,
                                brute_force: bool = False) -> PointCloud:
    """Keep points whose mean k-nearest-neighbor distance is within
    mu + alpha * sigma of the cloud-wide statistics.

    Clouds with at most k points are returned unchanged (too few points to
    judge). Self-distances are excluded from the neighbor sets.
    """
    n = len(cloud)
    if n <= k:
        return cloud
    if brute_force:
        d = np.linalg.norm(cloud.xyz[:, None, :] - cloud.xyz[None, :, :], axis=2)
        d_sorted = np.sort(d, axis=1)
        mean_knn = d_sorted[:, 1:k + 1].mean(axis=1)  # column 0 is the self-distance
    else:
        tree = cKDTree(cloud.xyz)
        dist, _ = tree.query(cloud.xyz, k=k + 1)
        mean_knn = dist[:, 1:].mean(axis=1)
    mu = mean_knn.mean()
    sigma = mean_knn.std()
    return cloud.select(mean_knn <= mu + alpha * sigma)


def preprocess_cloud(cloud: PointCloud, params: FilterParams, ground_z: float,
                     octree: "OccupancyOctree | None" = None,
                     sensor_origin=(0.0, 0.0, 0.0)) -> PointCloud:
    """Full chain in pipeline order: range -> background -> radius -> statistical."""
    out = range_filter(cloud, params, ground_z, sensor_origin)
    if octree is not None:
        out = subtract_background(out, octree)
    out = radius_outlier_removal(out, params.ror_radius, params.ror_min_neighbors)
    return statistical_outlier_removal(out, params.sor_k, params.sor_alpha)
