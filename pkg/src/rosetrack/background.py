"""Voxel occupancy map of the static scene, with inflation and subtraction queries.

Occupancy is binary: the map is built once from a clean static scene, so
hit/miss evidence accumulation is unnecessary. Voxel indices are absolute
(floor(coordinate / resolution)); the bounds box defines the surveillance
volume and points outside it are skipped on insert.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .geometry import Frame, PointCloud, SensorPose, transform_cloud

_MAGIC = b"ROCT"
_VERSION = 1


class OccupancyOctree:
    """Sparse set of occupied voxels keyed by packed index.

    Single writer during the build phase; freeze() (implicit on the first
    bulk query) snapshots the key set into a sorted array for fast
    vectorised lookups afterwards.
    """

    def __init__(self, resolution: float, lo, hi):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if not np.all(self.hi > self.lo):
            raise ValueError("bounds must have positive extent")
        self._ilo = np.floor(self.lo / self.resolution).astype(np.int64)
        ihi = np.floor(self.hi / self.resolution).astype(np.int64)
        self._dims = ihi - self._ilo + 1
        if int(np.prod(self._dims.astype(object))) >= 2**62:
            raise ValueError("bounds/resolution produce too many voxels to index")
        self._keys: set[int] = set()
        self._sorted: np.ndarray | None = None

    # -- indexing ---------------------------------------------------------

    def voxel_indices(self, pts: np.ndarray) -> np.ndarray:
        """(n, 3) absolute voxel indices of the given world points."""
        return np.floor(np.asarray(pts, dtype=float).reshape(-1, 3) / self.resolution).astype(np.int64)

    def _in_bounds(self, idx: np.ndarray) -> np.ndarray:
        rel = idx - self._ilo
        return np.all((rel >= 0) & (rel < self._dims), axis=1)

    def _pack(self, idx: np.ndarray) -> np.ndarray:
        rel = idx - self._ilo
        return (rel[:, 0] * self._dims[1] + rel[:, 1]) * self._dims[2] + rel[:, 2]

    def _unpack(self, keys: np.ndarray) -> np.ndarray:
        k, z = np.divmod(keys, self._dims[2])
        x, y = np.divmod(k, self._dims[1])
        return np.stack([x, y, z], axis=1) + self._ilo

    # -- occupancy --------------------------------------------------------

    def __len__(self) -> int:
        return len(self._keys)

    def occupied_indices(self) -> np.ndarray:
        """(n, 3) absolute indices of occupied voxels, sorted by packed key."""
        if not self._keys:
            return np.empty((0, 3), dtype=np.int64)
        return self._unpack(np.array(sorted(self._keys), dtype=np.int64))

    def insert_points(self, pts: np.ndarray) -> None:
        idx = self.voxel_indices(pts)
        idx = idx[self._in_bounds(idx)]
        if len(idx):
            self._keys.update(np.unique(self._pack(idx)).tolist())
            self._sorted = None

    def freeze(self) -> None:
        if self._sorted is None:
            self._sorted = np.array(sorted(self._keys), dtype=np.int64)

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        """Vectorised occupancy query; (n,) bool for world points."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        idx = self.voxel_indices(pts)
        ok = self._in_bounds(idx)
        out = np.zeros(len(pts), dtype=bool)
        if np.any(ok):
            self.freeze()
            keys = self._pack(idx[ok])
            pos = np.searchsorted(self._sorted, keys)
            pos = np.clip(pos, 0, max(len(self._sorted) - 1, 0))
            if len(self._sorted):
                out[ok] = self._sorted[pos] == keys
        return out

    def copy(self) -> "OccupancyOctree":
        other = OccupancyOctree(self.resolution, self.lo, self.hi)
        other._keys = set(self._keys)
        return other

    # -- serialization ----------------------------------------------------

    def to_bytes(self) -> bytes:
        """Serialize to the documented binary format (round-trips bit-exactly).

        Little-endian layout: magic b"ROCT", version uint32, resolution
        float64, bounds lo/hi as 3 float64 each, voxel count uint64, then the
        sorted packed voxel keys as int64.
        """
        self.freeze()
        header = struct.pack("<4sI7dQ", _MAGIC, _VERSION, self.resolution,
                             *self.lo.tolist(), *self.hi.tolist(), len(self._sorted))
        return header + self._sorted.astype("<i8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "OccupancyOctree":
        head_size = struct.calcsize("<4sI7dQ")
        magic, version, res, *rest = struct.unpack("<4sI7dQ", blob[:head_size])
        if magic != _MAGIC:
            raise ValueError("not an occupancy map blob (bad magic)")
        if version != _VERSION:
            raise ValueError(f"unsupported occupancy map version {version}")
        lo, hi, count = rest[:3], rest[3:6], rest[6]
        octree = cls(res, lo, hi)
        keys = np.frombuffer(blob[head_size:], dtype="<i8")
        if len(keys) != count:
            raise ValueError("truncated occupancy map blob")
        octree._keys = set(keys.tolist())
        return octree

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "OccupancyOctree":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class BackgroundBuildParams:
    """Knobs for turning raster scans into the inflated background map."""

    duration: float = 5.0
    near_min: float = 0.5
    far_max: float = 200.0
    ground_margin: float = 0.3
    inflation_radius: int = 1
    resolution: float = 0.1
    bounds_lo: tuple[float, float, float] = (-1.0, -5.0, -0.5)
    bounds_hi: tuple[float, float, float] = (9.0, 5.0, 4.0)
    ground_z: float = 0.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.near_min >= self.far_max:
            raise ValueError("near_min must be below far_max")
        if self.inflation_radius < 0:
            raise ValueError("inflation_radius must be >= 0")


def insert_cloud(octree: OccupancyOctree, cloud: PointCloud) -> OccupancyOctree:
    """Mark the containing voxel of every in-bounds point occupied.

    Mutates and returns the octree; repeated identical points are idempotent.
    """
    if cloud.frame_id is not Frame.WORLD:
        raise ValueError("background insertion expects a world-frame cloud")
    octree.insert_points(cloud.xyz)
    return octree


def inflate(octree: OccupancyOctree, radius: int) -> OccupancyOctree:
    """Chebyshev dilation: occupy every voxel within `radius` of an occupied one.

    Returns a new octree; the dilation is applied separably per axis (exact
    for the Chebyshev ball) and clipped to the bounds box.
    """
    if radius < 0:
        raise ValueError("inflation radius must be >= 0")
    out = octree.copy()
    if radius == 0 or not len(octree):
        return out
    idx = octree.occupied_indices()
    shifts = np.arange(-radius, radius + 1, dtype=np.int64)
    ilo = octree._ilo
    ihi = octree._ilo + octree._dims - 1
    for axis in range(3):
        grown = np.repeat(idx[None, :, :], len(shifts), axis=0).reshape(-1, 3)
        grown[:, axis] += np.repeat(shifts, len(idx))
        grown = grown[(grown[:, axis] >= ilo[axis]) & (grown[:, axis] <= ihi[axis])]
        idx = np.unique(grown, axis=0)
    out._keys = set(out._pack(idx).tolist())
    out._sorted = None
    return out


def is_background(octree: OccupancyOctree, p) -> bool:
    """True iff the point's voxel is occupied (query the inflated map)."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("query point must be finite")
    idx = octree.voxel_indices(p.reshape(1, 3))
    if not octree._in_bounds(idx)[0]:
        return False
    return int(octree._pack(idx)[0]) in octree._keys


def build_background(scans, params: BackgroundBuildParams) -> OccupancyOctree:
    """Transform, range/ground filter, and insert raster scans; inflate last.

    `scans` is a sequence of (sensor-frame cloud, sensor pose) pairs from the
    turret's initialization raster.
    """
    from .filters import FilterParams, range_filter

    scans = list(scans)
    if not scans:
        raise ValueError("cannot bootstrap a background model from zero scans")
    octree = OccupancyOctree(params.resolution, params.bounds_lo, params.bounds_hi)
    fparams = FilterParams(near_min=params.near_min, far_max=params.far_max,
                           ground_margin=params.ground_margin)
    for cloud, pose in scans:
        world = transform_cloud(cloud, pose)
        kept = range_filter(world, fparams, params.ground_z, sensor_origin=pose.origin)
        insert_cloud(octree, kept)
    return inflate(octree, params.inflation_radius)
