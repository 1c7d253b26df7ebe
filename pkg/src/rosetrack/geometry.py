"""Shared geometric types and sensor/world frame transforms.

Conventions used throughout the package:

* world up is +z,
* the sensor boresight at rest (pan = tilt = 0) points along world +x,
* pan is a counter-clockwise rotation about the world z axis,
* tilt is positive upward, applied about the panned y axis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Frame(enum.Enum):
    SENSOR = "sensor"
    WORLD = "world"


class FrameMismatchError(ValueError):
    """Raised when a cloud is supplied in the wrong coordinate frame."""


@dataclass(frozen=True)
class TimedPoint:
    """One LiDAR return: timestamp (s), position (m), intensity in [0, 1]."""

    t: float
    x: float
    y: float
    z: float
    intensity: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError("point coordinates must be finite")
        if self.t < 0.0:
            raise ValueError("point timestamp must be non-negative")


@dataclass
class PointCloud:
    """A batch of timed returns covering one integration window.

    Positions are stored as arrays for vectorised processing; ``points``
    materialises the equivalent ordered ``TimedPoint`` list.
    """

    frame_id: Frame
    t: np.ndarray          # (n,) emission times, seconds
    xyz: np.ndarray        # (n, 3) coordinates, meters
    intensity: np.ndarray  # (n,) in [0, 1]
    t_start: float
    t_end: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.t_start > self.t_end:
            raise ValueError("t_start must not exceed t_end")
        if len(self.t) != len(self.xyz) or len(self.t) != len(self.intensity):
            raise ValueError("t, xyz, intensity must have equal lengths")
        if len(self.t) and (self.t.min() < self.t_start - 1e-12 or self.t.max() > self.t_end + 1e-12):
            raise ValueError("point timestamps must lie within [t_start, t_end]")
        if len(self.xyz) and not np.all(np.isfinite(self.xyz)):
            raise ValueError("point coordinates must be finite")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def points(self) -> list[TimedPoint]:
        return [
            TimedPoint(float(t), float(x), float(y), float(z), float(i))
            for t, (x, y, z), i in zip(self.t, self.xyz, self.intensity)
        ]

    @classmethod
    def from_points(cls, frame_id: Frame, points, t_start: float, t_end: float) -> "PointCloud":
        pts = list(points)
        return cls(
            frame_id=frame_id,
            t=np.array([p.t for p in pts], dtype=float),
            xyz=np.array([[p.x, p.y, p.z] for p in pts], dtype=float).reshape(-1, 3),
            intensity=np.array([p.intensity for p in pts], dtype=float),
            t_start=t_start,
            t_end=t_end,
        )

    @classmethod
    def empty(cls, frame_id: Frame, t_start: float, t_end: float) -> "PointCloud":
        return cls(frame_id, np.empty(0), np.empty((0, 3)), np.empty(0), t_start, t_end)

    def select(self, mask: np.ndarray) -> "PointCloud":
        """New cloud keeping the masked points; order and window preserved."""
        return PointCloud(self.frame_id, self.t[mask], self.xyz[mask],
                          self.intensity[mask], self.t_start, self.t_end)


@dataclass(frozen=True)
class PanTiltPose:
    """Turret orientation: pan CCW about world +z, tilt positive upward."""

    pan: float
    tilt: float

    def __post_init__(self):
        if not -math.pi <= self.pan <= math.pi:
            raise ValueError(f"pan {self.pan} outside [-pi, pi]")
        if not -math.pi / 2 <= self.tilt <= math.pi / 2:
            raise ValueError(f"tilt {self.tilt} outside [-pi/2, pi/2]")


@dataclass(frozen=True)
class SensorPose:
    """Sensor mounting point (world frame) plus pan/tilt orientation."""

    origin: tuple[float, float, float]
    orientation: PanTiltPose = field(default_factory=lambda: PanTiltPose(0.0, 0.0))

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.origin):
            raise ValueError("sensor origin must be finite")


def pan_tilt_to_rotation(pose: PanTiltPose) -> np.ndarray:
    """3x3 rotation taking sensor-frame vectors into the world frame.

    Pan about world z first, then tilt about the panned y axis, so the
    boresight (+x in the sensor frame) maps to
    (cos tilt * cos pan, cos tilt * sin pan, sin tilt).
    """
    cp, sp = math.cos(pose.pan), math.sin(pose.pan)
    ct, st = math.cos(pose.tilt), math.sin(pose.tilt)
    rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ct, 0.0, -st], [0.0, 1.0, 0.0], [st, 0.0, ct]])  # Ry(-tilt): +tilt pitches the boresight up
    return rz @ ry


def transform_cloud(cloud: PointCloud, pose: SensorPose) -> PointCloud:
    """Transform a sensor-frame cloud into the world frame.

    Each point maps to R @ p + origin; timestamps, intensities, ordering
    and point count are preserved.
    """
    if cloud.frame_id is not Frame.SENSOR:
        raise FrameMismatchError(f"expected a sensor-frame cloud, got {cloud.frame_id}")
    rot = pan_tilt_to_rotation(pose.orientation)
    xyz = cloud.xyz @ rot.T + np.asarray(pose.origin, dtype=float)
    return PointCloud(Frame.WORLD, cloud.t.copy(), xyz, cloud.intensity.copy(),
                      cloud.t_start, cloud.t_end)


def inverse_transform_cloud(cloud: PointCloud, pose: SensorPose) -> PointCloud:
    """Inverse of :func:`transform_cloud` (world back into the sensor frame)."""
    if cloud.frame_id is not Frame.WORLD:
        raise FrameMismatchError(f"expected a world-frame cloud, got {cloud.frame_id}")
    rot = pan_tilt_to_rotation(pose.orientation)
    xyz = (cloud.xyz - np.asarray(pose.origin, dtype=float)) @ rot
    return PointCloud(Frame.SENSOR, cloud.t.copy(), xyz, cloud.intensity.copy(),
                      cloud.t_start, cloud.t_end)
