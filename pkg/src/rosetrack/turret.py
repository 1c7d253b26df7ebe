"""Simulated pan-tilt turret: raster commands for the background build,
estimate-centering commands while tracking, and rate-limited dynamics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PanTiltPose
from .tracker import TrackEstimate, TrackStatus


class TurretMode(enum.Enum):
    INITIALIZATION = "initialization"
    TRACKING = "tracking"


@dataclass(frozen=True)
class TurretParams:
    max_slew_rate: float = math.pi          # rad/s, per axis
    command_rate: float = 15.0              # Hz
    deadband: float = math.radians(0.5)
    scan_pan_min: float = -0.6
    scan_pan_max: float = 0.6
    scan_tilt_min: float = 0.0
    scan_tilt_max: float = 0.25
    scan_line_spacing: float = 0.25
    scan_duration: float = 5.0

    def __post_init__(self):
        if self.max_slew_rate <= 0:
            raise ValueError("max_slew_rate must be positive")
        if self.deadband < 0:
            raise ValueError("deadband must be >= 0")
        if self.scan_pan_min >= self.scan_pan_max or self.scan_tilt_min > self.scan_tilt_max:
            raise ValueError("scan area must have positive pan extent")
        if not (-math.pi <= self.scan_pan_min and self.scan_pan_max <= math.pi
                and -math.pi / 2 <= self.scan_tilt_min and self.scan_tilt_max <= math.pi / 2):
            raise ValueError("scan area must lie within pose limits")
        if self.scan_line_spacing <= 0 or self.scan_duration <= 0:
            raise ValueError("scan_line_spacing and scan_duration must be positive")

    @property
    def scan_rows(self) -> int:
        return int(math.floor((self.scan_tilt_max - self.scan_tilt_min)
                              / self.scan_line_spacing)) + 1


@dataclass
class TurretState:
    pose: PanTiltPose = field(default_factory=lambda: PanTiltPose(0.0, 0.0))
    mode: TurretMode = TurretMode.INITIALIZATION
    t: float = 0.0


def scan_mode_command(t: float, params: TurretParams) -> PanTiltPose:
    """Serpentine raster over the scan area, completing once in scan_duration.

    Tilt rows are scan_line_spacing apart; pan sweeps alternately
    left-to-right and right-to-left at constant rate. Times outside
    [0, scan_duration] clamp to the nearest endpoint.
    """
    t = min(max(t, 0.0), params.scan_duration)
    rows = params.scan_rows
    row_time = params.scan_duration / rows
    row = min(int(t / row_time), rows - 1)
    frac = (t - row * row_time) / row_time
    frac = min(max(frac, 0.0), 1.0)
    tilt = params.scan_tilt_min + row * params.scan_line_spacing
    if row % 2 == 0:
        pan = params.scan_pan_min + frac * (params.scan_pan_max - params.scan_pan_min)
    else:
        pan = params.scan_pan_max - frac * (params.scan_pan_max - params.scan_pan_min)
    return PanTiltPose(pan, tilt)


def tracking_command(state: TurretState, est: TrackEstimate, turret_origin,
                     params: TurretParams) -> PanTiltPose:
    """Point the boresight at the estimate; hold inside the deadband.

    The command is pan = atan2(dy, dx), tilt = atan2(dz, hypot(dx, dy)). When
    both axes would move less than the deadband the current pose is returned
    unchanged, so repeated calls with the same estimate are idempotent.
    """
    if est.status is TrackStatus.LOST:
        raise ValueError("tracking_command requires a non-Lost estimate; hold the last command instead")
    d = np.asarray(est.position, dtype=float) - np.asarray(turret_origin, dtype=float)
    horiz = math.hypot(d[0], d[1])
    if horiz == 0.0:
        # gimbal singularity: estimate straight above/below the pan axis
        tilt = math.copysign(math.pi / 2, d[2]) if d[2] != 0.0 else math.pi / 2
        return PanTiltPose(state.pose.pan, tilt)
    pan = math.atan2(d[1], d[0])
    tilt = math.atan2(d[2], horiz)
    if (abs(pan - state.pose.pan) < params.deadband
            and abs(tilt - state.pose.tilt) < params.deadband):
        return state.pose
    return PanTiltPose(pan, tilt)


def step_dynamics(state: TurretState, command: PanTiltPose, dt: float,
                  params: TurretParams) -> TurretState:
    """Advance each axis toward the command by at most max_slew_rate * dt.

    Arrival is exact once the remaining error fits in the step budget. Axes
    are treated as linear with hard stops (pan does not wrap through +-pi);
    poses are clamped to the physical limits.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    budget = params.max_slew_rate * dt

    def follow(current: float, target: float, lo: float, hi: float) -> float:
        delta = min(max(target - current, -budget), budget)
        return min(max(current + delta, lo), hi)

    pose = PanTiltPose(
        follow(state.pose.pan, command.pan, -math.pi, math.pi),
        follow(state.pose.tilt, command.tilt, -math.pi / 2, math.pi / 2),
    )
    return TurretState(pose=pose, mode=state.mode, t=state.t + dt)
