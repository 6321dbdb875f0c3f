"""Task trajectories, environment interaction models and a small IK helper.

Trajectories are built from quintic polynomial segments with full boundary
conditions, stitched into piecewise schedules; this keeps commanded pose,
velocity and acceleration consistent everywhere, which the tracking and
constraint layers rely on.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..arm.kinematics import task_frame
from ..arm.model import Wrench
from ..behaviors import TaskTrajectory, pose_error
from ..errors import ConfigError
from ..linalg import damped_pinv, wrap_angle


def _quintic_coeffs(p0, v0, a0, p1, v1, a1, duration):
    """Coefficients of a quintic matching pose/velocity/acceleration at both
    ends, in normalized time s = t / duration."""
    T = duration
    p0, v0, a0 = (np.asarray(x, dtype=float) for x in (p0, v0, a0))
    p1, v1, a1 = (np.asarray(x, dtype=float) for x in (p1, v1, a1))
    V0, V1 = v0 * T, v1 * T
    A0, A1 = a0 * T * T, a1 * T * T
    c0, c1, c2 = p0, V0, 0.5 * A0
    d = p1 - (c0 + c1 + c2)
    dv = V1 - (c1 + 2 * c2)
    da = A1 - 2 * c2
    c3 = 10.0 * d - 4.0 * dv + 0.5 * da
    c4 = -15.0 * d + 7.0 * dv - da
    c5 = 6.0 * d - 3.0 * dv + 0.5 * da
    return np.stack([c0, c1, c2, c3, c4, c5])


@dataclass(frozen=True, eq=False)
class QuinticSegment:
    coeffs: np.ndarray
    duration: float

    def eval(self, t):
        s = np.clip(t / self.duration, 0.0, 1.0)
        powers = np.array([1.0, s, s**2, s**3, s**4, s**5])
        dpow = np.array([0.0, 1.0, 2 * s, 3 * s**2, 4 * s**3, 5 * s**4])
        ddpow = np.array([0.0, 0.0, 2.0, 6 * s, 12 * s**2, 20 * s**3])
        c = self.coeffs
        return (powers @ c, (dpow @ c) / self.duration,
                (ddpow @ c) / self.duration ** 2)


def quintic_segment(p0, p1, duration, v0=None, v1=None, a0=None, a1=None):
    zero = np.zeros(np.asarray(p0).shape)
    coeffs = _quintic_coeffs(
        p0, zero if v0 is None else v0, zero if a0 is None else a0,
        p1, zero if v1 is None else v1, zero if a1 is None else a1, duration)
    return QuinticSegment(coeffs, float(duration))


def segment_trajectory(segment, orientation_relaxed=False):
    return TaskTrajectory(
        pose=lambda t: segment.eval(t)[0],
        velocity=lambda t: segment.eval(t)[1],
        acceleration=lambda t: segment.eval(t)[2],
        orientation_relaxed=orientation_relaxed,
    )


def hold_trajectory(pose, orientation_relaxed=False):
    pose = np.asarray(pose, dtype=float)
    zero = np.zeros(6)
    return TaskTrajectory(
        pose=lambda t: pose.copy(),
        velocity=lambda t: zero.copy(),
        acceleration=lambda t: zero.copy(),
        orientation_relaxed=orientation_relaxed,
    )


def waypoint_trajectory(poses, segment_time, orientation_relaxed=False):
    """Rest-to-rest quintics through a pose sequence, holding the last pose.

    Orientation differences take the short way around the circle.
    """
    poses = [np.asarray(p, dtype=float) for p in poses]
    adjusted = [poses[0]]
    for p in poses[1:]:
        prev = adjusted[-1]
        nxt = p.copy()
        nxt[3:] = prev[3:] + wrap_angle(p[3:] - prev[3:])
        adjusted.append(nxt)
    segments = [quintic_segment(adjusted[i], adjusted[i + 1], segment_time)
                for i in range(len(adjusted) - 1)]

    def locate(t):
        idx = min(int(t // segment_time), len(segments) - 1) if t >= 0 else 0
        return segments[idx], t - idx * segment_time

    def pose(t):
        seg, tl = locate(t)
        return seg.eval(tl)[0]

    def velocity(t):
        seg, tl = locate(t)
        return seg.eval(tl)[1]

    def acceleration(t):
        seg, tl = locate(t)
        return seg.eval(tl)[2]

    return TaskTrajectory(pose, velocity, acceleration, orientation_relaxed)


def circular_sweep(center, radius, period, height, orientation,
                   orientation_relaxed=False):
    """Constant-rate circle in the horizontal plane at a fixed pressing
    height, e.g. a wiping motion on a work surface."""
    cx, cy = float(center[0]), float(center[1])
    w = 2.0 * np.pi / period
    phi = np.asarray(orientation, dtype=float)

    def pose(t):
        a = w * t
        return np.concatenate([[cx + radius * np.cos(a),
                                cy + radius * np.sin(a), height], phi])

    def velocity(t):
        a = w * t
        return np.array([-radius * w * np.sin(a), radius * w * np.cos(a),
                         0.0, 0.0, 0.0, 0.0])

    def acceleration(t):
        a = w * t
        return np.array([-radius * w * w * np.cos(a),
                         -radius * w * w * np.sin(a), 0.0, 0.0, 0.0, 0.0])

    return TaskTrajectory(pose, velocity, acceleration, orientation_relaxed)


@dataclass(frozen=True, eq=False)
class Phase:
    """One entry of a task schedule, with its trajectory in local time."""

    name: str
    start: float
    end: float
    trajectory: TaskTrajectory


@dataclass(frozen=True, eq=False)
class ScheduledTrajectory:
    """Trajectory stitched from phases; delegates to the active phase."""

    phases: tuple

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        prev_end = 0.0
        for ph in self.phases:
            if abs(ph.start - prev_end) > 1e-9:
                raise ConfigError(f"phase {ph.name} does not start at "
                                  f"{prev_end}")
            prev_end = ph.end

    def _phase(self, t):
        for ph in self.phases:
            if t < ph.end:
                return ph
        return self.phases[-1]

    def phase_name(self, t):
        return self._phase(t).name

    def pose(self, t):
        ph = self._phase(t)
        return ph.trajectory.pose(min(t, ph.end) - ph.start)

    def velocity(self, t):
        ph = self._phase(t)
        return ph.trajectory.velocity(min(t, ph.end) - ph.start)

    def acceleration(self, t):
        ph = self._phase(t)
        return ph.trajectory.acceleration(min(t, ph.end) - ph.start)

    @property
    def orientation_relaxed(self):
        return any(ph.trajectory.orientation_relaxed for ph in self.phases)

    def relaxed_at(self, t):
        return self._phase(t).trajectory.orientation_relaxed


@dataclass(frozen=True, eq=False)
class TableModel:
    """Viscoelastic normal contact with Coulomb-like tangential friction.

    Produces a wrench on the end effector whenever it dips below the contact
    plane (the compliant pad surface); the normal force is never adhesive.
    """

    contact_z: float
    stiffness: float = 2000.0
    damping: float = 50.0
    friction: float = 0.3

    def wrench(self, position, velocity):
        depth = self.contact_z - position[2]
        if depth <= 0.0:
            return None
        normal = self.stiffness * depth - self.damping * velocity[2]
        normal = max(normal, 0.0)
        v_tan = np.array([velocity[0], velocity[1], 0.0])
        speed = np.linalg.norm(v_tan)
        tangential = (-self.friction * normal * v_tan / speed
                      if speed > 1e-6 else np.zeros(3))
        return Wrench(np.array([tangential[0], tangential[1], normal]),
                      np.zeros(3))


@dataclass(frozen=True, eq=False)
class PayloadRamp:
    """Payload mass growing linearly over a window and then persisting,
    e.g. a vessel being filled while the arm holds it."""

    start: float
    duration: float
    final_mass: float
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def mass(self, t):
        if t <= self.start:
            return 0.0
        frac = min((t - self.start) / self.duration, 1.0)
        return self.final_mass * frac

    def wrench(self, t):
        m = self.mass(t)
        if m <= 0.0:
            return None
        return Wrench(m * self.gravity, np.zeros(3))


def solve_ik(model, target_pose, q_seed, iters=300, tol=1e-9):
    """Damped least squares IK onto a pose; deterministic scenario plumbing."""
    q = np.asarray(q_seed, dtype=float).copy()
    zero = np.zeros(model.n)
    from ..arm.model import JointState

    for _ in range(iters):
        tf = task_frame(model, q, zero, model.end_effector())
        err = pose_error(target_pose, tf.x)
        if np.linalg.norm(err) < tol:
            break
        q = q + damped_pinv(tf.jac) @ (0.5 * err)
    return q
