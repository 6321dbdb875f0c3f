"""Reaction behaviors and the mode machine that arbitrates them.

Three virtual inputs for the double-integrator command model: task tracking
through a closed-loop inverse kinematics law, an admittance that renders a
mass-damper at the end effector when the operator guides it, and a proximity
recovery that raises a scalar safety margin after an accidental collision.
A small finite state machine selects among them from the debounced
classifier events; intentional contacts away from the end effector stay in
task mode and are absorbed in the null space of the task instead.
"""

import enum
import logging
import weakref
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .arm.kinematics import body_points_state, jacobian, jacobian_dot, task_frame
from .arm.model import BodyPoint
from .errors import ConfigError, JacobianSingular
from .linalg import damped_pinv, rot_x, wrap_angle

log = logging.getLogger(__name__)


class Mode(enum.Enum):
    TASK = "task"
    ADMITTANCE = "admittance"
    AVOIDANCE = "avoidance"


class Detection(enum.Enum):
    NO_CONTACT = 0
    CONTACT = 1


class Recognition(enum.Enum):
    INTENTIONAL = 0
    ACCIDENTAL = 1


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """Behavior gains; defaults are the values used by the shipped scenarios."""

    kp_task: np.ndarray          # 6x6, task-space stiffness
    kd_task: np.ndarray          # 6x6, task-space damping
    m_d: np.ndarray              # 6x6, rendered inertia
    d_d: np.ndarray              # 6x6, rendered damping
    kp_field: float              # safety margin stiffness
    kd_field: float              # safety margin damping
    f_d: float                   # margin the recovery regulates towards
    f_min: float                 # margin required to leave avoidance

    def __post_init__(self):
        for name in ("kp_task", "kd_task", "m_d", "d_d"):
            mat = np.array(getattr(self, name), dtype=float).reshape(6, 6)
            if np.linalg.eigvalsh(0.5 * (mat + mat.T)).min() <= 0.0:
                raise ConfigError(f"{name} must be positive definite")
            mat.flags.writeable = False
            object.__setattr__(self, name, mat)
        if self.kp_field <= 0.0 or self.kd_field <= 0.0:
            raise ConfigError("field gains must be positive")
        if not 0.0 < self.f_d < self.f_min:
            raise ConfigError("thresholds must satisfy 0 < f_d < f_min")


def default_gains():
    return ControllerGains(
        kp_task=np.eye(6) * 6.0,
        kd_task=np.eye(6) * 5.0,
        m_d=np.eye(6) * 5.0,
        d_d=np.eye(6) * 100.0,
        kp_field=6.0,
        kd_field=5.0,
        f_d=10.0,
        f_min=11.0,
    )


@dataclass(frozen=True, eq=False)
class TaskTrajectory:
    """Desired end-effector trajectory with consistent derivatives.

    ``orientation_relaxed`` grants permission to trade end-effector
    orientation for compliance when the operator reshapes the arm.
    """

    pose: callable            # t -> (6,)
    velocity: callable        # t -> (6,)
    acceleration: callable    # t -> (6,)
    orientation_relaxed: bool = False


def validate_trajectory(traj, times, tol=1e-3):
    """Spot-check that velocity/acceleration match finite differences."""
    eps = 1e-4
    for t in times:
        v_fd = (traj.pose(t + eps) - traj.pose(t - eps)) / (2 * eps)
        a_fd = (traj.velocity(t + eps) - traj.velocity(t - eps)) / (2 * eps)
        if (np.abs(v_fd - traj.velocity(t)).max() > tol
                or np.abs(a_fd - traj.acceleration(t)).max() > tol):
            raise ConfigError(f"trajectory derivatives inconsistent at t={t}")
    return traj


def pose_error(x_desired, x_actual):
    """Task error with the orientation components wrapped to (-pi, pi]."""
    err = np.asarray(x_desired, dtype=float) - np.asarray(x_actual, dtype=float)
    err[3:] = wrap_angle(err[3:])
    return err


def clik_acceleration(model, state, traj, gains, t, relax_orientation=False):
    """Task-space tracking acceleration mapped to joint space.

    The closed loop per axis is  err_ddot + Kd err_dot + Kp err = 0. With
    orientation relaxed only the position rows are tracked, leaving the
    remaining directions to the null-space behavior.
    """
    tf = task_frame(model, state.q, state.qd, model.end_effector())
    err = pose_error(traj.pose(t), tf.x)
    errd = traj.velocity(t) - tf.xdot
    xdd_cmd = traj.acceleration(t) + gains.kd_task @ errd + gains.kp_task @ err

    if relax_orientation:
        jac, drift, cmd = tf.jac[:3], tf.jdot_qd[:3], xdd_cmd[:3]
    else:
        jac, drift, cmd = tf.jac, tf.jdot_qd, xdd_cmd
    if np.linalg.svd(jac, compute_uv=False)[0] < 1e-9:
        raise JacobianSingular("task Jacobian vanished")
    return damped_pinv(jac) @ (cmd - drift)


def task_execution_input(model, state, traj, gains, qn_ddot, t,
                         relax_orientation=False):
    """Virtual input of the task execution behavior."""
    return clik_acceleration(model, state, traj, gains, t,
                             relax_orientation) + qn_ddot


def nullspace_reconfig(model, state, h_est, point, gains, q_task_ddot,
                       orientation_relaxed=False):
    """Joint accelerations that render a mass-damper at a structure contact
    while leaving the protected task components untouched.

    The compliance acts through the projector onto the null space of the
    task Jacobian (positional rows only when the task orientation is
    relaxed), so the commanded task acceleration is preserved exactly.
    """
    model.check_point(point)
    ee = model.end_effector()
    jac_task = jacobian(model, state.q, ee)
    if orientation_relaxed:
        jac_task = jac_task[:3]
    projector = np.eye(model.n) - damped_pinv(jac_task) @ jac_task

    jac_p = jacobian(model, state.q, point)
    jdot_p = jacobian_dot(model, state.q, state.qd, point)
    feasible = jac_p @ projector
    if np.linalg.svd(feasible, compute_uv=False)[0] < 1e-9:
        log.warning("no compliance possible at link %d without violating "
                    "the task", point.link_index)
        return np.zeros(model.n)

    xdot_p = jac_p @ state.qd
    target = np.linalg.solve(gains.m_d,
                             -gains.d_d @ xdot_p + h_est.as_vector())
    return damped_pinv(feasible) @ (target - jdot_p @ state.qd
                                    - jac_p @ q_task_ddot)


def admittance_input(model, state, h_est, gains, qn_ddot, dt):
    """Virtual input rendering  M_d xddot + D_d xdot = h  at the end effector.

    Discretized exactly over one control period: the commanded acceleration
    reproduces the sampled solution of the first-order twist dynamics, so
    step responses match the continuous model at the sampling instants.
    """
    ee = model.end_effector()
    jac = jacobian(model, state.q, ee)
    jdot_qd = jacobian_dot(model, state.q, state.qd, ee) @ state.qd
    twist = jac @ state.qd

    decay = expm(-np.linalg.solve(gains.m_d, gains.d_d) * dt)
    settle = np.linalg.solve(gains.d_d, h_est.as_vector())
    twist_next = settle + decay @ (twist - settle)
    xdd_cmd = (twist_next - twist) / dt
    return damped_pinv(jac) @ (xdd_cmd - jdot_qd) + qn_ddot


@dataclass(frozen=True, eq=False)
class SafetyField:
    """Scalar human-robot proximity margin, its configuration gradient and
    the (non-positive) deficit relative to the regulation threshold."""

    value: float
    jac: np.ndarray
    deficit: float


_SAMPLE_CACHE = weakref.WeakKeyDictionary()

FIELD_GAMMA = 25.0     # margin per meter of clearance: f_d=10 at 0.40 m
FIELD_BETA = 50.0      # smooth-min sharpness (1/m)
SAMPLES_PER_LINK = 10


def _structure_samples(model):
    """Sample points spread along each link segment, cached per model."""
    pts = _SAMPLE_CACHE.get(model)
    if pts is not None:
        return pts
    pts = []
    for idx, link in enumerate(model.links, start=1):
        # parent origin expressed in the link's own frame; constant for
        # revolute joints (prismatic links are sampled at their nominal d)
        rot_fix = np.array([
            [np.cos(link.theta0), np.sin(link.theta0), 0.0],
            [-np.sin(link.theta0), np.cos(link.theta0), 0.0],
            [0.0, 0.0, 1.0],
        ])
        base = np.array([link.a * np.cos(link.theta0),
                         link.a * np.sin(link.theta0), link.d])
        start = -(rot_x(link.alpha).T @ rot_fix @ base)
        for k in range(SAMPLES_PER_LINK):
            frac = (k + 0.5) / SAMPLES_PER_LINK
            pts.append(BodyPoint(idx, start * (1.0 - frac)))
    _SAMPLE_CACHE[model] = pts
    return pts


def safety_field(model, q, human_points, gains, gamma=FIELD_GAMMA,
                 beta=FIELD_BETA):
    """Proximity margin between the sampled robot structure and the human.

    Uses a log-sum-exp smooth minimum over all point pair distances so the
    gradient with respect to the joint angles exists everywhere; the margin
    is ``gamma`` times the smoothed clearance.
    """
    human_points = np.atleast_2d(np.asarray(human_points, dtype=float))
    if human_points.size == 0:
        raise ConfigError("human point set must be non-empty")
    pts = _structure_samples(model)
    pos, jacs = body_points_state(model, q, pts)       # (m,3), (m,3,n)

    diff = pos[:, None, :] - human_points[None, :, :]  # (m,h,3)
    dist = np.linalg.norm(diff, axis=2)                # (m,h)
    dmin_soft = -np.log(np.sum(np.exp(-beta * (dist - dist.min())))) / beta \
        + dist.min()
    weights = np.exp(-beta * (dist - dist.min()))
    weights /= weights.sum()

    unit = diff / np.maximum(dist, 1e-9)[..., None]    # (m,h,3)
    grad_per_point = np.einsum("mh,mhk->mk", weights, unit)   # (m,3)
    jac_f = gamma * np.einsum("mk,mkn->n", grad_per_point, jacs)

    value = gamma * max(dmin_soft, 0.0)
    return SafetyField(value=float(value), jac=jac_f,
                       deficit=min(0.0, float(value) - gains.f_d))


def avoidance_input(field, prev_field, qdot, gains, qn_ddot, dt):
    """Virtual input restoring the safety margin after a collision.

    Regulates the margin deficit to zero with second-order error dynamics
    deficit_ddot + kd deficit_dot + kp deficit = 0; the deficit is clamped
    at zero on the safe side so the behavior is inactive there. Margin rate
    and field Jacobian rate come from backward differences at the control
    period.
    """
    if np.linalg.norm(field.jac) < 1e-9:
        log.warning("safety field locally insensitive to the joints")
        return np.array(qn_ddot, dtype=float)
    if prev_field is None:
        deficit_rate = 0.0
        jdot_qd = 0.0
    else:
        deficit_rate = (field.deficit - prev_field.deficit) / dt
        jdot_qd = (field.jac - prev_field.jac) / dt @ qdot
    pinv_row = field.jac / (field.jac @ field.jac)
    forcing = (-gains.kd_field * deficit_rate - gains.kp_field * field.deficit
               - jdot_qd)
    return pinv_row * forcing + qn_ddot


@dataclass(frozen=True, eq=False)
class FsmState:
    mode: Mode = Mode.TASK
    contact: Optional[BodyPoint] = None
    entered_at: float = 0.0


def fsm_step(fsm, detection, recognition, point, f_value, gains, model, t):
    """One arbitration step on debounced classifier events.

    Edges: task -> admittance on an intentional end-effector contact; task
    stays in task with a structure contact recorded (null-space compliance)
    on an intentional contact elsewhere; any mode -> avoidance on an
    accidental contact; admittance -> task when contact ends; avoidance ->
    task once the margin recovers above f_min. Avoidance is only left
    through the margin condition, whatever the classifiers report.
    """
    if recognition is not None and detection is not Detection.CONTACT:
        raise ConfigError("recognition event without a detected contact")

    if fsm.mode is Mode.AVOIDANCE:
        if f_value >= gains.f_min:
            return FsmState(Mode.TASK, None, t)
        return fsm

    if detection is Detection.CONTACT and recognition is Recognition.ACCIDENTAL:
        return FsmState(Mode.AVOIDANCE, point, t)

    if fsm.mode is Mode.ADMITTANCE:
        if detection is Detection.NO_CONTACT:
            return FsmState(Mode.TASK, None, t)
        return fsm

    # task mode
    if detection is Detection.CONTACT and recognition is Recognition.INTENTIONAL \
            and point is not None:
        if point.is_end_effector(model):
            return FsmState(Mode.ADMITTANCE, point, t)
        return FsmState(Mode.TASK, point, fsm.entered_at)
    if detection is Detection.NO_CONTACT and fsm.contact is not None:
        return FsmState(Mode.TASK, None, fsm.entered_at)
    return fsm


@dataclass(frozen=True, eq=False)
class RejoinBlend:
    """Quintic decay of a pose offset, used to rebase the task reference to
    the current pose when a behavior hands control back to task execution."""

    t0: float
    duration: float
    offset: np.ndarray       # (6,) pose offset at t0
    offset_rate: np.ndarray  # (6,) offset rate at t0

    def _poly(self, t):
        s = np.clip((t - self.t0) / self.duration, 0.0, 1.0)
        T = self.duration
        # quintic with p(0)=o, pd(0)=od, pdd(0)=0, all zero at s=1
        o, od = self.offset, self.offset_rate * T
        c3 = -10.0 * o - 6.0 * od
        c4 = 15.0 * o + 8.0 * od
        c5 = -6.0 * o - 3.0 * od
        p = o + od * s + c3 * s**3 + c4 * s**4 + c5 * s**5
        pd = (od + 3 * c3 * s**2 + 4 * c4 * s**3 + 5 * c5 * s**4) / T
        pdd = (6 * c3 * s + 12 * c4 * s**2 + 20 * c5 * s**3) / (T * T)
        if t > self.t0 + self.duration:
            pd = np.zeros(6)
            pdd = np.zeros(6)
        return p, pd, pdd

    def active(self, t):
        return t <= self.t0 + self.duration


def blended_trajectory(base, blend):
    """Task trajectory shifted by a decaying rejoin offset."""
    return TaskTrajectory(
        pose=lambda t: base.pose(t) + blend._poly(t)[0],
        velocity=lambda t: base.velocity(t) + blend._poly(t)[1],
        acceleration=lambda t: base.acceleration(t) + blend._poly(t)[2],
        orientation_relaxed=base.orientation_relaxed,
    )


def start_rejoin(traj, t, x_current, xdot_current, duration=1.0):
    """Blend from the current commanded pose back onto the live trajectory."""
    offset = pose_error(x_current, traj.pose(t))
    rate = np.asarray(xdot_current, dtype=float) - traj.velocity(t)
    return RejoinBlend(t0=t, duration=duration, offset=offset,
                       offset_rate=rate)
