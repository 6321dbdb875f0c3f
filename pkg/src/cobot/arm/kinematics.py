"""Forward kinematics and Jacobians at arbitrary points of the chain.

Everything is computed in the world frame. The geometric Jacobian maps joint
rates to the stacked [linear velocity; angular velocity] of a body point; the
task-frame variant additionally converts the angular block to ZYZ Euler angle
rates for use in task-space control and pose-level constraints.
"""

from dataclasses import dataclass

import numpy as np

from .. import linalg
from .model import PRISMATIC, REVOLUTE


def link_transform(link, qi):
    """Pose of the link frame in its parent frame for joint value qi."""
    if link.joint_type == REVOLUTE:
        theta, d = link.theta0 + qi, link.d
    else:
        theta, d = link.theta0, link.d + qi
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(link.alpha), np.sin(link.alpha)
    return np.array([
        [ct, -st * ca, st * sa, link.a * ct],
        [st, ct * ca, -ct * sa, link.a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def frames(model, q):
    """World transforms of frames 0..n as an (n+1, 4, 4) array."""
    out = np.empty((model.n + 1, 4, 4))
    out[0] = np.eye(4)
    for i, link in enumerate(model.links):
        out[i + 1] = out[i] @ link_transform(link, q[i])
    return out


def point_position(tfs, point):
    tf = tfs[point.link_index]
    return tf[:3, :3] @ point.offset + tf[:3, 3]


def forward_kinematics(model, q, point):
    """Pose (position + ZYZ orientation) of the frame carried by ``point``."""
    from .model import Pose

    model.check_point(point)
    tfs = frames(model, q)
    tf = tfs[point.link_index]
    return Pose(tf[:3, :3] @ point.offset + tf[:3, 3],
                linalg.zyz_from_rotation(tf[:3, :3]))


def jacobian(model, q, point):
    """Geometric Jacobian (6 x n) at ``point``; rows are [linear; angular].

    Columns of joints distal to the carrying link are zero.
    """
    model.check_point(point)
    tfs = frames(model, q)
    p = point_position(tfs, point)
    jac = np.zeros((6, model.n))
    for i in range(point.link_index):
        z = tfs[i][:3, 2]
        if model.links[i].joint_type == REVOLUTE:
            jac[:3, i] = np.cross(z, p - tfs[i][:3, 3])
            jac[3:, i] = z
        else:
            jac[:3, i] = z
    return jac


def _chain_rates(model, tfs, qd, upto):
    """Angular velocity and origin velocity of frames 0..upto (world frame)."""
    omegas = np.zeros((upto + 1, 3))
    vels = np.zeros((upto + 1, 3))
    for i in range(1, upto + 1):
        z_prev = tfs[i - 1][:3, 2]
        step = tfs[i][:3, 3] - tfs[i - 1][:3, 3]
        if model.links[i - 1].joint_type == REVOLUTE:
            omegas[i] = omegas[i - 1] + z_prev * qd[i - 1]
            vels[i] = vels[i - 1] + np.cross(omegas[i], step)
        else:
            omegas[i] = omegas[i - 1]
            vels[i] = vels[i - 1] + np.cross(omegas[i], step) + z_prev * qd[i - 1]
    return omegas, vels


def jacobian_dot(model, q, qd, point):
    """Time derivative of the geometric Jacobian along the joint rates qd."""
    model.check_point(point)
    tfs = frames(model, q)
    link = point.link_index
    p = point_position(tfs, point)
    omegas, vels = _chain_rates(model, tfs, qd, link)
    v_p = vels[link] + np.cross(omegas[link], p - tfs[link][:3, 3])

    jdot = np.zeros((6, model.n))
    for i in range(link):
        z = tfs[i][:3, 2]
        zdot = np.cross(omegas[i], z)
        if model.links[i].joint_type == REVOLUTE:
            jdot[:3, i] = (np.cross(zdot, p - tfs[i][:3, 3])
                           + np.cross(z, v_p - vels[i]))
            jdot[3:, i] = zdot
        else:
            jdot[:3, i] = zdot
    return jdot


@dataclass(frozen=True)
class TaskFrame:
    """Pose-level kinematic state of a body point.

    ``x`` stacks position and ZYZ angles, ``xdot`` their rates; ``jac`` is the
    analytic Jacobian (xdot = jac @ qd) and ``jdot_qd`` the drift term so that
    xddot = jac @ u + jdot_qd under the double integrator model.
    """

    x: np.ndarray
    xdot: np.ndarray
    jac: np.ndarray
    jdot_qd: np.ndarray
    rotation: np.ndarray
    geometric_jac: np.ndarray
    geometric_jdot: np.ndarray


def task_frame(model, q, qd, point):
    model.check_point(point)
    tfs = frames(model, q)
    rot = tfs[point.link_index][:3, :3]
    p = rot @ point.offset + tfs[point.link_index][:3, 3]
    phi = linalg.zyz_from_rotation(rot, strict=True)

    jac_g = jacobian(model, q, point)
    jdot_g = jacobian_dot(model, q, qd, point)

    e_mat = linalg.euler_rate_matrix(phi)
    omega = jac_g[3:] @ qd
    phidot = np.linalg.solve(e_mat, omega)
    edot = linalg.euler_rate_matrix_dot(phi, phidot)

    jac_a = np.vstack([jac_g[:3], np.linalg.solve(e_mat, jac_g[3:])])
    jdot_qd = np.concatenate([
        jdot_g[:3] @ qd,
        np.linalg.solve(e_mat, jdot_g[3:] @ qd - edot @ phidot),
    ])
    xdot = np.concatenate([jac_g[:3] @ qd, phidot])
    return TaskFrame(np.concatenate([p, phi]), xdot, jac_a, jdot_qd,
                     rot, jac_g, jdot_g)


def body_points_state(model, q, points):
    """Positions and linear Jacobians of many body points at once.

    Returns (positions (m, 3), jacobians (m, 3, n)); used by the proximity
    field where only translational sensitivity matters.
    """
    tfs = frames(model, q)
    m = len(points)
    pos = np.empty((m, 3))
    jacs = np.zeros((m, 3, model.n))
    for k, pt in enumerate(points):
        tf = tfs[pt.link_index]
        pos[k] = tf[:3, :3] @ pt.offset + tf[:3, 3]
        for i in range(pt.link_index):
            z = tfs[i][:3, 2]
            if model.links[i].joint_type == REVOLUTE:
                jacs[k, :, i] = np.cross(z, pos[k] - tfs[i][:3, 3])
            else:
                jacs[k, :, i] = z
    return pos, jacs
