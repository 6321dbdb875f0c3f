"""Rigid body dynamics of the serial chain.

The inertia matrix comes from the composite rigid body algorithm and the
bias/gravity forces from a recursive Newton-Euler sweep, both written over
6D spatial vectors ordered [angular; linear]. The same primitives provide
forward simulation (semi-implicit Euler) and the reference-side double
integrator used by the virtual-input controller.
"""

import weakref

import numpy as np

from ..errors import ConfigError, SimulationDivergence
from ..linalg import rot_x, rot_z, skew
from .kinematics import jacobian, frames
from .model import JointState, PRISMATIC, REVOLUTE

# Central difference step for derivatives of the inertia matrix w.r.t. q.
MASS_MATRIX_FD_STEP = 1e-6

_AXIS_REV = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
_AXIS_PRIS = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
_SKEW_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def _motion_transform(rot, pos):
    """Spatial motion transform child <- parent from the child pose (R, p)."""
    x = np.zeros((6, 6))
    x[:3, :3] = rot.T
    x[3:, 3:] = rot.T
    x[3:, :3] = -rot.T @ skew(pos)
    return x


def _fixed_transform(link):
    """Pose of the link frame in the post-joint intermediate frame."""
    rot = rot_z(link.theta0) @ rot_x(link.alpha)
    pos = np.array([link.a * np.cos(link.theta0),
                    link.a * np.sin(link.theta0), link.d])
    return rot, pos


_CONSTANTS_CACHE = weakref.WeakKeyDictionary()


def _link_constants(model):
    """Per-link fixed motion transforms, joint axes and spatial inertias.

    Cached per model instance; models are immutable so this is safe.
    """
    cached = _CONSTANTS_CACHE.get(model)
    if cached is not None:
        return cached
    xf, axes, inertias = [], [], []
    for link in model.links:
        rot, pos = _fixed_transform(link)
        x_fixed = _motion_transform(rot, pos)
        xf.append(x_fixed)
        axes.append(x_fixed @ (_AXIS_REV if link.joint_type == REVOLUTE
                               else _AXIS_PRIS))
        c = skew(link.com)
        isp = np.zeros((6, 6))
        isp[:3, :3] = link.inertia + link.mass * (c @ c.T)
        isp[:3, 3:] = link.mass * c
        isp[3:, :3] = link.mass * c.T
        isp[3:, 3:] = link.mass * np.eye(3)
        inertias.append(isp)
    out = (xf, axes, inertias)
    _CONSTANTS_CACHE[model] = out
    return out


def _joint_transforms_batch(model, q_batch, xf):
    """Motion transforms child <- parent for a (B, n) batch of configurations."""
    q_batch = np.asarray(q_batch, dtype=float)
    b, n = q_batch.shape
    xs = []
    for i, link in enumerate(model.links):
        xj = np.zeros((b, 6, 6))
        if link.joint_type == REVOLUTE:
            c, s = np.cos(q_batch[:, i]), np.sin(q_batch[:, i])
            rzt = np.zeros((b, 3, 3))
            rzt[:, 0, 0] = c
            rzt[:, 0, 1] = s
            rzt[:, 1, 0] = -s
            rzt[:, 1, 1] = c
            rzt[:, 2, 2] = 1.0
            xj[:, :3, :3] = rzt
            xj[:, 3:, 3:] = rzt
        else:
            eye = np.broadcast_to(np.eye(3), (b, 3, 3))
            xj[:, :3, :3] = eye
            xj[:, 3:, 3:] = eye
            xj[:, 3:, :3] = -q_batch[:, i, None, None] * _SKEW_Z
        xs.append(xf[i] @ xj)
    return xs


def mass_matrix_batch(model, q_batch):
    """Joint-space inertia matrices for a (B, n) batch of configurations."""
    xf, axes, inertias = _link_constants(model)
    xs = _joint_transforms_batch(model, q_batch, xf)
    b = np.asarray(q_batch).shape[0]
    n = model.n

    composite = [np.broadcast_to(inertias[i], (b, 6, 6)).copy()
                 for i in range(n)]
    for i in range(n - 1, 0, -1):
        xt = xs[i].transpose(0, 2, 1)
        composite[i - 1] = composite[i - 1] + xt @ composite[i] @ xs[i]

    mass = np.zeros((b, n, n))
    for i in range(n):
        force = composite[i] @ axes[i]
        mass[:, i, i] = force @ axes[i]
        j = i
        while j > 0:
            force = np.einsum("bji,bj->bi", xs[j], force)
            j -= 1
            mass[:, i, j] = mass[:, j, i] = force @ axes[j]
    return mass


def mass_matrix(model, q):
    """Symmetric positive definite joint-space inertia matrix M(q)."""
    return mass_matrix_batch(model, np.asarray(q, dtype=float)[None, :])[0]


def _crm(v):
    """Spatial cross product operator for motion vectors."""
    out = np.zeros((6, 6))
    wx, vx = skew(v[:3]), skew(v[3:])
    out[:3, :3] = wx
    out[3:, :3] = vx
    out[3:, 3:] = wx
    return out


def _crf(v):
    return -_crm(v).T


def inverse_dynamics(model, q, qd, qdd):
    """Joint torques realizing (q, qd, qdd) under gravity, no external wrench.

    Recursive Newton-Euler; gravity enters as a fictitious base acceleration.
    """
    xf, axes, inertias = _link_constants(model)
    xs = [x[0] for x in _joint_transforms_batch(
        model, np.asarray(q, dtype=float)[None, :], xf)]
    n = model.n

    vel = np.zeros(6)
    acc = np.concatenate([np.zeros(3), -model.gravity])
    vels, forces = [], []
    for i in range(n):
        vj = axes[i] * qd[i]
        vel = xs[i] @ vel + vj
        acc = xs[i] @ acc + axes[i] * qdd[i] + _crm(vel) @ vj
        forces.append(inertias[i] @ acc + _crf(vel) @ (inertias[i] @ vel))
        vels.append(vel)

    tau = np.zeros(n)
    for i in range(n - 1, -1, -1):
        tau[i] = axes[i] @ forces[i]
        if i > 0:
            forces[i - 1] = forces[i - 1] + xs[i].T @ forces[i]
    return tau


def gravity_vector(model, q):
    """Gravity torque g(q)."""
    z = np.zeros(model.n)
    return inverse_dynamics(model, q, z, z)


def bias_vector(model, q, qd):
    """Coriolis/centrifugal generalized forces c(q, qd) as an n-vector."""
    return inverse_dynamics(model, q, qd, np.zeros(model.n)) - gravity_vector(model, q)


def bias_and_gravity(model, q, qd):
    """c(q, qd) + g(q) in a single recursion (hot path of the simulator)."""
    return inverse_dynamics(model, q, qd, np.zeros(model.n))


def mass_matrix_gradient_term(model, q, qd):
    """Vector with i-th entry 0.5 * qd^T (dM/dq_i) qd.

    The partial derivatives come from central finite differences of the
    inertia matrix with a fixed 1e-6 rad step; together with gravity this
    forms the drift term of the generalized momentum dynamics.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    n = model.n
    h = MASS_MATRIX_FD_STEP
    batch = np.repeat(q[None, :], 2 * n, axis=0)
    for i in range(n):
        batch[2 * i, i] += h
        batch[2 * i + 1, i] -= h
    mm = mass_matrix_batch(model, batch)
    dm = (mm[0::2] - mm[1::2]) / (2.0 * h)
    return 0.5 * np.einsum("j,ijk,k->i", qd, dm, qd)


def coriolis_matrix(model, q, qd):
    """Christoffel-consistent factorization C with c(q, qd) = C qd.

    Satisfies the skew symmetry of dM/dt - 2C. Assembled from finite
    differences of the inertia matrix; intended for analysis and tests
    rather than the control loop.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    n = model.n
    h = MASS_MATRIX_FD_STEP
    batch = np.repeat(q[None, :], 2 * n, axis=0)
    for i in range(n):
        batch[2 * i, i] += h
        batch[2 * i + 1, i] -= h
    mm = mass_matrix_batch(model, batch)
    dm = (mm[0::2] - mm[1::2]) / (2.0 * h)  # dm[k] = dM/dq_k
    cmat = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            cmat[i, j] = 0.5 * np.sum(
                (dm[:, i, j] + dm[j, i, :] - dm[i, j, :]) * qd)
    return cmat


def external_torque(model, q, external):
    """Generalized force of a list of (BodyPoint, Wrench) pairs."""
    tau = np.zeros(model.n)
    for point, wrench in external:
        tau += jacobian(model, q, point).T @ wrench.as_vector()
    return tau


def forward_dynamics(model, q, qd, tau, external=()):
    rhs = tau + external_torque(model, q, external) - bias_and_gravity(model, q, qd)
    return np.linalg.solve(mass_matrix(model, q), rhs)


def step_dynamics(model, state, tau, external=(), dt=1e-3):
    """One semi-implicit Euler step of the full nonlinear dynamics.

    The velocity update uses the acceleration at the current state and the
    position update the new velocity, which keeps the unforced energy drift
    bounded over long horizons.
    """
    if not 0.0 < dt <= 0.01:
        raise ConfigError(f"dt must be in (0, 0.01], got {dt}")
    qdd = forward_dynamics(model, state.q, state.qd, tau, external)
    qd_new = state.qd + qdd * dt
    q_new = state.q + qd_new * dt
    if not (np.isfinite(q_new).all() and np.isfinite(qd_new).all()):
        raise SimulationDivergence(f"state non-finite at t = {state.t + dt:.4f}")
    return JointState(q_new, qd_new, state.t + dt)


def track_joint_reference(model, ref, u, dt):
    """Advance the commanded double integrator under a piecewise constant u.

    Exact update for the zero-order-hold input, so constant u over T yields
    exactly a uT velocity increment.
    """
    u = np.asarray(u, dtype=float)
    q_new = ref.q + ref.qd * dt + 0.5 * u * dt * dt
    qd_new = ref.qd + u * dt
    if not (np.isfinite(q_new).all() and np.isfinite(qd_new).all()):
        raise SimulationDivergence(f"reference non-finite at t = {ref.t + dt:.4f}")
    return JointState(q_new, qd_new, ref.t + dt)


def computed_torque(model, state, q_ref, qd_ref, u_ff, kp=400.0, kd=40.0):
    """Inner-loop torque tracking the commanded trajectory on the plant."""
    qdd_cmd = u_ff + kp * (q_ref - state.q) + kd * (qd_ref - state.qd)
    return mass_matrix(model, state.q) @ qdd_cmd + bias_and_gravity(
        model, state.q, state.qd)


def total_energy(model, q, qd):
    """Kinetic plus gravitational potential energy of the chain."""
    kinetic = 0.5 * qd @ mass_matrix(model, q) @ qd
    tfs = frames(model, q)
    potential = 0.0
    for i, link in enumerate(model.links):
        com_world = tfs[i + 1][:3, :3] @ link.com + tfs[i + 1][:3, 3]
        potential -= link.mass * model.gravity @ com_world
    return kinetic + potential
