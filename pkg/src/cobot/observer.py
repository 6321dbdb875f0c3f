"""Momentum-based residual observer and human wrench recovery.

The residual r tracks the total external joint torque through a first-order
filter: with generalized momentum m = M(q) qd and drift term
alpha = g(q) - 0.5 qd^T (dM/dq) qd, the continuous dynamics

    rdot = K (tau_ext - r)

follow from accumulating (alpha - tau - r) and scaling the sum plus momentum
by the diagonal gain K. Subtracting the expected task torque isolates the
human contribution, and a damped pseudo-inverse of the contact Jacobian
transpose maps it back to a wrench at the localized contact point.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .arm.dynamics import gravity_vector, mass_matrix, mass_matrix_gradient_term
from .arm.kinematics import jacobian
from .arm.model import BodyPoint, Wrench
from .errors import ConfigError
from .linalg import damped_pinv


@dataclass(frozen=True)
class ObserverState:
    """Residual filter state. ``gain`` holds the diagonal of K (1/s)."""

    r: np.ndarray
    accumulator: np.ndarray
    gain: np.ndarray
    t: float
    prev_integrand: Optional[np.ndarray] = None


@dataclass(frozen=True)
class HumanEstimate:
    """Estimated human joint torque and, when localized, contact wrench."""

    tau: np.ndarray
    wrench: Optional[Wrench]
    contact: Optional[BodyPoint]
    t: float


def _gain_vector(gain, n):
    gain = np.asarray(gain, dtype=float)
    if gain.ndim == 0:
        gain = np.full(n, float(gain))
    elif gain.ndim == 2:
        if not np.allclose(gain, np.diag(np.diag(gain))):
            raise ConfigError("observer gain must be diagonal")
        gain = np.diag(gain).copy()
    if gain.shape != (n,) or (gain <= 0.0).any():
        raise ConfigError("observer gain must be positive, one entry per joint")
    return gain


def make_observer(model, state, gain):
    """Observer initialized so the residual starts at zero."""
    gain = _gain_vector(gain, model.n)
    momentum = mass_matrix(model, state.q) @ state.qd
    return ObserverState(r=np.zeros(model.n), accumulator=-momentum,
                         gain=gain, t=state.t)


def observer_update(obs, model, state, tau, dt):
    """Advance the residual by one sample of the commanded torque stream.

    The accumulator integrates (alpha - tau - r) with the trapezoidal rule;
    because the new residual appears inside its own integrand the update is
    solved implicitly, which keeps the filter well behaved at gain * dt
    near one.
    """
    if dt <= 0.0:
        raise ConfigError("observer dt must be positive")
    tau = np.asarray(tau, dtype=float)
    if not (np.isfinite(tau).all() and np.isfinite(state.q).all()
            and np.isfinite(state.qd).all()):
        raise ConfigError("observer inputs must be finite")

    alpha = (gravity_vector(model, state.q)
             - mass_matrix_gradient_term(model, state.q, state.qd))
    momentum = mass_matrix(model, state.q) @ state.qd
    drive = alpha - tau

    if obs.prev_integrand is None:
        # no history yet: implicit rectangle step
        base = obs.accumulator + dt * drive
        r_new = obs.gain * (base + momentum) / (1.0 + obs.gain * dt)
        acc_new = base - dt * r_new
    else:
        base = obs.accumulator + 0.5 * dt * (obs.prev_integrand + drive)
        r_new = obs.gain * (base + momentum) / (1.0 + 0.5 * obs.gain * dt)
        acc_new = base - 0.5 * dt * r_new
    return ObserverState(r=r_new, accumulator=acc_new, gain=obs.gain,
                         t=state.t, prev_integrand=drive - r_new)


def estimate_human_torque(r, tau_task):
    """Human-induced joint torque: residual minus the expected task torque."""
    r = np.asarray(r, dtype=float)
    tau_task = np.asarray(tau_task, dtype=float)
    if r.shape != tau_task.shape:
        raise ConfigError("residual and task torque lengths differ")
    return r - tau_task


def estimate_human_wrench(model, q, tau_h, point):
    """Wrench at ``point`` whose joint torque best explains ``tau_h``.

    Components of the true wrench lying in the null space of J_P^T are
    unobservable from joint torques and come back as zero.
    """
    model.check_point(point)
    jac_t = jacobian(model, q, point).T
    if np.linalg.norm(jac_t) == 0.0:
        raise ConfigError("contact Jacobian is identically zero")
    return Wrench.from_vector(damped_pinv(jac_t) @ np.asarray(tau_h, dtype=float))
