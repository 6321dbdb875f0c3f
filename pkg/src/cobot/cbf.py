"""Constraint filter: pose-level barrier constraints enforced through a QP.

Scalar constraints phi(x) >= 0 on the end-effector pose have relative degree
two under the double-integrator command model, so each one is reduced to a
row linear in the input via the exponential barrier cascade

    phi_ddot + (l1 + l2) phi_dot + l1 l2 phi >= 0.

The filter solves a small dense strictly convex QP with an active-set
method: starting from the unconstrained optimum it alternates between
adding the most violated row as an equality and dropping rows whose
multiplier goes negative, with every equality subproblem solved through a
Cholesky factorization of the weight matrix.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .arm.kinematics import task_frame
from .errors import ConfigError, QpInfeasible
from .linalg import wrap_angle

ORIENTATION_LOWER = "orientation-lower"
ORIENTATION_UPPER = "orientation-upper"
WORKSPACE_HEIGHT = "workspace-height"
CUSTOM_SCALAR = "custom-scalar"

BRAKING_GAIN = 10.0  # fallback input -k qd when the QP reports infeasibility


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """One scalar pose constraint.

    kinds:
      orientation-lower / orientation-upper: box faces
          wrap(phi_axis - target) +- tolerance >= 0 on a ZYZ angle;
      workspace-height: p_z - height >= 0;
      custom-scalar: weight . x - offset >= 0 on the stacked pose vector.

    ``lambda1``/``lambda2`` are the barrier cascade poles.
    """

    kind: str
    axis: int = 0
    target: float = 0.0
    tolerance: float = 0.0
    height: float = 0.0
    weight: Optional[np.ndarray] = None
    offset: float = 0.0
    lambda1: float = 4.0
    lambda2: float = 4.0

    def __post_init__(self):
        if self.kind not in (ORIENTATION_LOWER, ORIENTATION_UPPER,
                             WORKSPACE_HEIGHT, CUSTOM_SCALAR):
            raise ConfigError(f"unknown constraint kind {self.kind!r}")
        if self.lambda1 <= 0.0 or self.lambda2 <= 0.0:
            raise ConfigError("barrier gains must be positive")
        if self.kind in (ORIENTATION_LOWER, ORIENTATION_UPPER):
            if not 0 <= self.axis <= 2:
                raise ConfigError("orientation axis must be 0, 1 or 2")
            if self.tolerance <= 0.0:
                raise ConfigError("orientation tolerance must be positive")
        if self.kind == CUSTOM_SCALAR:
            w = np.array(self.weight, dtype=float).reshape(6)
            w.flags.writeable = False
            object.__setattr__(self, "weight", w)


def orientation_box(target, tolerance, lambda1=4.0, lambda2=4.0):
    """Lower and upper constraint specs around a desired ZYZ orientation."""
    specs = []
    for axis in range(3):
        for kind in (ORIENTATION_LOWER, ORIENTATION_UPPER):
            specs.append(ConstraintSpec(kind=kind, axis=axis,
                                        target=float(target[axis]),
                                        tolerance=float(tolerance),
                                        lambda1=lambda1, lambda2=lambda2))
    return specs


def workspace_height(height, lambda1=4.0, lambda2=4.0):
    return [ConstraintSpec(kind=WORKSPACE_HEIGHT, height=float(height),
                           lambda1=lambda1, lambda2=lambda2)]


@dataclass(frozen=True, eq=False)
class ConstraintRow:
    """Linear-in-input form a . u >= b of one constraint, with the current
    constraint value and rate for logging."""

    a: np.ndarray
    b: float
    phi: float
    phidot: float


def _phi_terms(tf, spec):
    """(phi, d phi/dx) for the built-in constraint kinds."""
    if spec.kind == WORKSPACE_HEIGHT:
        grad = np.zeros(6)
        grad[2] = 1.0
        return tf.x[2] - spec.height, grad
    if spec.kind == CUSTOM_SCALAR:
        return float(spec.weight @ tf.x - spec.offset), np.array(spec.weight)
    grad = np.zeros(6)
    err = float(wrap_angle(tf.x[3 + spec.axis] - spec.target))
    if spec.kind == ORIENTATION_LOWER:
        grad[3 + spec.axis] = 1.0
        return err + spec.tolerance, grad
    grad[3 + spec.axis] = -1.0
    return spec.tolerance - err, grad


def constraint_row(model, state, spec, tf=None):
    """Reduce one relative-degree-two constraint to a row linear in u.

    With phi linear in the pose, phi_ddot = g . (J u + Jdot qd), so the
    barrier cascade becomes a . u >= b with a = g . J.
    """
    if tf is None:
        tf = task_frame(model, state.q, state.qd, model.end_effector())
    phi, grad = _phi_terms(tf, spec)
    phidot = float(grad @ tf.xdot)
    a = grad @ tf.jac
    b = (-float(grad @ tf.jdot_qd)
         - (spec.lambda1 + spec.lambda2) * phidot
         - spec.lambda1 * spec.lambda2 * phi)
    return ConstraintRow(a=a, b=b, phi=phi, phidot=phidot)


@dataclass(frozen=True, eq=False)
class QpProblem:
    """min 0.5 (u - u_desired)' Q (u - u_desired)  s.t.  a_i . u >= b_i."""

    u_desired: np.ndarray
    q_weight: np.ndarray
    rows: tuple

    def __post_init__(self):
        qw = np.array(self.q_weight, dtype=float)
        if np.linalg.eigvalsh(0.5 * (qw + qw.T)).min() <= 0.0:
            raise ConfigError("QP weight must be positive definite")
        object.__setattr__(self, "q_weight", qw)
        object.__setattr__(self, "rows", tuple(self.rows))


def solve_qp(problem, tol=1e-10, max_iters=200):
    """Exact minimizer by a primal-dual active-set iteration.

    Starts from the unconstrained optimum, solves the working set as
    equalities through the Cholesky factor of Q, drops rows whose multiplier
    goes negative and adds the most violated row until the KKT conditions
    hold. Raises QpInfeasible (carrying the working set) when the active
    equalities are inconsistent or the iteration cannot make progress.
    """
    u_des = np.asarray(problem.u_desired, dtype=float)
    rows = problem.rows
    if not rows:
        return u_des.copy()
    a_mat = np.array([r.a for r in rows])
    b_vec = np.array([r.b for r in rows])
    chol = cho_factor(problem.q_weight)
    qinv_at = cho_solve(chol, a_mat.T)          # Q^-1 A^T, (n, m)

    feas_tol = 1e-9 * max(1.0, float(np.abs(b_vec).max()))
    active = []
    for _ in range(max_iters):
        if active:
            a_act = a_mat[active]
            gram = a_act @ qinv_at[:, active]
            rhs = b_vec[active] - a_act @ u_des
            lam = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            if np.abs(gram @ lam - rhs).max() > feas_tol:
                raise QpInfeasible(tuple(sorted(active)))
            if lam.min() < -tol:
                del active[int(np.argmin(lam))]
                continue
            u = u_des + qinv_at[:, active] @ lam
        else:
            u = u_des.copy()

        slack = a_mat @ u - b_vec
        worst = int(np.argmin(slack))
        if slack[worst] >= -feas_tol:
            return u
        if worst in active:
            raise QpInfeasible(tuple(sorted(active)))
        active.append(worst)
    raise QpInfeasible(tuple(sorted(active)),
                       "active-set iteration did not converge")


def braking_input(state, gain=BRAKING_GAIN):
    """Safe fallback input when the constraint rows are inconsistent."""
    return -gain * state.qd


@dataclass(frozen=True, eq=False)
class FilterResult:
    u: np.ndarray
    rows: tuple
    active: tuple       # indices of rows tight at the solution
    specs: tuple


def filter_input(model, state, u_desired, specs, q_weight=None, tf=None):
    """Assemble rows for every spec and project the desired input onto them.

    Runs every control step regardless of the active behavior; with no
    active constraint the input passes through bit-for-bit.
    """
    n = model.n
    q_weight = np.eye(n) if q_weight is None else np.asarray(q_weight, dtype=float)
    if tf is None:
        tf = task_frame(model, state.q, state.qd, model.end_effector())
    rows = tuple(constraint_row(model, state, spec, tf) for spec in specs)
    problem = QpProblem(np.asarray(u_desired, dtype=float), q_weight, rows)
    u = solve_qp(problem)
    slack = np.array([r.a @ u - r.b for r in rows]) if rows else np.zeros(0)
    active = tuple(int(i) for i in np.flatnonzero(slack < 1e-8)) if rows else ()
    return FilterResult(u=u, rows=rows, active=active, specs=tuple(specs))
