"""Serial manipulator description: kinematic/inertial parameters and state types.

Links follow the standard Denavit-Hartenberg convention (a, alpha, d,
theta offset), each carrying mass, center of mass and rotational inertia
expressed in its own frame. Models are immutable after construction and all
downstream computations are pure functions of (model, state).
"""

from dataclasses import dataclass, field
import importlib.resources

import numpy as np
import yaml

from ..errors import ConfigError

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


def _frozen_array(values, shape):
    arr = np.array(values, dtype=float).reshape(shape)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Link:
    """One joint + rigid body in the chain. Lengths in m, angles in rad."""

    a: float
    alpha: float
    d: float
    theta0: float = 0.0
    joint_type: str = REVOLUTE
    mass: float = 1.0
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inertia: np.ndarray = field(default_factory=lambda: np.eye(3) * 1e-3)
    q_min: float = -2.0 * np.pi
    q_max: float = 2.0 * np.pi
    qd_max: float = 10.0

    def __post_init__(self):
        if self.joint_type not in (REVOLUTE, PRISMATIC):
            raise ConfigError(f"unknown joint type {self.joint_type!r}")
        if self.mass <= 0.0:
            raise ConfigError("link mass must be positive")
        object.__setattr__(self, "com", _frozen_array(self.com, (3,)))
        inertia = np.array(self.inertia, dtype=float).reshape(3, 3)
        if not np.allclose(inertia, inertia.T, atol=1e-12):
            raise ConfigError("inertia tensor must be symmetric")
        if np.linalg.eigvalsh(inertia).min() <= 0.0:
            raise ConfigError("inertia tensor must be positive definite")
        object.__setattr__(self, "inertia", _frozen_array(inertia, (3, 3)))
        if self.q_min >= self.q_max:
            raise ConfigError("q_min must be below q_max")
        if self.qd_max <= 0.0:
            raise ConfigError("qd_max must be positive")


@dataclass(frozen=True, eq=False)
class RobotModel:
    """An n-joint serial chain plus the gravity vector acting on it."""

    links: tuple
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    name: str = "robot"

    def __post_init__(self):
        if len(self.links) < 1:
            raise ConfigError("model needs at least one link")
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "gravity", _frozen_array(self.gravity, (3,)))

    @property
    def n(self):
        return len(self.links)

    def end_effector(self, offset=None):
        return BodyPoint(self.n, np.zeros(3) if offset is None else offset)

    def check_point(self, point):
        if not 1 <= point.link_index <= self.n:
            raise ConfigError(
                f"link index {point.link_index} outside [1, {self.n}]")

    def limit_violations(self, state):
        """Joint limit violations as human-readable strings (never raises)."""
        out = []
        for i, link in enumerate(self.links):
            if not link.q_min <= state.q[i] <= link.q_max:
                out.append(f"joint {i + 1} position {state.q[i]:.3f} outside "
                           f"[{link.q_min:.3f}, {link.q_max:.3f}]")
            if abs(state.qd[i]) > link.qd_max:
                out.append(f"joint {i + 1} velocity {state.qd[i]:.3f} exceeds "
                           f"{link.qd_max:.3f}")
        return out


@dataclass(frozen=True, eq=False)
class BodyPoint:
    """A point rigidly attached to link ``link_index`` (1-based), at
    ``offset`` expressed in that link's frame."""

    link_index: int
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "link_index", int(self.link_index))
        object.__setattr__(self, "offset", _frozen_array(self.offset, (3,)))

    def is_end_effector(self, model, tol=0.05):
        return (self.link_index == model.n
                and float(np.linalg.norm(self.offset)) <= tol)


@dataclass(frozen=True, eq=False)
class JointState:
    q: np.ndarray
    qd: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        qd = np.array(self.qd, dtype=float).ravel()
        if q.shape != qd.shape:
            raise ConfigError("q and qd must have the same length")
        object.__setattr__(self, "q", _frozen_array(q, q.shape))
        object.__setattr__(self, "qd", _frozen_array(qd, qd.shape))


@dataclass(frozen=True, eq=False)
class Pose:
    """Position plus ZYZ Euler orientation of a frame, angles in (-pi, pi]."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_array(self.position, (3,)))
        object.__setattr__(self, "orientation",
                           _frozen_array(self.orientation, (3,)))

    def as_vector(self):
        return np.concatenate([self.position, self.orientation])


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force/moment pair expressed in the world frame."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        force = _frozen_array(self.force, (3,))
        moment = _frozen_array(self.moment, (3,))
        if not (np.isfinite(force).all() and np.isfinite(moment).all()):
            raise ConfigError("wrench components must be finite")
        object.__setattr__(self, "force", force)
        object.__setattr__(self, "moment", moment)

    def as_vector(self):
        return np.concatenate([self.force, self.moment])

    @staticmethod
    def from_vector(vec):
        vec = np.asarray(vec, dtype=float).ravel()
        return Wrench(vec[:3], vec[3:6])


def robot_from_dict(data):
    """Build a RobotModel from the declarative schema (see configs/)."""
    try:
        links = []
        for row in data["links"]:
            links.append(Link(
                a=float(row["a"]),
                alpha=float(row["alpha"]),
                d=float(row["d"]),
                theta0=float(row.get("theta0", 0.0)),
                joint_type=row.get("joint_type", REVOLUTE),
                mass=float(row["mass"]),
                com=row.get("com", [0.0, 0.0, 0.0]),
                inertia=row.get("inertia", (np.eye(3) * 1e-3).tolist()),
                q_min=float(row.get("q_min", -2.0 * np.pi)),
                q_max=float(row.get("q_max", 2.0 * np.pi)),
                qd_max=float(row.get("qd_max", 10.0)),
            ))
        return RobotModel(
            links=tuple(links),
            gravity=data.get("gravity", [0.0, 0.0, -9.81]),
            name=data.get("name", "robot"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad robot description: {exc}") from exc


def load_robot(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return robot_from_dict(data)


def load_builtin(name):
    """Load one of the robot models shipped with the package."""
    ref = importlib.resources.files("cobot.configs") / f"{name}.yaml"
    if not ref.is_file():
        raise ConfigError(f"no builtin robot named {name!r}")
    return robot_from_dict(yaml.safe_load(ref.read_text()))


def scale_link_masses(model, factors):
    """New model with per-link masses (and inertias) scaled by ``factors``.

    Used to emulate calibration error between the physical arm and the
    nominal model the estimator runs on.
    """
    factors = np.asarray(factors, dtype=float).ravel()
    if factors.shape != (model.n,):
        raise ConfigError("one scale factor per link required")
    links = []
    for link, f in zip(model.links, factors):
        links.append(Link(
            a=link.a, alpha=link.alpha, d=link.d, theta0=link.theta0,
            joint_type=link.joint_type,
            mass=link.mass * f,
            com=np.array(link.com),
            inertia=np.array(link.inertia) * f,
            q_min=link.q_min, q_max=link.q_max, qd_max=link.qd_max,
        ))
    return RobotModel(links=tuple(links), gravity=np.array(model.gravity),
                      name=model.name + "-perturbed")


def planar_arm(lengths=(1.0, 1.0), masses=None, point_mass=False):
    """Planar arm rotating about z with gravity along -y.

    With ``point_mass`` the whole link mass sits at the link tip, which gives
    the familiar textbook dynamics for one- and two-link arms.
    """
    lengths = tuple(float(v) for v in lengths)
    if masses is None:
        masses = tuple(1.0 for _ in lengths)
    links = []
    for length, mass in zip(lengths, masses):
        if point_mass:
            com = np.zeros(3)
            inertia = np.eye(3) * 1e-9
        else:
            com = np.array([-length / 2.0, 0.0, 0.0])
            iy = mass * length * length / 12.0
            inertia = np.diag([1e-6, iy, iy])
        links.append(Link(a=length, alpha=0.0, d=0.0, mass=mass,
                          com=com, inertia=inertia,
                          q_min=-4 * np.pi, q_max=4 * np.pi, qd_max=50.0))
    return RobotModel(links=tuple(links), gravity=np.array([0.0, -9.81, 0.0]),
                      name=f"planar{len(lengths)}")
