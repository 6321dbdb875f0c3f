from .model import (BodyPoint, JointState, Link, Pose, RobotModel, Wrench,
                    load_builtin, load_robot, planar_arm, robot_from_dict,
                    scale_link_masses)
from .kinematics import (TaskFrame, body_points_state, forward_kinematics,
                         frames, jacobian, jacobian_dot, task_frame)
from .dynamics import (bias_and_gravity, bias_vector, computed_torque,
                       coriolis_matrix, external_torque, forward_dynamics,
                       gravity_vector, inverse_dynamics, mass_matrix,
                       mass_matrix_batch, mass_matrix_gradient_term,
                       step_dynamics, total_energy, track_joint_reference)

__all__ = [
    "BodyPoint", "JointState", "Link", "Pose", "RobotModel", "Wrench",
    "load_builtin", "load_robot", "planar_arm", "robot_from_dict",
    "scale_link_masses",
    "TaskFrame", "body_points_state", "forward_kinematics", "frames",
    "jacobian", "jacobian_dot", "task_frame",
    "bias_and_gravity", "bias_vector", "computed_torque", "coriolis_matrix",
    "external_torque", "forward_dynamics", "gravity_vector",
    "inverse_dynamics", "mass_matrix", "mass_matrix_batch",
    "mass_matrix_gradient_term", "step_dynamics", "total_energy",
    "track_joint_reference",
]
