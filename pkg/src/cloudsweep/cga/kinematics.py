"""Serial-chain kinematics: product-of-exponentials motors and Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    Multivector,
    motor_exp,
    one,
    rotation_generator,
    sandwich,
    translation_generator,
)
from .primitives import embed_point, extract_point


def revolute_screw(point, axis) -> Multivector:
    """Unit-rate screw generator of a revolute joint through `point`.

    exp(q * B) rotates by +q radians right-handed about the axis.
    """
    B0 = rotation_generator(axis, 1.0)
    T = motor_exp(translation_generator(point))
    return sandwich(T, B0)


def prismatic_screw(axis) -> Multivector:
    """Unit-rate screw generator of a prismatic joint along `axis`."""
    u = np.asarray(axis, dtype=float)
    return translation_generator(u / np.linalg.norm(u))


@dataclass
class KinematicChain:
    """Joint screw generators in the zero configuration plus a base motor.

    Forward kinematics composes exp(q_i B_i) left to right and finishes with
    the base motor, so the screws are expressed in the base frame at q = 0.
    """

    screws: list
    base: Multivector = field(default_factory=lambda: Multivector(one.c))

    @property
    def njoints(self) -> int:
        return len(self.screws)

    def __post_init__(self):
        for B in self.screws:
            if B.grades(1e-12) not in ([], [2]):
                raise ValueError("joint screw must be a pure bivector")


def joint_motors(chain: KinematicChain, q) -> list:
    q = np.asarray(q, dtype=float)
    if len(q) != chain.njoints:
        raise ValueError(f"expected {chain.njoints} joint values, got {len(q)}")
    return [motor_exp(float(qi) * B) for qi, B in zip(q, chain.screws)]


def forward_kinematics(chain: KinematicChain, q) -> Multivector:
    M = one
    for Mi in joint_motors(chain, q):
        M = M * Mi
    return M * chain.base


def ee_point(chain: KinematicChain, q) -> np.ndarray:
    """Euclidean end-effector position M(q) e0 ~M(q)."""
    M = forward_kinematics(chain, q)
    return extract_point(sandwich(M, embed_point([0.0, 0.0, 0.0])))


def geometric_jacobian(chain: KinematicChain, q) -> list:
    """Base-frame Jacobian columns: each screw transported by the preceding motors."""
    motors = joint_motors(chain, q)
    cols = []
    prefix = one
    for Mi, B in zip(motors, chain.screws):
        prefix = prefix * Mi
        cols.append(sandwich(prefix, B))  # own motor commutes with its screw
    return cols


def ee_frame_jacobian(chain: KinematicChain, q) -> list:
    """Jacobian columns expressed in the end-effector frame: ~M J M."""
    M = forward_kinematics(chain, q)
    Mrev = ~M
    return [Mrev * B * M for B in geometric_jacobian(chain, q)]


def chain_twist(columns, qdot) -> Multivector:
    """Twist of the chain for joint rates qdot, given Jacobian columns."""
    qdot = np.asarray(qdot, dtype=float)
    V = Multivector()
    for B, qi in zip(columns, qdot):
        V = V + float(qi) * B
    return V


def twist_point_velocity(T: Multivector, x) -> np.ndarray:
    """Euclidean velocity of the point x under the twist T (commutator flow)."""
    P = embed_point(x)
    dP = T * P - P * T
    return np.array([dP.coeff("e1"), dP.coeff("e2"), dP.coeff("e3")])


def motor_to_matrix(M: Multivector) -> np.ndarray:
    """4x4 homogeneous matrix of the rigid motion represented by a motor."""
    H = np.eye(4)
    origin = extract_point(sandwich(M, embed_point([0, 0, 0])))
    H[:3, 3] = origin
    for k, axis in enumerate(np.eye(3)):
        H[:3, k] = extract_point(sandwich(M, embed_point(axis))) - origin
    return H


def motor_from_matrix(H) -> Multivector:
    """Motor representing a 4x4 homogeneous rigid transform."""
    H = np.asarray(H, dtype=float)
    R = H[:3, :3]
    t = H[:3, 3]
    # rotation axis/angle from the matrix, then translate
    cos_t = (np.trace(R) - 1.0) / 2.0
    cos_t = min(1.0, max(-1.0, cos_t))
    angle = np.arccos(cos_t)
    if angle < 1e-12:
        rot = one
    else:
        w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.linalg.norm(w) < 1e-12:
            # angle ~ pi: extract axis from R + I
            A = R + np.eye(3)
            axis = A[:, np.argmax(np.linalg.norm(A, axis=0))]
            axis = axis / np.linalg.norm(axis)
        else:
            axis = w / np.linalg.norm(w)
        rot = motor_exp(rotation_generator(axis, angle))
    trans = motor_exp(translation_generator(t))
    return trans * rot
