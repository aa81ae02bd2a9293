"""Generated fixture clouds and a seven-joint fixture chain."""

from __future__ import annotations

import numpy as np

from .cga.algebra import one
from .cga.kinematics import KinematicChain, motor_from_matrix, revolute_screw
from .pointcloud import PointCloud


def grid_cloud(nx: int = 30, ny: int | None = None, spacing: float = 3.5) -> PointCloud:
    """Flat rectangular grid in the z = 0 plane, centered at the origin [mm]."""
    ny = nx if ny is None else ny
    xs = (np.arange(nx) - (nx - 1) / 2.0) * spacing
    ys = (np.arange(ny) - (ny - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pos = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
    return PointCloud(positions=pos)


def sphere_cloud(n: int = 2562, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> PointCloud:
    """Near-uniform Fibonacci sampling of a sphere."""
    i = np.arange(n)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / n
    theta = 2.0 * np.pi * i / golden
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    pos = radius * np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    return PointCloud(positions=pos + np.asarray(center, dtype=float))


def jittered_grid_cloud(nx: int = 25, spacing: float = 1.0, jitter: float = 0.2, seed: int = 0) -> PointCloud:
    """Grid with deterministic in-plane jitter; breaks cocircular degeneracies."""
    rng = np.random.default_rng(seed)
    cloud = grid_cloud(nx=nx, spacing=spacing)
    pos = cloud.positions.copy()
    pos[:, :2] += rng.uniform(-jitter, jitter, size=(cloud.count, 2)) * spacing
    return PointCloud(positions=pos)


# Modified-DH parameters (a, d, alpha) of a 7-R arm in millimeters; the classic
# desk-scale research manipulator geometry.
SEVEN_JOINT_DH = (
    (0.0, 333.0, 0.0),
    (0.0, 0.0, -np.pi / 2),
    (0.0, 316.0, np.pi / 2),
    (82.5, 0.0, np.pi / 2),
    (-82.5, 384.0, -np.pi / 2),
    (0.0, 0.0, np.pi / 2),
    (88.0, 0.0, np.pi / 2),
)
SEVEN_JOINT_FLANGE = 107.0


def dh_matrices(q) -> list[np.ndarray]:
    """Per-joint homogeneous transforms T_{i-1,i} (modified DH convention)."""
    q = np.asarray(q, dtype=float)
    mats = []
    for (a, d, alpha), qi in zip(SEVEN_JOINT_DH, q):
        ca, sa = np.cos(alpha), np.sin(alpha)
        cq, sq = np.cos(qi), np.sin(qi)
        mats.append(
            np.array(
                [
                    [cq, -sq, 0.0, a],
                    [sq * ca, cq * ca, -sa, -d * sa],
                    [sq * sa, cq * sa, ca, d * ca],
                    [0.0, 0.0, 0.0, 1.0],
                ]
            )
        )
    flange = np.eye(4)
    flange[2, 3] = SEVEN_JOINT_FLANGE
    mats.append(flange)
    return mats


def dh_forward(q) -> np.ndarray:
    """Matrix forward kinematics of the seven-joint fixture."""
    T = np.eye(4)
    for M in dh_matrices(q):
        T = T @ M
    return T


def seven_joint_chain() -> KinematicChain:
    """Product-of-exponentials chain equivalent to the DH fixture."""
    mats = dh_matrices(np.zeros(7))
    screws = []
    T = np.eye(4)
    for M in mats[:-1]:
        T = T @ M
        origin = T[:3, 3]
        axis = T[:3, 2]
        screws.append(revolute_screw(origin, axis))
    base = motor_from_matrix(dh_forward(np.zeros(7)))
    return KinematicChain(screws=screws, base=base)


def single_joint_chain(point=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0)) -> KinematicChain:
    return KinematicChain(screws=[revolute_screw(point, axis)], base=one)
