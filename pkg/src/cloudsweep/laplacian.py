"""Discrete Laplace-Beltrami operator on point clouds.

Each point gets a local tangent frame from neighborhood PCA; its k nearest
neighbors are projected into that frame and triangulated in 2-D, and the
triangles incident to the point are collected into a global set.  Cotangent
weights and one-third triangle areas are accumulated from intrinsic (3-D)
edge lengths, so the operator only depends on connectivity and distances and
is invariant under rigid motions.  The stiffness matrix S is the negated weak
Laplacian: symmetric, positive semidefinite, with constants in its null
space.  Zero-Neumann behavior at detected boundary points is the natural
boundary condition of this assembly; no extra rows are added.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import DomainError, FrameError, OperatorError
from .pointcloud import PointCloud, mean_spacing

DEFAULT_NEIGHBORS = 12
DEFAULT_MOLLIFY = 1e-5


@dataclass
class TangentFrame:
    """Local orthonormal frame (t1, t2, n) and projected neighbor coordinates."""

    origin: int
    basis: np.ndarray  # rows t1, t2, n
    neighbors: np.ndarray
    coords2d: np.ndarray  # neighbor coordinates in the (t1, t2) plane

    def __post_init__(self):
        gram = self.basis @ self.basis.T
        if np.max(np.abs(gram - np.eye(3))) > 1e-10:
            raise FrameError(f"basis of frame {self.origin} is not orthonormal")


@dataclass
class LaplacianOperator:
    """Diagonal mass M [mm^2], stiffness S = -C (PSD), boundary flags."""

    mass: np.ndarray
    stiffness: sp.csr_matrix
    boundary: np.ndarray
    spacing: float
    _cache_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _factor_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.mass)

    def mass_matrix(self) -> sp.dia_matrix:
        return sp.diags(self.mass)


def _pick_neighbors(positions, dists, idxs, i, k):
    """k nearest of point i, excluding itself and zero-distance duplicates."""
    mask = (idxs[i] != i) & (dists[i] > 0.0)
    chosen = idxs[i][mask][:k]
    return chosen


def build_tangent_frame(cloud: PointCloud, i: int, k: int = DEFAULT_NEIGHBORS) -> TangentFrame:
    """PCA frame at point i from its k nearest neighbors."""
    if k < 6:
        raise DomainError("need k >= 6 neighbors for a stable frame")
    if cloud.count <= k:
        raise DomainError("cloud must have more than k points")
    tree = cKDTree(cloud.positions)
    dists, idxs = tree.query(cloud.positions[i], k=k + 4)
    neighbors = _pick_neighbors(cloud.positions, dists[None, :], idxs[None, :], 0, k)
    return _frame_from_neighbors(cloud.positions, i, neighbors)


def _frame_from_neighbors(positions, i, neighbors) -> TangentFrame:
    if len(neighbors) < 3:
        raise FrameError(f"point {i}: fewer than 3 distinct neighbors")
    pts = np.vstack([positions[i], positions[neighbors]])
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] <= 1e-12 * max(evals[2], 1e-300):
        raise FrameError(f"point {i}: collinear neighborhood")
    n = evecs[:, 0]
    t1 = evecs[:, 2]
    # deterministic signs, then exact right-handedness
    if n[np.argmax(np.abs(n))] < 0:
        n = -n
    if t1[np.argmax(np.abs(t1))] < 0:
        t1 = -t1
    t2 = np.cross(n, t1)
    basis = np.vstack([t1, t2, n])
    offsets = positions[neighbors] - positions[i]
    coords2d = offsets @ basis[:2].T
    return TangentFrame(origin=i, basis=basis, neighbors=np.asarray(neighbors), coords2d=coords2d)


def detect_boundary(frame: TangentFrame) -> bool:
    """True when some angular gap between consecutive neighbors exceeds pi/2."""
    if len(frame.neighbors) < 3:
        raise FrameError("boundary rule needs at least 3 neighbors")
    ang = np.sort(np.arctan2(frame.coords2d[:, 1], frame.coords2d[:, 0]))
    gaps = np.diff(ang, append=ang[0] + 2.0 * np.pi)
    return bool(np.max(gaps) > 0.5 * np.pi)


def _one_ring_triangles(frame: TangentFrame):
    """Global-index triangles incident to the frame origin in its local Delaunay."""
    pts = np.vstack([[0.0, 0.0], frame.coords2d])
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise FrameError(f"point {frame.origin}: degenerate 2-D neighborhood") from exc
    local = tri.simplices
    ring = local[np.any(local == 0, axis=1)]
    out = []
    to_global = np.concatenate([[frame.origin], frame.neighbors])
    for t in ring:
        out.append(tuple(sorted(int(to_global[v]) for v in t)))
    return out


def _mixed_voronoi_area(positions, i, ring, delta):
    """Voronoi cell area of point i inside its own one-ring fan.

    Circumcentric portions for non-obtuse triangles, half/quarter areas for
    obtuse ones (the standard mixed-area rule), all from mollified intrinsic
    edge lengths; reproduces the exact Voronoi cell on regular samplings no
    matter which cocircular triangulation the local Delaunay picked.
    """
    total = 0.0
    for t in ring:
        q, r = (v for v in t if v != i)
        pq = np.linalg.norm(positions[i] - positions[q]) + delta
        pr = np.linalg.norm(positions[i] - positions[r]) + delta
        qr = np.linalg.norm(positions[q] - positions[r]) + delta
        s = 0.5 * (pq + pr + qr)
        area = np.sqrt(max(s * (s - pq) * (s - pr) * (s - qr), 1e-300))
        if qr**2 > pq**2 + pr**2:  # obtuse at i
            total += 0.5 * area
        elif pq**2 > pr**2 + qr**2 or pr**2 > pq**2 + qr**2:  # obtuse elsewhere
            total += 0.25 * area
        else:
            cot_q = (pq**2 + qr**2 - pr**2) / (4.0 * area)
            cot_r = (pr**2 + qr**2 - pq**2) / (4.0 * area)
            total += 0.125 * (pr**2 * cot_q + pq**2 * cot_r)
    return total


def build_laplacian(
    cloud: PointCloud,
    k: int = DEFAULT_NEIGHBORS,
    mollify: float = DEFAULT_MOLLIFY,
) -> LaplacianOperator:
    """Assemble mass and stiffness matrices for a cloud."""
    n = cloud.count
    if n < k + 1:
        raise DomainError("cloud must have at least k+1 points")
    positions = cloud.positions
    h = mean_spacing(cloud)
    delta = mollify * h

    tree = cKDTree(positions)
    dists, idxs = tree.query(positions, k=min(n, k + 4))

    triangles = set()
    boundary = np.zeros(n, dtype=bool)
    mass = np.zeros(n)
    failures = []
    for i in range(n):
        neighbors = _pick_neighbors(positions, dists, idxs, i, k)
        try:
            frame = _frame_from_neighbors(positions, i, neighbors)
            boundary[i] = detect_boundary(frame)
            ring = _one_ring_triangles(frame)
            mass[i] = _mixed_voronoi_area(positions, i, ring, delta)
            triangles.update(ring)
        except FrameError:
            failures.append(i)
    if failures:
        raise OperatorError("tangent frame construction failed", indices=failures)

    tri = np.array(sorted(triangles), dtype=int)
    p0, p1, p2 = positions[tri[:, 0]], positions[tri[:, 1]], positions[tri[:, 2]]
    # intrinsic mollified lengths; la is opposite vertex 0, etc.
    la = np.linalg.norm(p1 - p2, axis=1) + delta
    lb = np.linalg.norm(p0 - p2, axis=1) + delta
    lc = np.linalg.norm(p0 - p1, axis=1) + delta
    s = 0.5 * (la + lb + lc)
    area = np.sqrt(np.maximum(s * (s - la) * (s - lb) * (s - lc), 1e-300))
    cot0 = (lb**2 + lc**2 - la**2) / (4.0 * area)
    cot1 = (la**2 + lc**2 - lb**2) / (4.0 * area)
    cot2 = (la**2 + lb**2 - lc**2) / (4.0 * area)

    # half-cotangent weight of the edge opposite each vertex
    rows, cols, vals = [], [], []
    for (u, v), cot in (((1, 2), cot0), ((0, 2), cot1), ((0, 1), cot2)):
        w = 0.5 * cot
        iu, iv = tri[:, u], tri[:, v]
        rows += [iu, iv, iu, iv]
        cols += [iv, iu, iu, iv]
        vals += [-w, -w, w, w]
    S = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    S = 0.5 * (S + S.T)
    S.sum_duplicates()

    if np.any(mass <= 0):
        raise OperatorError(
            "non-positive mass entries", indices=np.nonzero(mass <= 0)[0].tolist()
        )
    return LaplacianOperator(mass=mass, stiffness=S, boundary=boundary, spacing=h)


def save_operator(op: LaplacianOperator, prefix) -> None:
    """Write S as `i j value` triplets and M as one diagonal value per line."""
    S = op.stiffness.tocoo()
    with open(f"{prefix}.stiffness.txt", "w", encoding="utf-8") as fh:
        for i, j, v in zip(S.row, S.col, S.data):
            fh.write(f"{i} {j} {v!r}\n")
    with open(f"{prefix}.mass.txt", "w", encoding="utf-8") as fh:
        for v in op.mass:
            fh.write(f"{v!r}\n")


def load_operator(prefix, spacing: float | None = None) -> LaplacianOperator:
    mass = np.loadtxt(f"{prefix}.mass.txt", ndmin=1)
    n = len(mass)
    data = np.loadtxt(f"{prefix}.stiffness.txt", ndmin=2)
    S = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n)).tocsr()
    return LaplacianOperator(
        mass=mass,
        stiffness=S,
        boundary=np.zeros(n, dtype=bool),
        spacing=float(spacing) if spacing is not None else float("nan"),
    )
