"""Ergodic coverage loop on a point cloud.

Per iteration: project the agent onto the locally fitted surface, weight its
disk footprint by a Gaussian kernel of the fit residuals, accumulate coverage,
form the virtual source from the uncovered target mass, diffuse it across the
surface, and accelerate the agent along the tangent-plane gradient of the
diffused potential.  Coverage and target are compared as mass-weighted
densities; the source field is rescaled to the total surface area before
diffusion so gradient magnitudes are independent of the target normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cga.algebra import Multivector
from .cga.primitives import (
    Primitive,
    embed_point,
    extract_point,
    fit_primitive,
    orthogonal_line,
    point_residuals,
    project_to_primitive,
    split_pair,
    surface_normal,
    tangent_plane,
)
from .errors import DomainError, GradientError, LostAgentError
from .laplacian import LaplacianOperator
from .pointcloud import PointCloud, SpatialIndex
from .spectral import SpectralBasis, diffuse_implicit, diffuse_spectral

DEFAULT_KERNEL_SHAPE = 2.0
DEFAULT_DT = 0.1


@dataclass
class AgentState:
    """Virtual coverage agent: disk of radius `radius` moving on the surface."""

    position: np.ndarray
    velocity: np.ndarray
    radius: float
    v_max: float = 3.0
    a_max: float = 3.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.radius <= 0 or self.v_max <= 0 or self.a_max <= 0:
            raise DomainError("agent radius and limits must be positive")


@dataclass
class Neighborhood:
    """Footprint of the projected agent: indices, fit, and residual weights."""

    indices: np.ndarray
    primitive: Primitive
    point: np.ndarray  # projected agent position
    residuals: np.ndarray
    normalized_residuals: np.ndarray


@dataclass
class CoverageState:
    """Target density, coverage accumulators, and loop bookkeeping."""

    target: np.ndarray  # p, normalized so sum(M p) = 1
    raw_coverage: np.ndarray
    coverage: np.ndarray
    source: np.ndarray
    step: int
    dt: float

    @classmethod
    def create(cls, target, mass, dt: float = DEFAULT_DT) -> "CoverageState":
        target = np.asarray(target, dtype=float)
        mass = np.asarray(mass, dtype=float)
        if np.any(target < 0):
            raise DomainError("target masses must be nonnegative")
        total = float(mass @ target)
        if total <= 0:
            raise DomainError("target has no mass")
        n = len(target)
        return cls(
            target=target / total,
            raw_coverage=np.zeros(n),
            coverage=np.zeros(n),
            source=np.zeros(n),
            step=0,
            dt=dt,
        )


def project_agent(
    cloud: PointCloud, index: SpatialIndex, agent: AgentState, h: float
) -> Neighborhood:
    """Fit the local surface near the agent and project the agent onto it.

    The fit uses the points within the agent radius (expanded to 3h when that
    ball is too sparse); the footprint is re-queried around the projected
    position so it only ever contains points within the agent radius of it.
    """
    fit_idx = index.radius_neighbors(agent.position, agent.radius)
    if len(fit_idx) < 4:
        fit_idx = index.radius_neighbors(agent.position, max(agent.radius, 3.0 * h))
    if len(fit_idx) < 4:
        raise LostAgentError(
            f"only {len(fit_idx)} surface points near agent at {agent.position}"
        )
    prim = fit_primitive(cloud.positions[fit_idx])
    P = embed_point(agent.position)
    projected = extract_point(split_pair(project_to_primitive(P, prim), P))

    foot_idx = index.radius_neighbors(projected, agent.radius)
    if len(foot_idx) == 0:
        foot_idx = fit_idx
    res = point_residuals(prim.element, cloud.positions[foot_idx])
    rmax = res.max()
    rnorm = res / rmax if rmax > 0 else np.zeros_like(res)
    return Neighborhood(
        indices=foot_idx,
        primitive=prim,
        point=projected,
        residuals=res,
        normalized_residuals=rnorm,
    )


def footprint_weights(nbh: Neighborhood, epsilon: float = DEFAULT_KERNEL_SHAPE) -> np.ndarray:
    """Gaussian kernel exp(-eps^2 r^2) of the normalized fit residuals."""
    if epsilon <= 0:
        raise DomainError("kernel shape must be positive")
    return np.exp(-(epsilon**2) * nbh.normalized_residuals**2)


def accumulate_coverage(
    state: CoverageState, nbh: Neighborhood, weights: np.ndarray, mass: np.ndarray
) -> CoverageState:
    """Add the weighted footprint to the coverage and renormalize its density."""
    state.raw_coverage[nbh.indices] += weights * state.dt
    total = float(mass @ state.raw_coverage)
    state.coverage = state.raw_coverage / total if total > 0 else state.raw_coverage.copy()
    state.step += 1
    return state


def source_term(state: CoverageState) -> np.ndarray:
    """Virtual source max(p - c, 0)^2 encoding the uncovered target mass."""
    s = np.maximum(state.target - state.coverage, 0.0) ** 2
    state.source = s
    return s


def scale_source(s: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Rescale the source so its surface integral equals the surface area."""
    total = float(mass @ s)
    if total <= 0:
        return np.zeros_like(s)
    return s * (mass.sum() / total)


def ergodicity(state: CoverageState) -> float:
    """Normalized uncovered mass ||max(p - c, 0)||_2 / sum(p)."""
    total = state.target.sum()
    if total <= 0:
        raise DomainError("target has no mass")
    return float(np.linalg.norm(np.maximum(state.target - state.coverage, 0.0)) / total)


def _tangent_basis(normal: np.ndarray):
    k = np.argmin(np.abs(normal))
    t1 = np.cross(np.eye(3)[k], normal)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(normal, t1)


_MONOMIAL_COUNT = {1: 3, 2: 6, 3: 10}


def _design(xi: np.ndarray, eta: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones_like(xi), xi, eta]
    if degree >= 2:
        cols += [xi**2, xi * eta, eta**2]
    if degree >= 3:
        cols += [xi**3, xi**2 * eta, xi * eta**2, eta**3]
    return np.column_stack(cols)


def estimate_gradient(
    u: np.ndarray,
    nbh: Neighborhood,
    weights: np.ndarray,
    cloud: PointCloud,
    degree: int = 3,
) -> np.ndarray:
    """Tangent-plane gradient of the potential at the projected agent point.

    Fits a weighted polynomial (cubic where the neighborhood allows, degrading
    to quadratic/linear) to the potential over the tangent-plane coordinates
    of the footprint and differentiates it at the origin.
    """
    P = embed_point(nbh.point)
    line = orthogonal_line(nbh.primitive, P)
    tangent_plane(line, P)  # raises on degenerate geometry
    normal = surface_normal(nbh.primitive, nbh.point)
    t1, t2 = _tangent_basis(normal)

    offsets = cloud.positions[nbh.indices] - nbh.point
    in_plane = offsets - np.outer(offsets @ normal, normal)
    xi = in_plane @ t1
    eta = in_plane @ t2
    heights = np.asarray(u, dtype=float)[nbh.indices]
    sw = np.sqrt(weights)

    max_degree = 3 if len(xi) >= 10 else (2 if len(xi) >= 6 else 1)
    for deg in range(min(degree, max_degree), 0, -1):
        X = _design(xi, eta, deg)
        coef, _, rank, _ = np.linalg.lstsq(X * sw[:, None], heights * sw, rcond=None)
        if rank == X.shape[1]:
            return coef[1] * t1 + coef[2] * t2
    raise GradientError("rank-deficient gradient design (collinear footprint)")


def step_agent(
    cloud: PointCloud,
    index: SpatialIndex,
    agent: AgentState,
    gradient: np.ndarray,
    dt: float,
    h: float,
):
    """Advance the agent one step along the gradient and re-project it.

    Semi-implicit Euler with norm clamps on acceleration and speed; the new
    velocity is projected onto the tangent plane at the landing point.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    a = np.asarray(gradient, dtype=float)
    a_norm = np.linalg.norm(a)
    if a_norm > agent.a_max:
        a = a * (agent.a_max / a_norm)
    v = agent.velocity + a * dt
    v_norm = np.linalg.norm(v)
    if v_norm > agent.v_max:
        v = v * (agent.v_max / v_norm)
    tentative = replace(agent, position=agent.position + v * dt, velocity=v)
    nbh = project_agent(cloud, index, tentative, h)
    normal = surface_normal(nbh.primitive, nbh.point)
    v_t = v - (v @ normal) * normal
    moved = replace(tentative, position=nbh.point, velocity=v_t)
    return moved, nbh


@dataclass
class LoopConfig:
    """Knobs of the coverage loop."""

    alpha: float = 10.0
    n_modes: int = 100
    kernel_shape: float = DEFAULT_KERNEL_SHAPE
    dt: float = DEFAULT_DT
    solver: str = "spectral"  # or "implicit"
    normalize_source: bool = True
    accel_gain: float = 1.0


@dataclass
class StepRecord:
    step: int
    position: np.ndarray
    speed: float
    ergodicity: float
    source_l1: float


class CoverageLoop:
    """Single-agent closed-loop coverage on a preprocessed cloud."""

    def __init__(
        self,
        cloud: PointCloud,
        op: LaplacianOperator,
        basis: SpectralBasis | None,
        agent: AgentState,
        target: np.ndarray,
        config: LoopConfig | None = None,
    ):
        self.cloud = cloud
        self.op = op
        self.basis = basis
        self.config = config or LoopConfig()
        if self.config.solver == "spectral" and basis is None:
            raise DomainError("spectral solver needs a basis")
        self.index = SpatialIndex(cloud)
        self.tau = self.config.alpha * op.spacing**2
        self.state = CoverageState.create(target, op.mass, dt=self.config.dt)
        self.agent = self._seed(agent)
        self.reseeds = 0

    def _seed(self, agent: AgentState) -> AgentState:
        try:
            nbh = project_agent(self.cloud, self.index, agent, self.op.spacing)
            return replace(agent, position=nbh.point)
        except LostAgentError:
            self.reseeds += 1
            nearest = self.index.knn(agent.position, 1)[0]
            return replace(
                agent,
                position=self.cloud.positions[nearest].copy(),
                velocity=np.zeros(3),
            )

    def _diffuse(self, u0: np.ndarray) -> np.ndarray:
        if self.config.solver == "spectral":
            return diffuse_spectral(self.basis, u0, self.tau)
        return diffuse_implicit(self.op, u0, self.tau)

    def run_step(self) -> StepRecord:
        cfg = self.config
        try:
            nbh = project_agent(self.cloud, self.index, self.agent, self.op.spacing)
        except LostAgentError:
            self.reseeds += 1
            self.agent = self._seed(self.agent)
            nbh = project_agent(self.cloud, self.index, self.agent, self.op.spacing)
        self.agent = replace(self.agent, position=nbh.point)

        weights = footprint_weights(nbh, cfg.kernel_shape)
        accumulate_coverage(self.state, nbh, weights, self.op.mass)
        s = source_term(self.state)
        u0 = scale_source(s, self.op.mass) if cfg.normalize_source else s
        u = self._diffuse(u0)
        try:
            grad = estimate_gradient(u, nbh, weights, self.cloud)
        except GradientError:
            grad = np.zeros(3)
        try:
            self.agent, _ = step_agent(
                self.cloud, self.index, self.agent, cfg.accel_gain * grad, cfg.dt, self.op.spacing
            )
        except LostAgentError:
            self.agent = self._seed(self.agent)
        return StepRecord(
            step=self.state.step,
            position=self.agent.position.copy(),
            speed=float(np.linalg.norm(self.agent.velocity)),
            ergodicity=ergodicity(self.state),
            source_l1=float(np.sum(np.abs(self.state.source))),
        )
