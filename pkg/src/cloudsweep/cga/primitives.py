"""Conformal points, planes, spheres, lines: construction, fitting, projection.

Planes and spheres are carried in their inner-product (IPNS) vector form
v0 e0 + v1 e1 + v2 e2 + v3 e3 + v4 ei; the grade-4 outer-product form used by
the projection formula is obtained by dualization.  A vanishing v0 marks a
plane, otherwise the vector encodes a sphere with center v/v0 and squared
radius (v/v0)^2 - 2 v4/v0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np

from ..errors import (
    DegenerateLinesError,
    FitError,
    PointAtInfinityError,
    ProjectionError,
    SplitError,
)
from .algebra import Multivector, e0, ei, one, sandwich

PLANE_COEFF_TOL = 1e-9


def embed_point(x) -> Multivector:
    """Conformal embedding e0 + x + 0.5 |x|^2 ei of a Euclidean point."""
    x = np.asarray(x, dtype=float)
    return e0 + Multivector.vector(x) + (0.5 * float(x @ x)) * ei


def extract_point(P: Multivector) -> np.ndarray:
    """Euclidean coordinates of a conformal point (inverse of embed_point)."""
    c0 = P.coeff("e0")
    if abs(c0) < 1e-12 * max(P.coeff_norm(), 1e-300):
        raise PointAtInfinityError("point has no finite representative")
    return np.array([P.coeff("e1"), P.coeff("e2"), P.coeff("e3")]) / c0


def normalized(X: Multivector) -> Multivector:
    """Scale an element to unit-magnitude square (lines +1, planes -1)."""
    s = abs((X * X).scalar_part())
    if s <= 1e-300:
        raise ProjectionError("element does not normalize to unit square")
    return X * (1.0 / math.sqrt(s))


def line_through_points(p, q) -> Multivector:
    """Normalized line through two Euclidean points, oriented p -> q."""
    L = embed_point(p) ^ embed_point(q) ^ ei
    return normalized(L)


def line_direction(L: Multivector) -> np.ndarray:
    """Unit direction of a normalized line."""
    u = np.array([L.coeff("e01i"), L.coeff("e02i"), L.coeff("e03i")])
    n = np.linalg.norm(u)
    if n < 1e-12:
        raise ProjectionError("element is not a finite line")
    return u / n


@dataclass
class Primitive:
    """Fitted local surface model: a plane or a sphere in IPNS vector form."""

    kind: str  # "plane" | "sphere"
    element: Multivector
    residuals: np.ndarray | None = None

    @property
    def opns(self) -> Multivector:
        return self.element.dual()

    def coefficients(self) -> np.ndarray:
        """(v0, v1, v2, v3, v4) of the IPNS vector."""
        el = self.element
        return np.array(
            [el.coeff("e0"), el.coeff("e1"), el.coeff("e2"), el.coeff("e3"), el.coeff("ei")]
        )


def sphere_params(prim: Primitive):
    v0, v1, v2, v3, v4 = prim.coefficients()
    center = np.array([v1, v2, v3]) / v0
    r2 = float(center @ center) - 2.0 * v4 / v0
    return center, math.sqrt(r2)


def plane_params(prim: Primitive):
    """Unit normal n and offset d with the plane given by n.x = d."""
    v0, v1, v2, v3, v4 = prim.coefficients()
    n = np.array([v1, v2, v3])
    nn = np.linalg.norm(n)
    return n / nn, v4 / nn


def surface_normal(prim: Primitive, x) -> np.ndarray:
    """Unit normal of the primitive at (or near) the Euclidean point x."""
    x = np.asarray(x, dtype=float)
    if prim.kind == "plane":
        n, _ = plane_params(prim)
        return n
    center, _ = sphere_params(prim)
    d = x - center
    nd = np.linalg.norm(d)
    if nd < 1e-12:
        raise ProjectionError("normal undefined at the sphere center")
    return d / nd


def point_residuals(element: Multivector, points) -> np.ndarray:
    """Squared inner-product distances (P_i . element)^2 per point."""
    pts = np.asarray(points, dtype=float)
    v0, v1, v2, v3, v4 = (
        element.coeff("e0"),
        element.coeff("e1"),
        element.coeff("e2"),
        element.coeff("e3"),
        element.coeff("ei"),
    )
    # P . D = x.v - v4 - 0.5|x|^2 v0, evaluated in closed form
    dots = pts @ np.array([v1, v2, v3]) - v4 - 0.5 * np.einsum("ij,ij->i", pts, pts) * v0
    return dots**2


def fit_primitive(points) -> Primitive:
    """Least-squares plane/sphere through a neighborhood of Euclidean points.

    Builds the 5x5 Gram matrix of the rows [x, y, z, -1, -|x|^2/2] and takes
    the eigenvector of its smallest eigenvalue; the five components map onto
    the IPNS vector coefficients (v1, v2, v3, v4, v0).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise FitError("expected an (n, 3) array of points")
    if len(pts) < 4:
        raise FitError(f"need at least 4 points, got {len(pts)}")
    if np.allclose(pts, pts[0]):
        raise FitError("all points identical")

    w = np.column_stack(
        [pts, -np.ones(len(pts)), -0.5 * np.einsum("ij,ij->i", pts, pts)]
    )
    gram = w.T @ w
    if not np.all(np.isfinite(gram)):
        raise FitError("non-finite values in the fitting system")
    eigvals, eigvecs = np.linalg.eigh(gram)
    v = eigvecs[:, 0]
    v1, v2, v3, v4, v0 = v

    element = Multivector()
    element.c[1] = v0  # e0
    element = element + Multivector.vector([v1, v2, v3]) + v4 * ei

    coeffs = np.array([v0, v1, v2, v3, v4])
    vnorm = np.linalg.norm(coeffs)
    if abs(v0) <= PLANE_COEFF_TOL * vnorm:
        kind = "plane"
        if np.linalg.norm([v1, v2, v3]) < 1e-12 * vnorm:
            raise FitError("degenerate fit: no plane normal")
    else:
        kind = "sphere"
        c = np.array([v1, v2, v3]) / v0
        if float(c @ c) - 2.0 * v4 / v0 <= 0.0:
            raise FitError("degenerate fit: imaginary sphere")

    # unit-square normalization (sphere: |D| = radius, plane: |D| = |n|),
    # sign fixed by the largest-magnitude coefficient
    s = (element * element).scalar_part()
    element = element * (1.0 / math.sqrt(s))
    lead = element.c[np.argmax(np.abs(element.c))]
    if lead < 0:
        element = -element

    prim = Primitive(kind=kind, element=element)
    prim.residuals = point_residuals(element, pts)
    return prim


def project_to_primitive(P: Multivector, prim: Primitive) -> Multivector:
    """Point pair obtained by dropping P orthogonally onto the primitive."""
    X = prim.opns
    s = (X * ~X).scalar_part()
    if abs(s) < 1e-300:
        raise ProjectionError("primitive is not invertible")
    X_inv = ~X * (1.0 / s)
    return ((P ^ ei) | X) * X_inv


def split_pair(pair: Multivector, reference: Multivector) -> Multivector:
    """The factor point of a pair closer to `reference`.

    Real pairs factor as (pair +/- sqrt(pair^2)) / (-ei . pair); flat points
    (null direction vector) have a unique finite factor, recovered by
    contraction with the origin.
    """
    d = -(ei | pair)
    d2 = (d * d).scalar_part()
    dscale = float(np.max(np.abs(d.c))) ** 2
    if dscale < 1e-300:
        raise SplitError("degenerate pair: no direction")
    if abs(d2) <= 1e-10 * dscale:
        # flat point: single finite factor
        finite = e0 | pair
        extract_point(finite)  # raises if still at infinity
        return finite
    p2 = (pair * pair).scalar_part()
    pscale = float(np.max(np.abs(pair.c))) ** 2
    if p2 < -1e-10 * pscale:
        raise SplitError("imaginary point pair: no real intersection")
    root = math.sqrt(max(p2, 0.0))
    d_inv = d * (1.0 / d2)
    cands = [((pair + root) * d_inv).grade(1), ((pair - root) * d_inv).grade(1)]
    ref = extract_point(reference)
    best, best_key = None, None
    for c in cands:
        x = extract_point(c)
        key = (float(np.linalg.norm(x - ref)), tuple(np.round(x, 12)))
        if best_key is None or key < best_key:
            best, best_key = c, key
    return best


def project_point_euclidean(x, prim: Primitive) -> np.ndarray:
    """Euclidean coordinates of x projected onto the primitive."""
    P = embed_point(x)
    return extract_point(split_pair(project_to_primitive(P, prim), P))


def orthogonal_line(prim: Primitive, P: Multivector) -> Multivector:
    """Normalized line through P orthogonal to the primitive."""
    L = prim.element ^ P ^ ei
    s = abs((L * L).scalar_part())
    if s <= 1e-20 * float(np.max(np.abs(L.c)) ** 2 + 1e-300):
        raise ProjectionError("degenerate orthogonal line")
    return L * (1.0 / math.sqrt(s))


def tangent_plane(L_perp: Multivector, P: Multivector) -> Multivector:
    """Normalized plane through P orthogonal to the line L_perp."""
    E = L_perp.dual() ^ P ^ ei
    s = abs((E * E).scalar_part())
    if s <= 1e-20 * float(np.max(np.abs(E.c)) ** 2 + 1e-300):
        raise ProjectionError("degenerate tangent plane")
    return E * (1.0 / math.sqrt(s))


def plane_primitive_from_opns(E: Multivector) -> Primitive:
    """Wrap a grade-4 plane element as a Primitive (IPNS vector form)."""
    element = E.undual().grade(1)
    s = (element * element).scalar_part()
    if s <= 1e-300:
        raise ProjectionError("element is not a plane")
    element = element * (1.0 / math.sqrt(s))
    return Primitive(kind="plane", element=element)


def motor_between_lines(L1: Multivector, L2: Multivector) -> Multivector:
    """Motor M with M L1 ~M = L2 for normalized, non-opposite lines.

    Normalizes K = 1 + L2 L1 by the inverse square root of K ~K, computed by
    a Newton iteration in the commutative subalgebra spanned by the scalar
    and grade-4 parts of K ~K.
    """
    K = one + L2 * L1
    N = K * ~K
    s = N.scalar_part()
    if s < 1e-9:
        raise DegenerateLinesError("lines are opposite: motor not unique")
    Y = Multivector.scalar(1.0 / math.sqrt(s))
    for _ in range(40):
        Y = 0.5 * (3.0 * Y - Y * Y * Y * N)
        if abs((Y * Y * N).scalar_part() - 1.0) < 1e-15:
            break
    M = Y * K
    if np.max(np.abs((M * ~M - one).c)) > 1e-9:
        raise DegenerateLinesError("motor normalization did not converge")
    return M


__all__ = [
    "Primitive",
    "embed_point",
    "extract_point",
    "normalized",
    "line_through_points",
    "line_direction",
    "fit_primitive",
    "point_residuals",
    "sphere_params",
    "plane_params",
    "surface_normal",
    "project_to_primitive",
    "split_pair",
    "project_point_euclidean",
    "orthogonal_line",
    "tangent_plane",
    "plane_primitive_from_opns",
    "motor_between_lines",
    "sandwich",
]
