"""Dense multivector arithmetic for the conformal algebra of 3-D space.

The algebra is built over a 5-D vector space with signature (4,1), using the
null basis {e0, e1, e2, e3, ei} where e0 is the point at the origin, ei the
point at infinity, e0.ei = -1 and e0^2 = ei^2 = 0.  Multivectors are stored as
dense length-32 coefficient arrays indexed by bitmask: bit 0 = e0, bits 1-3 =
e1..e3, bit 4 = ei.  The multiplication tables are generated once at import by
transforming to an orthogonal basis {e1, e2, e3, ep, em} (ep^2 = 1, em^2 = -1)
where blade products are a bitmask computation, then transforming back.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import MotorLogError

DIM = 5
N_BLADES = 32

# null-basis vector names in canonical order; blade names concatenate suffixes
_VEC_NAMES = ("0", "1", "2", "3", "i")


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _reorder_sign(a: int, b: int) -> int:
    # swaps needed to merge two ascending blade factor lists
    a >>= 1
    total = 0
    while a:
        total += _popcount(a & b)
        a >>= 1
    return -1 if total & 1 else 1


def _build_tables():
    # orthogonal-basis blade product: (mask, sign) with metric (+,+,+,+,-)
    metric = (1.0, 1.0, 1.0, 1.0, -1.0)
    sign = np.zeros((N_BLADES, N_BLADES))
    out_mask = np.zeros((N_BLADES, N_BLADES), dtype=np.int64)
    for a in range(N_BLADES):
        for b in range(N_BLADES):
            s = float(_reorder_sign(a, b))
            common = a & b
            for bit in range(DIM):
                if common & (1 << bit):
                    s *= metric[bit]
            sign[a, b] = s
            out_mask[a, b] = a ^ b

    def gp_orth(x, y):
        z = np.zeros(N_BLADES)
        xs = np.nonzero(x)[0]
        ys = np.nonzero(y)[0]
        for a in xs:
            for b in ys:
                z[out_mask[a, b]] += sign[a, b] * x[a] * y[b]
        return z

    def wedge_orth(x, y):
        z = np.zeros(N_BLADES)
        xs = np.nonzero(x)[0]
        ys = np.nonzero(y)[0]
        for a in xs:
            for b in ys:
                if a & b == 0:
                    z[a ^ b] += sign[a, b] * x[a] * y[b]
        return z

    # null vectors expressed over the orthogonal basis:
    #   e0 = (em - ep)/2,  ei = em + ep,  e1..e3 identity
    vec = np.zeros((DIM, N_BLADES))
    vec[0, 1 << 4] = 0.5   # em
    vec[0, 1 << 3] = -0.5  # ep
    vec[1, 1 << 0] = 1.0
    vec[2, 1 << 1] = 1.0
    vec[3, 1 << 2] = 1.0
    vec[4, 1 << 4] = 1.0
    vec[4, 1 << 3] = 1.0

    # T[a] = orthogonal coefficients of the a-th null basis blade
    T = np.zeros((N_BLADES, N_BLADES))
    for mask in range(N_BLADES):
        acc = np.zeros(N_BLADES)
        acc[0] = 1.0
        for bit in range(DIM):
            if mask & (1 << bit):
                acc = wedge_orth(acc, vec[bit])
        T[mask] = acc
    U = np.linalg.inv(T)

    cayley = np.zeros((N_BLADES, N_BLADES, N_BLADES))
    for a in range(N_BLADES):
        for b in range(N_BLADES):
            z_orth = gp_orth(T[a], T[b])
            cayley[a, b] = z_orth @ U
    # entries are dyadic rationals; snap away inversion noise
    cayley[np.abs(cayley) < 1e-10] = 0.0
    cayley = np.round(cayley * 4096.0) / 4096.0
    return cayley


_CAYLEY = _build_tables()

GRADES = np.array([_popcount(m) for m in range(N_BLADES)])
_REVERSE_SIGN = np.array([(-1.0) ** (g * (g - 1) // 2) for g in GRADES])
_GRADE_INVOLUTION_SIGN = np.array([(-1.0) ** g for g in GRADES])

# outer product / left contraction as grade-filtered restrictions of the
# geometric product table (valid since all table rows come from basis blades)
_OUTER = _CAYLEY.copy()
_LC = _CAYLEY.copy()
for _a in range(N_BLADES):
    for _b in range(N_BLADES):
        ga, gb = GRADES[_a], GRADES[_b]
        keep_outer = GRADES == ga + gb
        keep_lc = GRADES == gb - ga
        _OUTER[_a, _b] *= keep_outer
        _LC[_a, _b] *= keep_lc


def blade_name(mask: int) -> str:
    if mask == 0:
        return "1"
    return "e" + "".join(_VEC_NAMES[b] for b in range(DIM) if mask & (1 << b))

BLADE_NAMES = tuple(blade_name(m) for m in range(N_BLADES))
_NAME_TO_MASK = {n: m for m, n in enumerate(BLADE_NAMES)}


class Multivector:
    """Element of the conformal algebra, dense over the 32 basis blades."""

    __slots__ = ("c",)

    def __init__(self, coeffs=None):
        if coeffs is None:
            self.c = np.zeros(N_BLADES)
        else:
            self.c = np.asarray(coeffs, dtype=float).reshape(N_BLADES).copy()

    # -- constructors ----------------------------------------------------
    @classmethod
    def scalar(cls, value: float) -> "Multivector":
        mv = cls()
        mv.c[0] = value
        return mv

    @classmethod
    def blade(cls, name: str, value: float = 1.0) -> "Multivector":
        mv = cls()
        mv.c[_NAME_TO_MASK[name]] = value
        return mv

    @classmethod
    def vector(cls, xyz) -> "Multivector":
        mv = cls()
        mv.c[2], mv.c[4], mv.c[8] = xyz  # e1, e2, e3 masks
        return mv

    # -- products ---------------------------------------------------------
    def __mul__(self, other):
        if isinstance(other, Multivector):
            return Multivector(np.einsum("i,j,ijk->k", self.c, other.c, _CAYLEY))
        return Multivector(self.c * float(other))

    def __rmul__(self, other):
        return Multivector(self.c * float(other))

    def __truediv__(self, other):
        if isinstance(other, Multivector):
            return self * other.inverse()
        return Multivector(self.c / float(other))

    def __xor__(self, other):
        """Outer product."""
        return Multivector(np.einsum("i,j,ijk->k", self.c, other.c, _OUTER))

    def __or__(self, other):
        """Inner product (left contraction)."""
        return Multivector(np.einsum("i,j,ijk->k", self.c, other.c, _LC))

    def __add__(self, other):
        if isinstance(other, Multivector):
            return Multivector(self.c + other.c)
        mv = Multivector(self.c)
        mv.c[0] += float(other)
        return mv

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Multivector):
            return Multivector(self.c - other.c)
        mv = Multivector(self.c)
        mv.c[0] -= float(other)
        return mv

    def __rsub__(self, other):
        return Multivector(-self.c) + float(other)

    def __neg__(self):
        return Multivector(-self.c)

    def __invert__(self):
        """Reverse."""
        return Multivector(self.c * _REVERSE_SIGN)

    # -- structure ---------------------------------------------------------
    def grade(self, k: int) -> "Multivector":
        return Multivector(np.where(GRADES == k, self.c, 0.0))

    def grades(self, tol: float = 0.0):
        present = set(int(g) for g in GRADES[np.abs(self.c) > tol])
        return sorted(present)

    def scalar_part(self) -> float:
        return float(self.c[0])

    def coeff(self, name: str) -> float:
        return float(self.c[_NAME_TO_MASK[name]])

    def with_coeff(self, name: str, value: float) -> "Multivector":
        mv = Multivector(self.c)
        mv.c[_NAME_TO_MASK[name]] = value
        return mv

    def norm(self) -> float:
        """Magnitude sqrt(|<X ~X>_0|)."""
        return math.sqrt(abs((self * ~self).scalar_part()))

    def coeff_norm(self) -> float:
        return float(np.linalg.norm(self.c))

    def inverse(self) -> "Multivector":
        """Inverse for versors and invertible blades: ~X / (X ~X)."""
        rev = ~self
        s = (self * rev).scalar_part()
        if abs(s) < 1e-300:
            raise ZeroDivisionError("multivector is not invertible")
        return rev * (1.0 / s)

    def dual(self) -> "Multivector":
        """Multiplication by the inverse pseudoscalar."""
        return self * _I_INV

    def undual(self) -> "Multivector":
        return self * _I

    def is_close(self, other: "Multivector", tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.c - other.c)) <= tol)

    def __repr__(self):
        terms = []
        for m in np.nonzero(np.abs(self.c) > 1e-12)[0]:
            terms.append(f"{self.c[m]:.6g} {BLADE_NAMES[m]}")
        return " + ".join(terms) if terms else "0"


# canonical elements
one = Multivector.scalar(1.0)
e0 = Multivector.blade("e0")
e1 = Multivector.blade("e1")
e2 = Multivector.blade("e2")
e3 = Multivector.blade("e3")
ei = Multivector.blade("ei")
_I = Multivector.blade("e0123i")
_I_SQ = (_I * _I).scalar_part()  # -1 for this signature
_I_INV = Multivector(_I.c / _I_SQ)
pseudoscalar = _I

# twist and wrench coordinate conventions: bivector coefficient orderings
# used by the controller gain vectors (rotational x,y,z then translational /
# force x,y,z, following the wrench span {e23, e13, e12, e01, e02, e03})
WRENCH_BLADES = ("e23", "e13", "e12", "e01", "e02", "e03")
TWIST_BLADES = ("e23", "e13", "e12", "e1i", "e2i", "e3i")

_EUCLID_BIVECTOR = ("e23", "e13", "e12")
_TRANS_BIVECTOR = ("e1i", "e2i", "e3i")


def components(mv: Multivector, names) -> np.ndarray:
    return np.array([mv.coeff(n) for n in names])


def from_components(values, names) -> Multivector:
    mv = Multivector()
    for v, n in zip(values, names):
        mv.c[_NAME_TO_MASK[n]] = v
    return mv


def _axis_of_rotation_bivector(beta: np.ndarray) -> np.ndarray:
    # coefficients (e23, e13, e12) -> rotation axis so that exp(-t/2 * bhat)
    # rotates by +t right-handed about the axis
    return np.array([beta[0], -beta[1], beta[2]])


def _rotation_bivector_from_axis(u: np.ndarray) -> Multivector:
    return from_components([u[0], -u[1], u[2]], _EUCLID_BIVECTOR)


def motor_exp(B: Multivector) -> Multivector:
    """Closed-form exponential of a rigid-motion generator bivector.

    The generator must lie in the span {e23, e13, e12, e1i, e2i, e3i}; the
    Euclidean part is split into components parallel and orthogonal to the
    rotation axis so the two commuting factors exponentiate in closed form.
    """
    rest = B.c.copy()
    beta = components(B, _EUCLID_BIVECTOR)
    tvec = components(B, _TRANS_BIVECTOR)
    for n in _EUCLID_BIVECTOR + _TRANS_BIVECTOR:
        rest[_NAME_TO_MASK[n]] = 0.0
    if np.max(np.abs(rest)) > 1e-9 * max(1.0, np.max(np.abs(B.c))):
        raise ValueError("generator is not a rigid-motion bivector")

    theta = float(np.linalg.norm(beta))
    t_inf = from_components(tvec, _TRANS_BIVECTOR)
    if theta < 1e-14:
        return one + t_inf  # pure translation, nilpotent
    axis = _axis_of_rotation_bivector(beta) / theta
    t_par = axis * float(tvec @ axis)
    t_perp = tvec - t_par
    K = from_components(beta, _EUCLID_BIVECTOR) + from_components(
        t_perp, _TRANS_BIVECTOR
    )
    rot = math.cos(theta) + (math.sin(theta) / theta) * K
    trans = one + from_components(t_par, _TRANS_BIVECTOR)
    return trans * rot


def motor_log(M: Multivector) -> Multivector:
    """Principal logarithm of a normalized motor.

    Inverse of :func:`motor_exp` for rotation parameter |beta| < pi.  Raises
    :class:`MotorLogError` when the rotation part is a half turn of the rotor
    (scalar part -1), where the axis is not determined.
    """
    if abs((M * ~M).scalar_part() - 1.0) > 1e-6:
        raise MotorLogError("motor is not normalized")
    s = M.scalar_part()
    B2 = M.grade(2)
    beta = components(B2, _EUCLID_BIVECTOR)
    tau = components(B2, _TRANS_BIVECTOR)
    sin_t = float(np.linalg.norm(beta))
    if sin_t < 1e-12:
        if s < 0.0:
            raise MotorLogError("rotation angle is pi: logarithm not unique")
        return from_components(tau, _TRANS_BIVECTOR)
    theta = math.atan2(sin_t, s)
    bhat = beta / sin_t
    axis = _axis_of_rotation_bivector(bhat)

    # parallel translation lives in the grade-4 part: <M>_4 = sin * t_par^ei^bhat
    B4 = M.grade(4)
    probe = from_components(axis, _TRANS_BIVECTOR) ^ from_components(
        bhat, _EUCLID_BIVECTOR
    )
    denom = float(probe.c @ probe.c)
    if denom > 1e-20:
        t_par_mag = float(B4.c @ probe.c) / (denom * sin_t)
    else:
        t_par_mag = 0.0
    t_par = axis * t_par_mag
    t_perp = (tau - s * t_par) * (theta / sin_t)
    return from_components(bhat * theta, _EUCLID_BIVECTOR) + from_components(
        t_par + t_perp, _TRANS_BIVECTOR
    )


def exp_series(B: Multivector, order: int = 24) -> Multivector:
    """Taylor exponential with scaling and squaring; reference for tests."""
    scale = max(1.0, np.max(np.abs(B.c)))
    k = max(0, int(math.ceil(math.log2(scale / 0.25))) if scale > 0.25 else 0)
    X = Multivector(B.c / (2.0**k))
    acc = Multivector.scalar(1.0)
    term = Multivector.scalar(1.0)
    for n in range(1, order + 1):
        term = term * X * (1.0 / n)
        acc = acc + term
    for _ in range(k):
        acc = acc * acc
    return acc


def rotation_generator(axis, angle: float) -> Multivector:
    """Generator whose exponential rotates by `angle` about `axis` (origin)."""
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    return _rotation_bivector_from_axis(u) * (-0.5 * angle)


def translation_generator(offset) -> Multivector:
    """Generator whose exponential translates by `offset`."""
    t = np.asarray(offset, dtype=float)
    return from_components(-0.5 * t, _TRANS_BIVECTOR)


def sandwich(M: Multivector, X: Multivector) -> Multivector:
    return M * X * ~M


conjugate_pseudoscalar = _I * e0
