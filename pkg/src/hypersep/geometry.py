"""Points, hyperplanes and orientation vectors.

A hyperplane is stored as ``constant + coeffs . x = 0`` with ``constant``
normally 1.  A point is on the positive side when the left-hand side is
positive.  Orientation vectors are packed into a Python int with plane 0 in
the least significant bit; a set bit means the positive side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence, Union

import mpmath
import numpy as np

from hypersep.errors import DimensionError, IncidenceError

EPS_ON_PLANE = 1e-9

# pi truncated to 20 decimal places
_PI_20 = "3.14159265358979323846"


class PiRatio:
    """The constant pi / pi_20, transcendental and a hair above one.

    In double precision it rounds to exactly 1.0, so it only changes
    anything for exact (rational) evaluations, where ``tau + r`` can never
    vanish for rational ``r``.
    """

    _instance: Optional["PiRatio"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def mp(self, dps: int = 60):
        with mpmath.workdps(dps):
            return mpmath.pi / mpmath.mpf(_PI_20)

    def __float__(self) -> float:
        return float(self.mp())

    def __repr__(self) -> str:
        return "PiRatio()"

    def sign_plus(self, r: Fraction) -> int:
        """Sign of ``tau + r`` for a rational ``r``; never zero."""
        d = 1 + Fraction(r)
        if d == 0:
            return 1
        if abs(d) > Fraction(1, 10**18):
            return 1 if d > 0 else -1
        dps = 60
        while True:
            with mpmath.workdps(dps):
                v = self.mp(dps) + mpmath.mpf(r.numerator) / r.denominator
                if abs(v) > mpmath.mpf(10) ** (-(dps - 10)):
                    return 1 if v > 0 else -1
            dps *= 2


TAU = PiRatio()

Scalar = Union[float, Fraction]


@dataclass(eq=False)
class Point:
    id: int
    coords: np.ndarray
    label: str = ""

    def __post_init__(self):
        if not isinstance(self.coords, np.ndarray):
            self.coords = as_coords(self.coords)

    @property
    def dimension(self) -> int:
        return len(self.coords)


@dataclass(eq=False)
class Hyperplane:
    """``constant + coeffs . x = 0``.

    ``through`` holds the points the plane was fitted through (the shifted
    midpoints for a flushed plane), kept so residuals can be re-checked.
    """

    constant: object
    coeffs: np.ndarray
    index: int = 0
    saturated: bool = True
    through: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not isinstance(self.coeffs, np.ndarray):
            self.coeffs = as_coords(self.coeffs)
        if not any(c != 0 for c in self.coeffs):
            raise ValueError("hyperplane coefficients are all zero")

    @property
    def dimension(self) -> int:
        return len(self.coeffs)

    @property
    def float_constant(self) -> float:
        return float(self.constant)


class SideEvaluation(NamedTuple):
    value: float
    sign: int  # +1, -1, or 0 for on-plane


class OrientationVector(NamedTuple):
    """Packed signs, bit j set when the point is on the positive side of plane j."""

    bits: int
    length: int

    @classmethod
    def from_signs(cls, signs: Sequence[int]) -> "OrientationVector":
        bits = 0
        for j, s in enumerate(signs):
            if s not in (1, -1):
                raise ValueError(f"orientation entries must be +1/-1, got {s!r}")
            if s > 0:
                bits |= 1 << j
        return cls(bits, len(signs))

    def signs(self) -> tuple:
        return tuple(1 if (self.bits >> j) & 1 else -1 for j in range(self.length))

    def sign(self, j: int) -> int:
        if not 0 <= j < self.length:
            raise IndexError(j)
        return 1 if (self.bits >> j) & 1 else -1

    def code_string(self) -> str:
        """0/1 string with plane 0 first."""
        return "".join("1" if (self.bits >> j) & 1 else "0" for j in range(self.length))


@dataclass
class OpCounter:
    """Arithmetic tally for the instrumented evaluation paths."""

    mults: int = 0
    adds: int = 0
    subs: int = 0


def as_coords(values, exact: bool = False) -> np.ndarray:
    if exact:
        return np.array([Fraction(v) for v in values], dtype=object)
    arr = np.asarray(values)
    if arr.dtype == object:
        return arr
    return arr.astype(float)


def _coords(p) -> np.ndarray:
    return p.coords if isinstance(p, Point) else as_coords(p)


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if len(a) != len(b):
        raise DimensionError(f"dimension mismatch: {len(a)} vs {len(b)}")


def incidence_band(constant, coeffs, x) -> float:
    """Absolute on-plane tolerance for evaluating ``x`` against a plane."""
    mag = 1.0 + abs(float(constant)) + float(np.sum(np.abs(np.asarray(coeffs, float) * np.asarray(x, float))))
    return EPS_ON_PLANE * mag


def _is_exact(*arrays) -> bool:
    return any(a.dtype == object for a in arrays)


def evaluate_side(point, plane: Hyperplane, ops: Optional[OpCounter] = None) -> SideEvaluation:
    x = _coords(point)
    _check_dims(x, plane.coeffs)
    c = plane.constant
    if ops is not None:
        value = float(c)
        for a, xi in zip(plane.coeffs, x):
            value = value + float(a) * float(xi)
            ops.mults += 1
            ops.adds += 1
    elif _is_exact(x, plane.coeffs):
        r = sum((Fraction(a) * Fraction(xi) for a, xi in zip(plane.coeffs, x)), Fraction(0))
        if isinstance(c, PiRatio):
            return SideEvaluation(float(c) + float(r), c.sign_plus(r))
        value = Fraction(c) + r
        return SideEvaluation(value, (value > 0) - (value < 0))
    else:
        r = float(np.dot(plane.coeffs, x))
        value = float(c) + r
    band = incidence_band(c, plane.coeffs, x)
    if value > band:
        sign = 1
    elif value < -band:
        sign = -1
    else:
        sign = 0
    return SideEvaluation(value, sign)


def compute_ov(point, planes: Sequence[Hyperplane], ops: Optional[OpCounter] = None) -> OrientationVector:
    bits = 0
    for j, plane in enumerate(planes):
        ev = evaluate_side(point, plane, ops)
        if ev.sign == 0:
            pid = point.id if isinstance(point, Point) else None
            raise IncidenceError(pid, plane.index, ev.value)
        if ev.sign > 0:
            bits |= 1 << j
    return OrientationVector(bits, len(planes))


def first_difference(a: OrientationVector, b: OrientationVector) -> Optional[int]:
    """Index of the first plane on which ``a`` and ``b`` disagree, or None."""
    if a.length != b.length:
        raise DimensionError(f"orientation vector lengths differ: {a.length} vs {b.length}")
    diff = a.bits ^ b.bits
    if diff == 0:
        return None
    return (diff & -diff).bit_length() - 1


def ov_equal(a: OrientationVector, b: OrientationVector) -> bool:
    return first_difference(a, b) is None


def append_bit(ov: OrientationVector, side: int) -> OrientationVector:
    if side not in (1, -1):
        raise ValueError(f"side must be +1 or -1, got {side!r}")
    bit = 1 if side > 0 else 0
    return OrientationVector(ov.bits | (bit << ov.length), ov.length + 1)


def midpoint(a, b) -> np.ndarray:
    xa, xb = _coords(a), _coords(b)
    _check_dims(xa, xb)
    if _is_exact(xa, xb):
        return np.array([(Fraction(u) + Fraction(v)) / 2 for u, v in zip(xa, xb)], dtype=object)
    return (xa + xb) / 2.0


def manhattan_distance(a, b, ops: Optional[OpCounter] = None):
    xa, xb = _coords(a), _coords(b)
    _check_dims(xa, xb)
    if ops is None:
        return np.sum(np.abs(xa - xb))
    total = None
    for u, v in zip(xa, xb):
        d = abs(u - v)
        ops.subs += 1
        if total is None:
            total = d
        else:
            total = total + d
            ops.adds += 1
    return 0 if total is None else total
