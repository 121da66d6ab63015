"""Exact arithmetic for cusps, the modular group action, and normalized horoballs.

Everything here works over exact integers / rationals.  A cusp p/q in lowest
terms is simultaneously a boundary point of the upper half-plane and an
isotopy class of essential curves on the four-marked sphere; the horoball
family ``B_t(p/q)`` (Euclidean diameter t/q^2) is the normalized family that
is equivariant under the full modular group.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

__all__ = [
    "Cusp",
    "ModularElement",
    "Horoball",
    "PunctureLabel",
    "cusp_normalize",
    "moebius_apply",
    "horoball_map",
    "horoball_contains",
    "horoballs_disjoint",
    "cusp_identify",
    "gamma2_class",
    "leash_bound",
    "horoballs_meeting_rectangle",
    "S",
    "T",
    "IDENTITY",
]


@dataclass(frozen=True, order=True)
class Cusp:
    """An extended rational p/q in lowest terms; q == 0 encodes infinity as (1, 0)."""

    p: int
    q: int

    def __post_init__(self):
        p, q = self.p, self.q
        if p == 0 and q == 0:
            raise ValueError("(0, 0) does not represent a cusp")
        if q == 0:
            p = 1
        else:
            g = math.gcd(p, q)
            p, q = p // g, q // g
            if q < 0:
                p, q = -p, -q
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def is_infinity(self) -> bool:
        return self.q == 0

    def value(self) -> Optional[Fraction]:
        """The rational value, or None for infinity."""
        return None if self.q == 0 else Fraction(self.p, self.q)

    def __str__(self):
        return "inf" if self.q == 0 else f"{self.p}/{self.q}"

    @staticmethod
    def parse(text: str) -> "Cusp":
        text = text.strip()
        if text in ("inf", "oo", "infinity"):
            return Cusp(1, 0)
        if "/" in text:
            p, q = text.split("/")
            return cusp_normalize(int(p), int(q))
        return cusp_normalize(int(text), 1)


def cusp_normalize(p: int, q: int) -> Cusp:
    """Reduce (p, q) to the canonical cusp representative."""
    if p == 0 and q == 0:
        raise ValueError("(0, 0) does not represent a cusp")
    if q == 0:
        return Cusp(1, 0)
    g = math.gcd(p, q)
    p, q = p // g, q // g
    if q < 0:
        p, q = -p, -q
    return Cusp(p, q)


@dataclass(frozen=True)
class ModularElement:
    """An element of PSL(2,Z), stored as an integer matrix with ad - bc = 1.

    The representative is sign-normalized so that equality and hashing agree
    with equality in PSL(2,Z).
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if self.a * self.d - self.b * self.c != 1:
            raise ValueError("determinant must be 1")
        if self.c < 0 or (self.c == 0 and self.a < 0):
            object.__setattr__(self, "a", -self.a)
            object.__setattr__(self, "b", -self.b)
            object.__setattr__(self, "c", -self.c)
            object.__setattr__(self, "d", -self.d)

    def __mul__(self, other: "ModularElement") -> "ModularElement":
        return ModularElement(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> "ModularElement":
        return ModularElement(self.d, -self.b, -self.c, self.a)

    @property
    def in_gamma2(self) -> bool:
        """Whether the element is congruent to the identity mod 2."""
        return self.a % 2 == 1 and self.d % 2 == 1 and self.b % 2 == 0 and self.c % 2 == 0

    def mod2(self) -> tuple:
        return (self.a % 2, self.b % 2, self.c % 2, self.d % 2)

    def apply_tau(self, x: Fraction, y: Fraction) -> tuple:
        """Exact action on tau = x + iy with y > 0; returns (x', y')."""
        if y <= 0:
            raise ValueError("point must lie in the upper half-plane")
        cx_d = self.c * x + self.d
        denom = cx_d * cx_d + self.c * self.c * y * y
        x2 = ((self.a * x + self.b) * cx_d + self.a * self.c * y * y) / denom
        y2 = y / denom
        return x2, y2

    def __call__(self, r: Cusp) -> Cusp:
        return moebius_apply(self, r)


IDENTITY = ModularElement(1, 0, 0, 1)
S = ModularElement(0, -1, 1, 0)
T = ModularElement(1, 1, 0, 1)


def moebius_apply(m: ModularElement, r: Cusp) -> Cusp:
    """Image of a cusp under an element of PSL(2,Z)."""
    return cusp_normalize(m.a * r.p + m.b * r.q, m.c * r.p + m.d * r.q)


@dataclass(frozen=True)
class Horoball:
    """B_t(r): the horoball of the normalized family based at cusp r.

    For finite r = p/q the membership predicate for tau = x + iy is
    y / |q*tau - p|^2 > 1/t, and the Euclidean diameter is t/q^2.  For
    r = infinity it is the half-plane y > 1/t.
    """

    base: Cusp
    t: Fraction

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("hororadius parameter t must be positive")

    def contains(self, x: Fraction, y: Fraction) -> bool:
        return horoball_contains(self, x, y)


def horoball_map(m: ModularElement, ball: Horoball) -> Horoball:
    """Image of a normalized horoball under PSL(2,Z): same t, moved base."""
    return Horoball(moebius_apply(m, ball.base), ball.t)


def horoball_contains(ball: Horoball, x: Fraction, y: Fraction) -> bool:
    """Exact membership of tau = x + iy in B_t(r)."""
    x, y = Fraction(x), Fraction(y)
    if y <= 0:
        raise ValueError("point must lie in the upper half-plane")
    if ball.base.is_infinity:
        return y * ball.t > 1
    p, q = ball.base.p, ball.base.q
    qx_p = q * x - p
    return ball.t * y > qx_p * qx_p + q * q * y * y


def horoballs_disjoint(b1: Horoball, b2: Horoball) -> bool:
    """Exact disjointness test for two horoballs of the normalized family.

    For distinct finite bases the tangency criterion on centers and radii
    reduces to (p*q' - p'*q)^2 >= t1*t2; against infinity it is t1*t2 <= q^2.
    """
    r1, r2 = b1.base, b2.base
    if r1 == r2:
        return False
    if r1.is_infinity or r2.is_infinity:
        fin = r2 if r1.is_infinity else r1
        return b1.t * b2.t <= fin.q * fin.q
    cross = r1.p * r2.q - r2.p * r1.q
    return cross * cross >= b1.t * b2.t


def cusp_identify(x: Fraction, y: Fraction, t: Fraction) -> Optional[Cusp]:
    """The unique cusp r with x + iy in B_t(r), or None.

    Requires t < 1 so the family is disjoint and the answer unique.  The
    search runs over denominators q with q^2 <= t/y (membership forces
    q^2 y^2 < t y), in increasing q, with p restricted to the two integers
    nearest q*x.
    """
    x, y, t = Fraction(x), Fraction(y), Fraction(t)
    if y <= 0:
        raise ValueError("point must lie in the upper half-plane")
    if not t < 1:
        raise ValueError("cusp identification requires t < 1")
    if y * t > 1:
        return Cusp(1, 0)
    qmax = math.isqrt(math.floor(t / y))
    for q in range(1, qmax + 1):
        base = math.floor(q * x)
        for p in (base, base + 1):
            if math.gcd(p, q) != 1:
                continue
            ball = Horoball(Cusp(p, q), t)
            if horoball_contains(ball, x, y):
                return ball.base
    return None


class PunctureLabel(enum.Enum):
    """Which of the three punctures 0, 1, infinity a cusp class projects to."""

    ZERO = 0
    ONE = 1
    INFINITY = 2


# Parity -> puncture table, calibrated once by the limit of the modular lambda
# function along vertical geodesics into representatives of the three classes
# (lambda(iY) -> 0 as Y grows, lambda(iy) -> 1 as y -> 0+, lambda(1+iy) -> inf)
# and frozen here; tests in tests/test_cover.py re-run the calibration.
_PARITY_TABLE = {
    (1, 0): PunctureLabel.ZERO,
    (0, 1): PunctureLabel.ONE,
    (1, 1): PunctureLabel.INFINITY,
}


def gamma2_class(r: Cusp) -> PunctureLabel:
    """The Gamma(2)-class of a cusp, as the puncture its class projects to."""
    return _PARITY_TABLE[(r.p % 2, r.q % 2)]


def leash_bound(c: float, alpha: float) -> float:
    """Eventual bound C/(1-alpha) for sequences with x_n <= alpha*x_{n-1} + C."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if c < 0:
        raise ValueError("C must be nonnegative")
    return c / (1 - alpha)


def horoballs_meeting_rectangle(t: Fraction, x0: Fraction, x1: Fraction,
                                y0: Fraction, y1: Fraction) -> list:
    """All B_t(r) meeting [x0,x1] x [y0,y1] with y0 > 0 (a finite list).

    A finite-based ball has height t/q^2, so only q^2 <= t/y0 can reach the
    rectangle; the base must lie within one Euclidean radius of the x-range.
    """
    t, x0, x1, y0, y1 = map(Fraction, (t, x0, x1, y0, y1))
    if y0 <= 0 or y1 < y0 or x1 < x0:
        raise ValueError("need a rectangle with y0 > 0")
    out = []
    if y1 * t > 1:
        out.append(Horoball(Cusp(1, 0), t))
    qmax = math.isqrt(math.floor(t / y0))
    for q in range(1, qmax + 1):
        radius = Fraction(t, 2 * q * q)
        if 2 * radius < y0:
            continue
        p_lo = math.ceil(q * (x0 - radius))
        p_hi = math.floor(q * (x1 + radius))
        for p in range(p_lo, p_hi + 1):
            if math.gcd(p, q) != 1:
                continue
            if _ball_meets_rect(Fraction(p, q), radius, x0, x1, y0, y1):
                out.append(Horoball(Cusp(p, q), t))
    return out


def _ball_meets_rect(cx, radius, x0, x1, y0, y1):
    """Open disk centered (cx, radius) with given radius vs closed rectangle."""
    nearest_x = min(max(cx, x0), x1)
    nearest_y = min(max(radius, y0), y1)
    dx = cx - nearest_x
    dy = radius - nearest_y
    return dx * dx + dy * dy < radius * radius
