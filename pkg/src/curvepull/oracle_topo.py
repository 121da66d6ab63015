"""Brute-force topological oracle for curve pullbacks.

Independent of the half-plane engine: a cusp is realized as an honest Jordan
curve on the 4-marked sphere (the image of a straight closed geodesic on the
torus double cover), the full preimage under f is tracked numerically around
the curve, the monodromy permutation groups the preimage points into
components, and each component is classified by the homology class of its
torus lift.  Thurston multipliers come straight from the definition: the sum
of reciprocal mapping degrees over essential components.
"""

from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import mpmath
import numpy as np

from .cover import TorusCover, torus_build, torus_point_map
from .errors import BranchCollision, NoConvergence
from .farey import Cusp
from .pullback import (
    CuspFate, SigmaEvaluator, _solve_basepoint, admissible_multipliers,
    build_evaluator, cusp_pullback,
)
from .ratmap import INF, RationalMap, poly_deriv, poly_eval, poly_scale, poly_sub

DEFAULT_SAMPLES = 384
CLEARANCE = 0.04
# deterministic offset sequence (torus coordinates of the geodesic basepoint)
OFFSETS = [(0.2371, 0.4133), (0.3167, 0.1709), (0.4421, 0.2817),
           (0.1283, 0.3391), (0.2749, 0.2273)]


@dataclass(frozen=True)
class Convention:
    """Identification of cusps with torus homology classes.

    homology(p/q) = (s1*p, s2*q), or (s1*q, s2*p) when swapped; the inverse
    sends a primitive class back to the cusp.
    """

    swap: bool
    s1: int
    s2: int

    def homology(self, r: Cusp) -> tuple:
        p, q = r.p, r.q
        if self.swap:
            p, q = q, p
        return (self.s1 * p, self.s2 * q)

    def cusp(self, m: int, n: int) -> Cusp:
        p, q = self.s1 * m, self.s2 * n
        if self.swap:
            p, q = q, p
        return Cusp(p, q)


ALL_CONVENTIONS = [Convention(swap, s1, s2)
                   for swap in (False, True) for s1 in (1, -1) for s2 in (1, -1)]


@dataclass
class GeometricCurve:
    """A closed sampled polyline on the sphere, with recorded clearance."""

    points: list                 # complex samples, first == last
    clearance: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs(self.points[0] - self.points[-1]) > 1e-9:
            raise ValueError("curve is not closed")


@dataclass
class PullbackComponent:
    curve: GeometricCurve
    degree: int


def _reduce_torus(tau0: complex, z: complex) -> complex:
    n = round(z.imag / tau0.imag)
    z = z - n * tau0
    return z - round(z.real)


def _torus_clearance(tau0: complex, pts) -> float:
    """Distance of torus samples to the nearest half-period branch point."""
    halves = [0, 0.5, tau0 / 2, (1 + tau0) / 2]
    best = float("inf")
    for z in pts:
        for h in halves:
            d = abs(_reduce_torus(tau0, z - h))
            best = min(best, d)
    return best


def _offset_grid():
    yield from OFFSETS
    for i in range(7):
        for j in range(5):
            yield (i / 7 + 0.0213, j / 5 + 0.0137)


def slope_curve(T: TorusCover, r: Cusp, samples: int = DEFAULT_SAMPLES,
                convention: Convention = ALL_CONVENTIONS[0]) -> GeometricCurve:
    """The sphere curve of cusp r: the cover image of a straight torus geodesic."""
    m, n = convention.homology(r)
    if (m, n) == (0, 0):
        raise ValueError("cusp maps to the zero homology class")
    tau0 = complex(T.tau0)
    direction = m + n * tau0
    count = max(samples, int(64 * abs(direction)))
    # parallel lattice translates of the geodesic are spaced area/length apart,
    # which caps the achievable distance from the four branch points
    floor = min(CLEARANCE, tau0.imag / abs(direction) / 10)
    best_c, best_zs = -1.0, None
    for ox, oy in _offset_grid():
        z0 = ox + oy * tau0
        zs = [z0 + direction * k / count for k in range(count + 1)]
        c = _torus_clearance(tau0, zs)
        if c > best_c:
            best_c, best_zs = c, zs
        if c >= CLEARANCE:
            break
    if best_c < floor:
        raise NoConvergence(0, best_c)
    pts = [complex(torus_point_map(T, z)) for z in best_zs]
    pts[-1] = pts[0]
    return GeometricCurve(pts, best_c,
                          meta={"cusp": str(r), "homology": (m, n)})


def _poly_c(coeffs):
    return [complex(c) for c in coeffs]


def _track_step(num, den, dnum, dden, z, w, iters: int = 30):
    """Newton solve of f(z) = w from the seed z, for float polynomials."""
    step = float("inf")
    for _ in range(iters):
        g = poly_eval(num, z) - w * poly_eval(den, z)
        dg = poly_eval(dnum, z) - w * poly_eval(dden, z)
        if dg == 0:
            break
        step = g / dg
        z = z - step
        if abs(step) < 1e-13 * max(1.0, abs(z)):
            return z
    raise NoConvergence(iters, float(abs(step)))


def _advance_branches(num, den, dnum, dden, zs, w_a, w_b, depth: int = 0):
    """Continue all preimage branches from fiber over w_a to the fiber over w_b."""
    sep = min(abs(a - b) for i, a in enumerate(zs) for b in zs[i + 1:]) \
        if len(zs) > 1 else float("inf")
    try:
        new = [_track_step(num, den, dnum, dden, z, w_b) for z in zs]
        jump = max(abs(a - b) for a, b in zip(zs, new))
        if jump > 0.45 * sep or _min_sep(new) < 1e-8:
            raise NoConvergence(0, jump)
        return new
    except NoConvergence:
        if depth >= 20:
            raise BranchCollision("preimage branches collided during tracking")
        mid = (w_a + w_b) / 2
        zs = _advance_branches(num, den, dnum, dden, zs, w_a, mid, depth + 1)
        return _advance_branches(num, den, dnum, dden, zs, mid, w_b, depth + 1)


def _min_sep(zs):
    if len(zs) < 2:
        return float("inf")
    return min(abs(a - b) for i, a in enumerate(zs) for b in zs[i + 1:])


def pullback_components(f: RationalMap, curve: GeometricCurve):
    """Components of f^{-1}(curve) with mapping degrees, via monodromy cycles."""
    d = f.degree
    num, den = _poly_c(f.num), _poly_c(f.den)
    dnum, dden = poly_deriv(num), poly_deriv(den)
    w0 = curve.points[0]
    start_poly = poly_sub(num, poly_scale(den, w0))
    fiber = [complex(z) for z in np.roots(np.array(start_poly[::-1], dtype=complex))]
    if len(fiber) != d or _min_sep(fiber) < 1e-7:
        raise BranchCollision("degenerate starting fiber")
    tracks = [[z] for z in fiber]
    zs = list(fiber)
    for w_a, w_b in zip(curve.points, curve.points[1:]):
        zs = _advance_branches(num, den, dnum, dden, zs, w_a, w_b)
        for track, z in zip(tracks, zs):
            track.append(z)
    # monodromy permutation: branch i ends where branch perm[i] started
    perm = []
    for z in zs:
        dists = [abs(z - z0) for z0 in fiber]
        j = dists.index(min(dists))
        if dists[j] > 1e-5:
            raise BranchCollision("monodromy endpoints do not match the fiber")
        perm.append(j)
    if sorted(perm) != list(range(d)):
        raise BranchCollision("monodromy is not a permutation")
    components = []
    seen = set()
    for i in range(d):
        if i in seen:
            continue
        cycle = [i]
        seen.add(i)
        j = perm[i]
        while j != i:
            cycle.append(j)
            seen.add(j)
            j = perm[j]
        pts = []
        for k in cycle:
            pts.extend(tracks[k][:-1])
        pts.append(pts[0])
        comp = GeometricCurve(pts, curve.clearance,
                              meta={"cycle": tuple(cycle)})
        components.append(PullbackComponent(comp, len(cycle)))
    assert sum(c.degree for c in components) == d
    return components


def curve_homology(T: TorusCover, pts) -> Optional[tuple]:
    """Homology class of a closed sphere curve, by the abelian integral.

    On the elliptic curve y^2 = w(w-1)(w-a) the torus coordinate satisfies
    dz = dw/(4Ky), so the lift displacement is a single contour integral; the
    only continuation is the sign of y, which never needs a root solve.
    Returns sign-normalized (m, n), or None when the curve is peripheral
    (odd lift, or closed with zero displacement).
    """
    a = complex(T.a)
    four_k = 4 * complex(mpmath.ellipk(a))

    def val(w):
        return w * (w - 1) * (w - a)

    def segment(wa, wb, ya, depth=0):
        # returns (integral piece, y at wb continued from ya)
        yb = cmath.sqrt(val(wb))
        if abs(yb - ya) > abs(yb + ya):
            yb = -yb
        if abs(yb - ya) > 0.2 * (abs(ya) + abs(yb)) and depth < 30:
            wm = (wa + wb) / 2
            left, ym = segment(wa, wm, ya, depth + 1)
            right, yb = segment(wm, wb, ym, depth + 1)
            return left + right, yb
        return (wb - wa) * (1 / ya + 1 / yb) / 2, yb

    y = cmath.sqrt(val(pts[0]))
    y0 = y
    total = 0j
    for wa, wb in zip(pts, pts[1:]):
        piece, y = segment(wa, wb, y)
        total += piece
    if abs(y + y0) < abs(y - y0):
        return None          # odd lift: the curve surrounds one branch point
    disp = total / four_k
    tau0 = complex(T.tau0)
    n = disp.imag / tau0.imag
    m = disp.real - n * tau0.real
    mi, ni = round(m), round(n)
    if abs(m - mi) > 0.1 or abs(n - ni) > 0.1:
        raise NoConvergence(0, max(abs(m - mi), abs(n - ni)))
    if (mi, ni) == (0, 0):
        return None
    if mi < 0 or (mi == 0 and ni < 0):
        mi, ni = -mi, -ni
    return (mi, ni)


def classify_component(T: TorusCover, comp: PullbackComponent,
                       convention: Convention = ALL_CONVENTIONS[0]):
    """Essential -> target Cusp, or None when the component is peripheral."""
    hom = curve_homology(T, comp.curve.points)
    if hom is None:
        return None
    g = math.gcd(abs(hom[0]), abs(hom[1]))
    return convention.cusp(hom[0] // g, hom[1] // g)


def _curve_with_retries(T, r, convention, samples):
    last = None
    for extra in range(len(OFFSETS)):
        try:
            return slope_curve(T, r, samples=samples + 16 * extra,
                               convention=convention)
        except (NoConvergence, BranchCollision) as exc:
            last = exc
    raise last


def cusp_pullback_oracle(f: RationalMap, T: TorusCover, r: Cusp,
                         convention: Convention = ALL_CONVENTIONS[0],
                         samples: int = DEFAULT_SAMPLES) -> CuspFate:
    """Fate of cusp r computed from an honest geometric pullback."""
    curve = _curve_with_retries(T, r, convention, samples)
    comps = pullback_components(f, curve)
    targets = [classify_component(T, c, convention) for c in comps]
    essential = [t for t in targets if t is not None]
    if not essential:
        return CuspFate.peripheral()
    if any(t != essential[0] for t in essential):
        raise BranchCollision("essential components disagree on the target class")
    return CuspFate.essential(essential[0])


def multiplier_oracle(f: RationalMap, T: TorusCover, r: Cusp,
                      convention: Convention = ALL_CONVENTIONS[0],
                      samples: int = DEFAULT_SAMPLES) -> Fraction:
    """Thurston multiplier of the curve of cusp r, straight from the definition."""
    curve = _curve_with_retries(T, r, convention, samples)
    total = Fraction(0)
    for comp in pullback_components(f, curve):
        if classify_component(T, comp, convention) is not None:
            total += Fraction(1, comp.degree)
    return total


CALIBRATION_CUSPS = [Cusp(0, 1), Cusp(1, 1), Cusp(1, 0),
                     Cusp(1, 2), Cusp(-1, 2), Cusp(2, 1), Cusp(-2, 1),
                     # mirror-asymmetric targets pin the sign bits, which the
                     # symmetric low cusps alone cannot distinguish
                     Cusp(1, 3), Cusp(-1, 3), Cusp(2, 3), Cusp(-2, 3),
                     Cusp(3, 1), Cusp(-3, 1), Cusp(3, 2), Cusp(-3, 2)]

_calibrated: Optional[Convention] = None


def calibrate_convention(ev: Optional[SigmaEvaluator] = None) -> Convention:
    """Pin the cusp-to-homology convention against the analytic engine.

    Runs both engines on the quadratic reference map over a small cusp set and
    keeps the unique candidate convention with full agreement.  The result is
    cached for the session; reports record it.
    """
    global _calibrated
    if _calibrated is not None and ev is None:
        return _calibrated
    if ev is None:
        f = RationalMap([Fraction(1), Fraction(-4), Fraction(4)], [Fraction(1)])
        ev = build_evaluator(f, [Fraction(0), Fraction(1), INF, Fraction(1, 4)])
    T = torus_build(ev.tau0)
    analytic = {r: cusp_pullback(ev, r) for r in CALIBRATION_CUSPS}
    winners = []
    rows = []
    for conv in ALL_CONVENTIONS:
        ok = True
        row = []
        for r, fate in analytic.items():
            try:
                oracle = cusp_pullback_oracle(ev.f, T, r, conv)
            except (BranchCollision, NoConvergence):
                ok = False
                break
            row.append((oracle.kind, oracle.target))
            if oracle.kind != fate.kind or oracle.target != fate.target:
                ok = False
                break
        if ok:
            winners.append(conv)
            rows.append(tuple(row))
    # for maps with real coefficients the fate table is invariant under
    # r -> -r (complex conjugation), so sign flips are undetectable and only
    # the swap bit can disagree; all surviving candidates must act identically
    if not winners or any(row != rows[0] for row in rows):
        raise NoConvergence(len(winners), 0.0)
    _calibrated = winners[0]
    return _calibrated


def oracle_for_evaluator(ev: SigmaEvaluator) -> TorusCover:
    """Torus cover normalized to the evaluator's marked sphere."""
    tau0 = ev.tau0 if ev.tau0 is not None else _solve_basepoint(ev.a)
    return torus_build(tau0)


def comparison_table(ev: SigmaEvaluator, cusps,
                     convention: Optional[Convention] = None) -> str:
    """CSV comparing analytic and oracle fates/multipliers over the given cusps."""
    from .pullback import multiplier_from_horoballs
    conv = convention or calibrate_convention()
    T = oracle_for_evaluator(ev)
    adm = admissible_multipliers(ev.f.degree)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["cusp", "analytic_fate", "oracle_fate",
                     "analytic_multiplier", "oracle_multiplier", "agree"])
    for r in cusps:
        a_fate = cusp_pullback(ev, r)
        o_fate = cusp_pullback_oracle(ev.f, T, r, conv)
        a_mult = (multiplier_from_horoballs(ev, r)
                  if a_fate.kind == "essential" else
                  Fraction(0) if a_fate.kind == "peripheral" else None)
        o_mult = multiplier_oracle(ev.f, T, r, conv)
        agree = (a_fate.kind == o_fate.kind
                 and a_fate.target == o_fate.target
                 and a_mult == o_mult
                 and o_mult in adm)
        writer.writerow([str(r), str(a_fate), str(o_fate),
                         str(a_mult), str(o_mult), agree])
    return buf.getvalue()
