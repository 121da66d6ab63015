"""The pullback map sigma_f on the half-plane and its boundary action on cusps.

sigma_f is evaluated by the commuting square: project a half-plane path
through lambda, continue the f-preimage branch that starts at the fixed
marked point a, and lift the continued path back through lambda.  The cusp
extension marches into a horoball along the vertical geodesic; once inside,
everything switches to exact local coordinates: the source moduli point is
a theta quotient at an exactly reduced point, the preimage branch lives in a
chart v centered at a root of (puncture coordinate) o f with the order-k zero
divided out analytically, and the lift lives in the nome q.  In these charts
one depth step is a single multiplicative Newton update, so penetrations of
order 4^12 cost nothing.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import mpmath
from mpmath import mp, mpc, mpf

from .cover import (
    LiftedPoint, ModuliTriple, _newton_preimage, _triple_gap, hyperbolic_distance,
    lambda_inverse_local, lambda_triple, lambda_value, reduce_tau,
    theta_triple_from_nome, twist,
)
from .errors import (
    LiftBroken, NoConvergence, PrecisionLoss, SnapAmbiguous,
)
from .farey import (
    Cusp, ModularElement, PunctureLabel, cusp_identify, gamma2_class,
)
from .ratmap import (
    INF, RationalMap, canonical, compose, is_exact, poly_deg, poly_deriv,
    poly_divmod_exact, poly_gcd_exact, poly_roots, poly_sub, poly_trim,
    pt_eq, pt_label,
)

B_SET = (Fraction(0), Fraction(1), INF)
PUNCTURE_INDEX = {PunctureLabel.ZERO: 0, PunctureLabel.ONE: 1, PunctureLabel.INFINITY: 2}
DEFAULT_T = Fraction(1, 2)
DEFAULT_DEPTH = 12
CONSECUTIVE = 3


# ---------------------------------------------------------------------------
# fates and records


@dataclass(frozen=True)
class CuspFate:
    kind: str                      # "essential" | "peripheral" | "undecided"
    target: Optional[Cusp] = None  # for essential fates
    diagnostics: tuple = ()

    @staticmethod
    def essential(target: Cusp) -> "CuspFate":
        return CuspFate("essential", target)

    @staticmethod
    def peripheral() -> "CuspFate":
        return CuspFate("peripheral")

    @staticmethod
    def undecided(*diag) -> "CuspFate":
        return CuspFate("undecided", None, tuple(str(d) for d in diag))

    def __str__(self):
        if self.kind == "essential":
            return f"essential->{self.target}"
        return self.kind


@dataclass
class OrbitRecord:
    start: Cusp
    cusps: list                   # visited cusps, starting with `start`
    fates: list                   # CuspFate per step
    terminal: str                 # "cycle" | "peripheral" | "exhausted" | "undecided"
    cycle: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "start": str(self.start),
            "cusps": [str(c) for c in self.cusps],
            "fates": [str(f) for f in self.fates],
            "terminal": self.terminal,
            "cycle": [str(c) for c in self.cycle],
        }


@dataclass
class AttractorReport:
    height: int
    orbits: dict                  # Cusp -> OrbitRecord
    attractor: list               # list of Cusp
    closure_ok: bool
    closure_detail: dict          # Cusp -> str(fate)
    undecided: list               # list of Cusp
    settings: dict

    def to_json_dict(self):
        return {
            "height": self.height,
            "settings": {k: str(v) for k, v in sorted(self.settings.items())},
            "attractor": sorted(str(c) for c in self.attractor),
            "closure_ok": self.closure_ok,
            "closure": {str(c): v for c, v in sorted(self.closure_detail.items(),
                                                     key=lambda kv: str(kv[0]))},
            "undecided": sorted(str(c) for c in self.undecided),
            "orbits": {str(c): r.to_json_dict() for c, r in
                       sorted(self.orbits.items(), key=lambda kv: str(kv[0]))},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# puncture-local charts of (u_p o f)


@dataclass
class PunctureChart:
    """Local model of u_p(f(z)) = v^k S(v)/Q(center + v) at one preimage of puncture p.

    `center` is a point of the source sphere (INF means the chart lives in
    x = 1/z); S carries the shifted numerator with the order-k zero divided
    out, which is exact because the first k coefficients vanish identically.
    """

    puncture: int                 # 0, 1, 2 for punctures 0, 1, inf
    center: object                # exact rational, complex, or INF
    k: int
    s_coeffs: list
    q_coeffs: list
    marked: bool                  # center in {0, 1, inf}

    def u_of_v(self, v):
        num = _mp_eval(self.s_coeffs, v)
        den = _mp_eval(self.q_coeffs, v)
        return (mpc(v) ** self.k) * num / den

    def solve_v(self, u_target, v_guess, iters: int = 60, strict: bool = False):
        """Multiplicative Newton: v <- v * (u Q / (v^k S))^(1/k), branch near v_guess.

        With strict set (continuation from a previously solved v on the same
        chart) a first correction that wraps more than a quarter turn is
        rejected: the principal root can no longer identify the sheet and the
        caller must bisect its step.  Fresh seeds keep large first steps.
        """
        v = mpc(v_guess)
        for it in range(iters):
            cur = self.u_of_v(v)
            ratio = mpc(u_target) / cur
            if abs(ratio - 1) <= mpf(10) ** (-mp.dps + 8):
                return v
            if strict and it == 0 and abs(mpmath.arg(ratio)) > mpmath.pi / 2:
                raise NoConvergence(iters, float(abs(ratio - 1)))
            root = ratio ** (mpf(1) / self.k)
            if root.real <= 0:
                raise NoConvergence(iters, float(abs(ratio - 1)))
            v = v * root
        raise NoConvergence(iters, float(abs(ratio - 1)))

    def point(self, v):
        """The sphere point of chart coordinate v."""
        if self.center is INF:
            return INF if v == 0 else 1 / mpc(v)
        return self.center + v


def _mp_eval(coeffs, z):
    acc = mpc(0)
    for c in reversed(coeffs):
        acc = acc * z + (mpc(c) if isinstance(c, complex) else c)
    return acc


def _exact_shift(coeffs, center):
    """Taylor coefficients of P(center + v) for exact rational center."""
    shifted = []
    cur = [Fraction(c) for c in coeffs]
    while cur:
        q, r = poly_divmod_exact(cur, [-Fraction(center), Fraction(1)])
        shifted.append(r[0] if r else Fraction(0))
        cur = q
    return shifted


def _numeric_shift(coeffs, center, k):
    """Taylor shift at an mp-polished root; the first k coefficients, which
    vanish identically there, are discarded rather than carried as noise."""
    # mpmath's constructors reject Fraction but its arithmetic accepts it
    cur = [mpc(0) + x for x in coeffs]
    center = mpc(center)
    shifted = []
    while cur:
        # synthetic division by (z - center)
        q = [mpc(0)] * (len(cur) - 1)
        r = cur[-1]
        for i in reversed(range(len(cur) - 1)):
            q[i] = r
            r = cur[i] + r * center
        shifted.append(r)
        cur = q
    return shifted[k:]


def _u_p_numden(f: RationalMap, p_idx: int, at_infinity: bool):
    """(P, Q) with u_p(f(z)) = P/Q, in the z chart or the x = 1/z chart."""
    num, den = list(f.num), list(f.den)
    if at_infinity:
        L = f.degree
        num = (num + [0] * (L + 1 - len(num)))[::-1]
        den = (den + [0] * (L + 1 - len(den)))[::-1]
        num, den = poly_trim(num), poly_trim(den)
        # strip common powers of x
        while num and den and num[0] == 0 and den[0] == 0:
            num.pop(0)
            den.pop(0)
    if p_idx == 0:
        return num, den
    if p_idx == 1:
        return poly_sub(den, num), den
    return den, num


def _chart_roots(poly):
    """Roots of an exact polynomial as (mp-polished point, multiplicity)."""

    out = []
    exact_poly = [Fraction(c) for c in poly]
    for root, mult in poly_roots(poly):
        if is_exact(root):
            out.append((root, mult))
            continue
        # polish the root on the square-free part, where it is simple
        sf = _square_free_part(exact_poly)
        z = mpc(root)
        d = poly_deriv(sf)
        for _ in range(mp.dps):
            fz = _mp_eval(sf, z)
            dz = _mp_eval(d, z)
            if dz == 0:
                break
            step = fz / dz
            z = z - step
            if abs(step) < mpf(10) ** (-mp.dps + 4) * max(1, abs(z)):
                break
        out.append((z, mult))
    return out


def _square_free_part(poly):
    g = poly_gcd_exact(poly, poly_deriv(poly))
    if poly_deg(g) < 1:
        return [Fraction(c) for c in poly]
    q, _ = poly_divmod_exact(poly, g)
    return q


def build_charts(f: RationalMap):
    """All puncture-local charts of f, grouped by puncture index."""
    charts = {0: [], 1: [], 2: []}
    d = f.degree
    for p_idx in (0, 1, 2):
        num, den = _u_p_numden(f, p_idx, at_infinity=False)
        for root, mult in _chart_roots(num):
            if is_exact(root):
                s = _exact_shift(num, root)[mult:]
                q = _exact_shift(den, root)
            else:
                s = _numeric_shift(num, root, mult)
                q = _numeric_shift(den, root, 0)
            marked = any(pt_eq(root, b) for b in B_SET[:2])
            charts[p_idx].append(PunctureChart(p_idx, root if is_exact(root) else mpc(root),
                                               mult, s, q, marked))
        # the point at infinity may also be a preimage
        inum, iden = _u_p_numden(f, p_idx, at_infinity=True)
        mult_inf = 0
        for c in inum:
            if c == 0:
                mult_inf += 1
            else:
                break
        if mult_inf > 0:
            s = [Fraction(c) for c in inum[mult_inf:]]
            q = [Fraction(c) for c in iden]
            charts[p_idx].append(PunctureChart(p_idx, INF, mult_inf, s, q, True))
        total = sum(ch.k for ch in charts[p_idx])
        if total != d:
            raise PrecisionLoss(f"chart degrees for puncture {p_idx} sum to {total} != {d}")
    return charts


# ---------------------------------------------------------------------------
# the evaluator


@dataclass
class SigmaEvaluator:
    f: RationalMap
    a: object                      # the free marked point, f(a) = a
    tau0: object                   # mpc basepoint, lambda(tau0) = a
    constant: bool = False
    substituted_square: bool = False
    real_symmetric: bool = False
    charts: dict = field(default_factory=dict)
    t: Fraction = DEFAULT_T
    depth: int = DEFAULT_DEPTH
    _fate_cache: dict = field(default_factory=dict)
    _deep_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        self._fate_cache = {}
        self._deep_cache = {}


def build_evaluator(f: RationalMap, A, t: Fraction = DEFAULT_T,
                    depth: int = DEFAULT_DEPTH) -> SigmaEvaluator:
    """Construct a sigma_f evaluator for a marked map with A = {0, 1, inf, a}."""
    A = list(A)
    if len(A) != 4:
        raise ValueError("need 4 marked points")
    for b in B_SET:
        if not any(pt_eq(b, x) for x in A):
            raise ValueError("marked set must be normalized to contain 0, 1, inf")
    free = [x for x in A if not any(pt_eq(x, b) for b in B_SET)]
    if len(free) != 1:
        raise ValueError("marked set must contain exactly one free point")
    a = free[0]
    pts, _ = f.postcritical_set()
    if not all(any(pt_eq(p, b) for b in B_SET) for p in pts):
        # two-postcritical-point adjustment: pass to f^2 when that fixes B
        raise ValueError("postcritical set must lie in {0, 1, inf}")
    for x in A:
        if not any(pt_eq(canonical(f(x)), y) for y in A):
            raise ValueError("marked set is not forward-invariant")
    fB_in_B = all(any(pt_eq(canonical(f(b)), c) for c in B_SET) for b in B_SET)
    substituted = False
    if not fB_in_B:
        if len(pts) == 2:

            f2 = compose(f, f)
            if all(any(pt_eq(canonical(f2(b)), c) for c in B_SET) for b in B_SET):
                f, substituted = f2, True
            else:
                raise ValueError("f and f^2 both fail to preserve {0, 1, inf}")
        else:
            raise ValueError("f does not preserve {0, 1, inf}")
    fa = canonical(f(a))
    real_sym = (all(getattr(c, "imag", 0) == 0 for c in f.num + f.den)
                and (a is INF or getattr(a, "imag", 0) == 0))
    if any(pt_eq(fa, b) for b in B_SET):
        return SigmaEvaluator(f, a, None, constant=True,
                              substituted_square=substituted,
                              real_symmetric=real_sym, t=t, depth=depth)
    if not pt_eq(fa, a):
        raise ValueError("free marked point must satisfy f(a) = a")
    tau0 = _solve_basepoint(a)
    ev = SigmaEvaluator(f, a, tau0, constant=False,
                        substituted_square=substituted,
                        real_symmetric=real_sym, t=t, depth=depth)
    ev.charts = build_charts(f)
    return ev


def _solve_basepoint(a):
    target = mpc(complex(a)) if not isinstance(a, (int, Fraction)) else mpc(float(a))
    guesses = [mpc(x, y) for y in (1.0, 1.3, 0.9, 1.8, 2.5)
               for x in (0.0, 0.5, -0.5, 0.25, -0.25, 0.75, -0.75, 1.0)]
    best = None
    for g in guesses:
        try:
            tau = lambda_inverse_local(target, g)
        except (NoConvergence, PrecisionLoss):
            continue
        if abs(lambda_value(tau) - target) < 1e-10 * max(1, abs(target)):
            _, red = reduce_tau(tau)
            cand = red  # fundamental-domain representative
            if abs(lambda_value(cand) - target) < 1e-10 * max(1, abs(target)):
                return cand
            if best is None:
                best = tau
    if best is not None:
        return best
    raise NoConvergence(0, float("inf"))


# ---------------------------------------------------------------------------
# interior evaluation


def sigma_eval(ev: SigmaEvaluator, tau):
    """sigma_f(tau) for an interior point, via project / continue / lift."""
    if ev.constant:
        raise ValueError("sigma is constant for this marking; no evaluation needed")
    tau = mpc(tau)
    n_samples = 24
    seg = [ev.tau0 + (tau - ev.tau0) * mpf(k) / n_samples for k in range(n_samples + 1)]
    state = _BranchState.start(ev)
    lift = LiftedPoint.from_tau(ev.tau0)
    for s0, s1 in zip(seg, seg[1:]):
        state, lift = _advance_checked(ev, state, lift, s0, s1)
    return lift.tau


class _BranchState:
    """The tracked f-preimage point, in plain or chart coordinates."""

    __slots__ = ("chart", "v", "w")

    def __init__(self, chart, v, w):
        self.chart = chart
        self.v = v
        self.w = w          # current sphere point (mpc) or INF-chart value

    @staticmethod
    def start(ev):
        return _BranchState(None, None, mpc(complex(ev.a)))

    def sphere_triple(self) -> ModuliTriple:
        """Moduli triple of the tracked point, cancellation-free in charts at marked centers."""
        if self.chart is not None and self.chart.marked:
            c, v = self.chart.center, self.v
            if c is INF:
                x = v  # x = 1/w
                return ModuliTriple(1 / x, -(1 - x) / x, x)
            if c == 0:
                return ModuliTriple(v, 1 - v, 1 / v)
            # c == 1
            w = 1 + v
            return ModuliTriple(w, -v, 1 / w)
        w = self.w if self.chart is None else mpc(self.chart.point(self.v))
        return ModuliTriple(w, 1 - w, 1 / w)


def _source_triple_interior(ev, tau):
    return lambda_triple(tau)[2]


def _advance(ev, state, lift, tau_a, tau_b, depth=0, max_depth=26):
    """One adaptive continuation step of (branch, lift) from tau_a to tau_b."""
    try:
        m_target = lambda_triple(tau_b)[2]
        new_state = _branch_step(ev, state, m_target)
        new_lift = lift.moved_to(new_state.sphere_triple())
        if hyperbolic_distance(new_lift.tau, lift.tau) > 0.7 and depth < max_depth:
            raise NoConvergence(0, 0.0)
        return new_state, new_lift
    except (NoConvergence, PrecisionLoss):
        if depth >= max_depth:
            raise LiftBroken(f"refinement floor between {complex(tau_a)} and {complex(tau_b)}")
        mid = (tau_a + tau_b) / 2
        state, lift = _advance(ev, state, lift, tau_a, mid, depth + 1, max_depth)
        return _advance(ev, state, lift, mid, tau_b, depth + 1, max_depth)


def _advance_checked(ev, state, lift, tau_a, tau_b, max_splits=6):
    """Continuation from tau_a to tau_b, verified against period aliasing.

    An image that winds a whole period between samples passes every local
    guard: the nome is exactly periodic, so the lost turns are invisible to
    any endpoint test.  Re-walking the step at doubled resolution exposes
    them, so the step is accepted only when two successive refinements land
    on the same lift.
    """
    prev = None
    for level in range(max_splits + 1):
        n = 2 ** level
        st, lf = state, lift
        for k in range(n):
            a = tau_a + (tau_b - tau_a) * mpf(k) / n
            b = tau_a + (tau_b - tau_a) * mpf(k + 1) / n
            st, lf = _advance(ev, st, lf, a, b)
        if prev is not None and abs(lf.tau - prev) < mpf(1) / 10:
            return st, lf
        prev = lf.tau
    raise LiftBroken(f"refinement failed to stabilize between {complex(tau_a)}"
                     f" and {complex(tau_b)}")


def _chart_step(ev, state: _BranchState, m_target: ModuliTriple, p_idx: int) -> _BranchState:
    """Advance the branch in the local chart of the nearest preimage of puncture p_idx."""
    u_target = m_target.coords()[p_idx]
    if state.chart is not None and state.chart.puncture == p_idx:
        chart = state.chart
        v = chart.solve_v(u_target, state.v, strict=True)
        return _BranchState(chart, v, None)
    w = state.w if state.chart is None else mpc(state.chart.point(state.v))
    chart = _nearest_chart(ev, p_idx, w)
    v0 = (1 / w if chart.center is INF else w - _center_mpc(chart))
    if abs(v0) > 0.5:
        # crude seed: magnitude from the local model, direction from v0
        seed = (mpc(u_target) * _mp_eval(chart.q_coeffs, 0)
                / _mp_eval(chart.s_coeffs, 0)) ** (mpf(1) / chart.k)
        v0 = seed * (v0 / abs(v0)) if v0 != 0 else seed
    v = chart.solve_v(u_target, v0)
    return _BranchState(chart, v, None)


def _branch_step(ev, state: _BranchState, m_target: ModuliTriple) -> _BranchState:
    p_idx, mag = m_target.nearest_puncture()
    if mag < 0.01:
        return _chart_step(ev, state, m_target, p_idx)
    # plain mode
    w = state.w if state.chart is None else mpc(state.chart.point(state.v))
    try:
        w_new = _newton_preimage(ev.f, w, m_target.value)
        if abs(w_new - w) > 0.5 * max(mpf(1), abs(w)):
            raise NoConvergence(0, float(abs(w_new - w)))
    except NoConvergence:
        # near a horoball the plain Newton step can stall against the branch
        # point of f at the puncture; the chart still converges there
        if mag < 0.2:
            return _chart_step(ev, state, m_target, p_idx)
        raise
    # two preimage branches merge at each critical point, so near one a
    # Newton step can silently land on the partner branch; only steps small
    # against the distance to the merge locus are trustworthy
    crit_d = _crit_distance(ev, w)
    if crit_d is not None and abs(w_new - w) > 0.5 * crit_d:
        raise NoConvergence(0, float(abs(w_new - w)))
    return _BranchState(None, None, w_new)


def _crit_distance(ev, w):
    """Distance from w to the nearest finite critical point of ev.f."""
    crits = getattr(ev, "_finite_crits", None)
    if crits is None:
        crits = [mpc(complex(c)) for c, _ in ev.f.critical_points() if c is not INF]
        ev._finite_crits = crits
    if not crits:
        return None
    return min(abs(w - c) for c in crits)


def _nearest_chart(ev, p_idx, w):
    charts = ev.charts[p_idx]
    if abs(w) > 1e6:
        for ch in charts:
            if ch.center is INF:
                return ch
    best, bd = None, None
    for ch in charts:
        if ch.center is INF:
            d = abs(1 / w) if w != 0 else mpf("inf")
        else:
            d = abs(w - mpc(complex(ch.center)) if not is_exact(ch.center)
                    else w - mpc(float(Fraction(ch.center))))
        if bd is None or d < bd:
            best, bd = ch, d
    return best


# ---------------------------------------------------------------------------
# cusp extension


def _cusp_matrix(r: Cusp) -> ModularElement:
    """M with M(inf) = r; its inverse sends the vertical geodesic at r upright."""
    if r.is_infinity:
        return ModularElement(1, 0, 0, 1)
    # solve a p + b q = 1
    g = math.gcd(r.p, r.q)
    assert g == 1
    a, b = _bezout(r.p, r.q)
    gamma = ModularElement(a, b, -r.q, r.p)       # gamma(r) = inf
    return gamma.inverse()


def _bezout(p, q):
    old_r, r = p, q
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        qt = old_r // r
        old_r, r = r, old_r - qt * r
        old_s, s = s, old_s - qt * s
        old_t, t = t, old_t - qt * t
    if old_r < 0:
        old_s, old_t = -old_s, -old_t
    return old_s, old_t


def _source_schedule_triple(ev, M: ModularElement, s) -> ModuliTriple:
    """Moduli triple of tau_s = M(re + i 4^s / t) computed from the exact reduced form."""
    minv = M.inverse()
    # M^{-1}(r + iy) = i / (c^2 y) + a / c, so the reduced real part is a/c
    re = Fraction(minv.a, minv.c) if minv.c else Fraction(0)
    # fold into (-1, 1]
    re = re - 2 * ((re + 1) // 2)
    im = mpf(4) ** s / mpf(ev.t.numerator) * ev.t.denominator
    q = mpmath.exp(1j * mpmath.pi * (mpf(re.numerator) / re.denominator + 1j * im)) \
        if re else mpmath.exp(-mpmath.pi * im)
    return twist(M, theta_triple_from_nome(q))


def _deep_advance(ev, state, lift, M, p_idx, s0, s1, max_depth=16):
    """Continue (branch state, lift) along the radial schedule from depth s0 to s1.

    The image can move by several hyperbolic units per unit of source depth,
    most sharply when the lift first enters a horoball, so the interval is
    bisected until each sub-step keeps the image triple within the local
    continuation radius.
    """
    stack = [(mpf(s0), mpf(s1), 0)]
    while stack:
        a, b, d = stack.pop()
        try:
            m_b = _source_schedule_triple(ev, M, b)
            new_state = _deep_branch_step(ev, state, m_b, p_idx)
            trip = new_state.sphere_triple()
            # once both endpoints sit deep in a horoball the lift is solved
            # directly in the nome, so radial jumps of any size are safe and
            # the continuation-radius check would only force useless splits
            deep_both = (min(abs(c) for c in trip.coords()) < 0.01
                         and min(abs(c) for c in lift.triple().coords()) < 0.01)
            if not deep_both and _triple_gap(lift.triple(), trip) > 0.45 and d < max_depth:
                raise NoConvergence(0, 0.0)
            new_lift = lift.moved_to(trip)
            # during horoball entry the image still travels horizontally, so
            # hold it to the same step cap as the interior walk; once both
            # endpoints are deep the motion is radial and any size is safe
            if (not deep_both and d < max_depth
                    and hyperbolic_distance(new_lift.tau, lift.tau) > 0.25):
                raise NoConvergence(0, 0.0)
        except (NoConvergence, PrecisionLoss) as exc:
            if d >= max_depth:
                raise LiftBroken(f"deep continuation stalled near depth {float(b)}") from exc
            mid = (a + b) / 2
            stack.append((mid, b, d + 1))
            stack.append((a, mid, d + 1))
            continue
        state, lift = new_state, new_lift
    return state, lift


def cusp_pullback(ev: SigmaEvaluator, r: Cusp, want_slope: bool = False):
    """Fate of a cusp under sigma_f, with optional multiplier data.

    Returns CuspFate, or (CuspFate, slope_estimate) when want_slope is set.
    """
    key = (r, ev.t, ev.depth)
    if not want_slope and key in self_cache(ev):
        return self_cache(ev)[key]
    if ev.constant:
        fate = CuspFate.peripheral()
        self_cache(ev)[key] = fate
        return (fate, mpf(0)) if want_slope else fate
    mirror_key = (Cusp(-r.p, r.q), ev.t, ev.depth)
    if not want_slope and ev.real_symmetric and mirror_key in self_cache(ev):
        # a real map commutes with tau -> -conj(tau), so the fate of -p/q is
        # the reflection of the fate of p/q
        cached = self_cache(ev)[mirror_key]
        if cached.kind != "undecided":
            fate = _mirror_fate(cached)
            self_cache(ev)[key] = fate
            return fate
    fate, slope = _cusp_pullback_full(ev, r, full=want_slope)
    self_cache(ev)[key] = fate
    if ev.real_symmetric and fate.kind != "undecided":
        self_cache(ev).setdefault(mirror_key, _mirror_fate(fate))
    return (fate, slope) if want_slope else fate


def _mirror_fate(fate: CuspFate) -> CuspFate:
    if fate.kind == "essential":
        return CuspFate.essential(Cusp(-fate.target.p, fate.target.q))
    return fate


def self_cache(ev):
    return ev._fate_cache


def _cusp_pullback_full(ev, r: Cusp, full: bool = False):
    M = _cusp_matrix(r)
    # stage A: walk from the basepoint to the horoball boundary point
    t_mp = mpf(ev.t.numerator) / ev.t.denominator
    if r.is_infinity:
        entry = mpc(0, 1 / t_mp)
    else:
        entry = mpc(mpf(r.p) / r.q, t_mp / (r.q * r.q))
    high = mpc(entry.real, max(float(ev.tau0.imag), 1.2))
    waypoints = [ev.tau0, high, entry] if not r.is_infinity else [ev.tau0, entry]
    state = _BranchState.start(ev)
    lift = LiftedPoint.from_tau(ev.tau0)
    for s0, s1 in zip(waypoints, waypoints[1:]):
        # sample count proportional to the hyperbolic length of the leg, so
        # deep cusps get finer schedules and shallow ones stay cheap
        n_samples = max(6, int(float(hyperbolic_distance(s0, s1)) / 0.4) + 1)
        if abs(s1.real - s0.real) < 1e-12 and s1.imag < s0.imag:
            # vertical descent into the horoball: geometric spacing in the
            # imaginary part keeps the hyperbolic step length uniform, where a
            # linear schedule would lump nearly all of it into the last sample
            ratio = s1.imag / s0.imag
            seg = [mpc(s0.real, s0.imag * ratio ** (mpf(k) / n_samples))
                   for k in range(n_samples + 1)]
        else:
            seg = [s0 + (s1 - s0) * mpf(k) / n_samples for k in range(n_samples + 1)]
        for a_, b_ in zip(seg, seg[1:]):
            state, lift = _advance_checked(ev, state, lift, a_, b_)
    # deep phase: radial schedule in exact reduced coordinates
    p_label = gamma2_class(r)
    p_idx = PUNCTURE_INDEX[p_label]
    slope_pts = []
    fate = None
    streak_ess = 0
    streak_per = 0
    ess_cusp = None
    prev_tau = None
    in_ball = mpf(ev.t.denominator) / ev.t.numerator
    for n in range(ev.depth + 1):
        m_n = _source_schedule_triple(ev, M, n)
        check_idx, _ = m_n.nearest_puncture()
        if check_idx != p_idx:
            return CuspFate.undecided("schedule triple landed near wrong puncture"), None
        try:
            state, lift = _deep_advance(ev, state, lift, M, p_idx, max(n - 1, 0), n)
        except (NoConvergence, PrecisionLoss, LiftBroken) as exc:
            return CuspFate.undecided(f"depth {n}: {exc}"), None
        pen = lift.penetration
        source_pen = mpf(4) ** n * ev.t.denominator / ev.t.numerator
        slope_pts.append((source_pen, pen))
        marked = state.chart is not None and state.chart.marked
        if marked and pen > in_ball:
            cusp_now = lift.cusp()
            streak_ess = streak_ess + 1 if cusp_now == ess_cusp else 1
            ess_cusp = cusp_now
            streak_per = 0
            prev_tau = None
            if streak_ess >= CONSECUTIVE:
                fate = CuspFate.essential(cusp_now)
                if not full:
                    break
        else:
            tau_now = lift.tau
            cauchy = prev_tau is not None and abs(tau_now - prev_tau) < 1e-6
            if cauchy and _horoball_free(tau_now):
                streak_per += 1
            else:
                streak_per = 0
            prev_tau = tau_now
            streak_ess = 0
            ess_cusp = None
            fate = None
            if streak_per >= CONSECUTIVE - 1:
                fate = CuspFate.peripheral()
                break
    if fate is None:
        fate = CuspFate.undecided(
            "depth exhausted",
            f"last penetration {float(slope_pts[-1][1]) if slope_pts else None}")
    slope = None
    if fate.kind == "essential" and len(slope_pts) >= 2:
        (i0, o0), (i1, o1) = slope_pts[-2], slope_pts[-1]
        slope = (o1 - o0) / (i1 - i0)
    return fate, slope


def _horoball_free(tau, t: Fraction = Fraction(1, 2)) -> bool:
    x = Fraction(float(tau.real)).limit_denominator(10**12)
    y = Fraction(float(tau.imag))
    if y <= 0:
        return False
    return cusp_identify(x, y, t) is None


def _deep_branch_step(ev, state, m_n: ModuliTriple, p_idx: int) -> _BranchState:
    u_target = m_n.coords()[p_idx]
    if state.chart is not None and state.chart.puncture == p_idx:
        chart = state.chart
        v_pred = state.v
    else:
        w = state.w if state.chart is None else mpc(state.chart.point(state.v))
        chart = _nearest_chart(ev, p_idx, w)
        v_pred = (1 / w if chart.center is INF else w - _center_mpc(chart))
    # radial prediction: the schedule has constant phase, so the ratio of
    # consecutive targets is a positive real and the principal root is right
    cur = chart.u_of_v(v_pred) if v_pred != 0 else None
    if cur is not None and cur != 0:
        ratio = mpc(u_target) / cur
        v_pred = v_pred * ratio ** (mpf(1) / chart.k)
    v = chart.solve_v(u_target, v_pred, strict=True)
    return _BranchState(chart, v, None)


def _center_mpc(chart):
    c = chart.center
    if is_exact(c):
        return mpc(mpf(c.numerator) / c.denominator) if isinstance(c, Fraction) else mpc(c)
    return mpc(c)


# ---------------------------------------------------------------------------
# multipliers


def admissible_multipliers(degree: int):
    """All possible Thurston multiplier values for a given degree, plus 0.

    A multiplier is a sum of reciprocals 1/d_j over component degrees d_j with
    sum d_j <= degree.
    """
    sums = {Fraction(0)}
    partial = set()

    def rec(remaining, min_d, acc):
        if acc != 0:
            partial.add(acc)
        for d in range(min_d, remaining + 1):
            rec(remaining - d, d, acc + Fraction(1, d))

    rec(degree, 1, Fraction(0))
    return sorted(sums | partial)


def snap_multiplier(estimate, degree: int, tol: float = 0.05) -> Fraction:
    est = float(estimate)
    cands = admissible_multipliers(degree)
    close = [c for c in cands if abs(float(c) - est) <= tol]
    if not close:
        raise SnapAmbiguous(est, [float(c) for c in cands])
    if len(close) > 1:
        raise SnapAmbiguous(est, [float(c) for c in close])
    return close[0]


def multiplier_from_horoballs(ev: SigmaEvaluator, r: Cusp) -> Fraction:
    """The Thurston multiplier of the curve class of r, certified by snapping.

    The image penetration grows linearly in the source penetration with slope
    equal to the multiplier; peripheral classes give 0.
    """
    fate, slope = cusp_pullback(ev, r, want_slope=True)
    if fate.kind == "peripheral":
        return Fraction(0)
    if fate.kind != "essential":
        raise NoConvergence(ev.depth, float("nan"))
    return snap_multiplier(slope, ev.f.degree)


# ---------------------------------------------------------------------------
# orbits and attractors


def iterate_cusp_orbit(ev: SigmaEvaluator, r: Cusp, max_n: int = 100) -> OrbitRecord:
    cusps = [r]
    fates = []
    seen = {r: 0}
    for _ in range(max_n):
        fate = cusp_pullback(ev, cusps[-1])
        fates.append(fate)
        if fate.kind == "peripheral":
            return OrbitRecord(r, cusps, fates, "peripheral")
        if fate.kind == "undecided":
            return OrbitRecord(r, cusps, fates, "undecided")
        nxt = fate.target
        if nxt in seen:
            cycle = cusps[seen[nxt]:]
            return OrbitRecord(r, cusps + [nxt], fates, "cycle", cycle=cycle)
        seen[nxt] = len(cusps)
        cusps.append(nxt)
    return OrbitRecord(r, cusps, fates, "exhausted")


def cusps_of_height(height: int):
    out = []
    for q in range(0, height + 1):
        if q == 0:
            out.append(Cusp(1, 0))
            continue
        for p in range(-height, height + 1):
            if math.gcd(p, q) == 1:
                out.append(Cusp(p, q))
    return out


def find_attractor(ev: SigmaEvaluator, height: int, max_n: int = 100) -> AttractorReport:
    orbits = {}
    attractor = set()
    undecided = []
    for r in cusps_of_height(height):
        rec = iterate_cusp_orbit(ev, r, max_n)
        orbits[r] = rec
        if rec.terminal == "cycle":
            attractor.update(rec.cycle)
        elif rec.terminal == "undecided":
            undecided.append(r)
    closure_detail = {}
    closure_ok = True
    for c in sorted(attractor, key=str):
        fate = cusp_pullback(ev, c)
        closure_detail[c] = str(fate)
        if fate.kind == "essential" and fate.target not in attractor:
            closure_ok = False
        if fate.kind == "undecided":
            closure_ok = False
    return AttractorReport(
        height=height,
        orbits=orbits,
        attractor=sorted(attractor, key=str),
        closure_ok=closure_ok,
        closure_detail=closure_detail,
        undecided=undecided,
        settings={"t": ev.t, "depth": ev.depth, "max_n": max_n,
                  "substituted_square": ev.substituted_square},
    )


def classify_cusp(ev_or_f, r: Cusp) -> str:
    """Fatou/Julia class of a cusp: the class of its puncture's postcritical point."""
    f = ev_or_f.f if isinstance(ev_or_f, SigmaEvaluator) else ev_or_f
    label = gamma2_class(r)
    point = {PunctureLabel.ZERO: Fraction(0), PunctureLabel.ONE: Fraction(1),
             PunctureLabel.INFINITY: INF}[label]
    cls = getattr(f, "_fatou_julia_cache", None)
    if cls is None:
        cls = f.classify_fatou_julia()
        f._fatou_julia_cache = cls
    for p in cls.points:
        if pt_eq(p, point):
            return cls.labels[pt_label(p)]
    # points of B outside P_f count as Julia
    return "Julia"


# ---------------------------------------------------------------------------
# serialization helpers


def orbit_csv(record: OrbitRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["step", "cusp", "fate"])
    for i, fate in enumerate(record.fates):
        writer.writerow([i, str(record.cusps[i]), str(fate)])
    return buf.getvalue()


def halfplane_svg(points, horoball_t: Fraction = Fraction(1, 2),
                  width: int = 600, height: int = 400) -> str:
    """A small SVG of half-plane points with the horoball family for context."""
    xs = [float(mpc(p).real) for p in points] or [0.0]
    ys = [float(mpc(p).imag) for p in points] or [1.0]
    x0, x1 = min(xs) - 0.5, max(xs) + 0.5
    y1 = max(ys) * 1.2 + 0.2
    scale = width / (x1 - x0)

    def sx(x):
        return (x - x0) * scale

    def sy(y):
        return height - y * (height / y1)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    t = float(horoball_t)
    qmax = 12
    for q in range(1, qmax + 1):
        diam = t / (q * q)
        if diam * (height / y1) < 2:
            break
        for p in range(math.floor(x0 * q), math.ceil(x1 * q) + 1):
            if math.gcd(p, q) != 1:
                continue
            cx, cy, rr = sx(p / q), sy(diam / 2), diam / 2 * (height / y1)
            parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{rr:.1f}" '
                         f'fill="none" stroke="#bbb"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="#c00"/>')
    parts.append("</svg>")
    return "\n".join(parts)
