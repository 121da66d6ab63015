"""Numerical universal cover of the thrice-punctured sphere.

The covering map is the modular lambda function.  Every evaluation routes
through exact reduction to the PSL(2,Z) fundamental domain: a point tau is
stored as (M, tau_red) with M an exact integer matrix and tau = M(tau_red),
so theta series always converge fast and deep cusp excursions never lose the
deck information.  Moduli points are carried as the triple
(lambda, 1-lambda, 1/lambda), each computed from its own theta quotient, so
proximity to any of the three punctures is measured without cancellation.

All half-plane arithmetic is mpmath; the unbounded exponent range is what
makes horoball penetrations of order 10^7 representable at modest working
precision.  The torus double cover at the bottom runs in plain doubles; it
only ever sees curves with healthy clearance.
"""

from __future__ import annotations

import cmath
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np
from mpmath import mp, mpc, mpf

from .errors import LiftBroken, NoConvergence, PrecisionLoss
from .farey import IDENTITY, Cusp, ModularElement, S, T, moebius_apply

DEFAULT_PREC_BITS = 100
MIN_IM = 1e-12
Q_MODE_THRESHOLD = 0.02


def set_precision(bits: Optional[int] = None):
    """Set the global working precision in bits; CURVEPULL_PRECISION overrides."""
    if bits is None:
        bits = int(os.environ.get("CURVEPULL_PRECISION", DEFAULT_PREC_BITS))
    mp.prec = bits
    return bits


set_precision()


def t_power(n: int) -> ModularElement:
    return ModularElement(1, n, 0, 1)


def apply_mp(m: ModularElement, tau):
    """Apply an exact matrix to an mpmath point."""
    return (m.a * tau + m.b) / (m.c * tau + m.d)


def reduce_tau(tau):
    """Reduce tau into the PSL(2,Z) fundamental domain.

    Returns (M, tau_red) with tau = M(tau_red), |Re tau_red| <= 1/2 + eps and
    |tau_red| >= 1 - eps.
    """
    t = mpc(tau)
    if t.imag <= MIN_IM:
        raise PrecisionLoss(f"point too close to the boundary: Im = {float(t.imag)}")
    m = IDENTITY
    for _ in range(4000):
        n = int(mpmath.nint(t.real))
        if n != 0:
            t = t - n
            m = m * t_power(n)
        if abs(t) < 1 - mpf(10) ** (-mp.dps + 4):
            t = -1 / t
            m = m * S
        else:
            return m, t
    raise PrecisionLoss("fundamental-domain reduction did not terminate")


@dataclass
class ModuliTriple:
    """A moduli point as (lambda, 1-lambda, 1/lambda), each held independently."""

    u0: object
    u1: object
    uinf: object

    @property
    def value(self):
        return self.u0

    @staticmethod
    def from_value(m):
        m = mpc(m)
        return ModuliTriple(m, 1 - m, 1 / m)

    def coords(self):
        return (self.u0, self.u1, self.uinf)

    def nearest_puncture(self):
        """(index in {0,1,2}, |coordinate|) of the closest puncture 0/1/inf."""
        mags = [abs(self.u0), abs(self.u1), abs(self.uinf)]
        idx = min(range(3), key=lambda i: mags[i])
        return idx, mags[idx]

    def log_coords(self):
        return tuple(mpmath.log(c) for c in self.coords())


def _theta_sums(q):
    """(theta2 / (2 q^(1/4)), theta3, theta4) as truncated q-series.

    The incremental-power recurrences cost two multiplications per retained
    term, so in the reduced regime |q| <= 0.4 this is far cheaper than three
    general jtheta evaluations.
    """
    eps = mpf(10) ** (-mp.dps - 3)
    q2 = q * q
    s3 = mpc(1)
    s4 = mpc(1)
    t, u, sign = mpc(q), q * q2, -1            # q^(n^2), ratio to the next term
    while abs(t) > eps:
        s3 += 2 * t
        s4 += 2 * sign * t
        t *= u
        u *= q2
        sign = -sign
    s2 = mpc(1)
    t, u = mpc(q2), q2 * q2                    # q^(m(m+1)), m >= 1
    while abs(t) > eps:
        s2 += t
        t *= u
        u *= q2
    return s2, s3, s4


def theta_triple_from_nome(q) -> ModuliTriple:
    if abs(q) < 0.6:
        s2, s3, s4 = _theta_sums(mpc(q))
        u0 = 16 * q * (s2 / s3) ** 4
        return ModuliTriple(u0, (s4 / s3) ** 4, 1 / u0)
    t2 = mpmath.jtheta(2, 0, q)
    t3 = mpmath.jtheta(3, 0, q)
    t4 = mpmath.jtheta(4, 0, q)
    return ModuliTriple((t2 / t3) ** 4, (t4 / t3) ** 4, (t3 / t2) ** 4)


def triple_reduced(tau_red) -> ModuliTriple:
    """The moduli triple of lambda at a (reduced) point; needs Im tau >= ~0.3."""
    q = mpmath.exp(1j * mpmath.pi * mpc(tau_red))
    return theta_triple_from_nome(q)


def lambda_with_derivative(tau_red):
    """(lambda, dlambda/dtau) at a reduced point, via lambda' = i pi lambda (1-lambda) theta3^4."""
    q = mpmath.exp(1j * mpmath.pi * mpc(tau_red))
    if abs(q) < 0.6:
        s2, s3, s4 = _theta_sums(q)
        lam = 16 * q * (s2 / s3) ** 4
        return lam, 1j * mpmath.pi * lam * s4 ** 4
    t2 = mpmath.jtheta(2, 0, q)
    t3 = mpmath.jtheta(3, 0, q)
    t4 = mpmath.jtheta(4, 0, q)
    lam = (t2 / t3) ** 4
    dlam = 1j * mpmath.pi * lam * (t4 / t3) ** 4 * t3 ** 4
    return lam, dlam


# lambda(M tau) as a function of lambda(tau) depends only on M mod 2; the six
# classes act by the anharmonic group.  Each entry gives the new triple as
# signed monomials in the old one, so no catastrophic subtraction ever occurs.
_TWIST = {
    (1, 0, 0, 1): lambda u0, u1, ui: (u0, u1, ui),
    (1, 1, 0, 1): lambda u0, u1, ui: (-u0 / u1, 1 / u1, -u1 * ui),
    (0, 1, 1, 0): lambda u0, u1, ui: (u1, u0, 1 / u1),
    (1, 1, 1, 0): lambda u0, u1, ui: (-u1 * ui, ui, -u0 / u1),
    (0, 1, 1, 1): lambda u0, u1, ui: (1 / u1, -u0 / u1, u1),
    (1, 0, 1, 1): lambda u0, u1, ui: (ui, -u1 * ui, u0),
}


def twist(m: ModularElement, triple: ModuliTriple) -> ModuliTriple:
    """triple of lambda(M tau) from the triple of lambda(tau)."""
    key = (m.a % 2, m.b % 2, m.c % 2, m.d % 2)
    return ModuliTriple(*_TWIST[key](*triple.coords()))


def untwist(m: ModularElement, triple: ModuliTriple) -> ModuliTriple:
    return twist(m.inverse(), triple)


def lambda_triple(tau):
    """(M, tau_red, moduli triple at tau) with tau = M(tau_red)."""
    m, tau_red = reduce_tau(tau)
    return m, tau_red, twist(m, triple_reduced(tau_red))


def lambda_value(tau):
    """The modular lambda function, accurate to working precision."""
    return lambda_triple(tau)[2].u0


def solve_nome(u0_target, iters: int = 8):
    """Solve (theta2/theta3)^4 (q) = u0 for the nome q, |u0| small.

    lambda = 16 q * c(q) with c analytic, c(0)=1; fixed-point iteration on
    q = u0 / (16 c(q)) converges immediately in the cusp regime.
    """
    u0 = mpc(u0_target)
    q = u0 / 16
    for _ in range(iters):
        c = theta_triple_from_nome(q).u0 / (16 * q)
        q_next = u0 / (16 * c)
        if abs(q_next - q) <= mpf(10) ** (-mp.dps + 5) * abs(q_next):
            return q_next
        q = q_next
    return q


@dataclass
class LiftedPoint:
    """A half-plane point stored as tau = M(tau_red) with tau_red near the cusp at infinity.

    The exact matrix M self-identifies deep cusp excursions: when Im tau_red
    exceeds the horoball threshold, the point lies in B_t(M * inf).
    """

    M: ModularElement
    tau_red: object  # mpc, Im >= ~0.8

    @staticmethod
    def from_tau(tau) -> "LiftedPoint":
        m, tau_red = reduce_tau(tau)
        return LiftedPoint(m, mpc(tau_red))

    @property
    def tau(self):
        return apply_mp(self.M, self.tau_red)

    @property
    def penetration(self):
        """Im of the reduced representative; > 1/t means inside B_t(cusp())."""
        return self.tau_red.imag

    def cusp(self) -> Cusp:
        return moebius_apply(self.M, Cusp(1, 0))

    def triple(self) -> ModuliTriple:
        return twist(self.M, triple_reduced(self.tau_red))

    def moved_to(self, target: ModuliTriple, tol=None) -> "LiftedPoint":
        """The lift of a nearby moduli point, continued from this one."""
        return _lift_step(self, target, tol=tol)


def _fold_re(m: ModularElement, tau_red):
    # lambda has period 2; fold Re into (-1, 1] and absorb T^{2k} into M
    k = int(math.floor((float(tau_red.real) + 1) / 2))
    if k:
        tau_red = tau_red - 2 * k
        m = m * t_power(2 * k)
    return m, tau_red


def _lift_step(state: LiftedPoint, target: ModuliTriple, tol=None) -> LiftedPoint:
    if tol is None:
        tol = mpf(10) ** (-mp.dps + 10)
    m = state.M
    tstar = untwist(m, target)
    if abs(tstar.u0) < Q_MODE_THRESHOLD:
        q = solve_nome(tstar.u0)
        tau_red = mpmath.log(q) / (1j * mpmath.pi)
        # the principal log drops whole periods of arg(q); restore them by
        # continuity with the previous reduced coordinate (same M frame),
        # otherwise deep excursions collapse onto the wrong T^{2k} translate
        k = int(mpmath.nint((state.tau_red.real - tau_red.real) / 2))
        tau_red = tau_red + 2 * k
        # the continuity choice of k is only trustworthy when the step is
        # small; larger drifts can alias past a full period, so push the
        # decision back to the caller's bisection
        drift = abs(tau_red.real - state.tau_red.real)
        if drift > mpf(1) / 5:
            raise NoConvergence(0, float(drift))
        m2, tau_red = _fold_re(m, mpc(tau_red))
        return LiftedPoint(m2, tau_red)
    tau = mpc(state.tau_red)
    for attempt in range(60):
        val, deriv = lambda_with_derivative(tau)
        err = val - tstar.u0
        if abs(err) <= tol * max(1, abs(tstar.u0)):
            m, tau = _fold_re(m, tau)
            if tau.imag < 0.5:
                m_extra, tau = reduce_tau(tau)
                m = m * m_extra
            return LiftedPoint(m, tau)
        if deriv == 0:
            break
        step = err / deriv
        if abs(step) > 0.5:
            step = step / abs(step) * 0.5
        tau = tau - step
        if tau.imag < 0.3:
            m_extra, tau = reduce_tau(tau)
            m = m * m_extra
            tstar = untwist(m, target)
    raise NoConvergence(60, float(abs(err)))


def lambda_inverse_local(m_value, tau_guess):
    """Local inverse of lambda near tau_guess; Newton with residual 1e-10."""
    target = ModuliTriple.from_value(m_value)
    state = LiftedPoint.from_tau(tau_guess)
    try:
        lifted = state.moved_to(target)
    except (NoConvergence, PrecisionLoss) as exc:
        raise NoConvergence(60, float("nan")) from exc
    tau = lifted.tau
    resid = abs(lambda_value(tau) - mpc(m_value))
    if resid > 1e-10 * max(1.0, abs(mpc(m_value))):
        raise NoConvergence(60, float(resid))
    # guard the "local" contract: reject solutions wildly far from the guess
    if hyperbolic_distance(tau, tau_guess) > 2.5:
        raise NoConvergence(60, float(resid))
    return tau


def hyperbolic_distance(z, w):
    z, w = mpc(z), mpc(w)
    num = abs(z - w)
    den = abs(z - mpmath.conj(w))
    if num == 0:
        return mpf(0)
    return 2 * mpmath.atanh(num / den)


@dataclass
class SampledPath:
    """An ordered polyline of points, in moduli space or the half-plane."""

    points: list
    closed: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    def refined(self, factor: int = 2) -> "SampledPath":
        pts = []
        for a, b in zip(self.points, self.points[1:]):
            for j in range(factor):
                pts.append(a + (b - a) * mpf(j) / factor)
        pts.append(self.points[-1])
        return SampledPath(pts, closed=self.closed, meta=dict(self.meta))


def _triple_gap(a: ModuliTriple, b: ModuliTriple) -> float:
    """Distance between moduli points in log-triple coordinates (phase aware)."""
    gap = 0.0
    for x, y in zip(a.coords(), b.coords()):
        r = y / x
        gap = max(gap, abs(mpmath.log(abs(r))), abs(mpmath.arg(r)))
    return float(gap)


def lift_path(path: SampledPath, start) -> SampledPath:
    """Lift a moduli-space path through lambda, starting at a given half-plane point.

    Adaptive: segments are bisected (in the value coordinate) until each lift
    step is small; a refinement floor raises LiftBroken.
    """
    state = LiftedPoint.from_tau(start)
    if abs(state.triple().u0 - mpc(path.points[0])) > 1e-8:
        raise LiftBroken("start point does not lie over the path start")
    lifted = [mpc(start)]
    current_value = mpc(path.points[0])
    for target_value in path.points[1:]:
        state, current_value, new_pts = _lift_segment(state, current_value, mpc(target_value))
        lifted.extend(new_pts)
    return SampledPath(lifted, closed=False, meta={"kind": "half-plane"})


def _lift_segment(state, v0, v1, max_depth: int = 24):
    stack = [(v0, v1, 0)]
    out = []
    cur = v0
    while stack:
        a, b, depth = stack.pop()
        trip = ModuliTriple.from_value(b)
        try:
            gap = _triple_gap(state.triple(), trip)
            if gap > 0.45:
                raise NoConvergence(0, gap)
            nxt = state.moved_to(trip)
            if hyperbolic_distance(nxt.tau, state.tau) > 0.6:
                raise NoConvergence(0, 0.0)
        except (NoConvergence, PrecisionLoss):
            if depth >= max_depth:
                raise LiftBroken(f"refinement floor at moduli point {complex(b)}")
            mid = (a + b) / 2
            stack.append((mid, b, depth + 1))
            stack.append((a, mid, depth + 1))
            continue
        state = nxt
        cur = b
        out.append(state.tau)
    return state, cur, out


def deck_transformation(tau_start, tau_end) -> Optional[ModularElement]:
    """The deck element gamma with tau_end = gamma(tau_start), if the reduced points agree."""
    m0, r0 = reduce_tau(tau_start)
    m1, r1 = reduce_tau(tau_end)
    if abs(r0 - r1) > 1e-6 * (1 + abs(r0)):
        return None
    return m1 * m0.inverse()


# ---------------------------------------------------------------------------
# inverse-branch continuation for a rational map


def _mp_poly_eval(coeffs, z):
    acc = mpc(0)
    for c in reversed(coeffs):
        acc = acc * z + (mpc(c) if isinstance(c, complex) else c)
    return acc


def map_preimages_numeric(f, w):
    """All finite numeric preimages of w under f, as a numpy array (doubles)."""
    num = np.array([complex(c) for c in f.num] + [0.0] * (f.degree + 1 - len(f.num)))
    den = np.array([complex(c) for c in f.den] + [0.0] * (f.degree + 1 - len(f.den)))
    poly = num - complex(w) * den
    poly = np.trim_zeros(poly, "b")
    if len(poly) <= 1:
        return np.array([])
    return np.roots(poly[::-1])


def continue_inverse_branch(f, path: SampledPath, w0) -> SampledPath:
    """Track the preimage branch w(s) with f(w(s)) = path(s), starting at w0.

    Predictor-corrector Newton with nearest-root matching; segments refine by
    halving, and exhaustion of refinement raises BranchCollision.
    """
    from .errors import BranchCollision

    w = mpc(w0)
    if abs(_rat_eval(f, w) - mpc(path.points[0])) > 1e-8:
        raise BranchCollision("w0 does not lie over the path start")
    out = [w]
    cur = mpc(path.points[0])
    for target in path.points[1:]:
        w, cur = _continue_segment(f, w, cur, mpc(target))
        out.append(w)
    return SampledPath(out, closed=False, meta={"kind": "preimage-branch"})


def _rat_eval(f, w):
    return _mp_poly_eval(f.num, w) / _mp_poly_eval(f.den, w)


def _newton_preimage(f, w, m, iters: int = 40):
    wk, dk = f.derivative_polys()
    for _ in range(iters):
        n = _mp_poly_eval(f.num, w)
        d = _mp_poly_eval(f.den, w)
        wr = _mp_poly_eval(wk, w)
        if wr == 0:
            raise NoConvergence(iters, float("inf"))
        # f(w) - m = (n - m d)/d ; f' = wr / d^2
        step = (n - m * d) * d / wr
        w = w - step
        if abs(step) <= mpf(10) ** (-mp.dps + 8) * max(1, abs(w)):
            return w
    raise NoConvergence(iters, float(abs(step)))


def _continue_segment(f, w, m0, m1, max_depth: int = 28):
    from .errors import BranchCollision

    stack = [(m0, m1, 0)]
    cur = m0
    while stack:
        a, b, depth = stack.pop()
        try:
            w_new = _newton_preimage(f, w, b)
            jump = abs(w_new - w)
            others = map_preimages_numeric(f, b)
            if len(others):
                dists = np.sort(np.abs(others - complex(w_new)))
                nearest_other = dists[1] if len(dists) > 1 else np.inf
                if jump > 0.45 * nearest_other and depth < max_depth:
                    raise NoConvergence(0, float(jump))
        except NoConvergence:
            if depth >= max_depth:
                raise BranchCollision(
                    f"refinement floor near moduli point {complex(b)}")
            mid = (a + b) / 2
            stack.append((mid, b, depth + 1))
            stack.append((a, mid, depth + 1))
            continue
        w = w_new
        cur = b
    return w, cur


# ---------------------------------------------------------------------------
# torus double cover (doubles; used by the topological oracle)


@dataclass
class TorusCover:
    """The degree-2 branched cover C/(Z + tau0 Z) -> sphere with branch values 0, a, 1, inf.

    cover(z) = (theta2/theta3)^2 (theta1(pi z)/theta4(pi z))^2, an even doubly
    periodic function; a = lambda(tau0) sits at the half-period 1/2.
    """

    tau0: complex
    a: complex
    q: complex

    @property
    def branch_points(self):
        return [0.0, 0.5, self.tau0 / 2, (1 + self.tau0) / 2]


def torus_build(tau0) -> TorusCover:
    tau0 = complex(tau0)
    if tau0.imag < 0.5:
        raise ValueError("basepoint should be reduced (Im tau0 >= 0.5)")
    q = cmath.exp(1j * math.pi * tau0)
    a = complex(lambda_value(mpc(tau0)))
    return TorusCover(tau0=tau0, a=a, q=q)


def _theta_series(T: TorusCover, v, nmax: int = 14):
    """theta1, theta4 and their derivatives at v (complex scalar), nome T.q."""
    q = T.q
    t1 = 0j
    t1p = 0j
    t4 = 1 + 0j
    t4p = 0j
    for n in range(nmax):
        qf = (-1) ** n * q ** (n * n + n + 0.25)
        ang = (2 * n + 1) * v
        t1 += 2 * qf * cmath.sin(ang)
        t1p += 2 * qf * (2 * n + 1) * cmath.cos(ang)
        if n >= 1:
            qg = (-1) ** n * q ** (n * n)
            t4 += 2 * qg * cmath.cos(2 * n * v)
            t4p += -2 * qg * 2 * n * cmath.sin(2 * n * v)
    return t1, t1p, t4, t4p


def _reduce_lattice(T: TorusCover, z):
    tau = T.tau0
    beta = z.imag / tau.imag
    alpha = z.real - beta * tau.real
    m = round(alpha)
    n = round(beta)
    return z - m - n * tau


def _theta_consts(T: TorusCover):
    q = T.q
    t2 = sum(2 * q ** (n * n + n + 0.25) for n in range(14))
    t3 = 1 + sum(2 * q ** (n * n) for n in range(1, 14))
    return (t2 / t3) ** 2


def torus_point_map(T: TorusCover, z):
    """Value of the branched cover at a torus point."""
    zr = _reduce_lattice(T, complex(z))
    v = math.pi * zr
    t1, _, t4, _ = _theta_series(T, v)
    return _theta_consts(T) * (t1 / t4) ** 2


def _cover_with_derivative(T: TorusCover, z):
    zr = _reduce_lattice(T, complex(z))
    v = math.pi * zr
    t1, t1p, t4, t4p = _theta_series(T, v)
    c = _theta_consts(T)
    val = c * (t1 / t4) ** 2
    dval = c * 2 * (t1 / t4) * (t1p * t4 - t1 * t4p) / t4 ** 2 * math.pi
    return val, dval


def torus_start_point(T: TorusCover, w):
    """Some torus preimage of a sphere point w, via the inverse elliptic integral."""
    lam = mpc(T.a)
    s = mpmath.sqrt(mpc(w) / lam)
    u = mpmath.ellipf(mpmath.asin(s), lam)
    K = mpmath.ellipk(lam)
    z = complex(u / (2 * K))
    # polish on the cover itself
    for _ in range(50):
        val, dval = _cover_with_derivative(T, z)
        if abs(dval) < 1e-14:
            break
        step = (val - complex(w)) / dval
        z -= step
        if abs(step) < 1e-12:
            break
    if abs(torus_point_map(T, z) - complex(w)) > 1e-8 * max(1.0, abs(complex(w))):
        raise LiftBroken("could not invert the torus cover at the start point")
    return z


def torus_lift_curve(T: TorusCover, samples) -> Optional[tuple]:
    """Lift a closed sphere curve to the torus; return its homology class.

    Returns (m, n) in Z^2 (sign-normalized) for an even closed lift with net
    displacement m + n*tau0, or None when the curve is peripheral: the lift is
    odd (ends at -z0 mod lattice) or closes with zero displacement.
    """
    pts = [complex(w) for w in samples]
    if abs(pts[0] - pts[-1]) > 1e-9:
        raise ValueError("curve is not closed")
    z = torus_start_point(T, pts[0])
    z0 = z
    for w_prev, w_next in zip(pts, pts[1:]):
        z = _torus_continue(T, z, w_prev, w_next)
    disp = z - z0
    cls = _lattice_coords(T, disp)
    if cls is not None:
        if cls == (0, 0):
            return None
        return _normalize_homology(cls)
    if _lattice_coords(T, z + z0) is not None:
        return None  # odd lift: the deck involution flips the endpoint
    raise LiftBroken("torus lift endpoint is not lattice-related to the start")


def _torus_continue(T, z, w_prev, w_next, depth: int = 0):
    if depth > 24:
        raise LiftBroken("refinement floor in torus continuation")
    target = w_next
    zn = z
    for _ in range(30):
        val, dval = _cover_with_derivative(T, zn)
        if abs(dval) < 1e-13:
            break
        step = (val - target) / dval
        zn -= step
        if abs(step) < 1e-11 * max(1.0, abs(zn)):
            if abs(zn - z) < 0.2:
                return zn
            break
    mid = (w_prev + w_next) / 2
    zm = _torus_continue(T, z, w_prev, mid, depth + 1)
    return _torus_continue(T, zm, mid, w_next, depth + 1)


def _lattice_coords(T: TorusCover, disp, tol: float = 0.02) -> Optional[tuple]:
    tau = T.tau0
    n = disp.imag / tau.imag
    m = disp.real - n * tau.real
    mi, ni = round(m), round(n)
    if abs(m - mi) < tol and abs(n - ni) < tol:
        return (mi, ni)
    return None


def _normalize_homology(cls):
    m, n = cls
    if n < 0 or (n == 0 and m < 0):
        m, n = -m, -n
    return (m, n)
