"""Rational map analysis: portraits, postcritical classification, static reducibility.

Coefficients are kept exact (fractions.Fraction) whenever the input data is
rational, which covers every example map shipped with the package; anything
else falls back to complex floating point with a coincidence tolerance.
The point at infinity is a first-class value (the INF singleton), handled by
conjugating with z -> 1/z where a chart swap is needed.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import NoSuchMoebius, NotEventuallyPeriodic, RootFindingError

COINCIDENCE_TOL = 1e-9
CLUSTER_TOL = 1e-7
MAX_ORBIT_ITER = 64


class _Infinity:
    """The point at infinity on the Riemann sphere."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"


INF = _Infinity()


def is_exact(z) -> bool:
    return isinstance(z, (int, Fraction)) or z is INF


def as_exact(z):
    """Snap a number to an exact rational when it plainly is one."""
    if isinstance(z, (int, Fraction)) or z is INF:
        return z
    if isinstance(z, complex):
        if abs(z.imag) > 1e-12 * max(1.0, abs(z)):
            return z
        z = z.real
    if isinstance(z, float):
        cand = Fraction(z).limit_denominator(10**6)
        if abs(float(cand) - z) < 1e-12 * max(1.0, abs(z)):
            return cand
    return z


def canonical(z):
    """Snap an orbit point to its canonical form: exact rational or INF when plain."""
    if z is INF:
        return INF
    z = as_exact(z)
    if not is_exact(z) and abs(complex(z)) > 1e8:
        return INF
    return z


def pt_eq(z, w, tol: float = COINCIDENCE_TOL) -> bool:
    """Equality of sphere points; exact when both are exact, chordal-ish otherwise."""
    zi, wi = z is INF, w is INF
    if zi or wi:
        if zi and wi:
            return True
        other = w if zi else z
        return abs(complex(other)) > 1.0 / tol
    if is_exact(z) and is_exact(w):
        return Fraction(z) == Fraction(w)
    zc, wc = complex(z), complex(w)
    scale = max(1.0, abs(zc), abs(wc))
    if scale > 1e6:
        if zc == 0 or wc == 0:
            return False
        return abs(1 / zc - 1 / wc) <= tol
    return abs(zc - wc) <= tol * scale


def pt_label(z) -> str:
    """Canonical short label for report/portrait output."""
    if z is INF:
        return "inf"
    if is_exact(z):
        f = Fraction(z)
        return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"
    zc = complex(z)
    if abs(zc.imag) < 1e-12:
        return f"{zc.real:.9g}"
    return f"{zc.real:.9g}{zc.imag:+.9g}j"


# ---------------------------------------------------------------------------
# polynomial helpers (ascending coefficient lists)

def poly_trim(c, tol=0.0):
    c = list(c)
    if tol:
        scale = max((abs(complex(x)) for x in c), default=0.0) or 1.0
        while c and abs(complex(c[-1])) <= tol * scale:
            c.pop()
    else:
        while c and c[-1] == 0:
            c.pop()
    return c


def poly_deg(c) -> int:
    return len(c) - 1


def poly_add(a, b):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


def poly_sub(a, b):
    return poly_add(a, [-x for x in b])


def poly_mul(a, b):
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def poly_scale(a, s):
    return [s * x for x in a]


def poly_deriv(a):
    return [i * a[i] for i in range(1, len(a))]


def poly_eval(a, z):
    acc = 0
    for coeff in reversed(a):
        acc = acc * z + coeff
    return acc


def poly_divmod_exact(a, b):
    """Division with remainder over the rationals."""
    a = [Fraction(x) for x in poly_trim(a)]
    b = [Fraction(x) for x in poly_trim(b)]
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    q = [Fraction(0)] * max(0, len(a) - len(b) + 1)
    r = a[:]
    while len(r) >= len(b) and poly_trim(r):
        r = poly_trim(r)
        if len(r) < len(b):
            break
        k = len(r) - len(b)
        coeff = r[-1] / b[-1]
        q[k] = coeff
        for i in range(len(b)):
            r[k + i] -= coeff * b[i]
        r.pop()
    return poly_trim(q), poly_trim(r)


def poly_gcd_exact(a, b):
    a, b = poly_trim(a), poly_trim(b)
    while b:
        _, r = poly_divmod_exact(a, b)
        a, b = b, r
    if a:
        lead = Fraction(a[-1])
        a = [Fraction(x) / lead for x in a]
    return a


def _all_rational(coeffs) -> bool:
    return all(isinstance(c, (int, Fraction)) for c in coeffs)


def poly_roots(coeffs, cluster_tol: float = CLUSTER_TOL):
    """Roots with multiplicities; exact Fractions where confirmable.

    Pipeline: deflate confirmed rational roots exactly, then companion-matrix
    eigenvalues on the remainder, Newton polishing, and clustering for
    multiplicity detection.
    """
    coeffs = poly_trim(coeffs, tol=1e-300 if not _all_rational(coeffs) else 0.0)
    if len(coeffs) <= 1:
        return []
    exact = _all_rational(coeffs)
    found = []
    work = [Fraction(c) for c in coeffs] if exact else list(coeffs)

    if exact:
        while len(work) > 1:
            root = _find_rational_root(work)
            if root is None:
                break
            mult = 0
            while True:
                q, r = poly_divmod_exact(work, [-root, 1])
                if r:
                    break
                work, mult = q, mult + 1
            found.append((root, mult))
            if len(work) <= 1:
                break

    if len(work) > 1:
        fl = np.array([complex(c) for c in work], dtype=complex)
        fl = fl / np.max(np.abs(fl))
        raw = np.roots(fl[::-1])
        raw = [_polish_root(work, complex(z)) for z in raw]
        for pt, mult in _cluster(raw, cluster_tol):
            if mult > 1:
                pt = _polish_multiple_root(work, pt, mult)
            snapped = as_exact(pt)
            if exact and isinstance(snapped, Fraction):
                if poly_eval([Fraction(c) for c in work], snapped) == 0:
                    pt = snapped
            found.append((pt, mult))
    return found


def _find_rational_root(coeffs):
    # hunt on the square-free part, where every root is simple and the
    # companion-matrix eigenvalues are accurate enough to snap
    g = poly_gcd_exact(coeffs, poly_deriv(coeffs))
    sf = coeffs
    if poly_deg(g) >= 1:
        sf, _ = poly_divmod_exact(coeffs, g)
    fl = np.array([complex(c) for c in sf], dtype=complex)
    scale = np.max(np.abs(fl))
    if scale == 0:
        return None
    raw = np.roots((fl / scale)[::-1])
    for z in raw:
        z = _polish_root(sf, complex(z))
        if abs(z.imag) > 1e-6 * max(1.0, abs(z)):
            continue
        cand = Fraction(z.real).limit_denominator(10**6)
        if poly_eval(coeffs, cand) == 0:
            return cand
    return None


def _polish_root(coeffs, z, iters=40):
    d = poly_deriv(coeffs)
    for _ in range(iters):
        fz = poly_eval(coeffs, z)
        dz = poly_eval(d, z)
        if dz == 0:
            break
        step = complex(fz) / complex(dz)
        z = z - step
        if abs(step) < 1e-15 * max(1.0, abs(z)):
            break
    return z


def _polish_multiple_root(coeffs, z, mult):
    # a root of multiplicity m is a simple root of the (m-1)-th derivative
    d = coeffs
    for _ in range(mult - 1):
        d = poly_deriv(d)
    return _polish_root(d, z)


def _cluster(points, tol):
    clusters = []
    for z in points:
        for cl in clusters:
            ref = cl[0]
            scale = max(1.0, abs(ref))
            if abs(z - ref) <= tol * scale:
                cl.append(z)
                break
        else:
            clusters.append([z])
    return [(sum(cl) / len(cl), len(cl)) for cl in clusters]


# ---------------------------------------------------------------------------


@dataclass
class RationalMap:
    """A rational map num/den with ascending coefficient lists."""

    num: list
    den: list

    def __post_init__(self):
        self.num = poly_trim(list(self.num))
        self.den = poly_trim(list(self.den))
        if not self.num and not self.den:
            raise ValueError("zero map")
        if not self.den:
            raise ValueError("denominator is identically zero")
        if self.exact:
            self.num = [Fraction(c) for c in self.num]
            self.den = [Fraction(c) for c in self.den]
            g = poly_gcd_exact(self.num, self.den)
            if poly_deg(g) > 0:
                self.num, _ = poly_divmod_exact(self.num, g)
                self.den, _ = poly_divmod_exact(self.den, g)

    @property
    def exact(self) -> bool:
        return _all_rational(self.num) and _all_rational(self.den)

    @property
    def degree(self) -> int:
        return max(poly_deg(self.num), poly_deg(self.den))

    def __call__(self, z):
        if z is INF:
            dn, dd = poly_deg(self.num), poly_deg(self.den)
            if dn > dd:
                return INF
            if dn < dd:
                return Fraction(0) if self.exact else 0.0
            val = self.num[-1] / self.den[-1] if self.exact else complex(self.num[-1]) / complex(self.den[-1])
            return as_exact(val) if self.exact else val
        if self.exact and isinstance(z, (int, Fraction)):
            n = poly_eval(self.num, Fraction(z))
            d = poly_eval(self.den, Fraction(z))
            if d == 0:
                if n == 0:
                    raise ZeroDivisionError("unreduced map")
                return INF
            return n / d
        zc = complex(z)
        n = complex(poly_eval([complex(c) for c in self.num], zc))
        d = complex(poly_eval([complex(c) for c in self.den], zc))
        if d == 0:
            return INF
        return n / d

    def derivative_polys(self):
        """Numerator and denominator of f' = (n'd - nd')/d^2."""
        w = poly_sub(poly_mul(poly_deriv(self.num), self.den),
                     poly_mul(self.num, poly_deriv(self.den)))
        return poly_trim(w), poly_mul(self.den, self.den)

    def wronskian(self):
        w, _ = self.derivative_polys()
        return w

    def inverted_chart(self) -> "RationalMap":
        """The conjugate map w -> 1/f(1/w)."""
        L = self.degree
        rev_n = _reversed_padded(self.num, L)
        rev_d = _reversed_padded(self.den, L)
        # strip common factors of w
        while rev_n and rev_d and rev_n[0] == 0 and rev_d[0] == 0:
            rev_n.pop(0)
            rev_d.pop(0)
        return RationalMap(rev_d, rev_n)

    def critical_points(self):
        """List of (point, local degree) with local degrees summing per Riemann-Hurwitz."""
        crits = []
        for root, mult in poly_roots(self.wronskian()):
            crits.append((root, mult + 1))
        inf_extra = self._local_degree_at_infinity()
        if inf_extra > 1:
            crits.append((INF, inf_extra))
        total = sum(k - 1 for _, k in crits)
        if total != 2 * self.degree - 2:
            raise RootFindingError(
                f"Riemann-Hurwitz defect: critical weight {total} != {2 * self.degree - 2}",
                residuals=crits,
            )
        return crits

    def _local_degree_at_infinity(self) -> int:
        conj = self.inverted_chart()
        w = conj.wronskian()
        if not w:
            return 1
        scale = max(abs(complex(c)) for c in w) or 1.0
        mult = 0
        for c in w:
            if abs(complex(c)) > 1e-9 * scale:
                break
            mult += 1
        return mult + 1

    def local_degree(self, z) -> int:
        for c, k in self.critical_points():
            if pt_eq(c, z):
                return k
        return 1

    def preimages(self, w):
        """All solutions of f(z) = w as (point, multiplicity); multiplicities sum to deg."""
        d = self.degree
        if w is INF:
            poly = list(self.den)
        else:
            if self.exact and isinstance(w, (int, Fraction)):
                poly = poly_sub(self.num, poly_scale(self.den, Fraction(w)))
            else:
                poly = poly_sub([complex(c) for c in self.num],
                                poly_scale([complex(c) for c in self.den], complex(w)))
        poly = poly_trim(poly, tol=0.0 if _all_rational(poly) else 1e-12)
        out = poly_roots(poly)
        drop = d - poly_deg(poly)
        if drop > 0:
            out.append((INF, drop))
        return out

    def fixed_points(self):
        """Solutions of f(z) = z, including infinity when deg num > deg den."""
        poly = poly_sub(self.num, poly_mul([0, 1], self.den))
        pts = [pt for pt, _ in poly_roots(poly)]
        if poly_deg(self.num) > poly_deg(self.den):
            pts.append(INF)
        return pts

    def forward_orbit(self, z, max_iter: int = MAX_ORBIT_ITER, tol: float = COINCIDENCE_TOL):
        """Orbit of z until eventual periodicity: (orbit, preperiod k, period m)."""
        orbit = [canonical(z)]
        cur = orbit[0]
        for _ in range(max_iter):
            cur = canonical(self(cur))
            if (isinstance(cur, Fraction)
                    and cur.numerator.bit_length() + cur.denominator.bit_length() > 4096):
                # exact iterates of a non-preperiodic point grow doubly
                # exponentially in bit size; bail out before they stall
                raise NotEventuallyPeriodic(z, max_iter)
            for k, prev in enumerate(orbit):
                if pt_eq(prev, cur, tol):
                    return orbit, k, len(orbit) - k
            orbit.append(cur)
        raise NotEventuallyPeriodic(z, max_iter)

    def postcritical_set(self):
        """(points of P_f, certificate) where certificate maps critical values to (k, m)."""
        points = []
        certificate = {}
        for c, _ in self.critical_points():
            v = canonical(self(c))
            orbit, k, m = self.forward_orbit(v)
            certificate[pt_label(v)] = (k, m)
            for pt in orbit:
                if not any(pt_eq(pt, existing) for existing in points):
                    points.append(pt)
        return points, certificate

    def classify_fatou_julia(self) -> "PostcriticalClassification":
        points, _ = self.postcritical_set()
        crits = [c for c, _ in self.critical_points()]
        labels = {}
        cycles = {}
        for p in points:
            orbit, k, m = self.forward_orbit(p)
            cycle = orbit[k:k + m]
            fatou = any(any(pt_eq(c, z) for c in crits) for z in cycle)
            labels[pt_label(p)] = "Fatou" if fatou else "Julia"
            cycles[pt_label(p)] = (k, m)
        return PostcriticalClassification(points=points, labels=labels, cycle_data=cycles)


def _reversed_padded(coeffs, L):
    out = list(coeffs) + [0] * (L + 1 - len(coeffs))
    return poly_trim(out[::-1])


@dataclass
class MarkedMap:
    """A rational map together with 4 marked points containing its postcritical set."""

    f: RationalMap
    A: list
    name: str = ""
    postcritical: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.A) != 4:
            raise ValueError("need exactly 4 marked points")
        _check_marked(self.f, self.A)
        if not self.postcritical:
            pts, _ = self.f.postcritical_set()
            self.postcritical = pts
        for p in self.postcritical:
            if not any(pt_eq(p, a) for a in self.A):
                raise ValueError(f"postcritical point {pt_label(p)} is not marked")

    @property
    def free_point(self):
        """The marked point outside {0, 1, inf} when A is normalized."""
        std = (Fraction(0), Fraction(1), INF)
        extra = [a for a in self.A if not any(pt_eq(a, s) for s in std)]
        if len(extra) != 1:
            raise ValueError("marked set is not normalized to {0, 1, inf, a}")
        return extra[0]


def _parse_coeff(value):
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (int, float)):
        return as_exact(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(value[0], value[1])
    raise ValueError(f"cannot parse coefficient {value!r}")


def _parse_point(value):
    if isinstance(value, str) and value.strip() in ("inf", "oo", "infinity"):
        return INF
    return _parse_coeff(value)


def map_from_spec(spec: dict) -> MarkedMap:
    """Build a MarkedMap from a JSON-style dict with ascending coefficient lists.

    Coefficients and points are exact-rational strings like "3/16", plain
    numbers, or [re, im] pairs; "inf" marks the point at infinity.
    """
    f = RationalMap([_parse_coeff(c) for c in spec["num"]],
                    [_parse_coeff(c) for c in spec["den"]])
    marked = [_parse_point(p) for p in spec["marked"]]
    return MarkedMap(f, marked, name=spec.get("name", ""))


@dataclass
class PostcriticalClassification:
    points: list
    labels: dict          # label(point) -> "Fatou" | "Julia"
    cycle_data: dict      # label(point) -> (preperiod, period)

    def fatou_points(self):
        return [p for p in self.points if self.labels[pt_label(p)] == "Fatou"]

    def julia_points(self):
        return [p for p in self.points if self.labels[pt_label(p)] == "Julia"]


@dataclass
class Portrait:
    """Directed weighted graph on sphere points (or symbolic labels)."""

    nodes: list
    edges: list           # (source label, target label, weight)
    bipartite: bool = False

    def edge_set(self):
        return frozenset(self.edges)

    def to_dot(self) -> str:
        kind = "static" if self.bipartite else "dynamical"
        lines = [f"digraph {kind}_portrait {{"]
        for src, dst, w in sorted(self.edges):
            suffix = f' [label="{w}:1"]' if w > 1 else ""
            if self.bipartite:
                lines.append(f'  "{src}" -> "{dst}_" {suffix};'.replace(" ;", ";"))
            else:
                lines.append(f'  "{src}" -> "{dst}"{suffix};')
        lines.append("}")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "bipartite": self.bipartite,
            "nodes": sorted(str(n) for n in self.nodes),
            "edges": sorted([str(s), str(d), w] for s, d, w in self.edges),
        }


def _check_marked(f: RationalMap, A):
    if len(A) != len({pt_label(a) for a in A}):
        raise ValueError("marked points must be distinct")
    for a in A:
        fa = f(a)
        if not any(pt_eq(fa, b) for b in A):
            raise ValueError(f"marked set not forward-invariant: f({pt_label(a)}) = {pt_label(fa)}")


def _snap_to_nodes(z, nodes):
    for n in nodes:
        if pt_eq(z, n):
            return n
    return z


def dynamical_portrait(f: RationalMap, A) -> Portrait:
    """Vertices C_f and A, with an edge z -> f(z) weighted by the local degree."""
    _check_marked(f, A)
    crits = f.critical_points()
    nodes = list(A)
    for c, _ in crits:
        if not any(pt_eq(c, n) for n in nodes):
            nodes.append(c)
    degs = {pt_label(_snap_to_nodes(c, nodes)): k for c, k in crits}
    edges = []
    for z in nodes:
        w = _snap_to_nodes(f(z), nodes)
        edges.append((pt_label(z), pt_label(w), degs.get(pt_label(z), 1)))
    return Portrait(nodes=[pt_label(n) for n in nodes], edges=edges)


def static_portrait(f: RationalMap, A) -> Portrait:
    """Bipartite version: sources C_f and A, targets a disjoint copy of A."""
    dyn = dynamical_portrait(f, A)
    targets = sorted({pt_label(a) for a in A})
    return Portrait(nodes=dyn.nodes + [t + "'" for t in targets],
                    edges=[(s, d + "'", w) for s, d, w in dyn.edges],
                    bipartite=True)


def static_components(portrait: Portrait):
    """Connected components of a bipartite static portrait, as edge lists."""
    parent = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        parent[find(x)] = find(y)

    for s, d, _ in portrait.edges:
        union(("s", s), ("t", d))
    groups = {}
    for edge in portrait.edges:
        key = find(("s", edge[0]))
        groups.setdefault(key, []).append(edge)
    return list(groups.values())


def is_statically_reducible(f: RationalMap, A):
    """The statically trivial point a in A, if one exists, else None.

    a is statically trivial when f^{-1}(f(a)) contains no critical point and
    meets A only in a.
    """
    if len(A) != 4:
        raise ValueError("static reducibility is defined for 4 marked points")
    _check_marked(f, A)
    for a in A:
        pre = f.preimages(f(a))
        if any(mult > 1 for _, mult in pre):
            continue
        hits = [p for p, _ in pre if any(pt_eq(p, b) for b in A)]
        if len(hits) == 1 and pt_eq(hits[0], a):
            return a
    return None


def _mat_to01inf(z1, z2, z3):
    """Matrix of the Moebius map sending (z1, z2, z3) to (0, 1, inf)."""
    if z1 is INF:
        return [[0, z2 - z3], [-1, z3]]
    if z2 is INF:
        return [[1, -z1], [1, -z3]]
    if z3 is INF:
        return [[1, -z1], [0, z2 - z1]]
    return [[z2 - z3, -z1 * (z2 - z3)], [z2 - z1, -z3 * (z2 - z1)]]


def _mat_mul(m, n):
    return [[m[0][0] * n[0][0] + m[0][1] * n[1][0], m[0][0] * n[0][1] + m[0][1] * n[1][1]],
            [m[1][0] * n[0][0] + m[1][1] * n[1][0], m[1][0] * n[0][1] + m[1][1] * n[1][1]]]


def _mat_inv(m):
    return [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]


def _mat_to_map(m) -> RationalMap:
    return RationalMap([m[0][1], m[0][0]], [m[1][1], m[1][0]])


def moebius_through(sources, targets) -> RationalMap:
    """The unique Moebius map with sources[i] -> targets[i] for three points."""
    m = _mat_mul(_mat_inv(_mat_to01inf(*targets)), _mat_to01inf(*sources))
    return _mat_to_map(m)


def moebius_transposition(A, a, b) -> RationalMap:
    """Degree-1 map permuting the 4-point set A by the double transposition (a b)(c d)."""
    if pt_eq(a, b):
        raise NoSuchMoebius("transposition requires two distinct points")
    rest = [x for x in A if not pt_eq(x, a) and not pt_eq(x, b)]
    if len(rest) != 2:
        raise NoSuchMoebius("a and b must be distinct members of A")
    c, d = rest
    m = moebius_through((a, b, c), (b, a, d))
    if not pt_eq(m(d), c):
        raise NoSuchMoebius("the double transposition is not realizable on these points")
    return m


def identity_map() -> RationalMap:
    return RationalMap([0, 1], [1])


def compose(g: RationalMap, h: RationalMap) -> RationalMap:
    """The composition g(h(z)), with exact common-factor cancellation."""
    L = g.degree
    hn, hd = h.num, h.den
    gn = list(g.num) + [0] * (L + 1 - len(g.num))
    gd = list(g.den) + [0] * (L + 1 - len(g.den))
    num, den = [], []
    hn_pow, hd_pow = [1], [1]
    powers = []
    for i in range(L + 1):
        powers.append((hn_pow, hd_pow))
        hn_pow = poly_mul(hn_pow, hn)
        hd_pow = poly_mul(hd_pow, hd)
    for i in range(L + 1):
        ni, _ = powers[i]
        _, dLi = powers[L - i]
        term = poly_mul(ni, dLi)
        num = poly_add(num, poly_scale(term, gn[i]))
        den = poly_add(den, poly_scale(term, gd[i]))
    return RationalMap(num, den)


def lattes(k=None, k_squared=None) -> RationalMap:
    """The flexible Lattes family 4z(1-z)(1-k^2 z) / (1-k^2 z^2)^2."""
    if k_squared is None:
        if k is None:
            raise ValueError("provide k or k_squared")
        k_squared = as_exact(k * k) if not isinstance(k, (int, Fraction)) else Fraction(k) ** 2
    k2 = as_exact(k_squared)
    if k2 == 0 or k2 == 1:
        raise ValueError("degenerate Lattes parameter")
    num = [0, 4, -4 * (1 + k2), 4 * k2]
    den = [1, 0, -2 * k2, 0, k2 * k2]
    return RationalMap(num, den)


def decompose_statically_reducible(f: RationalMap, A):
    """Write f = M o g with M a Moebius involution preserving A and g(a) = a.

    Requires a statically trivial point; returns (M, g).
    """
    a = is_statically_reducible(f, A)
    if a is None:
        raise ValueError("map is not statically reducible on this marking")
    fa = f(a)
    if pt_eq(fa, a):
        return identity_map(), f
    m = moebius_transposition(A, a, fa)
    g = compose(m, f)
    if g.exact:
        # normalize so the trailing denominator coefficient is 1, giving a
        # canonical representative with comparable coefficients
        lead = next(c for c in g.den if c != 0)
        g = RationalMap([c / lead for c in g.num], [c / lead for c in g.den])
    return m, g


def signature_2222(f: RationalMap) -> bool:
    """Whether f has the flexible-Lattes branch structure over its postcritical set.

    Checks that every preimage of a postcritical point that is not itself
    postcritical is critical of local degree exactly 2, and every postcritical
    one is unramified.
    """
    points, _ = f.postcritical_set()
    if len(points) != 4:
        return False
    for p in points:
        for z, mult in f.preimages(p):
            in_p = any(pt_eq(z, q) for q in points)
            if in_p and mult != 1:
                return False
            if not in_p and mult != 2:
                return False
    return True
