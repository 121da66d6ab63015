"""Rational map layer: portraits, classification, composition constructions."""

import math
from fractions import Fraction

import pytest

from curvepull.errors import NoSuchMoebius, NotEventuallyPeriodic
from curvepull.ratmap import (
    INF, MarkedMap, RationalMap,
    compose, decompose_statically_reducible, dynamical_portrait, identity_map,
    is_statically_reducible, lattes, map_from_spec, moebius_transposition,
    pt_eq, pt_label, signature_2222, static_components, static_portrait,
)

F = Fraction

QUADRATIC = RationalMap([1, -4, 4], [1])                     # (1-2z)^2
CUBIC = RationalMap([1, -3, 3, -1], [1, 6, 9])               # -(z-1)^3/(3z+1)^2
TWISTED = RationalMap([3, -16, 16], [0, -16, 16])            # M_{1/4,0} o quadratic
SQUARE = RationalMap([0, 0, 1], [1])                         # z^2


def crit_set(f):
    return {(pt_label(c), k) for c, k in f.critical_points()}


def test_degree_and_evaluation():
    assert QUADRATIC.degree == 2
    assert CUBIC.degree == 3
    assert TWISTED.degree == 2
    assert QUADRATIC(F(1, 2)) == 0
    assert QUADRATIC(0) == 1
    assert QUADRATIC(INF) is INF
    assert TWISTED(0) is INF          # pole at 0
    assert TWISTED(INF) == 1          # equal degrees, leading ratio 1
    assert TWISTED(1) is INF
    assert TWISTED(F(1, 4)) == 0
    assert TWISTED(F(1, 2)) == F(1, 4)


def test_common_factor_cancellation():
    f = RationalMap([0, 1, 1], [0, 1])  # z(z+1)/z -> z+1
    assert f.degree == 1
    assert f(5) == 6


def test_critical_points_quadratic():
    assert crit_set(QUADRATIC) == {("1/2", 2), ("inf", 2)}


def test_critical_points_cubic():
    assert crit_set(CUBIC) == {("-3", 2), ("1", 3), ("-1/3", 2)}


def test_critical_points_square():
    assert crit_set(SQUARE) == {("0", 2), ("inf", 2)}


def test_chart_independence_of_critical_points():
    for f in (QUADRATIC, CUBIC, TWISTED):
        direct = crit_set(f)
        conj = f.inverted_chart()
        flipped = set()
        for c, k in conj.critical_points():
            if c is INF:
                flipped.add(("0", k))
            elif pt_eq(c, 0):
                flipped.add(("inf", k))
            else:
                inv = 1 / Fraction(c) if isinstance(c, (int, Fraction)) else 1 / c
                flipped.add((pt_label(inv), k))
        assert flipped == direct


def test_forward_orbit_quadratic():
    orbit, k, m = QUADRATIC.forward_orbit(F(1, 2))
    assert orbit == [F(1, 2), F(0), F(1)]
    assert (k, m) == (2, 1)


def test_forward_orbit_cubic_two_cycle():
    orbit, k, m = CUBIC.forward_orbit(F(1))
    assert (k, m) == (0, 2)
    assert orbit == [F(1), F(0)]


def test_forward_orbit_fixed_point():
    _, k, m = QUADRATIC.forward_orbit(F(1, 4))
    assert (k, m) == (0, 1)


def test_forward_orbit_failure():
    # z -> z + 1 never becomes periodic over the rationals
    shift = RationalMap([1, 1], [1])
    with pytest.raises(NotEventuallyPeriodic):
        shift.forward_orbit(F(0), max_iter=10)


def test_postcritical_sets():
    for f in (QUADRATIC, CUBIC):
        pts, cert = f.postcritical_set()
        assert {pt_label(p) for p in pts} == {"0", "1", "inf"}
        assert cert
    pts, _ = lattes(k_squared=F(5)).postcritical_set()
    assert {pt_label(p) for p in pts} == {"0", "1", "inf", "1/5"}


def test_dynamical_portrait_twisted():
    A = [F(0), F(1, 4), F(1), INF]
    portrait = dynamical_portrait(TWISTED, A)
    assert set(portrait.edges) == {
        ("1/2", "1/4", 2),
        ("1/4", "0", 1),
        ("0", "inf", 1),
        ("inf", "1", 2),
        ("1", "inf", 1),
    }


def test_dynamical_portrait_quadratic():
    portrait = dynamical_portrait(QUADRATIC, [F(0), F(1), INF, F(1, 4)])
    assert set(portrait.edges) == {
        ("1/2", "0", 2),
        ("0", "1", 1),
        ("1", "1", 1),
        ("inf", "inf", 2),
        ("1/4", "1/4", 1),
    }


def test_portrait_rejects_non_invariant_marking():
    with pytest.raises(ValueError):
        dynamical_portrait(QUADRATIC, [F(0), F(1), INF, F(1, 3)])


def test_static_portrait_isolated_edge():
    A = [F(0), F(1, 4), F(1), INF]
    portrait = static_portrait(TWISTED, A)
    assert portrait.bipartite
    comps = static_components(portrait)
    singles = [c for c in comps if c == [("1/4", "0'", 1)]]
    assert len(singles) == 1


def test_portrait_dot_output():
    portrait = dynamical_portrait(QUADRATIC, [F(0), F(1), INF, F(1, 4)])
    dot = portrait.to_dot()
    assert dot.startswith("digraph")
    assert '"1/2" -> "0" [label="2:1"]' in dot


def test_fatou_julia_quadratic():
    cls = QUADRATIC.classify_fatou_julia()
    assert {pt_label(p) for p in cls.fatou_points()} == {"inf"}
    assert {pt_label(p) for p in cls.julia_points()} == {"0", "1"}


def test_fatou_julia_cubic():
    cls = CUBIC.classify_fatou_julia()
    assert {pt_label(p) for p in cls.fatou_points()} == {"0", "1"}
    assert {pt_label(p) for p in cls.julia_points()} == {"inf"}


def test_fatou_julia_square():
    cls = SQUARE.classify_fatou_julia()
    assert cls.julia_points() == []


def test_labels_constant_along_orbits():
    for f in (QUADRATIC, CUBIC, TWISTED, lattes(k_squared=F(5))):
        cls = f.classify_fatou_julia()
        for p in cls.points:
            assert cls.labels[pt_label(p)] == cls.labels[pt_label(f(p))]


def test_fixed_points_cubic():
    pts = CUBIC.fixed_points()
    labels = {pt_label(p) for p in pts}
    assert "1/5" in labels
    assert "inf" in labels
    complex_pts = [complex(p) for p in pts if not (p is INF or isinstance(p, (int, Fraction)))]
    expected = complex(-0.25, math.sqrt(7) / 4)
    assert any(abs(z - expected) < 1e-9 for z in complex_pts)
    assert any(abs(z - expected.conjugate()) < 1e-9 for z in complex_pts)


def test_fixed_points_quadratic_and_square():
    labels = {pt_label(p) for p in QUADRATIC.fixed_points()}
    assert {"1/4", "1"} <= labels
    assert {pt_label(p) for p in SQUARE.fixed_points()} == {"0", "1", "inf"}


def test_static_reducibility():
    A = [F(0), F(1, 4), F(1), INF]
    assert is_statically_reducible(TWISTED, A) == F(1, 4)
    assert is_statically_reducible(QUADRATIC, A) == F(1, 4)
    assert is_statically_reducible(SQUARE, [F(0), F(1), INF, F(-1)]) is None


def test_moebius_transposition_formula():
    A = [F(0), F(1), INF, F(1, 4)]
    m = moebius_transposition(A, F(1, 4), F(0))
    # (z - 1/4)/(z - 1)
    assert m(F(1, 4)) == 0
    assert m(F(0)) == F(1, 4)
    assert m(F(1)) is INF
    assert m(INF) == 1
    for a in A:
        assert pt_eq(m(m(a)), a)


def test_moebius_transposition_rejects_equal_points():
    A = [F(0), F(1), INF, F(1, 4)]
    with pytest.raises(NoSuchMoebius):
        moebius_transposition(A, F(1, 4), F(1, 4))


def test_compose_recovers_twisted_map():
    A = [F(0), F(1), INF, F(1, 4)]
    m = moebius_transposition(A, F(1, 4), F(0))
    f = compose(m, QUADRATIC)
    # normalized coefficients agree with the twisted map
    scale = f.num[-1] / TWISTED.num[-1]
    assert [c / scale for c in f.num] == TWISTED.num
    assert [c / scale for c in f.den] == TWISTED.den


def test_compose_with_identity():
    f = compose(TWISTED, identity_map())
    scale = f.num[-1] / TWISTED.num[-1]
    assert [c / scale for c in f.num] == TWISTED.num
    assert [c / scale for c in f.den] == TWISTED.den


def test_lattes_family():
    h = lattes(k_squared=F(5))
    assert h.degree == 4
    assert h(F(1)) == 0
    assert h(INF) == 0
    assert h(F(1, 5)) == 0
    assert h(F(0)) == 0
    assert signature_2222(h)
    assert not signature_2222(SQUARE)
    with pytest.raises(ValueError):
        lattes(k_squared=F(1))
    # float parameter snaps to the exact square
    h2 = lattes(math.sqrt(5))
    assert h2.num == h.num and h2.den == h.den


def test_decompose_statically_reducible():
    A = [F(0), F(1, 4), F(1), INF]
    m, g = decompose_statically_reducible(TWISTED, A)
    scale = g.num[-1] / QUADRATIC.num[-1]
    assert [c / scale for c in g.num] == QUADRATIC.num
    assert [c / scale for c in g.den] == QUADRATIC.den
    assert g(F(1, 4)) == F(1, 4)
    # recomposition at sample points
    back = compose(m, g)
    for k in range(2, 22):
        z = F(k, 7)
        assert pt_eq(back(z), TWISTED(z), 1e-10)


def test_decompose_already_fixing():
    A = [F(0), F(1), INF, F(1, 4)]
    m, g = decompose_statically_reducible(QUADRATIC, A)
    assert m.degree == 1 and m(F(5)) == 5
    assert g.num == QUADRATIC.num


def test_marked_map_and_spec_parsing():
    spec = {
        "name": "twisted",
        "num": ["3", "-16", "16"],
        "den": ["0", "-16", "16"],
        "marked": ["0", "1/4", "1", "inf"],
    }
    mm = map_from_spec(spec)
    assert mm.f.degree == 2
    assert mm.free_point == F(1, 4)
    assert {pt_label(p) for p in mm.postcritical} == {"0", "1/4", "1", "inf"}
    with pytest.raises(ValueError):
        MarkedMap(QUADRATIC, [F(0), F(1), INF, F(1, 3)])
