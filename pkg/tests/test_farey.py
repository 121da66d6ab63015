"""Exact Farey / horoball layer."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from curvepull.farey import (
    IDENTITY, S, T,
    Cusp, Horoball, ModularElement, PunctureLabel,
    cusp_identify, cusp_normalize, gamma2_class, horoball_contains,
    horoball_map, horoballs_disjoint, horoballs_meeting_rectangle,
    leash_bound, moebius_apply,
)

F = Fraction


def test_cusp_normalizes_to_lowest_terms():
    assert Cusp(2, 4) == Cusp(1, 2)
    assert Cusp(-3, -6) == Cusp(1, 2)
    assert Cusp(3, -6) == Cusp(-1, 2)
    assert Cusp(5, 0) == Cusp(1, 0)
    assert Cusp(-2, 0) == Cusp(1, 0)


def test_cusp_parse_roundtrip():
    for text, cusp in [("1/2", Cusp(1, 2)), ("inf", Cusp(1, 0)),
                       ("-3/7", Cusp(-3, 7)), ("0", Cusp(0, 1))]:
        assert Cusp.parse(text) == cusp
        assert Cusp.parse(str(cusp)) == cusp


def test_modular_element_sign_normalization():
    assert ModularElement(-1, 0, 0, -1) == IDENTITY
    m = ModularElement(0, 1, -1, 0)
    assert m == S


def test_group_action_on_cusps():
    assert moebius_apply(S, Cusp(0, 1)) == Cusp(1, 0)
    assert moebius_apply(S, Cusp(1, 0)) == Cusp(0, 1)
    assert moebius_apply(T, Cusp(1, 0)) == Cusp(1, 0)
    m = ModularElement(1, 0, 2, 1)
    assert moebius_apply(m, Cusp(1, 1)) == Cusp(1, 3)


def test_apply_tau_exact():
    # S sends i to i
    x, y = S.apply_tau(F(0), F(1))
    assert (x, y) == (F(0), F(1))
    # T is horizontal translation
    x, y = T.apply_tau(F(1, 3), F(5, 7))
    assert (x, y) == (F(4, 3), F(5, 7))
    # S sends 1 + i to (-1 + i)/2
    x, y = S.apply_tau(F(1), F(1))
    assert (x, y) == (F(-1, 2), F(1, 2))


@given(st.integers(-9, 9), st.integers(-9, 9), st.integers(-9, 9), st.integers(-9, 9),
       st.fractions(min_value=-5, max_value=5), st.fractions(min_value=F(1, 100), max_value=5))
def test_apply_tau_is_a_group_action(a, b, c, d, x, y):
    if a * d - b * c != 1:
        return
    m = ModularElement(a, b, c, d)
    x1, y1 = m.apply_tau(x, y)
    x2, y2 = m.inverse().apply_tau(x1, y1)
    assert (x2, y2) == (x, y)


def test_composition_matches_pointwise():
    rng = random.Random(7)
    words = [IDENTITY, S, T, S * T, T * S * T, ModularElement(2, 1, 1, 1)]
    for _ in range(50):
        m = rng.choice(words)
        n = rng.choice(words)
        x = F(rng.randint(-20, 20), rng.randint(1, 20))
        y = F(rng.randint(1, 20), rng.randint(1, 20))
        left = (m * n).apply_tau(x, y)
        right = m.apply_tau(*n.apply_tau(x, y))
        assert left == right


def test_horoball_membership():
    b0 = Horoball(Cusp(0, 1), F(1, 2))
    assert horoball_contains(b0, F(0), F(1, 10))
    assert not horoball_contains(b0, F(0), F(1))
    # B_t(inf) is Im > 1/t
    binf = Horoball(Cusp(1, 0), F(1, 2))
    assert horoball_contains(binf, F(3), F(5))
    assert not horoball_contains(binf, F(3), F(2))
    # boundary is open
    assert not horoball_contains(b0, F(0), F(1, 2))


def test_horoball_euclidean_size():
    # B_t(p/q) is a disc of euclidean diameter t/q^2 resting on p/q
    b = Horoball(Cusp(1, 3), F(1, 2))
    top = F(1, 2) / 9  # t / q^2
    assert horoball_contains(b, F(1, 3), top / 2)
    assert not horoball_contains(b, F(1, 3), top)


@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(-5, 5), st.integers(-5, 5),
       st.integers(-7, 7), st.integers(0, 7))
def test_horoball_equivariance(a, b, c, d, p, q):
    if a * d - b * c != 1 or (p, q) == (0, 0):
        return
    m = ModularElement(a, b, c, d)
    ball = Horoball(Cusp(p if q else 1, q), F(1, 2))
    moved = horoball_map(m, ball)
    assert moved.base == moebius_apply(m, ball.base)
    assert moved.t == ball.t
    # a point inside maps to a point inside
    x0 = ball.base.value() if ball.base.q else F(0)
    y0 = (ball.t / ball.base.q**2) / 2 if ball.base.q else 2 / ball.t
    assert horoball_contains(ball, x0, y0)
    assert horoball_contains(moved, *m.apply_tau(x0, y0))


def test_disjointness_criterion():
    t = F(1, 2)
    b0 = Horoball(Cusp(0, 1), t)
    b1 = Horoball(Cusp(1, 1), t)
    bhalf = Horoball(Cusp(1, 2), t)
    binf = Horoball(Cusp(1, 0), t)
    assert horoballs_disjoint(b0, b1)
    assert horoballs_disjoint(b0, bhalf)
    assert horoballs_disjoint(b0, binf)
    # a fat ball at 0 meets the one at 1
    assert not horoballs_disjoint(Horoball(Cusp(0, 1), F(3, 2)), Horoball(Cusp(1, 1), F(3, 2)))
    assert not horoballs_disjoint(b0, b0)


def test_cusp_identify_roundtrip():
    t = F(1, 2)
    for cusp in [Cusp(0, 1), Cusp(1, 1), Cusp(1, 2), Cusp(-3, 5), Cusp(22, 7)]:
        x = cusp.value()
        y = (t / cusp.q**2) / 4
        assert cusp_identify(x, y, t) == cusp
    # a point outside every ball identifies nothing
    assert cusp_identify(F(1, 2), F(1, 2), t) is None
    # deep in the ball at infinity
    assert cusp_identify(F(7, 3), F(100), t) == Cusp(1, 0)


def test_gamma2_puncture_classes():
    assert gamma2_class(Cusp(1, 0)) is PunctureLabel.ZERO
    assert gamma2_class(Cusp(0, 1)) is PunctureLabel.ONE
    assert gamma2_class(Cusp(1, 1)) is PunctureLabel.INFINITY
    assert gamma2_class(Cusp(1, 2)) is PunctureLabel.ZERO
    assert gamma2_class(Cusp(3, 2)) is PunctureLabel.ZERO
    assert gamma2_class(Cusp(2, 1)) is PunctureLabel.ONE
    assert gamma2_class(Cusp(1, 3)) is PunctureLabel.INFINITY


def test_gamma2_class_is_gamma2_invariant():
    rng = random.Random(11)
    gens = [ModularElement(1, 2, 0, 1), ModularElement(1, 0, 2, 1)]
    for _ in range(40):
        cusp = Cusp(rng.randint(-9, 9), rng.randint(0, 9) or 1)
        m = IDENTITY
        for _ in range(rng.randint(1, 4)):
            g = rng.choice(gens)
            m = m * (g if rng.random() < 0.5 else g.inverse())
        assert gamma2_class(moebius_apply(m, cusp)) is gamma2_class(cusp)


def test_leash_bound():
    assert leash_bound(F(1), F(1, 2)) == F(2)
    assert leash_bound(F(3, 4), F(1, 4)) == F(1)
    with pytest.raises(ValueError):
        leash_bound(F(1), F(1))


def test_horoballs_meeting_rectangle():
    t = F(1, 2)
    balls = horoballs_meeting_rectangle(t, F(0), F(1), F(1, 100), F(1, 4))
    bases = {b.base for b in balls}
    assert Cusp(0, 1) in bases
    assert Cusp(1, 1) in bases
    assert Cusp(1, 2) in bases
    # high rectangle sees only the ball at infinity
    high = horoballs_meeting_rectangle(t, F(0), F(1), F(10), F(20))
    assert {b.base for b in high} == {Cusp(1, 0)}
