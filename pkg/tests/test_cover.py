"""Modular lambda covering, path lifting, torus double cover."""

import cmath
import math
import random
from fractions import Fraction

import mpmath
import pytest
from mpmath import mpc

from curvepull.cover import (
    LiftedPoint, ModuliTriple, SampledPath, TorusCover,
    continue_inverse_branch, deck_transformation, hyperbolic_distance,
    lambda_inverse_local, lambda_triple, lambda_value, lift_path, reduce_tau,
    solve_nome, torus_build, torus_lift_curve, torus_point_map, twist, untwist,
)
from curvepull.errors import NoConvergence, PrecisionLoss
from curvepull.farey import IDENTITY, Cusp, ModularElement, gamma2_class, PunctureLabel
from curvepull.ratmap import RationalMap


def test_lambda_classical_value():
    assert abs(lambda_value(mpc(0, 1)) - 0.5) < 1e-10


def test_lambda_deck_invariance():
    rng = random.Random(17)
    for _ in range(100):
        tau = mpc(rng.uniform(-3, 3), rng.uniform(0.05, 3))
        v = lambda_value(tau)
        assert abs(lambda_value(tau + 2) - v) < 1e-9
        assert abs(lambda_value(tau / (2 * tau + 1)) - v) < 1e-9


def test_lambda_rejects_boundary():
    with pytest.raises(PrecisionLoss):
        lambda_value(mpc(0.3, 1e-13))


def test_lambda_cusp_limit_matches_parity_table():
    # vertical approach to the cusps infinity, 0, 1 lands on the puncture
    # recorded in the parity table
    approaches = {
        Cusp(1, 0): mpc(0, 1000),
        Cusp(0, 1): mpc(0, mpmath.mpf(1) / 1000),
        Cusp(1, 1): mpc(1, mpmath.mpf(1) / 1000),
    }
    for cusp, tau in approaches.items():
        trip = lambda_triple(tau)[2]
        idx, mag = trip.nearest_puncture()
        assert mag < 1e-100
        expected = {PunctureLabel.ZERO: 0, PunctureLabel.ONE: 1,
                    PunctureLabel.INFINITY: 2}[gamma2_class(cusp)]
        assert idx == expected


def test_reduction_invariant():
    rng = random.Random(3)
    for _ in range(50):
        tau = mpc(rng.uniform(-10, 10), rng.uniform(0.01, 5))
        m, red = reduce_tau(tau)
        assert red.imag >= math.sqrt(3) / 2 - 1e-9
        assert abs(red.real) <= 0.5 + 1e-9
        # M(tau_red) = tau
        back = (m.a * red + m.b) / (m.c * red + m.d)
        assert abs(back - tau) < 1e-12 * (1 + abs(tau))


def test_twist_untwist_roundtrip():
    trip = ModuliTriple.from_value(mpc(0.3, 0.2))
    mats = [IDENTITY, ModularElement(1, 1, 0, 1), ModularElement(0, -1, 1, 0),
            ModularElement(2, 1, 1, 1), ModularElement(1, 0, 2, 1)]
    for m in mats:
        back = untwist(m, twist(m, trip))
        for x, y in zip(back.coords(), trip.coords()):
            assert abs(x - y) < 1e-20


def test_twist_matches_transformation_law():
    tau = mpc(0.13, 1.2)
    base = lambda_value(tau)
    cases = [
        (ModularElement(1, 1, 0, 1), tau + 1),
        (ModularElement(0, -1, 1, 0), -1 / tau),
        (ModularElement(1, 0, 1, 1), tau / (tau + 1)),
    ]
    trip = ModuliTriple.from_value(base)
    for m, moved in cases:
        assert abs(twist(m, trip).u0 - lambda_value(moved)) < 1e-20


def test_solve_nome_deep():
    for mag in (1e-3, 1e-30, 1e-300):
        u = mpc(mag, mag / 3)
        q = solve_nome(u)
        from curvepull.cover import theta_triple_from_nome
        assert abs(theta_triple_from_nome(q).u0 - u) < 1e-10 * abs(u)


def test_inverse_local_roundtrip():
    rng = random.Random(5)
    for _ in range(20):
        tau = mpc(rng.uniform(-0.5, 0.5), rng.uniform(0.9, 2.0))
        m = lambda_value(tau)
        back = lambda_inverse_local(m, tau + mpc(0.02, -0.01))
        assert abs(back - tau) < 1e-8


def test_inverse_local_rejects_distant_guess():
    with pytest.raises(NoConvergence):
        lambda_inverse_local(mpc(1e-30), mpc(0, 1))


def test_lift_path_roundtrip():
    tau_a, tau_b = mpc(0.1, 1.0), mpc(0.1, 2.2)
    seg = [tau_a + (tau_b - tau_a) * k / 40 for k in range(41)]
    mpath = SampledPath([lambda_value(t) for t in seg])
    lifted = lift_path(mpath, tau_a)
    assert abs(lifted.end - tau_b) < 1e-8


def test_lift_constant_path():
    mpath = SampledPath([lambda_value(mpc(0.2, 1.3))] * 6)
    lifted = lift_path(mpath, mpc(0.2, 1.3))
    assert abs(lifted.end - mpc(0.2, 1.3)) < 1e-10


def test_lift_determinism_under_refinement():
    tau_a = mpc(-0.2, 1.1)
    seg = [tau_a + mpc(0.01, 0.025) * k for k in range(31)]
    mpath = SampledPath([lambda_value(t) for t in seg])
    e1 = lift_path(mpath, tau_a).end
    e2 = lift_path(mpath.refined(3), tau_a).end
    assert abs(e1 - e2) < 1e-8


def test_loop_around_puncture_gives_gamma2_deck():
    N = 64
    loop = SampledPath([0.08 * mpmath.exp(2j * mpmath.pi * k / N) for k in range(N + 1)])
    start = lambda_inverse_local(loop.points[0], mpc(0.0, 2.0))
    lifted = lift_path(loop, start)
    gamma = deck_transformation(start, lifted.end)
    assert gamma is not None
    assert gamma != IDENTITY
    assert gamma.in_gamma2


def test_inverse_branch_constant_paths():
    g = RationalMap([1, -4, 4], [1])
    br = continue_inverse_branch(g, SampledPath([mpc(0.25)] * 5), mpc(0.25))
    assert abs(br.end - 0.25) < 1e-12
    sq = RationalMap([0, 0, 1], [1])
    br2 = continue_inverse_branch(sq, SampledPath([mpc(0.25)] * 5), mpc(0.5))
    assert abs(br2.end - 0.5) < 1e-12


def test_inverse_branch_monodromy_swap():
    sq = RationalMap([0, 0, 1], [1])
    N = 64
    loop = SampledPath([0.25 * mpmath.exp(2j * mpmath.pi * k / N) for k in range(N + 1)])
    br = continue_inverse_branch(sq, loop, mpc(0.5))
    assert abs(br.end + 0.5) < 1e-8


def test_inverse_branch_reversibility():
    g = RationalMap([1, -4, 4], [1])
    pts = [mpc(0.25) + mpc(0.01, 0.005) * k for k in range(20)]
    path = SampledPath(pts + pts[::-1])
    br = continue_inverse_branch(g, path, mpc(0.25))
    assert abs(br.end - 0.25) < 1e-8


def test_torus_cover_even_and_periodic():
    T = torus_build(complex(0.3, 1.5))
    rng = random.Random(2)
    for _ in range(100):
        z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        v = torus_point_map(T, z)
        assert abs(torus_point_map(T, -z) - v) < 1e-9
        assert abs(torus_point_map(T, z + 1) - v) < 1e-9
        assert abs(torus_point_map(T, z + T.tau0) - v) < 1e-9


def test_torus_branch_values():
    T = torus_build(complex(0.3, 1.5))
    assert abs(torus_point_map(T, 0.5) - T.a) < 1e-9
    assert abs(torus_point_map(T, (1 + T.tau0) / 2) - 1) < 1e-9
    assert abs(torus_point_map(T, 1e-9)) < 1e-6


def test_torus_lift_generators():
    T = torus_build(complex(0.3, 1.5))
    z0 = complex(0.23, 0.41)
    N = 512
    for direction, expected in ((1.0, (1, 0)), (T.tau0, (0, 1))):
        seg = [z0 + (k / N) * direction for k in range(N + 1)]
        curve = [torus_point_map(T, z) for z in seg]
        assert torus_lift_curve(T, curve) == expected


def test_torus_lift_peripheral():
    T = torus_build(complex(0.3, 1.5))
    N = 256
    circ = [1 + 0.05 * cmath.exp(2j * math.pi * k / N) for k in range(N + 1)]
    assert torus_lift_curve(T, circ) is None


def test_hyperbolic_distance_basics():
    assert hyperbolic_distance(mpc(0, 1), mpc(0, 1)) == 0
    d = hyperbolic_distance(mpc(0, 1), mpc(0, 2))
    assert abs(d - mpmath.log(2)) < 1e-12
