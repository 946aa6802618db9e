import math
import random

import pytest

from flexdrive.geometry import (
    BodyVelocity,
    PolarError,
    Posture,
    polar_error_rates,
    propagate_unicycle,
    to_polar_error,
    wrap_angle,
)


def test_wrap_angle_identity_and_modular():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    # half-open interval: -pi maps to +pi
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(math.pi) == pytest.approx(math.pi)


def test_wrap_angle_idempotent():
    rng = random.Random(1)
    for _ in range(200):
        a = rng.uniform(-50.0, 50.0)
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert wrap_angle(w) == w
        # congruent modulo 2 pi
        assert math.isclose(math.remainder(a - w, 2 * math.pi), 0.0, abs_tol=1e-12)


def test_wrap_angle_rejects_nonfinite():
    for bad in (math.inf, -math.inf, math.nan):
        with pytest.raises(ValueError):
            wrap_angle(bad)


def test_polar_error_colinear_approach():
    p = to_polar_error(Posture(-1.0, 0.0, 0.0), Posture(0.0, 0.0, 0.0))
    assert p.e == pytest.approx(1.0)
    assert p.theta == pytest.approx(0.0)
    assert p.alpha == pytest.approx(0.0)


def test_polar_error_lateral_geometry():
    p = to_polar_error(Posture(0.0, -1.0, math.pi / 2), Posture(0.0, 0.0, 0.0))
    assert p.e == pytest.approx(1.0)
    assert p.theta == pytest.approx(math.pi / 2)
    assert p.alpha == pytest.approx(0.0)


def test_polar_error_rates_direct_substitution():
    p = PolarError(e=1.0, theta=0.0, alpha=0.0, v_r=0.0, kappa_r=0.0, phi_r_dot=0.0)
    assert polar_error_rates(p, v=1.0, phi_dot=0.0) == pytest.approx((-1.0, 0.0, 0.0))


def test_polar_error_rates_stationary_robot():
    p = PolarError(e=0.7, theta=0.3, alpha=-0.2, v_r=0.0, kappa_r=0.0, phi_r_dot=0.4)
    e_dot, th_dot, al_dot = polar_error_rates(p, v=0.0, phi_dot=0.9)
    assert e_dot == pytest.approx(0.0)
    assert th_dot == pytest.approx(-0.4)
    assert al_dot == pytest.approx(-0.9)


def test_polar_error_rates_frozen_oracle():
    # independent scalar evaluation, frozen
    p = PolarError(
        e=1.0, theta=math.pi / 4, alpha=math.pi / 4,
        v_r=0.1, kappa_r=0.0, phi_r_dot=0.0,
    )
    e_dot, th_dot, al_dot = polar_error_rates(p, v=0.5, phi_dot=0.2)
    assert e_dot == pytest.approx(-0.282842712474619, abs=1e-15)
    assert th_dot == pytest.approx(0.282842712474619, abs=1e-15)
    assert al_dot == pytest.approx(0.082842712474619, abs=1e-15)


def test_polar_error_rates_singular_at_zero():
    p = PolarError(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        polar_error_rates(p, 0.1, 0.0)


def test_propagate_straight_line():
    q = propagate_unicycle(Posture(0, 0, 0), BodyVelocity(1.0, 0.0), 1.0)
    assert q == pytest.approx((1.0, 0.0, 0.0))


def test_propagate_pure_rotation():
    q = propagate_unicycle(Posture(0, 0, 0), BodyVelocity(0.0, math.pi), 1.0)
    assert q.x == pytest.approx(0.0)
    assert q.y == pytest.approx(0.0)
    assert q.phi == pytest.approx(math.pi)


def test_propagate_circular_arc_oracle():
    # quarter circle of radius 1: closed form (sin t, 1-cos t, t)
    q = propagate_unicycle(Posture(0, 0, 0), BodyVelocity(1.0, 1.0), math.pi / 2)
    assert q.x == pytest.approx(1.0, abs=1e-6)
    assert q.y == pytest.approx(1.0, abs=1e-6)
    assert q.phi == pytest.approx(math.pi / 2, abs=1e-6)


def test_propagate_full_circle_closure():
    # one full circle returns to the start within 1e-6 of the path length
    v, omega = 0.4, 0.8
    T = 2 * math.pi / omega
    q = propagate_unicycle(Posture(0.3, -0.2, 1.1), BodyVelocity(v, omega), T)
    path_len = v * T
    err = math.hypot(q.x - 0.3, q.y + 0.2)
    assert err < 1e-6 * path_len
    assert wrap_angle(q.phi - 1.1) == pytest.approx(0.0, abs=1e-9)


def test_propagate_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        propagate_unicycle(Posture(0, 0, 0), BodyVelocity(1, 0), 0.0)


def _finite_difference_rates(robot, ref, ref_vel, v, phi_dot, dt):
    # central difference under simulated robot and reference motion
    v_r, kappa_r = ref_vel
    robot_f = propagate_unicycle(robot, BodyVelocity(v, phi_dot), dt)
    ref_f = propagate_unicycle(ref, BodyVelocity(v_r, v_r * kappa_r), dt)
    robot_b = propagate_unicycle(robot, BodyVelocity(-v, -phi_dot), dt)
    ref_b = propagate_unicycle(ref, BodyVelocity(-v_r, -v_r * kappa_r), dt)
    after = to_polar_error(robot_f, ref_f, ref_vel)
    before = to_polar_error(robot_b, ref_b, ref_vel)
    return (
        (after.e - before.e) / (2 * dt),
        wrap_angle(after.theta - before.theta) / (2 * dt),
        wrap_angle(after.alpha - before.alpha) / (2 * dt),
    )


def test_transform_rates_match_polar_error_rates():
    # central acceptance oracle: finite-difference rates of the transform
    # under simulated robot + reference motion match the analytic rates
    rng = random.Random(7)
    dt = 1e-5
    for _ in range(100):
        robot = Posture(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi))
        ref = Posture(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi))
        if math.hypot(ref.x - robot.x, ref.y - robot.y) < 0.3:
            continue
        v = rng.uniform(-0.5, 0.5)
        phi_dot = rng.uniform(-1.5, 1.5)
        v_r = rng.uniform(-0.3, 0.3)
        kappa_r = rng.uniform(-3, 3)
        p = to_polar_error(robot, ref, (v_r, kappa_r))
        analytic = polar_error_rates(p, v, phi_dot)
        numeric = _finite_difference_rates(robot, ref, (v_r, kappa_r), v, phi_dot, dt)
        for a, n in zip(analytic, numeric):
            assert n == pytest.approx(a, abs=1e-6)


def test_transform_rate_error_shrinks_with_dt():
    # first-order convergence of the finite difference toward the analytic rates
    robot = Posture(-1.2, 0.4, 0.7)
    ref = Posture(0.0, 0.0, 0.0)
    p = to_polar_error(robot, ref, (0.1, 1.0))
    analytic = polar_error_rates(p, 0.4, 0.6)
    errs = []
    for dt in (1e-3, 1e-4, 1e-5):
        numeric = _finite_difference_rates(robot, ref, (0.1, 1.0), 0.4, 0.6, dt)
        errs.append(max(abs(a - n) for a, n in zip(analytic, numeric)))
    assert errs[0] > errs[1] > errs[2]
