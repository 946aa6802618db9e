"""Planar pose algebra, polar error coordinates and ideal unicycle propagation.

All angles are wrapped to the half-open interval (-pi, pi].  Everything in
this module is a pure function of its inputs, so it is safe to call from any
number of simulation loops concurrently.
"""

from __future__ import annotations

import math
from typing import NamedTuple

TWO_PI = 2.0 * math.pi

# Distance floor used inside 1/e terms to avoid blow-ups at coincident poses.
E_FLOOR = 1e-9

# Largest RK4 substep taken by propagate_unicycle.  Small enough that a full
# circle at kappa_max closes on itself to well below 1e-6 of the path length.
MAX_RK4_STEP = 0.01


class Posture(NamedTuple):
    """Planar pose: position in meters, heading in radians, wrapped."""

    x: float
    y: float
    phi: float


class BodyVelocity(NamedTuple):
    """Linear speed along the heading (m/s) and heading rate (rad/s)."""

    v: float
    omega: float


class PolarError(NamedTuple):
    """Polar error coordinates of a robot pose relative to a reference frame.

    e is the Euclidean distance to the reference position, theta the bearing
    of the robot as seen from the reference frame, alpha the bearing of the
    reference as seen from the robot, both measured against the line of
    sight.  v_r / kappa_r are the reference speed and path curvature, and
    phi_r_dot = v_r * kappa_r is the reference heading rate.
    """

    e: float
    theta: float
    alpha: float
    v_r: float
    kappa_r: float
    phi_r_dot: float


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi].

    Raises ValueError for non-finite input.
    """
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    w = math.remainder(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def to_polar_error(
    robot: Posture,
    reference: Posture,
    ref_vel: tuple[float, float] = (0.0, 0.0),
) -> PolarError:
    """Transform a robot/reference pose pair into polar error coordinates.

    With lam the line-of-sight angle from the robot to the reference
    position:  e = ||p_ref - p||, theta = wrap(lam - phi_ref),
    alpha = wrap(lam - phi).  When the two positions coincide the line of
    sight is undefined; the reference heading is used, which makes
    (theta, alpha) continuous for an on-target robot.
    """
    v_r, kappa_r = ref_vel
    dx = reference.x - robot.x
    dy = reference.y - robot.y
    e = math.hypot(dx, dy)
    lam = math.atan2(dy, dx) if e > E_FLOOR else reference.phi
    return PolarError(
        e=e,
        theta=wrap_angle(lam - reference.phi),
        alpha=wrap_angle(lam - robot.phi),
        v_r=v_r,
        kappa_r=kappa_r,
        phi_r_dot=v_r * kappa_r,
    )


def polar_error_rates(
    p: PolarError, v: float, phi_dot: float
) -> tuple[float, float, float]:
    """Time derivatives (e_dot, theta_dot, alpha_dot) of the polar errors.

    v and phi_dot are the robot's current speed and heading rate.  Raises
    ValueError at e = 0 where the bearing rates are singular.
    """
    if p.e == 0.0:
        raise ValueError("polar error rates are singular at e = 0")
    e = max(p.e, E_FLOOR)
    cross = (v * math.sin(p.alpha) - p.v_r * math.sin(p.theta)) / e
    e_dot = -v * math.cos(p.alpha) + p.v_r * math.cos(p.theta)
    theta_dot = cross - p.phi_r_dot
    alpha_dot = cross - phi_dot
    return e_dot, theta_dot, alpha_dot


def _unicycle_rk4_step(
    x: float, y: float, phi: float, v: float, omega: float, h: float
) -> tuple[float, float, float]:
    # RK4 stages for xdot = v cos(phi), ydot = v sin(phi), phidot = omega.
    # With constant (v, omega) the heading stages are exact.
    k1x, k1y = v * math.cos(phi), v * math.sin(phi)
    p2 = phi + 0.5 * h * omega
    k2x, k2y = v * math.cos(p2), v * math.sin(p2)
    k3x, k3y = k2x, k2y
    p4 = phi + h * omega
    k4x, k4y = v * math.cos(p4), v * math.sin(p4)
    x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return x, y, phi + h * omega


def propagate_unicycle(q: Posture, u: BodyVelocity, dt: float) -> Posture:
    """Advance an ideal unicycle by dt seconds under constant (v, omega).

    Classical RK4 with internal substepping (substep <= MAX_RK4_STEP) so a
    single call stays accurate for arbitrary dt.  Heading is wrapped on exit.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    n = max(1, math.ceil(dt / MAX_RK4_STEP))
    h = dt / n
    x, y, phi = q
    for _ in range(n):
        x, y, phi = _unicycle_rk4_step(x, y, phi, u.v, u.omega, h)
    return Posture(x, y, wrap_angle(phi))
