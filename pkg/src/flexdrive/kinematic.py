"""Bounded-curvature kinematic posture controller.

Maps polar error coordinates to a commanded center speed v in [0, v_max] and
path curvature kappa in [-kappa_max, kappa_max].  The controller steers the
robot onto a circular path manifold of radius r and slides it along the
manifold to the goal; a small perturbation epsilon of the manifold removes
the singularity at the origin at the price of a residual offset of about
r*sqrt(2*epsilon).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .geometry import (
    E_FLOOR,
    BodyVelocity,
    PolarError,
    Posture,
    propagate_unicycle,
    to_polar_error,
    wrap_angle,
)

SQRT2 = math.sqrt(2.0)

# Floor for the v-law denominator.  The raw law is singular (and, for
# strongly skewed headings, negative) there; commands from that region fall
# back to plain forward progress, see control_law.
DEN_FLOOR = 1e-6


@dataclass
class KinematicGains:
    """Parameters of the bounded kinematic control law.

    k1 and k2 are distance-scheduled (see gain_schedule), so only the
    schedule inputs live here.  e0 is the initial distance to the goal,
    captured when the controller is reset; it scales the heading-alignment
    gain.
    """

    v_des: float = 0.1
    kappa_des: float = 0.0
    r: float = 1.0 / 3.0
    epsilon: float = 1e-3
    v_max: float = 0.5
    kappa_max: float = 3.0
    e0: float = 1.0
    # Speed floor inside the kappa = phi_dot / v division.  The curvature
    # parameterization is singular at v = 0; below the floor the commanded
    # heading rate fades out smoothly instead of the curvature pegging at
    # +/-kappa_max and flipping sign with measurement jitter.
    v_floor: float = 0.02

    def validate(self) -> None:
        if self.r < 1.0 / self.kappa_max:
            raise ValueError(
                f"manifold radius r={self.r} must be >= 1/kappa_max="
                f"{1.0 / self.kappa_max}"
            )
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.v_max <= 0.0 or self.kappa_max <= 0.0:
            raise ValueError("v_max and kappa_max must be positive")
        if self.e0 <= 0.0:
            raise ValueError("e0 must be positive")


class CenterCommand(NamedTuple):
    """Commanded center speed, path curvature and resulting heading rate."""

    v: float
    kappa: float
    phi_dot: float
    v_saturated: bool = False
    kappa_saturated: bool = False
    den_guarded: bool = False


def path_manifold(theta: float, r: float) -> tuple[float, float]:
    """Point of the circular path manifold at bearing theta.

    Returns (e, alpha) with e = r*sqrt(2*(1 - cos 2*theta)) and
    alpha = -theta.
    """
    e = r * math.sqrt(2.0 * (1.0 - math.cos(2.0 * theta)))
    return e, -theta


def manifold_distance(e: float, theta: float, g: KinematicGains) -> float:
    """Signed distance z = e - r*sqrt(2)*sqrt(zeta - cos 2*theta).

    zeta = 1 + epsilon.  Nonnegative z means on or outside the perturbed
    convergence circle; z < 0 means inside it.
    """
    zeta = 1.0 + g.epsilon
    return e - g.r * SQRT2 * math.sqrt(zeta - math.cos(2.0 * theta))


def sign_U(theta: float) -> float:
    """Direction switch of the manifold: +1 for theta in [0, pi], else -1."""
    return 1.0 if theta >= 0.0 else -1.0


def gain_schedule(
    e: float, alpha: float, g: KinematicGains
) -> tuple[float, float, float, float]:
    """Distance-scheduled gains and reference pair (k1, k2, v_r, kappa_r).

    k1 ramps from 0.2 near the goal to 0.5 far away; k2 combines a heading
    alignment term scaled by the captured initial distance with a near-goal
    term; v_r ramps up to v_des close to the goal so the final approach keeps
    moving along the manifold.
    """
    e = max(e, E_FLOOR)
    k1 = 0.2 + 0.3 * (1.0 - math.tanh(1.3 / e))
    align = 1.0 if abs(alpha) < 1e-12 else math.tanh(1.0 / (2.0 * abs(alpha)))
    k2 = (0.3 / g.e0) * align + 0.3 * math.tanh(1.0 / e)
    v_r = g.v_des * math.tanh(0.1 / e)
    return k1, k2, v_r, g.kappa_des


def saturate(v: float, kappa: float, g: KinematicGains) -> CenterCommand:
    """Clamp to 0 <= v <= v_max and |kappa| <= kappa_max, flagging clips."""
    v_c = min(max(v, 0.0), g.v_max)
    k_c = min(max(kappa, -g.kappa_max), g.kappa_max)
    return CenterCommand(
        v=v_c,
        kappa=k_c,
        phi_dot=v_c * k_c,
        v_saturated=(v_c != v),
        kappa_saturated=(k_c != kappa),
    )


def control_law(p: PolarError, g: KinematicGains) -> CenterCommand:
    """Bounded-curvature command (v, kappa) for one polar error state.

    The speed law drives the manifold distance z to zero at rate
    k1*tanh(z) and the curvature law drives wrap(theta + alpha) to zero at
    rate k2*tanh(.); both are saturated on the way out.  When the v-law
    denominator drops below DEN_FLOOR (where the raw law is singular or
    commands reverse motion) the speed falls back to v_max*tanh(e), which
    preserves boundedness and forward progress; the event is flagged.
    """
    e = max(p.e, E_FLOOR)
    k1, k2, _, _ = gain_schedule(e, p.alpha, g)
    v_r, kappa_r = p.v_r, p.kappa_r
    zeta = 1.0 + g.epsilon
    root = math.sqrt(zeta - math.cos(2.0 * p.theta))
    s2t = math.sin(2.0 * p.theta)
    z = e - g.r * SQRT2 * root

    num_v = (
        k1 * e * root * math.tanh(z)
        + v_r * e * math.cos(p.theta) * root
        + v_r * g.r * SQRT2 * s2t * (math.sin(p.theta) + kappa_r * e)
    )
    den_v = e * root + g.r * SQRT2 * s2t * math.sin(p.alpha)
    guarded = den_v < DEN_FLOOR
    v_raw = g.v_max * math.tanh(e) if guarded else num_v / den_v

    v = min(max(v_raw, 0.0), g.v_max)
    # Curvature law evaluated at the speed actually commanded, so that
    # phi_dot = v*kappa matches the Lyapunov construction in closed loop.
    num_k = (
        k2 * math.tanh(wrap_angle(p.theta + p.alpha))
        + (2.0 / e) * (v * math.sin(p.alpha) - v_r * math.sin(p.theta))
        - v_r * kappa_r
    )
    kappa_raw = num_k / max(v, g.v_floor)
    kappa = min(max(kappa_raw, -g.kappa_max), g.kappa_max)
    return CenterCommand(
        v=v,
        kappa=kappa,
        phi_dot=v * kappa,
        v_saturated=(v != v_raw),
        kappa_saturated=(kappa != kappa_raw),
        den_guarded=guarded,
    )


def check_initial_condition(p: PolarError, g: KinematicGains) -> bool:
    """True when the state is on or outside the convergence circle.

    Points exactly on the unperturbed manifold sit at z = -O(r*epsilon);
    the tolerance r*epsilon accepts them as conforming.
    """
    return manifold_distance(p.e, p.theta, g) >= -g.r * g.epsilon


def lyapunov_values(p: PolarError, g: KinematicGains) -> tuple[float, float]:
    """Quadratic storage functions (V1, V2) = (z^2/2, wrap(theta+alpha)^2/2)."""
    z = manifold_distance(p.e, p.theta, g)
    s = wrap_angle(p.theta + p.alpha)
    return 0.5 * z * z, 0.5 * s * s


@dataclass
class KinematicController:
    """Stateful wrapper owning the captured e0 and the escape latch.

    The controller tracks a virtual reference frame that starts at the goal
    posture and advances with (v_r, v_r*kappa_r); with v_des = 0 the frame
    never moves and the controller performs pure posture regulation.  A run
    started inside the convergence circle first drives straight ahead at
    v_max/2 (kappa = 0) until the state becomes conforming, then latches
    over to the control law for good.
    """

    gains: KinematicGains
    reference: Posture = Posture(0.0, 0.0, 0.0)
    escape_active: bool = False
    _started: bool = field(default=False, repr=False)

    def reset(self, robot: Posture, goal: Posture) -> None:
        """Capture e0 from the initial pose pair and arm the escape latch."""
        self.reference = goal
        err = to_polar_error(robot, goal)
        self.gains.e0 = max(err.e, 1e-6)
        self.gains.validate()
        self.escape_active = not check_initial_condition(err, self.gains)
        self._started = True

    def polar_error(self, robot: Posture) -> PolarError:
        """Polar error against the virtual reference with scheduled (v_r, kappa_r)."""
        geom = to_polar_error(robot, self.reference)
        _, _, v_r, kappa_r = gain_schedule(geom.e, geom.alpha, self.gains)
        return PolarError(
            geom.e, geom.theta, geom.alpha, v_r, kappa_r, v_r * kappa_r
        )

    def step(self, robot: Posture, dt: float) -> tuple[CenterCommand, PolarError]:
        """One controller period: command for the given pose, then advance
        the virtual reference frame by dt."""
        if not self._started:
            raise RuntimeError("controller must be reset() before stepping")
        err = self.polar_error(robot)
        if self.escape_active:
            if check_initial_condition(err, self.gains):
                self.escape_active = False
        if self.escape_active:
            cmd = CenterCommand(v=0.5 * self.gains.v_max, kappa=0.0, phi_dot=0.0)
        else:
            cmd = control_law(err, self.gains)
        if err.v_r != 0.0:
            self.reference = propagate_unicycle(
                self.reference, BodyVelocity(err.v_r, err.phi_r_dot), dt
            )
        return cmd, err
