"""Center-command to per-axle reference cascade.

The commanded center curvature determines the frame bending angle psi via
kappa = 2*psi / (L*cos(psi)); the per-axle linear velocities pick up a
1/cos(psi) projection plus a foreshortening correction, and the angular
velocities split the bending rate between front and rear.  The inverse map
reconstructs the center posture and velocity from the two axles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .geometry import BodyVelocity, Posture, propagate_unicycle, wrap_angle
from .kinematic import CenterCommand

# Accelerations fed to the torque layer are obtained by backward differencing
# of the reference velocities; clamping keeps them bounded across command
# steps.
ACCEL_CLAMP = 10.0

_PSI_LIMIT = 0.5 * math.pi - 1e-6
_BISECT_TOL = 1e-12


@dataclass(frozen=True)
class FrameGeometry:
    """Compliant-frame and axle geometry (frame length, axle half-length,
    wheel radius), all in meters."""

    L: float = 0.35
    d: float = 0.18
    r_w: float = 0.06

    def validate(self) -> None:
        if self.L <= 0.0 or self.d <= 0.0 or self.r_w <= 0.0:
            raise ValueError("frame geometry values must be positive")


@dataclass
class AxleReference:
    """Reference trajectory state of one axle: posture, velocities and
    backward-differenced accelerations."""

    q_r: Posture
    v_r: float = 0.0
    omega_r: float = 0.0
    v_r_dot: float = 0.0
    omega_r_dot: float = 0.0


def _curvature_of_psi(psi: float, L: float) -> float:
    return 2.0 * psi / (L * math.cos(psi))


def solve_psi(kappa: float, geo: FrameGeometry) -> float:
    """Bending angle psi in (-pi/2, pi/2) with 2*psi/(L*cos psi) = kappa.

    The residual is strictly increasing in psi on the interval, so bisection
    converges unconditionally; the root is polished to |residual| < 1e-9.
    """
    if kappa == 0.0:
        return 0.0
    lo, hi = -_PSI_LIMIT, _PSI_LIMIT
    if not (_curvature_of_psi(lo, geo.L) <= kappa <= _curvature_of_psi(hi, geo.L)):
        raise ValueError(
            f"curvature {kappa} out of range for frame length {geo.L}"
        )
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _curvature_of_psi(mid, geo.L) < kappa:
            lo = mid
        else:
            hi = mid
    psi = 0.5 * (lo + hi)
    if abs(_curvature_of_psi(psi, geo.L) - kappa) >= 1e-9:
        raise ValueError(f"bending-angle solve failed for kappa={kappa}")
    return psi


def _solve_psi_warm(kappa: float, L: float, guess: float, geo: FrameGeometry) -> float:
    # Newton polish from the previous period's solution; commands move the
    # root slowly, so this converges in a couple of iterations.  Falls back
    # to bisection on any sign of trouble.
    if kappa == 0.0:
        return 0.0
    psi = min(max(guess, -_PSI_LIMIT + 1e-3), _PSI_LIMIT - 1e-3)
    for _ in range(8):
        c = math.cos(psi)
        f = 2.0 * psi / (L * c) - kappa
        df = (2.0 * c + 2.0 * psi * math.sin(psi)) / (L * c * c)
        step = f / df
        psi -= step
        if not -_PSI_LIMIT < psi < _PSI_LIMIT:
            return solve_psi(kappa, geo)
        if abs(step) < 1e-13:
            break
    if abs(2.0 * psi / (L * math.cos(psi)) - kappa) >= 1e-9:
        return solve_psi(kappa, geo)
    return psi


def axle_velocities(
    v: float, phi_dot: float, psi: float, psi_dot: float, geo: FrameGeometry
) -> tuple[BodyVelocity, BodyVelocity]:
    """Per-axle (v_i, omega_i) for a center command; index 0 front, 1 rear.

    v_i = v/cos(psi) -/+ L*psi*psi_dot/6 (foreshortening correction) and
    omega_i = phi_dot +/- psi_dot.
    """
    base = v / math.cos(psi)
    shorten = geo.L * psi * psi_dot / 6.0
    front = BodyVelocity(base - shorten, phi_dot + psi_dot)
    rear = BodyVelocity(base + shorten, phi_dot - psi_dot)
    return front, rear


def center_from_axles(
    q1: Posture, q2: Posture, u1: BodyVelocity, u2: BodyVelocity
) -> tuple[Posture, float, float, float, float]:
    """Center posture and velocity reconstructed from the two axles.

    Returns (q_center, v, phi_dot, psi, psi_dot).  The heading is the
    angle-safe mean of the two axle headings (unit-vector average), psi the
    half heading difference under the pure-bending assumption, and the speed
    undoes the 1/cos(psi) projection of axle_velocities.
    """
    x = 0.5 * (q1.x + q2.x)
    y = 0.5 * (q1.y + q2.y)
    phi = math.atan2(
        math.sin(q1.phi) + math.sin(q2.phi), math.cos(q1.phi) + math.cos(q2.phi)
    )
    psi = 0.5 * wrap_angle(q1.phi - q2.phi)
    phi_dot = 0.5 * (u1.omega + u2.omega)
    psi_dot = 0.5 * (u1.omega - u2.omega)
    v = math.cos(psi) * 0.5 * (u1.v + u2.v)
    return Posture(x, y, wrap_angle(phi)), v, phi_dot, psi, psi_dot


def _clamped_rate(value: float, prev: float, dt: float) -> float:
    rate = (value - prev) / dt
    return min(max(rate, -ACCEL_CLAMP), ACCEL_CLAMP)


def natural_chord_length(psi: float, L: float) -> float:
    """Chord of a circular arc of length L whose ends are deflected by psi."""
    if abs(psi) < 1e-8:
        return L * (1.0 - psi * psi / 6.0)
    return L * math.sin(psi) / psi


@dataclass
class ReferenceCascade:
    """Owns the per-axle reference trajectories driven by center commands.

    One center reference posture is integrated as an ideal unicycle under
    the commanded (v, phi_dot); the two axle references are placed rigidly
    about it (chord of length L*sin(psi)/psi along the center heading,
    headings at +/-psi), so the reference shape is pure-bending consistent
    at every step by construction.  Integrating the two axle references as
    independent unicycles instead lets transient phase errors persist and
    secularly collapse the reference separation on curved segments, loading
    the frame until the torque loop destabilizes.

    The bending angle solved from the commanded curvature is not applied
    instantly either: it tracks through a critically damped second-order
    shape filter (natural frequency psi_omega, rate capped at psi_rate),
    starting from the physical initial deflection, so psi_dot is continuous
    and the differenced reference accelerations never spike.  Reference
    velocities come from axle_velocities; accelerations are backward
    differences clamped to ACCEL_CLAMP.
    """

    geo: FrameGeometry
    center: Posture
    front: AxleReference
    rear: AxleReference
    psi: float = 0.0
    psi_dot: float = 0.0
    psi_rate: float = 1.0
    psi_omega: float = 3.0
    _first: bool = field(default=True, repr=False)

    @classmethod
    def from_axle_postures(
        cls, q_front: Posture, q_rear: Posture, geo: FrameGeometry
    ) -> "ReferenceCascade":
        psi0 = 0.5 * wrap_angle(q_front.phi - q_rear.phi)
        phi_c = math.atan2(q_front.y - q_rear.y, q_front.x - q_rear.x)
        center = Posture(
            0.5 * (q_front.x + q_rear.x), 0.5 * (q_front.y + q_rear.y), phi_c
        )
        return cls(
            geo=geo,
            center=center,
            front=AxleReference(q_front),
            rear=AxleReference(q_rear),
            psi=psi0,
        )

    def _place(self) -> tuple[Posture, Posture]:
        half = 0.5 * natural_chord_length(self.psi, self.geo.L)
        c, s = math.cos(self.center.phi), math.sin(self.center.phi)
        q_front = Posture(
            self.center.x + half * c,
            self.center.y + half * s,
            wrap_angle(self.center.phi + self.psi),
        )
        q_rear = Posture(
            self.center.x - half * c,
            self.center.y - half * s,
            wrap_angle(self.center.phi - self.psi),
        )
        return q_front, q_rear

    def update(self, cmd: CenterCommand, dt: float) -> tuple[AxleReference, AxleReference]:
        """Advance both axle references one controller period."""
        psi_target = _solve_psi_warm(cmd.kappa, self.geo.L, self.psi, self.geo)
        acc = self.psi_omega**2 * (psi_target - self.psi) - 2.0 * self.psi_omega * self.psi_dot
        self.psi_dot += acc * dt
        self.psi_dot = min(max(self.psi_dot, -self.psi_rate), self.psi_rate)
        self.psi += self.psi_dot * dt
        self.center = propagate_unicycle(
            self.center, BodyVelocity(cmd.v, cmd.phi_dot), dt
        )
        q_front, q_rear = self._place()
        vel_front, vel_rear = axle_velocities(
            cmd.v, cmd.phi_dot, self.psi, self.psi_dot, self.geo
        )
        for ref, q_r, vel in (
            (self.front, q_front, vel_front),
            (self.rear, q_rear, vel_rear),
        ):
            if self._first:
                ref.v_r_dot = 0.0
                ref.omega_r_dot = 0.0
            else:
                ref.v_r_dot = _clamped_rate(vel.v, ref.v_r, dt)
                ref.omega_r_dot = _clamped_rate(vel.omega, ref.omega_r, dt)
            ref.v_r = vel.v
            ref.omega_r = vel.omega
            ref.q_r = q_r
        self._first = False
        return self.front, self.rear
