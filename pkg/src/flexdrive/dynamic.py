"""Per-axle robust torque controller: velocity law plus nonlinear damping.

Each axle runs an independent instance (distributed design).  The velocity
law turns the axle's posture tracking error into a commanded body velocity;
the nonlinear damping law turns the velocity error into wheel torques scaled
by the squared norm of a known regressor vector, which dominates bounded
disturbances without knowing their size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .cascade import AxleReference, FrameGeometry
from .geometry import BodyVelocity, Posture, wrap_angle


class TrackingError(NamedTuple):
    """Reference-minus-actual posture error rotated into the body frame."""

    e_x: float
    e_y: float
    e_phi: float


class WheelTorques(NamedTuple):
    """Right and left wheel torques in N*m."""

    tau_r: float
    tau_l: float


@dataclass
class DynGains:
    """Gains of the per-axle dynamic controller.

    k_x / k_y / k_phi parameterize the velocity law (a well-damped tracking
    set); K1 / K2 scale the nonlinear damping torque.  With compensate_frame
    off, the frame coupling force is left out of the regressor and treated as
    a disturbance.  tau_max, when set, clamps each wheel torque to emulate a
    motor limit.
    """

    k_x: float = 10.0
    k_y: float = 64.0
    k_phi: float = 16.0
    K1: float = 0.5
    K2: float = 0.5
    compensate_frame: bool = True
    tau_max: float | None = 2.0

    def validate(self) -> None:
        if min(self.k_x, self.k_y, self.k_phi, self.K1, self.K2) <= 0.0:
            raise ValueError("dynamic controller gains must be positive")
        if self.tau_max is not None and self.tau_max <= 0.0:
            raise ValueError("tau_max must be positive when set")


class AxleDiagnostics(NamedTuple):
    """Per-step controller internals for logging and tests."""

    error: TrackingError
    e_c: tuple[float, float]
    xi_norm: float
    V1: float
    V2: float


def tracking_error(q: Posture, q_r: Posture) -> TrackingError:
    """Rotate the posture error (reference - actual) into the body frame."""
    dx = q_r.x - q.x
    dy = q_r.y - q.y
    c, s = math.cos(q.phi), math.sin(q.phi)
    return TrackingError(
        e_x=c * dx + s * dy,
        e_y=-s * dx + c * dy,
        e_phi=wrap_angle(q_r.phi - q.phi),
    )


def velocity_law(
    e: TrackingError, v_r: float, omega_r: float, g: DynGains
) -> BodyVelocity:
    """Commanded body velocity from the tracking error.

    v_c = v_r cos(e_phi) + k_x e_x, omega_c = omega_r + k_y v_r e_y
    + k_phi v_r sin(e_phi).  Note the lateral and heading corrections scale
    with v_r, so they vanish at zero reference speed.
    """
    v_c = v_r * math.cos(e.e_phi) + g.k_x * e.e_x
    omega_c = omega_r + g.k_y * v_r * e.e_y + g.k_phi * v_r * math.sin(e.e_phi)
    return BodyVelocity(v_c, omega_c)


def velocity_error(u: BodyVelocity, v_c: BodyVelocity) -> tuple[float, float]:
    """Componentwise velocity error e_c = actual - commanded."""
    return u.v - v_c.v, u.omega - v_c.omega


def xi_vector(
    v_c: BodyVelocity,
    u: BodyVelocity,
    v_r: BodyVelocity,
    v_r_dot: tuple[float, float],
    f_k_norm: float,
    compensate: bool,
) -> tuple[float, float, float, float, float, float]:
    """Known nonnegative regressor (||v_c||, ||v||, ||v_r||, ||v_r_dot||, 1, ||F_K||).

    The constant slot keeps ||xi|| >= 1.  With compensation off the frame
    force slot is zero and the coupling acts as an unmodeled disturbance.
    """
    return (
        math.hypot(v_c.v, v_c.omega),
        math.hypot(u.v, u.omega),
        math.hypot(v_r.v, v_r.omega),
        math.hypot(v_r_dot[0], v_r_dot[1]),
        1.0,
        f_k_norm if compensate else 0.0,
    )


def damping_torque(
    e_c: tuple[float, float],
    xi: tuple[float, ...],
    g: DynGains,
    geo: FrameGeometry,
) -> WheelTorques:
    """Nonlinear damping wheel torques tau = -(S^T E)^{-1} K e_c ||xi||^2.

    The body-frame generalized force is f = -diag(K1, K2) e_c ||xi||^2; the
    differential-drive torque map S^T E = (1/r_w) [[1, 1], [d, -d]] is
    inverted in closed form.  Optional clamping to tau_max.
    """
    xi2 = math.fsum(c * c for c in xi)
    f_v = -g.K1 * e_c[0] * xi2
    f_w = -g.K2 * e_c[1] * xi2
    tau_r = 0.5 * geo.r_w * (f_v + f_w / geo.d)
    tau_l = 0.5 * geo.r_w * (f_v - f_w / geo.d)
    if g.tau_max is not None:
        tau_r = min(max(tau_r, -g.tau_max), g.tau_max)
        tau_l = min(max(tau_l, -g.tau_max), g.tau_max)
    return WheelTorques(tau_r, tau_l)


@dataclass
class AxleTorqueController:
    """One independent torque controller; reads only its own axle's state
    plus the locally measured frame coupling force.

    nominal_inertia = (m, I) is used only for the V2 diagnostic (the
    storage function of the velocity error with the nominal mass matrix).
    """

    gains: DynGains
    geo: FrameGeometry
    nominal_inertia: tuple[float, float] = (4.0, 0.15)

    def step(
        self,
        q: Posture,
        u: BodyVelocity,
        ref: AxleReference,
        f_k_body: tuple[float, float] = (0.0, 0.0),
    ) -> tuple[WheelTorques, AxleDiagnostics]:
        """Compute wheel torques for one axle from local measurements."""
        err = tracking_error(q, ref.q_r)
        v_c = velocity_law(err, ref.v_r, ref.omega_r, self.gains)
        e_c = velocity_error(u, v_c)
        xi = xi_vector(
            v_c,
            u,
            BodyVelocity(ref.v_r, ref.omega_r),
            (ref.v_r_dot, ref.omega_r_dot),
            math.hypot(*f_k_body),
            self.gains.compensate_frame,
        )
        torques = damping_torque(e_c, xi, self.gains, self.geo)
        m, inertia = self.nominal_inertia
        diag = AxleDiagnostics(
            error=err,
            e_c=e_c,
            xi_norm=math.sqrt(math.fsum(c * c for c in xi)),
            V1=0.5 * err.e_x**2
            + 0.5 * err.e_y**2
            + (1.0 - math.cos(err.e_phi)) / self.gains.k_y,
            V2=0.5 * (m * e_c[0] ** 2 + inertia * e_c[1] ** 2),
        )
        return torques, diag
