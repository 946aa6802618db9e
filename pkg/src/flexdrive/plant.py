"""Ground-truth physics: axle dynamics, compliant frame coupling, bounded
disturbances, wheel encoders and dead-reckoning odometry.

Each axle is a rigid differential-drive body with diagonal mass matrix
diag(m, I) and viscous friction diag(b_v, b_w).  The compliant frame is
lumped into an axial chord spring (with bending-foreshortened natural
length), one torsional spring per end, and the shear-force couple that a
massless beam must transmit for its end moments to balance; spring plus
damper forces therefore satisfy Newton's third law exactly.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import NamedTuple

from .cascade import FrameGeometry, natural_chord_length
from .dynamic import WheelTorques
from .geometry import BodyVelocity, Posture, wrap_angle

MIN_AXLE_SEPARATION = 1e-6


@dataclass(frozen=True)
class AxleParams:
    """Inertial and friction parameters of one axle module.

    m and I are the axle mass and yaw inertia; b_v and b_w the viscous
    friction coefficients on the body velocity; tau_d_max bounds the injected
    disturbance norm.
    """

    m: float = 4.0
    I: float = 0.15
    b_v: float = 1.0
    b_w: float = 0.2
    tau_d_max: float = 0.2
    geo: FrameGeometry = FrameGeometry()

    def validate(self) -> None:
        if self.m <= 0.0 or self.I <= 0.0:
            raise ValueError("axle mass and inertia must be positive")
        if self.b_v < 0.0 or self.b_w < 0.0 or self.tau_d_max < 0.0:
            raise ValueError("friction and disturbance bound must be >= 0")
        self.geo.validate()


@dataclass(frozen=True)
class FrameStiffness:
    """Lumped compliant-frame model parameters.

    k_bend acts at each frame end on the heading-minus-chord angle; k_axial
    acts on the chord length against the bending-foreshortened natural
    length; c_bend and c_axial are the matching dampers.
    """

    k_bend: float = 3.0
    k_axial: float = 800.0
    c_bend: float = 0.05
    c_axial: float = 2.0

    def validate(self) -> None:
        if self.k_bend <= 0.0 or self.k_axial <= 0.0:
            raise ValueError("frame stiffnesses must be positive")
        if self.c_bend < 0.0 or self.c_axial < 0.0:
            raise ValueError("frame dampings must be >= 0")


@dataclass
class SensorModel:
    """Incremental wheel encoder model.

    Reads return cumulative tick counts of the true wheel angle corrupted by
    per-read Gaussian noise; with quantize off the counts stay float
    (infinite resolution), which models ideal sensing.  The default count
    resolution corresponds to a geared motor encoder read in quadrature at
    the wheel shaft; velocity estimates differenced at the controller rate
    need roughly this resolution to stay usable at crawl speeds.
    """

    ticks_per_rev: int = 65536
    sigma_noise: float = 0.0
    seed: int = 0
    quantize: bool = True
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.ticks_per_rev <= 0:
            raise ValueError("ticks_per_rev must be positive")
        if self.sigma_noise < 0.0:
            raise ValueError("sigma_noise must be >= 0")
        self._rng = random.Random(self.seed)

    def reseed(self, seed: int) -> None:
        self.seed = seed
        self._rng = random.Random(seed)


class AxleState(NamedTuple):
    """True state of one axle: posture, body velocity, wheel angles."""

    q: Posture
    u: BodyVelocity
    wheel_r: float
    wheel_l: float


class SimState(NamedTuple):
    """Full plant state: true per-axle states plus dead-reckoned postures.

    The odometric postures are carried along unchanged by step(); only
    odometry_update advances them.
    """

    t: float
    front: AxleState
    rear: AxleState
    odo_front: Posture
    odo_rear: Posture


@dataclass
class PlantParams:
    axle: AxleParams = field(default_factory=AxleParams)
    stiffness: FrameStiffness = field(default_factory=FrameStiffness)

    def validate(self) -> None:
        self.axle.validate()
        self.stiffness.validate()


def _frame_wrenches_flat(
    x1: float, y1: float, p1: float, v1: float, w1: float,
    x2: float, y2: float, p2: float, v2: float, w2: float,
    ks: FrameStiffness, geo: FrameGeometry,
) -> tuple[float, float, float, float, float, float]:
    dx = x1 - x2
    dy = y1 - y2
    s = math.hypot(dx, dy)
    if s <= MIN_AXLE_SEPARATION:
        raise ValueError("axles coincide; frame force undefined")
    cx, cy = dx / s, dy / s          # chord unit vector, rear -> front
    nx, ny = -cy, cx                 # chord normal
    phi_c = math.atan2(dy, dx)

    vx1, vy1 = v1 * math.cos(p1), v1 * math.sin(p1)
    vx2, vy2 = v2 * math.cos(p2), v2 * math.sin(p2)
    rvx, rvy = vx1 - vx2, vy1 - vy2
    s_rate = cx * rvx + cy * rvy
    phi_c_rate = (nx * rvx + ny * rvy) / s

    psi = 0.5 * wrap_angle(p1 - p2)
    stretch = s - natural_chord_length(psi, geo.L)
    f_axial = -ks.k_axial * stretch - ks.c_axial * s_rate

    # The natural chord length depends on the bend angle, so the axial
    # spring exerts a (small) moment pair on the two ends; including it
    # makes the spring forces an exact potential gradient, so the passive
    # energy balance closes.
    if abs(psi) < 1e-4:
        ln_prime = -geo.L * psi / 3.0
    else:
        ln_prime = geo.L * (math.cos(psi) / psi - math.sin(psi) / (psi * psi))
    coupling = 0.5 * ks.k_axial * stretch * ln_prime

    m1 = -ks.k_bend * wrap_angle(p1 - phi_c) - ks.c_bend * (w1 - phi_c_rate) + coupling
    m2 = -ks.k_bend * wrap_angle(p2 - phi_c) - ks.c_bend * (w2 - phi_c_rate) - coupling
    # Shear couple carried by the massless beam so its end moments balance.
    q_shear = (m1 + m2) / s

    fx1 = f_axial * cx - q_shear * nx
    fy1 = f_axial * cy - q_shear * ny
    return fx1, fy1, m1, -fx1, -fy1, m2


def frame_wrenches(
    q1: Posture,
    q2: Posture,
    u1: BodyVelocity,
    u2: BodyVelocity,
    ks: FrameStiffness,
    geo: FrameGeometry,
) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Global-frame wrench (Fx, Fy, Mz) the frame applies to each axle.

    Force resultants sum to zero and moments about the chord midpoint
    cancel by construction.
    """
    fx1, fy1, m1, fx2, fy2, m2 = _frame_wrenches_flat(
        q1.x, q1.y, q1.phi, u1.v, u1.omega,
        q2.x, q2.y, q2.phi, u2.v, u2.omega,
        ks, geo,
    )
    return (fx1, fy1, m1), (fx2, fy2, m2)


def frame_force(
    q1: Posture,
    q2: Posture,
    u1: BodyVelocity,
    u2: BodyVelocity,
    ks: FrameStiffness,
    geo: FrameGeometry,
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Frame coupling force on each axle in its own body frame.

    Returns ((longitudinal force, yaw moment), ...); the lateral component
    is absorbed by the no-side-slip constraint.
    """
    (fx1, fy1, m1), (fx2, fy2, m2) = frame_wrenches(q1, q2, u1, u2, ks, geo)
    f1 = fx1 * math.cos(q1.phi) + fy1 * math.sin(q1.phi)
    f2 = fx2 * math.cos(q2.phi) + fy2 * math.sin(q2.phi)
    return (f1, m1), (f2, m2)


def _deriv(
    st: tuple[float, ...],
    tau: tuple[float, float, float, float],
    dist: tuple[float, float, float, float],
    p: PlantParams,
) -> tuple[float, ...]:
    # st = (x, y, phi, v, w, wheel_r, wheel_l) per axle, front then rear.
    (x1, y1, p1, v1, w1, _, _, x2, y2, p2, v2, w2, _, _) = st
    ks, geo, ax = p.stiffness, p.axle.geo, p.axle
    if ks.k_axial > 0.0 or ks.k_bend > 0.0:
        fx1, fy1, m1, fx2, fy2, m2 = _frame_wrenches_flat(
            x1, y1, p1, v1, w1, x2, y2, p2, v2, w2, ks, geo
        )
        fk1v = fx1 * math.cos(p1) + fy1 * math.sin(p1)
        fk2v = fx2 * math.cos(p2) + fy2 * math.sin(p2)
    else:
        fk1v = m1 = fk2v = m2 = 0.0

    inv_rw = 1.0 / geo.r_w
    # v_dot = (S^T E tau - B v + S^T(F_K) - d) / m per channel; the injected
    # disturbance d is already expressed in the body frame.
    out = []
    for (phi, v, w, tr, tl, dv, dw, fkv, fkm) in (
        (p1, v1, w1, tau[0], tau[1], dist[0], dist[1], fk1v, m1),
        (p2, v2, w2, tau[2], tau[3], dist[2], dist[3], fk2v, m2),
    ):
        f_v = (tr + tl) * inv_rw
        f_w = (tr - tl) * geo.d * inv_rw
        v_dot = (f_v - ax.b_v * v + fkv - dv) / ax.m
        w_dot = (f_w - ax.b_w * w + fkm - dw) / ax.I
        out.extend(
            (
                v * math.cos(phi),
                v * math.sin(phi),
                w,
                v_dot,
                w_dot,
                (v + geo.d * w) * inv_rw,
                (v - geo.d * w) * inv_rw,
            )
        )
    return tuple(out)


def _flat(s: SimState) -> tuple[float, ...]:
    f, r = s.front, s.rear
    return (
        f.q.x, f.q.y, f.q.phi, f.u.v, f.u.omega, f.wheel_r, f.wheel_l,
        r.q.x, r.q.y, r.q.phi, r.u.v, r.u.omega, r.wheel_r, r.wheel_l,
    )


def _unflat(t: float, st: tuple[float, ...], odo_f: Posture, odo_r: Posture) -> SimState:
    return SimState(
        t=t,
        front=AxleState(
            Posture(st[0], st[1], wrap_angle(st[2])),
            BodyVelocity(st[3], st[4]), st[5], st[6],
        ),
        rear=AxleState(
            Posture(st[7], st[8], wrap_angle(st[9])),
            BodyVelocity(st[10], st[11]), st[12], st[13],
        ),
        odo_front=odo_f,
        odo_rear=odo_r,
    )


def dynamics_deriv(
    s: SimState,
    torques: tuple[WheelTorques, WheelTorques],
    disturbances: tuple[tuple[float, float], tuple[float, float]],
    params: PlantParams,
) -> tuple[float, ...]:
    """Flat state derivative (7 entries per axle, front then rear).

    Disturbances are body-frame (force, moment) pairs per axle, already
    projected like S^T tau_d.
    """
    tau = (torques[0].tau_r, torques[0].tau_l, torques[1].tau_r, torques[1].tau_l)
    dist = (
        disturbances[0][0], disturbances[0][1],
        disturbances[1][0], disturbances[1][1],
    )
    return _deriv(_flat(s), tau, dist, params)


def step(
    s: SimState,
    torques: tuple[WheelTorques, WheelTorques],
    disturbances: tuple[tuple[float, float], tuple[float, float]],
    params: PlantParams,
    dt: float,
) -> SimState:
    """One RK4 step of dt seconds with zero-order-held torques/disturbances."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    tau = (torques[0].tau_r, torques[0].tau_l, torques[1].tau_r, torques[1].tau_l)
    dist = (
        disturbances[0][0], disturbances[0][1],
        disturbances[1][0], disturbances[1][1],
    )
    y0 = _flat(s)
    half = 0.5 * dt
    sixth = dt / 6.0
    k1 = _deriv(y0, tau, dist, params)
    k2 = _deriv([a + half * b for a, b in zip(y0, k1)], tau, dist, params)
    k3 = _deriv([a + half * b for a, b in zip(y0, k2)], tau, dist, params)
    k4 = _deriv([a + dt * b for a, b in zip(y0, k3)], tau, dist, params)
    out = [
        a + sixth * (b1 + 2.0 * (b2 + b3) + b4)
        for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)
    ]
    return _unflat(s.t + dt, out, s.odo_front, s.odo_rear)


def total_energy(s: SimState, params: PlantParams) -> float:
    """Kinetic plus frame-spring energy of the current state."""
    ax, ks, geo = params.axle, params.stiffness, params.axle.geo
    f, r = s.front, s.rear
    kinetic = 0.5 * (
        ax.m * (f.u.v**2 + r.u.v**2) + ax.I * (f.u.omega**2 + r.u.omega**2)
    )
    dx, dy = f.q.x - r.q.x, f.q.y - r.q.y
    sep = math.hypot(dx, dy)
    phi_c = math.atan2(dy, dx)
    psi = 0.5 * wrap_angle(f.q.phi - r.q.phi)
    stretch = sep - natural_chord_length(psi, geo.L)
    spring = 0.5 * ks.k_axial * stretch**2 + 0.5 * ks.k_bend * (
        wrap_angle(f.q.phi - phi_c) ** 2 + wrap_angle(r.q.phi - phi_c) ** 2
    )
    return kinetic + spring


def encoder_read(
    s: SimState, m: SensorModel
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Cumulative tick counts ((front_r, front_l), (rear_r, rear_l)).

    Each read adds fresh Gaussian angle noise before quantization, so the
    count error stays bounded (it never random-walks).  Counts are truncated
    toward zero; with quantize off they stay float.
    """
    scale = m.ticks_per_rev / (2.0 * math.pi)

    def read(angle: float) -> float:
        noisy = angle + (m._rng.gauss(0.0, m.sigma_noise) if m.sigma_noise > 0.0 else 0.0)
        raw = noisy * scale
        return float(math.trunc(raw)) if m.quantize else raw

    return (
        (read(s.front.wheel_r), read(s.front.wheel_l)),
        (read(s.rear.wheel_r), read(s.rear.wheel_l)),
    )


def odometry_update(
    q_odo: Posture,
    dticks: tuple[float, float],
    m: SensorModel,
    geo: FrameGeometry,
    dt: float,
) -> tuple[Posture, BodyVelocity]:
    """Midpoint-arc dead reckoning from per-wheel tick increments.

    ds = r_w (dth_r + dth_l)/2 and dphi = r_w (dth_r - dth_l)/(2 d); the
    translation is taken along the mid-arc heading.  The velocity estimate
    is the increment divided by dt.
    """
    rad_per_tick = 2.0 * math.pi / m.ticks_per_rev
    dth_r = dticks[0] * rad_per_tick
    dth_l = dticks[1] * rad_per_tick
    ds = geo.r_w * (dth_r + dth_l) / 2.0
    dphi = geo.r_w * (dth_r - dth_l) / (2.0 * geo.d)
    mid = q_odo.phi + 0.5 * dphi
    q_new = Posture(
        q_odo.x + ds * math.cos(mid),
        q_odo.y + ds * math.sin(mid),
        wrap_angle(q_odo.phi + dphi),
    )
    return q_new, BodyVelocity(ds / dt, dphi / dt)


@dataclass
class DisturbanceSampler:
    """Bounded disturbance source with zero-order hold.

    Modes: "off" (zeros), "ball" (uniform in the disk of radius tau_d_max),
    "sphere" (uniform direction at full magnitude tau_d_max), "constant"
    (fixed vector, clamped to the bound).  Each axle gets an independent
    draw; samples refresh at rate_hz and are deterministic per seed.
    """

    tau_d_max: float
    mode: str = "ball"
    rate_hz: float = 10.0
    seed: int = 0
    constant: tuple[float, float] = (0.0, 0.0)
    _rng: random.Random = field(init=False, repr=False)
    _next_t: float = field(default=-math.inf, repr=False)
    _held: tuple[tuple[float, float], tuple[float, float]] = field(
        default=((0.0, 0.0), (0.0, 0.0)), repr=False
    )

    def __post_init__(self) -> None:
        if self.mode not in ("off", "ball", "sphere", "constant"):
            raise ValueError(f"unknown disturbance mode {self.mode!r}")
        self._rng = random.Random(self.seed)
        if self.mode == "constant":
            norm = math.hypot(*self.constant)
            if norm > self.tau_d_max and norm > 0.0:
                scale = self.tau_d_max / norm
                self.constant = (self.constant[0] * scale, self.constant[1] * scale)

    def _draw(self) -> tuple[float, float]:
        ang = self._rng.uniform(-math.pi, math.pi)
        if self.mode == "sphere":
            rad = self.tau_d_max
        else:
            rad = self.tau_d_max * math.sqrt(self._rng.random())
        return rad * math.cos(ang), rad * math.sin(ang)

    def sample(self, t: float) -> tuple[tuple[float, float], tuple[float, float]]:
        """Held disturbance pair for time t, refreshed at rate_hz."""
        if self.mode == "off" or self.tau_d_max == 0.0:
            return (0.0, 0.0), (0.0, 0.0)
        if self.mode == "constant":
            return self.constant, self.constant
        if t >= self._next_t:
            self._held = (self._draw(), self._draw())
            period = 1.0 / self.rate_hz
            base = self._next_t if math.isfinite(self._next_t) else t
            self._next_t = base + period
            while self._next_t <= t:
                self._next_t += period
        return self._held


def initial_sim_state(
    center: Posture, deflection: float, geo: FrameGeometry
) -> SimState:
    """Place both axles at rest around a center posture with a pure-bending
    deflection (front heading +deflection, rear -deflection)."""
    half = 0.5 * natural_chord_length(deflection, geo.L)
    c, sn = math.cos(center.phi), math.sin(center.phi)
    q_front = Posture(
        center.x + half * c, center.y + half * sn, wrap_angle(center.phi + deflection)
    )
    q_rear = Posture(
        center.x - half * c, center.y - half * sn, wrap_angle(center.phi - deflection)
    )
    rest = BodyVelocity(0.0, 0.0)
    return SimState(
        t=0.0,
        front=AxleState(q_front, rest, 0.0, 0.0),
        rear=AxleState(q_rear, rest, 0.0, 0.0),
        odo_front=q_front,
        odo_rear=q_rear,
    )
