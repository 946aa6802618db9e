"""Closed-loop wiring of kinematic controller, cascade, torque controllers
and plant under the three feedback structures.

Case 1 drives the kinematic layer from its own ideal unicycle state; plant
feedback reaches only the torque layer.  Case 2 additionally propagates the
kinematic layer's internal posture with the measured center velocity.  Case 3
feeds the odometric center posture straight into the kinematic layer, which
keeps using its own commanded velocities.  In every case the torque
controllers close on odometric per-axle estimates while the plant advances
with true physics at sub-steps of the controller period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .cascade import ReferenceCascade, center_from_axles
from .dynamic import AxleTorqueController, DynGains
from .geometry import BodyVelocity, Posture, propagate_unicycle
from .kinematic import KinematicController, KinematicGains, lyapunov_values
from .plant import (
    DisturbanceSampler,
    PlantParams,
    SensorModel,
    SimState,
    encoder_read,
    frame_force,
    initial_sim_state,
    odometry_update,
    step as plant_step,
)

CASES = (1, 2, 3)

# Any logged magnitude beyond this aborts the run as divergent.
WATCHDOG_LIMIT = 1e3

# Slew limit on the commanded center speed (m/s^2).  The raw control law is
# discontinuous across its denominator-guard boundary; near anti-aligned
# headings it can chatter between branches, and unlimited speed-command
# steps slam the torque layer.  Real drivetrains rate-limit anyway.
V_CMD_SLEW = 1.0


class StepRecord(NamedTuple):
    """One controller period: decision-time snapshot, commands, diagnostics."""

    t: float
    x1: float; y1: float; phi1: float; v1: float; w1: float
    x2: float; y2: float; phi2: float; v2: float; w2: float
    ox1: float; oy1: float; ophi1: float
    ox2: float; oy2: float; ophi2: float
    cx: float; cy: float; cphi: float
    ocx: float; ocy: float; ocphi: float
    kx: float; ky: float; kphi: float
    rx: float; ry: float; rphi: float
    e: float; theta: float; alpha: float
    v_cmd: float; kappa_cmd: float; phidot_cmd: float
    psi: float; psi_dot: float
    q1r_x: float; q1r_y: float; q1r_phi: float; v1r: float; w1r: float
    q2r_x: float; q2r_y: float; q2r_phi: float; v2r: float; w2r: float
    ev1: float; ew1: float; ev2: float; ew2: float
    tau_r1: float; tau_l1: float; tau_r2: float; tau_l2: float
    xi1: float; xi2: float
    V1: float; V2: float
    sat_v: int; sat_kappa: int; den_guard: int; escape: int


class RunResult(NamedTuple):
    records: list[StepRecord]
    aborted: bool
    abort_reason: str | None
    target: Posture
    case: int


@dataclass
class LoopState:
    """Mutable state owned by one closed-loop run."""

    case: int
    kinematic: KinematicController
    cascade: ReferenceCascade
    ctrl_front: AxleTorqueController
    ctrl_rear: AxleTorqueController
    sim: SimState
    q_kin: Posture
    u_odo_front: BodyVelocity
    u_odo_rear: BodyVelocity
    prev_counts: tuple[tuple[float, float], tuple[float, float]]
    f_k_meas: tuple[tuple[float, float], tuple[float, float]]
    meas_center_vel: BodyVelocity
    prev_v_cmd: float = 0.0
    steps: int = 0
    last_cmd: object = None


def _record_ok(rec: StepRecord) -> bool:
    for v in rec:
        if not math.isfinite(v) or abs(v) > WATCHDOG_LIMIT:
            return False
    return True


def _state_ok(sim: SimState, cmd) -> bool:
    # Cheap per-step divergence check on the raw plant state and commands.
    f, r = sim.front, sim.rear
    total = (
        abs(f.q.x) + abs(f.q.y) + abs(f.u.v) + abs(f.u.omega)
        + abs(r.q.x) + abs(r.q.y) + abs(r.u.v) + abs(r.u.omega)
        + abs(cmd.v) + abs(cmd.kappa)
    )
    return math.isfinite(total) and total <= 10.0 * WATCHDOG_LIMIT and (
        max(
            abs(f.q.x), abs(f.q.y), abs(f.u.v), abs(f.u.omega),
            abs(r.q.x), abs(r.q.y), abs(r.u.v), abs(r.u.omega),
        )
        <= WATCHDOG_LIMIT
    )


def make_loop_state(
    initial_center: Posture,
    deflection: float,
    target: Posture,
    case: int,
    kin_gains: KinematicGains,
    dyn_gains: DynGains,
    plant_params: PlantParams,
) -> LoopState:
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}, got {case}")
    geo = plant_params.axle.geo
    sim = initial_sim_state(initial_center, deflection, geo)
    kin = KinematicController(gains=kin_gains)
    kin.reset(initial_center, target)
    nominal = (plant_params.axle.m, plant_params.axle.I)
    return LoopState(
        case=case,
        kinematic=kin,
        cascade=ReferenceCascade.from_axle_postures(sim.front.q, sim.rear.q, geo),
        ctrl_front=AxleTorqueController(dyn_gains, geo, nominal),
        ctrl_rear=AxleTorqueController(dyn_gains, geo, nominal),
        sim=sim,
        q_kin=initial_center,
        u_odo_front=BodyVelocity(0.0, 0.0),
        u_odo_rear=BodyVelocity(0.0, 0.0),
        prev_counts=((0.0, 0.0), (0.0, 0.0)),
        f_k_meas=((0.0, 0.0), (0.0, 0.0)),
        meas_center_vel=BodyVelocity(0.0, 0.0),
    )


def loop_step(
    ls: LoopState,
    dt_ctrl: float,
    n_sub: int,
    plant_params: PlantParams,
    sensor: SensorModel,
    disturbance: DisturbanceSampler,
    case2_true_velocity: bool = False,
    substep_records: list | None = None,
    build_record: bool = True,
) -> StepRecord | None:
    """Advance the closed loop by one controller period and return the log row
    (None when record building is skipped for this step)."""
    sim = ls.sim
    dt_plant = dt_ctrl / n_sub

    oc, _, _, _, _ = center_from_axles(
        sim.odo_front, sim.odo_rear, ls.u_odo_front, ls.u_odo_rear
    )
    if ls.case == 3:
        ls.q_kin = oc

    cmd, err = ls.kinematic.step(ls.q_kin, dt_ctrl)
    dv = V_CMD_SLEW * dt_ctrl
    v_eff = min(max(cmd.v, ls.prev_v_cmd - dv), ls.prev_v_cmd + dv)
    ls.prev_v_cmd = v_eff
    cmd = cmd._replace(v=v_eff, phi_dot=v_eff * cmd.kappa)
    ref_front, ref_rear = ls.cascade.update(cmd, dt_ctrl)

    tau_front, diag_front = ls.ctrl_front.step(
        sim.odo_front, ls.u_odo_front, ref_front, ls.f_k_meas[0]
    )
    tau_rear, diag_rear = ls.ctrl_rear.step(
        sim.odo_rear, ls.u_odo_rear, ref_rear, ls.f_k_meas[1]
    )

    for k in range(n_sub):
        dist = disturbance.sample(sim.t)
        sim = plant_step(sim, (tau_front, tau_rear), dist, plant_params, dt_plant)
        if substep_records is not None and k < n_sub - 1:
            substep_records.append((sim.t, sim))

    counts = encoder_read(sim, sensor)
    d_front = (counts[0][0] - ls.prev_counts[0][0], counts[0][1] - ls.prev_counts[0][1])
    d_rear = (counts[1][0] - ls.prev_counts[1][0], counts[1][1] - ls.prev_counts[1][1])
    ls.prev_counts = counts
    geo = plant_params.axle.geo
    odo_front, ls.u_odo_front = odometry_update(
        sim.odo_front, d_front, sensor, geo, dt_ctrl
    )
    odo_rear, ls.u_odo_rear = odometry_update(
        sim.odo_rear, d_rear, sensor, geo, dt_ctrl
    )
    sim = sim._replace(odo_front=odo_front, odo_rear=odo_rear)

    ks = plant_params.stiffness
    if ks.k_axial > 0.0 or ks.k_bend > 0.0:
        ls.f_k_meas = frame_force(
            sim.front.q, sim.rear.q, sim.front.u, sim.rear.u, ks, geo
        )
    _, v_meas, w_meas, _, _ = center_from_axles(
        odo_front, odo_rear, ls.u_odo_front, ls.u_odo_rear
    )
    if case2_true_velocity:
        _, v_meas, w_meas, _, _ = center_from_axles(
            sim.front.q, sim.rear.q, sim.front.u, sim.rear.u
        )
    ls.meas_center_vel = BodyVelocity(v_meas, w_meas)

    if ls.case == 1:
        ls.q_kin = propagate_unicycle(
            ls.q_kin, BodyVelocity(cmd.v, cmd.phi_dot), dt_ctrl
        )
    elif ls.case == 2:
        ls.q_kin = propagate_unicycle(ls.q_kin, ls.meas_center_vel, dt_ctrl)

    old = ls.sim
    ls.sim = sim
    ls.last_cmd = cmd
    ls.steps += 1
    if not build_record:
        return None

    tc, _, _, _, _ = center_from_axles(old.front.q, old.rear.q, old.front.u, old.rear.u)
    ocn, _, _, _, _ = center_from_axles(odo_front, odo_rear, ls.u_odo_front, ls.u_odo_rear)
    V1, V2 = lyapunov_values(err, ls.kinematic.gains)
    t_rec = (ls.steps - 1) * dt_ctrl
    return StepRecord(
        t_rec,
        old.front.q.x, old.front.q.y, old.front.q.phi,
        old.front.u.v, old.front.u.omega,
        old.rear.q.x, old.rear.q.y, old.rear.q.phi,
        old.rear.u.v, old.rear.u.omega,
        old.odo_front.x, old.odo_front.y, old.odo_front.phi,
        old.odo_rear.x, old.odo_rear.y, old.odo_rear.phi,
        0.5 * (old.front.q.x + old.rear.q.x),
        0.5 * (old.front.q.y + old.rear.q.y),
        tc.phi,
        0.5 * (old.odo_front.x + old.odo_rear.x),
        0.5 * (old.odo_front.y + old.odo_rear.y),
        ocn.phi,
        ls.q_kin.x, ls.q_kin.y, ls.q_kin.phi,
        ls.kinematic.reference.x, ls.kinematic.reference.y,
        ls.kinematic.reference.phi,
        err.e, err.theta, err.alpha,
        cmd.v, cmd.kappa, cmd.phi_dot,
        ls.cascade.psi, ls.cascade.psi_dot,
        ref_front.q_r.x, ref_front.q_r.y, ref_front.q_r.phi,
        ref_front.v_r, ref_front.omega_r,
        ref_rear.q_r.x, ref_rear.q_r.y, ref_rear.q_r.phi,
        ref_rear.v_r, ref_rear.omega_r,
        diag_front.e_c[0], diag_front.e_c[1],
        diag_rear.e_c[0], diag_rear.e_c[1],
        tau_front.tau_r, tau_front.tau_l,
        tau_rear.tau_r, tau_rear.tau_l,
        diag_front.xi_norm, diag_rear.xi_norm,
        V1, V2,
        int(cmd.v_saturated), int(cmd.kappa_saturated),
        int(cmd.den_guarded), int(ls.kinematic.escape_active),
    )


def _substep_row(base: StepRecord, t: float, sim: SimState) -> StepRecord:
    tc, _, _, _, _ = center_from_axles(sim.front.q, sim.rear.q, sim.front.u, sim.rear.u)
    return base._replace(
        t=t,
        x1=sim.front.q.x, y1=sim.front.q.y, phi1=sim.front.q.phi,
        v1=sim.front.u.v, w1=sim.front.u.omega,
        x2=sim.rear.q.x, y2=sim.rear.q.y, phi2=sim.rear.q.phi,
        v2=sim.rear.u.v, w2=sim.rear.u.omega,
        cx=0.5 * (sim.front.q.x + sim.rear.q.x),
        cy=0.5 * (sim.front.q.y + sim.rear.q.y),
        cphi=tc.phi,
    )


def run(
    initial_center: Posture,
    deflection: float,
    target: Posture,
    case: int,
    duration: float,
    dt_ctrl: float,
    dt_plant: float,
    kin_gains: KinematicGains,
    dyn_gains: DynGains,
    plant_params: PlantParams,
    sensor: SensorModel,
    disturbance: DisturbanceSampler,
    case2_true_velocity: bool = False,
    full_rate: bool = False,
    log_every: int = 1,
) -> RunResult:
    """Run one closed-loop experiment and collect per-period records.

    Aborts with a diagnostic when the plant state leaves the watchdog
    envelope (divergence) and reports the partial log.  log_every > 1 logs
    every N-th controller period (the final period is always logged);
    full_rate additionally logs every plant sub-step.
    """
    if duration < 0.0:
        raise ValueError("duration must be >= 0")
    n_sub = round(dt_ctrl / dt_plant)
    if n_sub < 1 or abs(n_sub * dt_plant - dt_ctrl) > 1e-9 * dt_ctrl:
        raise ValueError("dt_ctrl must be a positive multiple of dt_plant")
    if log_every < 1:
        raise ValueError("log_every must be >= 1")
    plant_params.validate()
    dyn_gains.validate()

    ls = make_loop_state(
        initial_center, deflection, target, case, kin_gains, dyn_gains, plant_params
    )
    n_periods = round(duration / dt_ctrl)
    records: list[StepRecord] = []
    for i in range(n_periods):
        build = full_rate or (i % log_every == 0) or (i == n_periods - 1)
        subrows: list | None = [] if (full_rate and n_sub > 1) else None
        rec = loop_step(
            ls, dt_ctrl, n_sub, plant_params, sensor, disturbance,
            case2_true_velocity, substep_records=subrows, build_record=build,
        )
        if rec is not None:
            records.append(rec)
            if subrows:
                records.extend(_substep_row(rec, t, sim) for t, sim in subrows)
            if not _record_ok(rec):
                return RunResult(
                    records, True,
                    f"watchdog: state left envelope at t={rec.t:.3f}", target, case,
                )
        elif not _state_ok(ls.sim, ls.last_cmd):
            return RunResult(
                records, True,
                f"watchdog: state left envelope at t={ls.steps * dt_ctrl:.3f}",
                target, case,
            )
    return RunResult(records, False, None, target, case)
