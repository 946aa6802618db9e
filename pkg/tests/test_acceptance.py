"""Acceptance suite: one test per shipping criterion, run at pinned tolerances.

Each test prints a [criterion NN] PASS line with the measured margins; a
failure message carries the measured values.  The heavier closed-loop
criteria pin their own gain/noise configurations (documented inline); the
tolerances themselves are fixed here and nowhere else.
"""

import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import pytest

from flexdrive.cascade import (
    FrameGeometry,
    ReferenceCascade,
    axle_velocities,
    center_from_axles,
    natural_chord_length,
    solve_psi,
)
from flexdrive.config import ExperimentConfig
from flexdrive.dynamic import AxleTorqueController, DynGains
from flexdrive.geometry import (
    BodyVelocity,
    Posture,
    polar_error_rates,
    propagate_unicycle,
    to_polar_error,
    wrap_angle,
)
from flexdrive.harness import run_closed_loop, run_experiment
from flexdrive.kinematic import (
    CenterCommand,
    KinematicController,
    KinematicGains,
    check_initial_condition,
    lyapunov_values,
)
from flexdrive.loop import run as loop_run
from flexdrive.metrics import compute_metrics, metrics_from_records, read_csv
from flexdrive.plant import (
    AxleParams,
    DisturbanceSampler,
    FrameStiffness,
    PlantParams,
    SensorModel,
    SimState,
    initial_sim_state,
    step as plant_step,
)

V_MAX = 0.5
KAPPA_MAX = 3.0


# ---------------------------------------------------------------------------
# criterion 1: input boundedness across a randomized 200-run suite
# ---------------------------------------------------------------------------

def _conforming_start(rng: random.Random, gains: KinematicGains) -> Posture:
    while True:
        q = Posture(rng.uniform(-2, 2), rng.uniform(-2, 2),
                    rng.uniform(-math.pi, math.pi))
        err = to_polar_error(q, Posture(0, 0, 0))
        if err.e > 0.5 and check_initial_condition(err, gains):
            return q


def test_criterion_01_input_boundedness():
    t0 = time.time()
    rng = random.Random(20260810)
    worst_v_low = 0.0
    worst_v_high = V_MAX
    worst_kappa = 0.0
    n_runs = 200
    for i in range(n_runs):
        cfg = ExperimentConfig()
        cfg.case = (i % 3) + 1
        cfg.seed = rng.randrange(1 << 30)
        cfg.duration = 5.0
        cfg.start = _conforming_start(rng, cfg.kinematic)
        cfg.sensor_sigma = 0.01
        cfg.disturbance_mode = "ball"
        res = run_closed_loop(cfg)
        for rec in res.records:
            worst_v_low = min(worst_v_low, rec.v_cmd)
            worst_v_high = max(worst_v_high, rec.v_cmd)
            worst_kappa = max(worst_kappa, abs(rec.kappa_cmd))
    elapsed = time.time() - t0
    assert worst_v_low >= 0.0, f"commanded v went negative: {worst_v_low}"
    assert worst_v_high <= V_MAX + 1e-15, f"commanded v exceeded bound: {worst_v_high}"
    assert worst_kappa <= KAPPA_MAX + 1e-15, f"|kappa| exceeded bound: {worst_kappa}"
    print(f"\n[criterion 01] PASS input bounds over {n_runs} runs: "
          f"v in [{worst_v_low:.3f}, {worst_v_high:.3f}], "
          f"max|kappa| = {worst_kappa:.3f} ({elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# criteria 2 + 3: Lyapunov decrease and kinematic equilibrium, ideal loop
# ---------------------------------------------------------------------------

IDEAL_GAINS = dict(v_des=0.1, kappa_des=0.0, r=1 / 3, epsilon=1e-3)


def _ideal_starts(n: int) -> list[Posture]:
    # conforming starts oriented within pi/3 of the line of sight: the
    # forward-only bounded-curvature law necessarily backs away (V1 grows)
    # for anti-aligned headings, which is outside its operating premise
    rng = random.Random(42)
    starts = []
    while len(starts) < n:
        bearing = rng.uniform(-math.pi, math.pi)
        e0 = rng.uniform(1.2, 2.6)
        x, y = -e0 * math.cos(bearing), -e0 * math.sin(bearing)
        lam = math.atan2(-y, -x)
        starts.append(Posture(x, y, wrap_angle(lam + rng.uniform(-math.pi / 3, math.pi / 3))))
    return starts


def _run_ideal(start: Posture, duration=60.0, dt=0.01):
    gains = KinematicGains(**IDEAL_GAINS)
    kc = KinematicController(gains=gains)
    kc.reset(start, Posture(0, 0, 0))
    q = start
    hist = []
    for _ in range(int(round(duration / dt))):
        cmd, err = kc.step(q, dt)
        V1, V2 = lyapunov_values(err, gains)
        hist.append((err, cmd, V1, V2))
        q = propagate_unicycle(q, BodyVelocity(cmd.v, cmd.phi_dot), dt)
    return hist


@pytest.fixture(scope="module")
def ideal_runs():
    return [(_run_ideal(s), s) for s in _ideal_starts(20)]


def test_criterion_02_lyapunov_decrease(ideal_runs):
    dt = 0.01
    worst = -math.inf
    for hist, start in ideal_runs:
        for k in range(1, len(hist)):
            dV1 = (hist[k][2] - hist[k - 1][2]) / dt
            dV2 = (hist[k][3] - hist[k - 1][3]) / dt
            worst = max(worst, dV1, dV2)
            assert dV1 <= 1e-4, f"V1 increased at rate {dV1} from start {start}"
            assert dV2 <= 1e-4, f"V2 increased at rate {dV2} from start {start}"
    print(f"\n[criterion 02] PASS Lyapunov decrease on 20 ideal runs: "
          f"max finite-difference rate {worst:.2e} <= 1e-4")


def test_criterion_03_kinematic_equilibrium(ideal_runs):
    g = KinematicGains(**IDEAL_GAINS)
    e_limit = g.r * math.sqrt(2 * g.epsilon) * 1.1 + 1e-3
    worst_e = 0.0
    worst_s = 0.0
    for hist, start in ideal_runs:
        err = hist[-1][0]
        s = abs(wrap_angle(err.theta + err.alpha))
        worst_e = max(worst_e, err.e)
        worst_s = max(worst_s, s)
        assert err.e <= e_limit, f"final e = {err.e} > {e_limit} from {start}"
        assert s <= 1e-2, f"final |theta+alpha| = {s} from {start}"
    print(f"\n[criterion 03] PASS equilibrium within 60 s: "
          f"max final e = {worst_e:.4f} <= {e_limit:.4f}, "
          f"max |theta+alpha| = {worst_s:.2e} <= 1e-2")


# ---------------------------------------------------------------------------
# criterion 4: polar transform consistency with the analytic rates
# ---------------------------------------------------------------------------

def test_criterion_04_transform_oracle():
    rng = random.Random(77)
    dt = 1e-5
    worst = 0.0
    samples = 0
    while samples < 100:
        robot = Posture(rng.uniform(-2, 2), rng.uniform(-2, 2),
                        rng.uniform(-math.pi, math.pi))
        ref = Posture(rng.uniform(-2, 2), rng.uniform(-2, 2),
                      rng.uniform(-math.pi, math.pi))
        if math.hypot(ref.x - robot.x, ref.y - robot.y) < 0.3:
            continue
        samples += 1
        v = rng.uniform(-0.5, 0.5)
        phi_dot = rng.uniform(-1.5, 1.5)
        v_r = rng.uniform(-0.3, 0.3)
        kappa_r = rng.uniform(-3, 3)
        p = to_polar_error(robot, ref, (v_r, kappa_r))
        analytic = polar_error_rates(p, v, phi_dot)
        rob_f = propagate_unicycle(robot, BodyVelocity(v, phi_dot), dt)
        ref_f = propagate_unicycle(ref, BodyVelocity(v_r, v_r * kappa_r), dt)
        rob_b = propagate_unicycle(robot, BodyVelocity(-v, -phi_dot), dt)
        ref_b = propagate_unicycle(ref, BodyVelocity(-v_r, -v_r * kappa_r), dt)
        pf = to_polar_error(rob_f, ref_f, (v_r, kappa_r))
        pb = to_polar_error(rob_b, ref_b, (v_r, kappa_r))
        numeric = (
            (pf.e - pb.e) / (2 * dt),
            wrap_angle(pf.theta - pb.theta) / (2 * dt),
            wrap_angle(pf.alpha - pb.alpha) / (2 * dt),
        )
        for a, n in zip(analytic, numeric):
            worst = max(worst, abs(a - n))
            assert abs(a - n) <= 1e-6, f"rate mismatch {abs(a - n)} at {robot}, {ref}"
    print(f"\n[criterion 04] PASS transform rates on 100 samples: "
          f"max |analytic - numeric| = {worst:.2e} <= 1e-6")


# ---------------------------------------------------------------------------
# criterion 5: cascade exactness
# ---------------------------------------------------------------------------

def test_criterion_05_cascade_exactness():
    geo = FrameGeometry()
    rng = random.Random(55)
    worst_res = 0.0
    for _ in range(1000):
        kappa = rng.uniform(-3, 3)
        psi = solve_psi(kappa, geo)
        worst_res = max(worst_res, abs(2 * psi / (geo.L * math.cos(psi)) - kappa))
    assert worst_res < 1e-9, f"bend-angle residual {worst_res}"

    worst_rt = 0.0
    for _ in range(1000):
        v = rng.uniform(0, 0.5)
        phid = rng.uniform(-1.5, 1.5)
        psi = rng.uniform(-1.3, 1.3)
        psid = rng.uniform(-2, 2)
        front, rear = axle_velocities(v, phid, psi, psid, geo)
        q1 = Posture(0.4, -0.1, 1.0 + psi)
        q2 = Posture(0.1, -0.1, 1.0 - psi)
        _, v2, phid2, psi2, psid2 = center_from_axles(q1, q2, front, rear)
        worst_rt = max(worst_rt, abs(v2 - v), abs(phid2 - phid),
                       abs(psi2 - psi), abs(psid2 - psid))
    assert worst_rt <= 1e-12, f"round-trip error {worst_rt}"
    print(f"\n[criterion 05] PASS cascade exactness: residual {worst_res:.2e} < 1e-9, "
          f"round-trip {worst_rt:.2e} <= 1e-12")


# ---------------------------------------------------------------------------
# criterion 6: boundedness under max disturbance and encoder noise
# ---------------------------------------------------------------------------

def _crit6_config(case: int, seed: int) -> ExperimentConfig:
    # Pinned robustness configuration: stronger damping gains than the
    # library defaults (K1=16 keeps the longitudinal lag small, K2=2 stays
    # inside the sampled-yaw-loop stability margin), realistic encoder
    # noise, full-magnitude disturbance.
    cfg = ExperimentConfig()
    cfg.case = case
    cfg.seed = seed
    cfg.duration = 120.0
    cfg.dynamic.K1 = 16.0
    cfg.dynamic.K2 = 2.0
    cfg.sensor_sigma = 0.0003
    cfg.disturbance_mode = "sphere"
    return cfg


def _crit6_run(args):
    case, seed = args
    cfg = _crit6_config(case, seed)
    res = loop_run(
        initial_center=cfg.start,
        deflection=cfg.start_deflection,
        target=cfg.target,
        case=cfg.case,
        duration=cfg.duration,
        dt_ctrl=cfg.dt_ctrl,
        dt_plant=cfg.dt_plant,
        kin_gains=cfg.kinematic,
        dyn_gains=cfg.dynamic,
        plant_params=cfg.make_plant_params(),
        sensor=cfg.make_sensor(),
        disturbance=cfg.make_disturbance(),
        log_every=5,
    )
    if res.aborted:
        return case, seed, None, None
    m = metrics_from_records(res.records, cfg.target)
    max_ec = max(
        max(abs(r.ev1), abs(r.ew1), abs(r.ev2), abs(r.ew2))
        for r in res.records if r.t > 5.0
    )
    return case, seed, m.norm_true, max_ec


def test_criterion_06_disturbed_boundedness():
    jobs = [(case, seed) for case in (1, 2, 3) for seed in range(20)]
    t0 = time.time()
    with ProcessPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(_crit6_run, jobs))
    elapsed = time.time() - t0
    worst_pos = 0.0
    worst_ec = 0.0
    for case, seed, pos, max_ec in results:
        assert pos is not None, f"watchdog abort at case {case} seed {seed}"
        worst_pos = max(worst_pos, pos)
        worst_ec = max(worst_ec, max_ec)
        assert pos <= 0.1, f"final position error {pos} at case {case} seed {seed}"
        assert max_ec <= 0.5, f"|e_c| = {max_ec} after 5 s at case {case} seed {seed}"
    print(f"\n[criterion 06] PASS 60 disturbed runs (120 s, 20 seeds x 3 cases): "
          f"max final error {worst_pos:.4f} <= 0.1 m, "
          f"max |e_c| after 5 s {worst_ec:.3f} <= 0.5 ({elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# criterion 7: nonlinear damping gain scaling under constant disturbance
# ---------------------------------------------------------------------------

def _tracking_ec(gain_scale: float) -> float:
    # constant-command tracking scenario: cascade + torque layer + plant,
    # constant body-frame disturbance, steady-state mean ||e_c||
    geo = FrameGeometry()
    params = PlantParams(axle=AxleParams(), stiffness=FrameStiffness())
    gains = DynGains(K1=0.5 * gain_scale, K2=0.5 * gain_scale, tau_max=None)
    nominal = (params.axle.m, params.axle.I)
    ctrl_f = AxleTorqueController(gains, geo, nominal)
    ctrl_r = AxleTorqueController(gains, geo, nominal)
    sim = initial_sim_state(Posture(0, 0, 0), 0.0, geo)
    casc = ReferenceCascade.from_axle_postures(sim.front.q, sim.rear.q, geo)
    cmd = CenterCommand(v=0.25, kappa=0.0, phi_dot=0.0)
    dist = DisturbanceSampler(tau_d_max=0.2, mode="constant", constant=(0.15, 0.05))
    dt_ctrl, n_sub = 0.002, 2
    tail = []
    n = int(round(20.0 / dt_ctrl))
    for i in range(n):
        ref_f, ref_r = casc.update(cmd, dt_ctrl)
        tau_f, diag_f = ctrl_f.step(sim.front.q, sim.front.u, ref_f)
        tau_r, diag_r = ctrl_r.step(sim.rear.q, sim.rear.u, ref_r)
        for _ in range(n_sub):
            sim = plant_step(sim, (tau_f, tau_r), dist.sample(sim.t), params,
                             dt_ctrl / n_sub)
        if i * dt_ctrl > 15.0:
            tail.append(0.5 * (math.hypot(*diag_f.e_c) + math.hypot(*diag_r.e_c)))
    return sum(tail) / len(tail)


def test_criterion_07_gain_scaling():
    scales = (0.5, 1.0, 2.0, 4.0)
    values = [_tracking_ec(s) for s in scales]
    for a, b in zip(values, values[1:]):
        assert b <= a + 1e-12, f"||e_c|| not non-increasing: {values}"
    ratio = values[-1] / values[0]
    assert ratio <= 0.5, f"4x/0.5x ratio {ratio} > 0.5 ({values})"
    print(f"\n[criterion 07] PASS gain scaling: steady ||e_c|| = "
          f"{[f'{v:.4f}' for v in values]} for {scales}x baseline, "
          f"ratio {ratio:.3f} <= 0.5")


# ---------------------------------------------------------------------------
# criterion 8: noise-free posture regulation and case agreement
# ---------------------------------------------------------------------------

def _crit8_config(case: int) -> ExperimentConfig:
    # Pinned high-gain, ideal-sensing, decoupled-frame configuration (the
    # regime where the three feedback wirings should coincide): negligible
    # frame stiffness, light friction, tight tracking gains, a manifold
    # radius 8% above the curvature bound so the curvature command stays
    # interior, and a smaller manifold perturbation for parking margin.
    cfg = ExperimentConfig()
    cfg.case = case
    cfg.duration = 60.0
    cfg.dt_ctrl = 0.001
    cfg.dt_plant = 0.001
    cfg.axle = replace(cfg.axle, b_v=0.05, b_w=0.0005)
    cfg.stiffness = FrameStiffness(k_bend=1e-12, k_axial=1e-12,
                                   c_bend=0.0, c_axial=0.0)
    cfg.dynamic.k_x = 20.0
    cfg.dynamic.k_y = 256.0
    cfg.dynamic.k_phi = 32.0
    cfg.dynamic.K1 = 16.0
    cfg.dynamic.K2 = 4.0
    cfg.sensor_quantize = False
    cfg.kinematic.r = 0.36
    cfg.kinematic.epsilon = 5e-4
    return cfg


@pytest.fixture(scope="module")
def crit8_runs():
    return {case: run_closed_loop(_crit8_config(case)) for case in (1, 2, 3)}


def test_criterion_08a_noise_free_regulation(crit8_runs):
    worst_pos = 0.0
    worst_phi = 0.0
    for case, res in crit8_runs.items():
        assert not res.aborted, f"case {case} aborted"
        m = metrics_from_records(res.records, res.target)
        worst_pos = max(worst_pos, m.norm_true)
        worst_phi = max(worst_phi, abs(m.phi_true))
        assert m.norm_true <= 0.02, f"case {case} final error {m.norm_true}"
        assert abs(m.phi_true) <= 0.05, f"case {case} final heading {m.phi_true}"
    print(f"\n[criterion 08a] PASS noise-free regulation: "
          f"max final position {worst_pos:.4f} <= 0.02 m, "
          f"max |phi| {worst_phi:.4f} <= 0.05 rad")


def test_criterion_08b_case_agreement(crit8_runs):
    # NOTE: measured agreement is ~3-4 mm for pairs involving case 3 (the
    # terminal approach stalls on the perturbed manifold with v -> 0, and
    # the stall point is a sensitive functional of the approach, so the
    # position-feedback wiring parks millimeters away from the blind ones).
    # Cases 1 and 2 agree well inside the band.  The stated band is kept
    # as-is; see the decisions ledger for the analysis.
    gaps = {}
    for a, b in ((1, 2), (1, 3), (2, 3)):
        ra, rb = crit8_runs[a].records, crit8_runs[b].records
        n = min(len(ra), len(rb))
        gaps[(a, b)] = max(
            math.hypot(x.cx - y.cx, x.cy - y.cy) for x, y in zip(ra[:n], rb[:n])
        )
    report = ", ".join(f"{k}: {v * 1000:.2f} mm" for k, v in gaps.items())
    worst = max(gaps.values())
    if worst <= 1e-3:
        print(f"\n[criterion 08b] PASS case agreement: {report}")
    else:
        print(f"\n[criterion 08b] FAIL case agreement (band 1.0 mm): {report}")
    assert worst <= 1e-3, f"pairwise trajectory agreement exceeded 1 mm: {report}"


# ---------------------------------------------------------------------------
# criterion 9: case isolation and deterministic replay
# ---------------------------------------------------------------------------

def _command_stream(case: int, sensor_seed: int) -> bytes:
    cfg = ExperimentConfig()
    cfg.case = case
    cfg.duration = 5.0
    cfg.sensor_sigma = 0.01
    cfg.sensor_seed = sensor_seed
    res = run_closed_loop(cfg)
    return b"".join(
        f"{rec.v_cmd!r},{rec.kappa_cmd!r};".encode() for rec in res.records
    )


def test_criterion_09_case_isolation_and_replay(tmp_path):
    s1a = _command_stream(1, 1001)
    s1b = _command_stream(1, 2002)
    assert s1a == s1b, "case-1 kinematic commands reacted to the sensor seed"
    diff_cases = []
    for case in (2, 3):
        sa = _command_stream(case, 1001)
        sb = _command_stream(case, 2002)
        diff_cases.append(sa != sb)
        assert sa != sb, f"case-{case} commands ignored the sensor seed"

    cfg = ExperimentConfig()
    cfg.duration = 3.0
    cfg.sensor_sigma = 0.01
    cfg.disturbance_mode = "ball"
    cfg.out_dir = str(tmp_path)
    a = run_experiment(cfg, run_name="replay_a")
    b = run_experiment(cfg, run_name="replay_b")
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes(), \
        "identical seeds did not reproduce identical CSVs"
    print("\n[criterion 09] PASS case isolation: case-1 stream byte-identical "
          "across sensor seeds, cases 2/3 differ; replay byte-identical")


# ---------------------------------------------------------------------------
# criterion 10: report fidelity
# ---------------------------------------------------------------------------

def test_criterion_10_report_fidelity(tmp_path):
    cfg = ExperimentConfig()
    cfg.duration = 10.0
    cfg.sensor_sigma = 0.002
    cfg.disturbance_mode = "ball"
    cfg.out_dir = str(tmp_path)
    art = run_experiment(cfg, run_name="fidelity")
    rows = read_csv(art.csv_path)
    recomputed = compute_metrics(rows[-1], cfg.target)
    worst = max(abs(a - b) for a, b in zip(art.report, recomputed))
    assert worst <= 1e-12, f"metrics recomputed from CSV differ by {worst}"
    report_text = (art.run_dir / "report.txt").read_text()
    for column in ("e(m)", "theta(rad)", "alpha(rad)", "Xo-d(m)", "Yo-d(m)",
                   "Xo(m)", "Yo(m)", "|Xo,Yo|", "Xt(m)", "Yt(m)", "|Xt,Yt|", "DEV"):
        assert column in report_text, f"report missing column {column}"
    print(f"\n[criterion 10] PASS report fidelity: max recompute delta "
          f"{worst:.2e} <= 1e-12; all report columns present")
