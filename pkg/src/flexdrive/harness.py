"""Experiment execution: run a configured experiment, write its artifacts.

Every run gets its own directory containing the config snapshot (with
resolved seeds — enough to reproduce the run bit-exactly), the trajectory
CSV, the aligned text report plus its machine-readable twin, and optionally
the trajectory plot.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import loop
from .config import ExperimentConfig, snapshot_config
from .loop import RunResult, StepRecord
from .metrics import (
    MetricsReport,
    format_report,
    format_report_kv,
    metrics_from_records,
    write_csv,
)


@dataclass
class ExperimentArtifacts:
    run_dir: Path
    csv_path: Path
    report: MetricsReport
    result: RunResult


def run_closed_loop(cfg: ExperimentConfig) -> RunResult:
    """Run the configured closed loop (no files written)."""
    cfg.validate()
    return loop.run(
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
        case2_true_velocity=cfg.case2_true_velocity,
        full_rate=cfg.full_rate,
    )


def _initial_record(cfg: ExperimentConfig) -> StepRecord:
    # Zero-duration runs still report their initial errors: build the
    # decision-time snapshot of the very first period without advancing.
    from .cascade import center_from_axles
    from .kinematic import KinematicController
    from .plant import initial_sim_state

    sim = initial_sim_state(cfg.start, cfg.start_deflection, cfg.geometry)
    kin = KinematicController(gains=cfg.kinematic)
    kin.reset(cfg.start, cfg.target)
    err = kin.polar_error(cfg.start)
    center, _, _, _, _ = center_from_axles(
        sim.front.q, sim.rear.q, sim.front.u, sim.rear.u
    )
    zeros = {f: 0.0 for f in StepRecord._fields}
    zeros.update(
        t=0.0,
        x1=sim.front.q.x, y1=sim.front.q.y, phi1=sim.front.q.phi,
        x2=sim.rear.q.x, y2=sim.rear.q.y, phi2=sim.rear.q.phi,
        ox1=sim.front.q.x, oy1=sim.front.q.y, ophi1=sim.front.q.phi,
        ox2=sim.rear.q.x, oy2=sim.rear.q.y, ophi2=sim.rear.q.phi,
        cx=center.x, cy=center.y, cphi=center.phi,
        ocx=center.x, ocy=center.y, ocphi=center.phi,
        kx=cfg.start.x, ky=cfg.start.y, kphi=cfg.start.phi,
        rx=cfg.target.x, ry=cfg.target.y, rphi=cfg.target.phi,
        e=err.e, theta=err.theta, alpha=err.alpha,
        q1r_x=sim.front.q.x, q1r_y=sim.front.q.y, q1r_phi=sim.front.q.phi,
        q2r_x=sim.rear.q.x, q2r_y=sim.rear.q.y, q2r_phi=sim.rear.q.phi,
    )
    return StepRecord(**zeros)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    run_name: str | None = None,
    plot: bool = False,
) -> ExperimentArtifacts:
    """Execute one experiment and write CSV, reports and config snapshot.

    A watchdog abort still writes the partial artifacts; the abort reason is
    appended to the report and exposed on the returned result.
    """
    cfg.validate()
    base = Path(out_dir if out_dir is not None else cfg.out_dir)
    name = run_name or f"case{cfg.case}_seed{cfg.seed}"
    run_dir = base / name
    run_dir.mkdir(parents=True, exist_ok=True)

    result = run_closed_loop(cfg)
    csv_path = run_dir / "trajectory.csv"
    write_csv(result.records, csv_path)
    (run_dir / "config.snapshot").write_text(snapshot_config(cfg))

    if result.records:
        report = metrics_from_records(result.records, cfg.target)
    else:
        report = metrics_from_records([_initial_record(cfg)], cfg.target)
    label = f"case {cfg.case}"
    report_text = format_report({label: report})
    if result.aborted:
        report_text += f"ABORTED: {result.abort_reason}\n"
    (run_dir / "report.txt").write_text(report_text)
    (run_dir / "report.kv").write_text(format_report_kv(report))

    if plot:
        from .plotting import render_plot

        render_plot(
            csv_path,
            run_dir / "trajectory.svg",
            axle_half_length=cfg.geometry.d,
            target=(cfg.target.x, cfg.target.y),
        )

    return ExperimentArtifacts(run_dir, csv_path, report, result)
