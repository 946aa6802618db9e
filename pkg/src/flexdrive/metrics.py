"""Final-error metrics, trajectory CSV I/O and report formatting.

The report mirrors the usual posture-regulation error table: kinematic-layer
errors (e, theta, alpha), dynamic-layer errors relative to the kinematic
reference (Xo-d, Yo-d), odometric final position error (Xo, Yo and norm), the
true final position error standing in for externally measured values, and
DEV, the radial distance between odometric and true final positions.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .geometry import Posture, wrap_angle
from .loop import StepRecord

CSV_COLUMNS: tuple[str, ...] = StepRecord._fields


class MetricsReport(NamedTuple):
    e: float
    theta: float
    alpha: float
    xo_d: float
    yo_d: float
    xo: float
    yo: float
    norm_odo: float
    xt: float
    yt: float
    norm_true: float
    phi_true: float
    dev: float


def write_csv(records: Sequence[StepRecord], path: str | Path) -> None:
    """Write the trajectory log with the fixed documented column set.

    Floats are rendered with repr (shortest round-trip), which makes reruns
    byte-identical for identical seeds.
    """
    p = Path(path)
    tmp = p.with_suffix(p.suffix + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(",".join(repr(v) for v in rec) + "\n")
    tmp.replace(p)


def read_csv(path: str | Path) -> list[dict[str, float]]:
    """Read a trajectory CSV back into per-row dicts, checking the schema."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"trajectory CSV missing columns: {missing}")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            values = line.strip().split(",")
            rows.append({k: float(v) for k, v in zip(header, values)})
    return rows


def compute_metrics(final: Mapping[str, float], target: Posture) -> MetricsReport:
    """Metrics from the final log record per the report column semantics."""
    if not final:
        raise ValueError("cannot compute metrics from an empty log")
    ref_cx = 0.5 * (final["q1r_x"] + final["q2r_x"])
    ref_cy = 0.5 * (final["q1r_y"] + final["q2r_y"])
    xo = final["ocx"] - target.x
    yo = final["ocy"] - target.y
    xt = final["cx"] - target.x
    yt = final["cy"] - target.y
    return MetricsReport(
        e=final["e"],
        theta=final["theta"],
        alpha=final["alpha"],
        xo_d=final["ocx"] - ref_cx,
        yo_d=final["ocy"] - ref_cy,
        xo=xo,
        yo=yo,
        norm_odo=math.hypot(xo, yo),
        xt=xt,
        yt=yt,
        norm_true=math.hypot(xt, yt),
        phi_true=wrap_angle(final["cphi"] - target.phi),
        dev=math.hypot(final["ocx"] - final["cx"], final["ocy"] - final["cy"]),
    )


def metrics_from_records(
    records: Sequence[StepRecord], target: Posture
) -> MetricsReport:
    if not records:
        raise ValueError("cannot compute metrics from an empty log")
    return compute_metrics(records[-1]._asdict(), target)


_REPORT_COLUMNS = (
    ("e(m)", "e"),
    ("theta(rad)", "theta"),
    ("alpha(rad)", "alpha"),
    ("Xo-d(m)", "xo_d"),
    ("Yo-d(m)", "yo_d"),
    ("Xo(m)", "xo"),
    ("Yo(m)", "yo"),
    ("|Xo,Yo|", "norm_odo"),
    ("Xt(m)", "xt"),
    ("Yt(m)", "yt"),
    ("|Xt,Yt|", "norm_true"),
    ("DEV", "dev"),
)


def format_report(reports: Mapping[str, MetricsReport]) -> str:
    """Aligned text table, one row per labeled run (e.g. per case)."""
    headers = ["run"] + [h for h, _ in _REPORT_COLUMNS]
    rows = []
    for label, rep in reports.items():
        rows.append([label] + [f"{getattr(rep, attr):+.4f}" for _, attr in _REPORT_COLUMNS])
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for r in rows:
        out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(out) + "\n"


def format_report_kv(report: MetricsReport) -> str:
    """Machine-readable key-value twin of the report."""
    lines = [f"{name} = {value!r}" for name, value in report._asdict().items()]
    return "\n".join(lines) + "\n"
