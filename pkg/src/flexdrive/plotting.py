"""Trajectory plot: center path solid, wheel paths dashed, target axes dotted.

Output is SVG with a fixed hash salt and no date metadata, so rerunning on
the same input produces byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import read_csv  # noqa: E402

_REQUIRED = ("cx", "cy", "x1", "y1", "phi1", "x2", "y2", "phi2", "rx", "ry")


def _wheel_tracks(rows, d):
    tracks = {k: ([], []) for k in ("1r", "1l", "2r", "2l")}
    for row in rows:
        for axle, key in ((("x1", "y1", "phi1"), "1"), (("x2", "y2", "phi2"), "2")):
            x, y, phi = row[axle[0]], row[axle[1]], row[axle[2]]
            nx, ny = -math.sin(phi), math.cos(phi)
            tracks[key + "l"][0].append(x + d * nx)
            tracks[key + "l"][1].append(y + d * ny)
            tracks[key + "r"][0].append(x - d * nx)
            tracks[key + "r"][1].append(y - d * ny)
    return tracks


def render_plot(
    csv_path: str | Path,
    out_path: str | Path,
    axle_half_length: float = 0.18,
    target: tuple[float, float] = (0.0, 0.0),
) -> Path:
    """Render the trajectory CSV to an SVG file and return its path."""
    rows = read_csv(csv_path)
    missing = [c for c in _REQUIRED if rows and c not in rows[0]]
    if missing:
        raise ValueError(f"trajectory CSV missing columns: {missing}")

    plt.rcParams["svg.hashsalt"] = "flexdrive"
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    if rows:
        ax.plot([r["cx"] for r in rows], [r["cy"] for r in rows],
                "-", color="black", linewidth=1.5, label="midpoint")
        for name, (xs, ys) in _wheel_tracks(rows, axle_half_length).items():
            ax.plot(xs, ys, "--", linewidth=0.6, color="tab:gray",
                    label="wheels" if name == "1r" else None)
    ax.axhline(target[1], linestyle=":", color="tab:blue", linewidth=0.8)
    ax.axvline(target[0], linestyle=":", color="tab:blue", linewidth=0.8)
    ax.set_xlabel("X (m)")
    ax.set_ylabel("Y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    ax.grid(True, linewidth=0.3)
    out = Path(out_path)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
