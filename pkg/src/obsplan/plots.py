"""Static SVG plots drawn from a run manifest's CSV/JSON files.

No display server is used (Agg backend) and output is deterministic: SVG ids
are salted with a fixed string and no timestamps are embedded.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402

from .errors import FormatError  # noqa: E402
from .experiment import RunManifest  # noqa: E402

__all__ = ["emit_plots"]

plt.rcParams["svg.hashsalt"] = "obsplan"
_SAVE = {"format": "svg", "metadata": {"Date": None}}


def _read_csv(path, required):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FormatError(f"{path} has no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise FormatError(f"{path} is missing column(s) {missing}")
    return rows


def _error_vs_time(kfrun_csv, out_svg):
    rows = _read_csv(kfrun_csv, ["step", "time", "trace_sigma", "recon_mse"])
    t = np.array([float(r["time"]) for r in rows])
    trace = np.array([float(r["trace_sigma"]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, trace, label="tr covariance (prior)")
    if rows[0]["recon_mse"] != "":
        mse = np.array([float(r["recon_mse"]) for r in rows])
        ax.plot(t, mse, label="reconstruction MSE")
    ax.set_xlabel("time")
    ax.set_ylabel("error")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("estimation error vs time")
    fig.tight_layout()
    fig.savefig(out_svg, **_SAVE)
    plt.close(fig)


def _limiting(vals):
    # median of the last quarter: a robust "steady state" summary
    tail = vals[3 * len(vals) // 4:]
    return float(np.median(tail)) if len(tail) else float("nan")


def _sweep_plot(sweep_csv, axes, out_svg):
    rows = _read_csv(sweep_csv, ["point", "step", "time", "trace_sigma"])
    x_axis = axes[0]
    if x_axis not in rows[0]:
        raise FormatError(f"{sweep_csv} is missing sweep column {x_axis!r}")
    by_point = {}
    for r in rows:
        by_point.setdefault(r["point"], []).append(r)
    series = {}  # label(other axes) -> [(x, limiting trace)]
    for rows_p in by_point.values():
        x = float(rows_p[0][x_axis])
        label = ",".join(f"{a}={rows_p[0][a]}" for a in axes[1:]) or "trace"
        lim = _limiting([float(r["trace_sigma"]) for r in rows_p])
        series.setdefault(label, []).append((x, lim))
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel(x_axis)
    ax.set_ylabel("limiting tr covariance")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title(f"limiting error vs {x_axis}")
    fig.tight_layout()
    fig.savefig(out_svg, **_SAVE)
    plt.close(fig)


def _trajectory_overlay(traj_csv, run_json, out_svg):
    rows = _read_csv(traj_csv, ["t", "sensor_id", "index"])
    with open(run_json) as fh:
        info = json.load(fh)
    geom = info.get("geometry", {})
    coord_cols = [c for c in rows[0] if c.startswith("coord")]
    fig, ax = plt.subplots(figsize=(6, 6))
    # background: the geometry's nodes
    if geom.get("kind") == "grid2d":
        rr, cc = np.mgrid[0:geom["rows"], 0:geom["cols"]]
        ax.scatter(cc.ravel(), rr.ravel(), s=4, c="#cccccc", zorder=0)
    elif geom.get("kind") == "graph" and "coords" in geom:
        coords = np.asarray(geom["coords"], dtype=float)
        ax.scatter(coords[:, -1], coords[:, 0], s=6, c="#99bbdd", zorder=0)

    def xy(row):
        if len(coord_cols) >= 2:
            return float(row["coord1"]), float(row["coord0"])
        if coord_cols:
            return float(row["coord0"]), 0.0
        return float(row["index"]), 0.0

    sensors = sorted({r["sensor_id"] for r in rows}, key=int)
    cmap = plt.get_cmap("tab10")
    for s in sensors:
        srows = sorted((r for r in rows if r["sensor_id"] == s),
                       key=lambda r: int(r["t"]))
        pts = [xy(r) for r in srows]
        color = cmap(int(s) % 10)
        ax.scatter(*zip(*pts), s=30, color=color, label=f"sensor {s}", zorder=2)
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            ax.annotate("", xy=(x1, y1), xytext=(x0, y0), zorder=1,
                        arrowprops={"arrowstyle": "->", "color": color, "lw": 1.2})
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    ax.invert_yaxis()
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    ax.set_title("planned trajectory")
    fig.tight_layout()
    fig.savefig(out_svg, **_SAVE)
    plt.close(fig)


def emit_plots(manifest_path):
    """Render every plot the manifest's files support; returns written paths.

    Per run directory: an error-vs-time curve from ``kfrun.csv`` and a
    trajectory overlay from ``trajectory.csv`` + ``run.json``; for sweeps a
    combined log-log limiting-error plot from ``sweep.csv``.
    """
    manifest = RunManifest.load(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    written = []
    for rel in sorted(manifest.files):
        full = os.path.join(base, rel)
        name = os.path.basename(rel)
        if name == "kfrun.csv":
            out = os.path.join(os.path.dirname(full), "error_vs_time.svg")
            _error_vs_time(full, out)
            written.append(out)
        elif name == "trajectory.csv":
            run_json = os.path.join(os.path.dirname(full), "run.json")
            if os.path.exists(run_json):
                out = os.path.join(os.path.dirname(full), "trajectory_overlay.svg")
                _trajectory_overlay(full, run_json, out)
                written.append(out)
        elif name == "sweep.csv":
            axes = [ax["key"] for ax in manifest.config.get("sweep", [])]
            if axes:
                out = os.path.join(os.path.dirname(full), "sweep_trace.svg")
                _sweep_plot(full, axes, out)
                written.append(out)
    return written
