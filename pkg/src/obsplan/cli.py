"""Command-line experiment runner.

Subcommands
-----------
``plan``     plan a trajectory from a config and write it (no filtering)
``filter``   full single run: build/fit, plan, filter, write outputs
``sweep``    run every sweep grid point and the combined CSV
``plot``     render SVG plots from a manifest
``verify``   re-hash the files a manifest lists
``fixtures`` write desk-scale example configs and a tiny gridded dataset

Exit codes: 0 success; 1 verification mismatch; 2 configuration or file
format error; 3 numerical failure; 4 infeasible plan.  ``OBSPLAN_OUTPUT_DIR``
overrides the config's output directory, ``OBSPLAN_WORKERS`` the sweep pool
width.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import load_config
from .errors import (ConfigError, FormatError, InfeasiblePlanError,
                     NumericalError, ObsplanError)

__all__ = ["main"]


def _cmd_plan(args):
    from .experiment import _build  # local import keeps startup light
    from .geometry import MotionConstraint
    from .observability import assemble, condition_number, is_observable
    from .planner import PlanConfig, plan

    cfg = load_config(args.config)
    outdir = os.environ.get("OBSPLAN_OUTPUT_DIR") or args.outputs or cfg.outputs
    os.makedirs(outdir, exist_ok=True)
    model, geom, _truth, _steps, _meta = _build(cfg)
    if cfg.mode["kind"] == "stationary":
        pcfg, mc = PlanConfig(k=cfg.sensors, period_l=1), MotionConstraint(float("inf"))
    else:
        pcfg = PlanConfig(k=cfg.sensors, period_l=cfg.mode["period"])
        mc = MotionConstraint(cfg.mode["speed"])
    traj = plan(model, geom, mc, pcfg)
    traj.save(os.path.join(outdir, "trajectory.json"))
    traj.to_csv(os.path.join(outdir, "trajectory.csv"), geometry=geom)
    cond = condition_number(assemble(model, traj))
    rank = is_observable(model, traj)
    print(f"planned {traj.k} sensor(s) x {traj.period_l} step(s): "
          f"condition number {cond:.6g}, rank {rank.rank}/{rank.required}")
    print(f"wrote {outdir}/trajectory.json and trajectory.csv")
    return 0


def _cmd_filter(args):
    from .experiment import run_experiment

    cfg = load_config(args.config)
    if cfg.sweep:
        raise ConfigError("config declares a sweep; use the sweep subcommand")
    manifest = run_experiment(cfg, outdir=args.outputs)
    print(f"run complete: {len(manifest.files)} files in {manifest.outputs}")
    print(f"manifest: {os.path.join(manifest.outputs, 'manifest.json')}")
    return 0


def _cmd_sweep(args):
    from .experiment import run_experiment

    cfg = load_config(args.config)
    if not cfg.sweep:
        raise ConfigError("config declares no sweep axes; use the filter subcommand")
    manifest = run_experiment(cfg, workers=args.workers, outdir=args.outputs)
    ok = sum(1 for p in manifest.points if p["ok"])
    print(f"sweep complete: {ok}/{len(manifest.points)} points succeeded, "
          f"{len(manifest.files)} files in {manifest.outputs}")
    for p in manifest.points:
        if not p["ok"]:
            print(f"  FAILED {p['key']}: {p['error']}", file=sys.stderr)
    print(f"manifest: {os.path.join(manifest.outputs, 'manifest.json')}")
    return 0


def _manifest_path(arg):
    return os.path.join(arg, "manifest.json") if os.path.isdir(arg) else arg


def _cmd_plot(args):
    from .plots import emit_plots

    written = emit_plots(_manifest_path(args.manifest))
    for path in written:
        print(f"wrote {path}")
    if not written:
        print("nothing to plot", file=sys.stderr)
    return 0


def _cmd_verify(args):
    from .experiment import verify_manifest

    problems = verify_manifest(_manifest_path(args.manifest))
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print("all files match their recorded hashes")
    return 0


_FIXTURE_TORUS = """\
# Desk-scale oscillating torus field, known model, one fast mobile sensor.
scenario:
  kind: torus
  rows: 32
  cols: 32
  n_fourier: 2
  n_gauss: 3
  gauss_width: 2.5
  freq_range: [0.05, 0.3]
  damp_range: [-0.01, -0.002]
model:
  kind: known
sensors: 1
mode:
  kind: mobile
  speed: 8
  period: 12
noise:
  q: 0.05
  rho: 0.002
steps: 200
seed: 1
outputs: runs/torus
"""

_FIXTURE_KS = """\
# Kuramoto-Sivashinsky field, DMD model, four mobile sensors.
scenario:
  kind: ks
  n_grid: 256
  domain_length: 22.0
  dt_solver: 0.05
  t_final: 400.0
model:
  kind: dmd
  rank: 20
sensors: 4
mode:
  kind: mobile
  speed: 8
  period: 12
sampling_dt: 0.25
noise:
  q: 0.05
  rho: 0.001
steps: 300
seed: 1
outputs: runs/ks
"""

_FIXTURE_SWEEP = """\
# Stationary sensor-count sweep on the torus fixture.
scenario:
  kind: torus
  rows: 32
  cols: 32
  n_fourier: 2
  n_gauss: 3
  gauss_width: 2.5
  freq_range: [0.05, 0.3]
  damp_range: [-0.01, -0.002]
model:
  kind: known
sensors: 1
mode:
  kind: stationary
noise:
  q: 0.05
  rho: 0.002
steps: 150
seed: 1
outputs: runs/torus_sweep
sweep:
  - key: sensors
    values: [1, 2, 3]
"""

_FIXTURE_GRIDDED = """\
# Two-basin masked grid (tiny committed dataset), DMD model, two sensors.
scenario:
  kind: gridded
  path: two_basin.bin
  format: binary_grid
  wrap_lon: false
model:
  kind: dmd
  rank: 4
sensors: 2
mode:
  kind: mobile
  speed: 2
  period: 6
noise:
  q: 0.01
  rho: 0.01
steps: 40
seed: 1
outputs: runs/gridded
"""


def two_basin_dataset(rows=8, cols=17, T=120, seed=5):
    """A masked grid with two ocean basins split by a land isthmus.

    Each basin carries an independent damped traveling wave plus small
    seeded noise, giving DMD something low-rank to fit.
    """
    from .gridded import GriddedDataset

    mask = np.ones((rows, cols), dtype=bool)
    mask[:, cols // 2] = False  # vertical land isthmus
    rng = np.random.default_rng(seed)
    rr, cc = np.mgrid[0:rows, 0:cols]
    t = np.arange(T)
    left = np.sin(2 * np.pi * (rr[..., None] / rows) - 0.35 * t) * np.exp(-0.002 * t)
    right = np.cos(2 * np.pi * (cc[..., None] / cols) + 0.22 * t) * np.exp(-0.001 * t)
    field = np.where((cc < cols // 2)[..., None], left, right)
    field = field + 0.01 * rng.standard_normal(field.shape)
    snaps = field[mask].astype(np.float32)
    return GriddedDataset(mask, snaps, dt=1.0)


def _cmd_fixtures(args):
    from .gridded import save_gridded

    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)
    for name, text in (("torus.yaml", _FIXTURE_TORUS), ("ks.yaml", _FIXTURE_KS),
                       ("torus_sweep.yaml", _FIXTURE_SWEEP),
                       ("gridded.yaml", _FIXTURE_GRIDDED)):
        with open(os.path.join(outdir, name), "w") as fh:
            fh.write(text)
        print(f"wrote {os.path.join(outdir, name)}")
    save_gridded(two_basin_dataset(), os.path.join(outdir, "two_basin.bin"))
    print(f"wrote {os.path.join(outdir, 'two_basin.bin')}")
    return 0


def _build_parser():
    p = argparse.ArgumentParser(
        prog="obsplan",
        description="Plan sensor trajectories for low-rank field estimation "
                    "and evaluate them with Kalman filtering.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="plan a trajectory from a config")
    sp.add_argument("config")
    sp.add_argument("--outputs", help="override the config's output directory")
    sp.set_defaults(fn=_cmd_plan)

    sf = sub.add_parser("filter", help="plan and run the filter (single run)")
    sf.add_argument("config")
    sf.add_argument("--outputs")
    sf.set_defaults(fn=_cmd_filter)

    ss = sub.add_parser("sweep", help="run every sweep grid point")
    ss.add_argument("config")
    ss.add_argument("--outputs")
    ss.add_argument("--workers", type=int, default=None,
                    help="worker pool width (default: OBSPLAN_WORKERS or 4)")
    ss.set_defaults(fn=_cmd_sweep)

    sl = sub.add_parser("plot", help="render SVG plots from a manifest")
    sl.add_argument("manifest", help="manifest.json path or a run directory")
    sl.set_defaults(fn=_cmd_plot)

    sv = sub.add_parser("verify", help="re-hash the files a manifest lists")
    sv.add_argument("manifest", help="manifest.json path or a run directory")
    sv.set_defaults(fn=_cmd_verify)

    sx = sub.add_parser("fixtures", help="write example configs and data")
    sx.add_argument("outdir", nargs="?", default="fixtures")
    sx.set_defaults(fn=_cmd_fixtures)
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except InfeasiblePlanError as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return 4
    except ObsplanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
