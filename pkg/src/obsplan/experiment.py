"""End-to-end experiment runner: build/fit a model, plan, filter, write files.

Every run emits, under its output directory:

``trajectory.json`` / ``trajectory.csv``
    The planned schedule (JSON is exact; CSV adds grid coordinates).
``kfrun.csv``
    Per-step filter results: ``step,time,trace_sigma,recon_mse``.
``condition.json``
    Condition number and rank report for the planned schedule, with the
    per-selection planner trace.
``run.json``
    The resolved single-run config, derived seeds, geometry summary, and
    model summary — everything plots need to redraw the run.

Sweeps run each grid point independently in a thread pool (points are
seeded as ``seed XOR sha256(point-key)``), write per-point directories plus a
combined long-format ``sweep.csv``, and record per-point failures in the
manifest without aborting the remaining points.  ``manifest.json`` lists every
emitted file with its SHA-256; data files are deterministic given the config,
so re-runs are byte-identical (manifests differ only in wall clock).  All
files are written atomically (temp + rename).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig, set_by_path, validate_config, _deep_copy
from .errors import ConfigError, ObsplanError
from .geometry import MotionConstraint
from .gridded import load_gridded, mask_geometry
from .kalman import run_filter
from .model import (NoiseSpec, SnapshotMatrix, fit_dmd, simulate,
                    to_complex_coeffs, to_real_blocks)
from .observability import assemble, condition_number, is_observable
from .planner import PlanConfig, plan
from .scenarios import KsSpec, TorusSpec, make_torus, solve_ks

__all__ = ["RunManifest", "run_experiment", "expand_sweep", "verify_manifest"]

# KS/gridded runs split their snapshots: initial transient discarded, then a
# training block for the DMD fit, then held-out test data for the filter.
_KS_BURN_FRACTION = 0.25
_TRAIN_FRACTION = 0.5


@dataclass
class RunManifest:
    """Everything needed to audit and re-draw an experiment run."""

    version: str
    config: dict
    seed: int
    points: list  # [{key, seed, dir, ok, error}]
    files: dict  # relpath -> sha256
    outputs: str
    created_unix: float = 0.0
    elapsed_sec: float = 0.0

    def to_dict(self):
        return {"version": self.version, "config": self.config,
                "seed": self.seed, "points": self.points, "files": self.files,
                "outputs": self.outputs, "created_unix": self.created_unix,
                "elapsed_sec": self.elapsed_sec}

    def save(self, path):
        _atomic_write_text(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(version=d["version"], config=d["config"], seed=d["seed"],
                   points=d["points"], files=d["files"], outputs=d["outputs"],
                   created_unix=d["created_unix"], elapsed_sec=d["elapsed_sec"])


def _atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_emit(path, write_fn):
    """Run ``write_fn(tmp_path)`` then rename the result into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stable_point_seed(base_seed, key):
    tag = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    return (int(base_seed) ^ tag) & ((1 << 63) - 1)


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------

def _geometry_summary(geom):
    out = {"kind": geom.kind, "n": geom.n}
    if geom.kind == "grid2d":
        out["rows"], out["cols"] = (int(v) for v in geom.shape)
        out["periodic"] = list(geom.periodic)
    elif geom.kind == "line":
        out["periodic"] = list(geom.periodic)
    else:
        out["coords"] = np.asarray(geom.coords).tolist()
    return out


def _fit(train, rank):
    try:
        return fit_dmd(train, rank)
    except ValueError as exc:
        # argument errors here are config-driven (rank vs available snapshots)
        raise ConfigError(f"model.rank={rank} is not fittable: {exc}") from None


def _build(cfg: ExperimentConfig):
    """Build (real-block model, geometry, truth SnapshotMatrix, meta)."""
    sc = dict(cfg.scenario)
    kind = sc.pop("kind")
    meta = {"scenario": kind}
    if kind == "torus":
        try:
            spec = TorusSpec(dt=cfg.sampling_dt, seed=cfg.seed, **sc)
            scenario = make_torus(spec)
        except ValueError as exc:
            raise ConfigError(f"invalid torus scenario: {exc}") from None
        reduced, geom = scenario.model, scenario.geometry
        meta["nyquist_steps"] = scenario.nyquist_steps
        if cfg.model["kind"] == "dmd":
            # refit from clean simulated snapshots
            rng = np.random.default_rng(cfg.seed)
            z0 = to_complex_coeffs(reduced.pair_map, rng.standard_normal(reduced.m))
            T_fit = max(4 * reduced.m + 2, 40)
            train = simulate(reduced, z0, steps=T_fit, dt=cfg.sampling_dt)
            reduced = _fit(train, cfg.model["rank"])
        rng = np.random.default_rng(cfg.seed)
        z0 = to_complex_coeffs(scenario.model.pair_map,
                               rng.standard_normal(scenario.model.m))
        truth = simulate(scenario.model, z0, steps=cfg.steps,
                         noise=cfg.noise, seed=cfg.seed, dt=cfg.sampling_dt)
        steps = cfg.steps
    elif kind == "ks":
        try:
            spec = KsSpec(dt_out=cfg.sampling_dt, seed=cfg.seed, **sc)
        except ValueError as exc:
            raise ConfigError(f"invalid ks scenario: {exc}") from None
        sm = solve_ks(spec)
        T = sm.T
        burn = int(T * _KS_BURN_FRACTION)
        train_end = burn + max(2, int((T - burn) * _TRAIN_FRACTION))
        if train_end + 2 > T:
            raise ConfigError(
                f"ks run too short: {T} snapshots leave no test data after "
                f"burn-in {burn} and training block {train_end - burn}")
        train = SnapshotMatrix(sm.data[:, burn:train_end], dt=sm.dt, grid=sm.grid)
        reduced = _fit(train, cfg.model["rank"])
        truth = SnapshotMatrix(sm.data[:, train_end:], dt=sm.dt, grid=sm.grid)
        geom = sm.grid
        steps = min(cfg.steps, truth.T)
        meta["snapshots"] = {"total": T, "burn": burn, "train": train_end - burn,
                             "test": T - train_end}
    else:  # gridded
        ds = load_gridded(sc["path"], format=sc["format"])
        geom = mask_geometry(ds, wrap_lon=sc["wrap_lon"])
        data = ds.snapshots.astype(float)
        train_end = max(2, int(ds.T * _TRAIN_FRACTION))
        if train_end + 2 > ds.T:
            raise ConfigError(
                f"gridded dataset too short: {ds.T} snapshots leave no test "
                f"data after training block {train_end}")
        train = SnapshotMatrix(data[:, :train_end], dt=ds.dt)
        reduced = _fit(train, cfg.model["rank"])
        truth = SnapshotMatrix(data[:, train_end:], dt=ds.dt)
        steps = min(cfg.steps, truth.T)
        meta["snapshots"] = {"total": ds.T, "train": train_end,
                             "test": ds.T - train_end}
        meta["grid"] = {"rows": ds.rows, "cols": ds.cols, "n_valid": ds.n_valid}
    return to_real_blocks(reduced), geom, truth, steps, meta


def _run_single(cfg: ExperimentConfig, outdir, seed):
    """One planned + filtered run; returns {relpath: abspath} of files written."""
    os.makedirs(outdir, exist_ok=True)
    cfg = validate_config({**_strip_sweep(cfg.resolved), "seed": seed},
                          base_dir=".")
    model, geom, truth, steps, meta = _build(cfg)
    if cfg.sensors > geom.n:
        raise ConfigError(
            f"sensors={cfg.sensors} exceeds the {geom.n} available locations")

    if cfg.mode["kind"] == "stationary":
        pcfg = PlanConfig(k=cfg.sensors, period_l=1)
        mc = MotionConstraint(float("inf"))
    else:
        pcfg = PlanConfig(k=cfg.sensors, period_l=cfg.mode["period"])
        mc = MotionConstraint(cfg.mode["speed"])
    steps_report = []
    traj = plan(model, geom, mc, pcfg, report=steps_report)

    obs = assemble(model, traj)
    rank = is_observable(model, traj)
    cond = condition_number(obs)

    kf = run_filter(model, traj, truth, cfg.noise, steps=steps, seed=seed + 1)

    files = {}

    def emit(name, fn):
        path = os.path.join(outdir, name)
        _atomic_emit(path, fn)
        files[name] = path

    emit("trajectory.json", traj.save)
    emit("trajectory.csv", lambda p: traj.to_csv(p, geometry=geom))
    emit("kfrun.csv", kf.to_csv)
    condition = {
        "condition_number": float(cond),
        "rank": int(rank.rank),
        "required": int(rank.required),
        "observable": bool(rank),
        "rows": int(obs.matrix.shape[0]),
        "plan": [{"step": s.step, "sensor": s.sensor, "index": s.index,
                  "score": s.score, "candidates": s.n_candidates,
                  "mode": s.mode, "running_cond": s.running_cond}
                 for s in steps_report],
    }
    emit("condition.json",
         lambda p: _write_text(p, json.dumps(condition, indent=2, sort_keys=True) + "\n"))
    run_info = {
        "config": _strip_sweep(cfg.resolved),
        "seeds": {"scenario": seed, "data": seed, "filter": seed + 1},
        "steps_run": int(steps),
        "geometry": _geometry_summary(geom),
        "model": {"kind": cfg.model["kind"], "m": int(model.m)},
        "meta": meta,
    }
    emit("run.json",
         lambda p: _write_text(p, json.dumps(run_info, indent=2, sort_keys=True) + "\n"))
    return files


def _write_text(path, text):
    # plain write; emit()'s temp/rename dance provides the atomicity
    with open(path, "w") as fh:
        fh.write(text)


def _strip_sweep(resolved):
    out = _deep_copy(resolved)
    out.pop("sweep", None)
    return out


def expand_sweep(cfg: ExperimentConfig):
    """Cartesian sweep points as (key string, point config, derived seed).

    Point keys look like ``"mode.speed=2,sensors=3"`` (axis order as listed);
    seeds derive as ``seed XOR sha256(key)`` so points are independent but
    reproducible.
    """
    axes = cfg.sweep
    names = [k for k, _ in axes]
    points = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        key = ",".join(f"{k}={v!r}" for k, v in zip(names, combo))
        tree = _strip_sweep(cfg.resolved)
        for k, v in zip(names, combo):
            set_by_path(tree, k, v)
        pcfg = validate_config(tree, base_dir=".")
        # an explicitly swept seed is used as-is; otherwise derive one
        pseed = pcfg.seed if "seed" in names else _stable_point_seed(cfg.seed, key)
        points.append((key, pcfg, pseed))
    return points


def run_experiment(cfg: ExperimentConfig, workers=None, outdir=None):
    """Run a single experiment or a sweep; returns the saved ``RunManifest``.

    The output directory comes from ``outdir``, the ``OBSPLAN_OUTPUT_DIR``
    environment variable, or the config, in that order; worker-pool width for
    sweeps comes from ``workers`` or ``OBSPLAN_WORKERS`` (defaults to 4).
    """
    t0 = time.time()
    outdir = outdir or os.environ.get("OBSPLAN_OUTPUT_DIR") or cfg.outputs
    os.makedirs(outdir, exist_ok=True)
    points_meta = []
    all_files = {}

    if not cfg.sweep:
        files = _run_single(cfg, outdir, cfg.seed)
        points_meta.append({"key": "", "seed": cfg.seed, "dir": ".",
                            "ok": True, "error": None})
        all_files.update(files)
    else:
        points = expand_sweep(cfg)
        if workers is None:
            workers = int(os.environ.get("OBSPLAN_WORKERS", "4"))
        workers = max(1, min(workers, len(points)))
        results = [None] * len(points)

        def _job(i):
            key, pcfg, pseed = points[i]
            pdir = os.path.join(outdir, f"point_{i:03d}")
            try:
                files = _run_single(pcfg, pdir, pseed)
            except ObsplanError as exc:
                return i, key, pseed, pdir, None, f"{type(exc).__name__}: {exc}"
            return i, key, pseed, pdir, files, None

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_job, range(len(points))):
                results[res[0]] = res
        for i, key, pseed, pdir, files, err in results:
            rel = os.path.relpath(pdir, outdir)
            points_meta.append({"key": key, "seed": pseed, "dir": rel,
                                "ok": err is None, "error": err})
            if files:
                for name, path in files.items():
                    all_files[os.path.join(rel, name)] = path
        sweep_csv = os.path.join(outdir, "sweep.csv")
        _atomic_emit(sweep_csv, lambda p: _write_sweep_csv(p, cfg, points, results))
        all_files["sweep.csv"] = sweep_csv

    manifest = RunManifest(
        version=__version__, config=cfg.resolved, seed=cfg.seed,
        points=points_meta,
        files={rel: _sha256(path) for rel, path in sorted(all_files.items())},
        outputs=os.path.abspath(outdir),
        created_unix=t0, elapsed_sec=time.time() - t0)
    manifest.save(os.path.join(outdir, "manifest.json"))
    return manifest


def _write_sweep_csv(path, cfg, points, results):
    """Combined long-format sweep output: one row per (point, step)."""
    names = [k for k, _ in cfg.sweep]
    with open(path, "w", newline="") as fh:
        fh.write("point," + ",".join(names) + ",step,time,trace_sigma,recon_mse\n")
        for i, key, pseed, pdir, files, err in results:
            if err is not None:
                continue
            combo = [seg.split("=", 1)[1] for seg in key.split(",")]
            with open(files["kfrun.csv"]) as kf:
                rows = kf.read().splitlines()[1:]
            for row in rows:
                fh.write(f"{i}," + ",".join(combo) + "," + row + "\n")


def verify_manifest(path):
    """Re-hash every file a manifest lists; returns a list of mismatch strings."""
    manifest = RunManifest.load(path)
    base = os.path.dirname(os.path.abspath(path))
    problems = []
    for rel, digest in sorted(manifest.files.items()):
        full = os.path.join(base, rel)
        if not os.path.exists(full):
            problems.append(f"missing: {rel}")
        elif _sha256(full) != digest:
            problems.append(f"hash mismatch: {rel}")
    return problems
