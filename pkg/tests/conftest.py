"""Suite-wide fixtures and the plan audit hook.

At import time the planner entry points are wrapped so that every trajectory
any test produces -- directly or through the experiment runner -- is (a)
immediately audited for motion violations and (b) appended to
``helpers.PLAN_REGISTRY`` for the exhaustive mask-safety sweep.
"""

import numpy as np
import pytest

import obsplan as ob
import obsplan.experiment
import obsplan.planner
import helpers


def _install_plan_audit():
    if getattr(obsplan.planner.plan, "_audited", False):
        return
    orig_plan = obsplan.planner.plan
    orig_refine = obsplan.planner.multiscale_refine

    def audited_plan(model, geom, mc, cfg, report=None):
        traj = orig_plan(model, geom, mc, cfg, report=report)
        helpers.PLAN_REGISTRY.append((traj, geom, mc.speed, cfg.enforce_cycle))
        bad = helpers.check_plan_edges(traj, geom, mc.speed, cfg.enforce_cycle)
        assert not bad, f"planner emitted invalid moves: {bad[:3]}"
        return traj

    def audited_refine(model_fine, coarse, refine_factor, geom, mc_fine,
                       cfg_fine, report=None):
        traj = orig_refine(model_fine, coarse, refine_factor, geom, mc_fine,
                           cfg_fine, report=report)
        helpers.PLAN_REGISTRY.append(
            (traj, geom, mc_fine.speed, cfg_fine.enforce_cycle))
        bad = helpers.check_plan_edges(traj, geom, mc_fine.speed,
                                       cfg_fine.enforce_cycle)
        assert not bad, f"refinement emitted invalid moves: {bad[:3]}"
        return traj

    audited_plan._audited = True
    audited_refine._audited = True
    for mod in (obsplan.planner, obsplan.experiment, ob):
        mod.plan = audited_plan
    obsplan.planner.multiscale_refine = audited_refine
    ob.multiscale_refine = audited_refine


_install_plan_audit()


def pytest_terminal_summary(terminalreporter):
    for line in helpers.CRITERION_LINES:
        terminalreporter.write_line(line)
    n = len(helpers.PLAN_REGISTRY)
    bad = []
    for traj, geom, speed, enforce_cycle in helpers.PLAN_REGISTRY:
        bad += helpers.check_plan_edges(traj, geom, speed, enforce_cycle)
    terminalreporter.write_line(
        f"plan audit: {n} trajectories emitted, {len(bad)} motion violations")


@pytest.fixture(scope="session")
def tuned_torus():
    """The committed desk-scale torus fixture: scenario plus noise levels."""
    spec = ob.TorusSpec(rows=32, cols=32, n_fourier=2, n_gauss=3,
                        gauss_width=2.5, freq_range=(0.05, 0.3),
                        damp_range=(-0.01, -0.002), dt=1.0, seed=1)
    return ob.make_torus(spec), ob.NoiseSpec(q=0.05, rho=0.002)


@pytest.fixture(scope="session")
def two_basin():
    """Masked grid with two disconnected basins, plus its motion graph."""
    from obsplan.cli import two_basin_dataset

    ds = two_basin_dataset()
    geom = ob.mask_geometry(ds, wrap_lon=False)
    return ds, geom


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
