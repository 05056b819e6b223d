import math

import numpy as np
import pytest
from conftest import small_triangle

from anisoflow import flow as fl
from anisoflow import geometry as geo
from anisoflow import reference_frame as rf
from anisoflow.exceptions import CollapseDetected, MaxStepsExceeded

N = 32


@pytest.fixture(scope="module", params=["isotropic", "quadratic"])
def short_run(request, densities):
    frame = rf.minimize(small_triangle(), densities[request.param])
    h0 = rf.sine_perturbation(frame, N, 0.05, (1, 2), seed=1)
    state = fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, None)
    return frame, h0, fl.run_flow(state, 0.01, 5e-4, snapshot_stride=5)


def test_energy_is_non_increasing(short_run):
    _, _, traj = short_run
    assert np.all(np.diff(traj.energy) <= 1e-12 * traj.energy[0])
    assert traj.energy[-1] < traj.energy[0]


def test_junction_conditions_hold_after_every_step(short_run):
    _, _, traj = short_run
    assert max(traj.info["herring_per_step"]) < 1e-9
    assert max(traj.info["concurrency_per_step"]) < 1e-14


def test_endpoints_stay_fixed(short_run):
    frame, _, traj = short_run
    final = traj.info["final_state"].network
    assert np.max(np.abs(final.curves[:, 0] - frame.endpoints)) < 1e-14


def test_trajectory_bookkeeping(short_run):
    _, _, traj = short_run
    assert len(traj) == traj.info["steps"] + 1
    assert traj.t[-1] == pytest.approx(0.01)
    assert traj.info["stopped"] == "t_end"
    assert traj.snapshots[-1][0] == traj.t[-1]
    assert all(h is not None for _, _, h in traj.snapshots)


def test_trajectory_csv_round_trip(short_run, tmp_path):
    _, _, traj = short_run
    path = tmp_path / "trajectory.csv"
    traj.to_csv(path)
    back = fl.Trajectory.from_csv(path)
    assert back.rows == traj.rows
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        fl.Trajectory.from_csv(bad)


def test_c_norms_of_a_parabola():
    x = np.linspace(0.0, 1.0, 101)
    h = np.stack([x ** 2, 0 * x, 0 * x])
    c0, c1, c2 = fl.c_norms(h)
    assert c0 == pytest.approx(1.0)
    assert c1 == pytest.approx(3.0, abs=1e-2)
    assert c2 == pytest.approx(5.0, abs=1e-8)


def test_frame_is_stationary(unit_frames):
    fr = unit_frames["quadratic"]
    state = fl.FlowState(0.0, fr.network(N), fr, None)
    traj = fl.run_flow(state, 0.1, 1e-3)
    assert len(traj) == 1 and traj.info["stopped"] == "stationary"


def test_admissibility_of_the_frame(unit_frames):
    fr = unit_frames["quadratic"]
    rep = fl.check_admissible(fr.network(N), fr.phi_polar, fr.endpoints)
    assert rep["endpoints"] == 0.0
    assert rep["concurrency"] < 1e-15 and rep["herring"] < 1e-10
    assert rep["kappa_phi_at_0"] < 1e-10
    comp = fl.check_h_compatibility(fr, np.zeros((3, N)))
    assert comp["h_at_0"] == 0.0 and comp["junction_sum"] == 0.0
    assert comp["herring"] < 1e-10 and abs(comp["velocity_sum"]) < 1e-10


def test_compatibility_detects_violations(unit_frames):
    fr = unit_frames["isotropic"]
    x = np.linspace(0.0, 1.0, N)
    h = np.stack([0.01 + 0 * x, 0 * x, 0.02 * x])
    comp = fl.check_h_compatibility(fr, h)
    assert comp["h_at_0"] == pytest.approx(0.01)
    assert comp["junction_sum"] == pytest.approx(fr.alpha @ h[:, -1])
    assert comp["herring"] > 1e-3


@pytest.mark.parametrize("name", ["isotropic", "quadratic"])
def test_graph_mode_decreases_energy(densities, name):
    frame = rf.minimize(small_triangle(), densities[name])
    h0 = rf.sine_perturbation(frame, N, 0.03, (1,), seed=2, junction_shift=False)
    state = fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, h0)
    traj = fl.run_flow(state, 2e-3, 5e-4, mode="graph")
    assert np.all(np.diff(traj.energy) <= 1e-12 * traj.energy[0])
    final = traj.info["final_state"]
    assert np.all(final.h[:, 0] == 0.0)
    assert abs(frame.alpha @ final.h[:, -1]) < 1e-10
    assert max(traj.info["herring_per_step"]) < 1e-8


def test_graph_and_parametric_agree(densities):
    frame = rf.minimize(small_triangle(), densities["quadratic"])
    h0 = rf.sine_perturbation(frame, N, 0.03, (1,), seed=2, junction_shift=False)
    common = dict(t_end=2e-3, dt=2.5e-4)
    graph = fl.run_flow(fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, h0),
                        mode="graph", **common)
    para = fl.run_flow(fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, None), **common)
    gap = abs(graph.energy[-1] - para.energy[-1])
    drop = para.energy[0] - para.energy[-1]
    assert gap < 0.1 * drop


def test_special_flow_step_keeps_junction_balanced(unit_frames):
    fr = unit_frames["isotropic"]
    h0 = rf.sine_perturbation(fr, N, 0.05, (2,), seed=0)
    state = fl.FlowState(0.0, rf.reconstruct(fr, h0), fr, None)
    new, _ = fl.special_flow_step(state, 1e-4)
    assert new.t == pytest.approx(1e-4)
    assert np.linalg.norm(geo.herring_residual(new.network, fr.phi_polar)) < 1e-10
    assert geo.energy(new.network, fr.phi_polar) <= geo.energy(state.network, fr.phi_polar)


def test_collapse_and_step_limit(unit_frames):
    fr = unit_frames["isotropic"]
    h0 = rf.sine_perturbation(fr, N, 0.05, (1,), seed=0)
    state = fl.FlowState(0.0, rf.reconstruct(fr, h0), fr, None)
    with pytest.raises(CollapseDetected):
        fl.run_flow(state, 0.01, 1e-3, collapse_fraction=1.0)
    with pytest.raises(MaxStepsExceeded):
        fl.run_flow(state, 0.01, 1e-3, max_steps=2)


def test_invalid_arguments(unit_frames):
    fr = unit_frames["isotropic"]
    state = fl.FlowState(0.0, fr.network(N), fr, None)
    with pytest.raises(ValueError):
        fl.run_flow(state, 0.1, 1e-3, mode="spectral")
    with pytest.raises(ValueError):
        fl.run_flow(state, 0.1, 0.0)
    with pytest.raises(ValueError):
        fl.run_flow(state, 0.1, 1e-3, mode="graph")


def test_geometric_gradient_norm_zero_on_frame(unit_frames):
    fr = unit_frames["quadratic"]
    assert fl.geometric_gradient_norm(fr.network(N), fr.phi_polar) < 1e-10
    assert not math.isnan(fl.geometric_gradient_norm(fr.network(N), fr.phi_polar))
