"""Acceptance criteria 1 to 10, one test each, with a PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are repeated in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""
import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from oracles import (EQUILATERAL, SQRT3, admissible_polynomial, central_difference,  # noqa: E402
                     energy_densities, grid_search_minimizer, mixed_second_difference,
                     random_triangles)

from anisoflow import diagnostics as dg  # noqa: E402
from anisoflow import flow as fl  # noqa: E402
from anisoflow import geometry as geo  # noqa: E402
from anisoflow import reference_frame as rf  # noqa: E402
from anisoflow import variations as va  # noqa: E402
from anisoflow.anisotropy import Custom, Euclidean, Quadratic, unit_directions  # noqa: E402

TRIANGLE_SEED = 2024


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _criterion2_frames():
    frames = {}
    for name, phi_polar in energy_densities().items():
        frames[name] = [rf.minimize(p, phi_polar) for p in random_triangles(20, TRIANGLE_SEED)]
    return frames


def test_criterion_01_anisotropy_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    p = rng.normal(size=(200, 2)) * rng.uniform(0.1, 10.0, size=(200, 1))
    quad = Quadratic(np.array([[4.0, 0.5], [0.5, 1.0]]))
    families = {"euclidean": Euclidean(), "quadratic": quad, "quadratic_dual": quad.polar()}
    euler = kernel = bipolar = 0.0
    for phi in families.values():
        val = phi(p)
        euler = max(euler, float(np.max(np.abs(np.sum(phi.grad(p) * p, axis=1) - val) / val)))
        kernel = max(kernel, float(np.max(np.linalg.norm(np.einsum("nij,nj->ni", phi.hess(p), p),
                                                         axis=1))))
        e = unit_directions(64, 0.1)
        bipolar = max(bipolar, float(np.max(np.abs(phi.polar().polar()(e) - phi(e)))))
    # the numeric polar path on a norm without a closed-form dual
    numeric = Custom(lambda x: (np.abs(x[..., 0]) ** 4 + np.abs(x[..., 1]) ** 4) ** 0.25
                     + 0.5 * np.linalg.norm(x, axis=-1))
    e = unit_directions(64, 0.1)
    bipolar_numeric = float(np.max(np.abs(numeric.polar().polar()(e) - numeric(e))))
    elapsed = time.perf_counter() - start
    ok = euler <= 1e-8 and kernel <= 1e-6 and bipolar <= 1e-6 and bipolar_numeric <= 1e-6 \
        and elapsed < 1.0
    report(1, ok, f"euler {euler:.2e}, hessian kernel {kernel:.2e}, bipolar {bipolar:.2e} "
                  f"(numeric {bipolar_numeric:.2e}), {elapsed:.2f} s")


def test_criterion_02_minimizer():
    start = time.perf_counter()
    frame = rf.minimize(EQUILATERAL, Euclidean())
    junction_err = float(np.max(np.abs(frame.junction - [0.5, SQRT3 / 6.0])))
    angle_err = float(np.max(np.abs(frame.angles - 2.0 * np.pi / 3.0)))
    herring = oracle = 0.0
    for name, phi_polar in energy_densities().items():
        for p in random_triangles(20, TRIANGLE_SEED):
            fr = rf.minimize(p, phi_polar)
            herring = max(herring, float(np.linalg.norm(np.sum(phi_polar.grad(fr.nu), axis=0))))
            oracle = max(oracle, float(np.linalg.norm(fr.junction
                                                      - grid_search_minimizer(p, phi_polar))))
    elapsed = time.perf_counter() - start
    ok = junction_err <= 1e-8 and angle_err <= 1e-8 and herring < 1e-8 and oracle <= 1e-6 \
        and elapsed < 10.0
    report(2, ok, f"equilateral junction {junction_err:.1e}, angles {angle_err:.1e}; "
                  f"40 random frames herring {herring:.1e}, grid oracle {oracle:.1e}, "
                  f"{elapsed:.2f} s")


def test_criterion_03_matrix_facts():
    rng = np.random.default_rng(3)
    dens = list(energy_densities().values())
    det_i = det_f_min = 0.0
    iv_min = np.inf
    det_f_min = np.inf
    formula_gap = 0.0
    for k in range(50):
        p = random_triangles(1, int(rng.integers(1 << 30)))[0]
        fr = rf.minimize(p, dens[k % 2])
        a = fr.alpha
        det_i = max(det_i, abs(float(np.linalg.det(fr.I_matrix))))
        v = np.array([0.0, -1.0 / a[1], 1.0 / a[2]])
        w = np.array([1.0 / a[0], -1.0 / a[1], 0.0])
        iv_min = min(iv_min, float(np.linalg.norm(fr.I_matrix @ v)),
                     float(np.linalg.norm(fr.I_matrix @ w)))
        f, det_f = va.boundary_matrix_F(fr)
        det_f_min = min(det_f_min, det_f)
        formula_gap = max(formula_gap, abs(det_f - float(np.linalg.det(f))) / det_f)
    iso = rf.minimize(EQUILATERAL, Euclidean())
    f_iso, det_iso = va.boundary_matrix_F(iso)
    f_err = float(np.max(np.abs(f_iso - [[2.0, 1.0], [1.0, 2.0]])))
    ok = det_i <= 1e-12 and iv_min > 1e-8 and det_f_min > 0 and f_err <= 1e-12 \
        and abs(det_iso - 3.0) <= 1e-12 and formula_gap <= 1e-12
    report(3, ok, f"max |det I| {det_i:.1e}, min |Iv|,|Iw| {iv_min:.2e}, min det F "
                  f"{det_f_min:.3f}, isotropic F error {f_err:.1e}, det {det_iso:.15f}")


def test_criterion_04_variational_consistency(unit_frames):
    n = 128
    rng = np.random.default_rng(4)
    first_err = second_err = sym_err = 0.0
    m0 = 0.0
    positive = True
    for fr in unit_frames.values():
        lmin = float(fr.lengths.min())
        m0 = max(m0, va.w_norm(va.gradient_M(fr, np.zeros((3, n)))))
        h0 = admissible_polynomial(fr.alpha, n, rng, 0.05 * lmin)
        grad = va.gradient_M(fr, h0)
        for _ in range(20):
            h1 = admissible_polynomial(fr.alpha, n, rng, lmin)
            fd = central_difference(lambda s: va.energy_of_h(fr, h0 + s * h1), 1e-4)
            first_err = max(first_err, abs(va.pairing(h1, grad) - fd) / max(abs(fd), 1e-3))
            a = admissible_polynomial(fr.alpha, n, rng, lmin)
            b = admissible_polynomial(fr.alpha, n, rng, lmin)
            ab, ba = va.second_variation(fr, a, b), va.second_variation(fr, b, a)
            sym_err = max(sym_err, abs(ab - ba))
            fd2 = mixed_second_difference(lambda s, t: va.energy_of_h(fr, s * a + t * b), 1e-3)
            second_err = max(second_err, abs(ab - fd2) / max(abs(fd2), 1e-3))
        for _ in range(50):
            h = admissible_polynomial(fr.alpha, n, rng, lmin)
            positive &= va.second_variation(fr, h, h) > 0
    ok = first_err <= 1e-4 and m0 <= 1e-10 and sym_err <= 1e-10 and second_err <= 1e-4 \
        and positive
    report(4, ok, f"pairing vs FD {first_err:.1e}, |M(0)| {m0:.1e}, symmetry {sym_err:.1e}, "
                  f"second variation vs FD {second_err:.1e}, positive {positive}")


def test_criterion_05_dissipation(converging_runs):
    frame, h0, _ = converging_runs["isotropic"]
    start = time.perf_counter()
    # stationary floor disabled so all 1000 steps are taken
    traj = fl.run_flow(fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, None),
                       1000 * 2e-4, 2e-4, stationary_floor=0.0, snapshot_stride=100)
    elapsed = time.perf_counter() - start
    energy = traj.energy
    rise = float(np.max(np.diff(energy)))
    conc = max(traj.info["concurrency_per_step"])
    herring = max(traj.info["herring_per_step"])
    ok = (traj.info["steps"] == 1000 and rise <= 1e-12 * energy[0] and conc <= 1e-10
          and herring <= 1e-8 and elapsed < 60.0)
    report(5, ok, f"{traj.info['steps']} accepted steps, max energy increase {rise:.1e}, "
                  f"concurrency {conc:.1e}, herring {herring:.1e}, {elapsed:.1f} s")


def test_criterion_06_stability(converging_runs):
    parts = []
    ok = True
    for name, (frame, _, traj) in converging_runs.items():
        rep = dg.convergence_report(traj, frame, floor=1e-8)
        ratios = rep["c2_tail_ratios"]
        good = (rep["final_grad_W_norm"] < 1e-8 and rep["energy_gap"] < 1e-7
                and rep["max_kappa_phi"] < 1e-5 and len(ratios) >= 3 and max(ratios) < 0.5)
        ok &= good
        parts.append(f"{name}: grad {rep['final_grad_W_norm']:.1e}, gap {rep['energy_gap']:.1e}, "
                     f"kappa_phi {rep['max_kappa_phi']:.1e}, tail ratios "
                     f"{[round(r, 3) for r in ratios]}")
    report(6, ok, "; ".join(parts))


def test_criterion_07_solver_equivalence(unit_frames):
    parts = []
    ok = True
    for name, frame in unit_frames.items():
        dists = []
        for n, dt in ((64, 4e-4), (128, 2e-4), (256, 1e-4)):
            h0 = rf.sine_perturbation(frame, n, 0.05, (1, 2, 3), seed=3)
            net0 = rf.reconstruct(frame, h0)
            a = fl.run_flow(fl.FlowState(0.0, net0, frame, None), 0.01, dt, "parametric")
            b = fl.run_flow(fl.FlowState(0.0, net0, frame, h0), 0.01, dt, "graph")
            na, nb = a.info["final_state"].network, b.info["final_state"].network
            d = geo.hausdorff_distance(na, nb)
            ok &= d < 5.0 * (dt + n ** -2) * geo.diameter(na)
            ok &= abs(a.info["final_state"].t - 0.01) < 1e-12
            dists.append(d)
        orders = np.log2(np.array(dists[:-1]) / np.array(dists[1:]))
        ok &= bool(np.all((orders > 0.7) & (orders < 1.3)))
        parts.append(f"{name}: distances {[f'{d:.2e}' for d in dists]}, orders "
                     f"{[round(float(o), 2) for o in orders]}")
    report(7, ok, "; ".join(parts))


def test_criterion_08_lsi(converging_runs):
    parts = []
    ok = True
    for name, (frame, _, traj) in converging_runs.items():
        fit = dg.fit_lsi(traj, frame.energy)
        sel = (traj.t >= fit.window[0]) & (traj.t <= fit.window[1])
        frac = fit.holds(np.abs(traj.energy[sel] - frame.energy), traj.grad_norm[sel])
        ok &= 0.0 < fit.theta <= 0.5 and frac == 1.0
        parts.append(f"{name} theta {fit.theta:.3f} holds {frac:.0%}")
    rng = np.random.default_rng(8)
    worst = 0.0
    for theta in (0.5, 0.4, 0.25, 0.1):
        s = np.geomspace(0.5, 1e-8, 200)
        grad = s ** (1.0 - theta) * np.exp(0.01 * rng.normal(size=s.size))
        fit = dg.fit_lsi(t=np.arange(s.size), energy=1.0 + s, grad=grad, e_star=1.0)
        worst = max(worst, abs(fit.theta - theta))
    ok &= worst <= 0.02
    parts.append(f"synthetic max theta error {worst:.1e}")
    report(8, ok, "; ".join(parts))


def test_criterion_09_lopatinskii_shapiro():
    worst = np.inf
    signs = True
    for frames in _criterion2_frames().values():
        for fr in frames:
            lin = dg.assemble_linearized(fr)
            rep = dg.lopatinskii_shapiro_check(lin, fr.alpha)
            worst = min(worst, rep["min_abs_det"])
            signs &= rep["signs_ok"] and len(rep["rows"]) == 45
    ok = worst > 1e-3 and signs
    report(9, ok, f"min |det| over 40 frames and 45 lambdas {worst:.3e}, signs ok {signs}")


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("n: 32\nflow: {dt: 4.0e-4, t_end: 0.02}\n"
                   "perturbation: {amplitude: 0.05, seed: 11}\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        res = subprocess.run([sys.executable, "-m", "anisoflow", "flow", "--config", str(cfg),
                              "--out", str(out), "--seed", "5", "--quiet"],
                             capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append((out / "trajectory.csv").read_bytes())
    rows = outs[0].count(b"\n") - 1
    ok = outs[0] == outs[1] and rows > 0
    report(10, ok, f"two invocations, {rows} rows, identical {ok}")


if __name__ == "__main__":
    import pytest
    sys.exit(pytest.main([__file__, "-q", "-s"]))
