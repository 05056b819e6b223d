"""Command line driver: ``anisoflow {minimize,flow,diagnose,check,wulff}``.

Exit codes
----------
0  success
1  configuration or usage error
2  degenerate minimizer (the optimal junction sits on an endpoint)
3  collapse of a curve during the flow
4  solver divergence (Newton failure, rejected steps, singular systems)
5  insufficient data for a diagnostic fit
6  any other package error

``minimize`` and ``flow`` write ``manifest.json``; the other commands write
``<command>_manifest.json`` so they can share an output directory with a run.
Failures print one line ``error: code=N type=Name message="..."`` on stderr.
"""
import argparse
import json
import os
import sys
import time

import numpy as np

from . import artifacts as art
from . import config as cfg
from . import diagnostics as dg
from . import flow as fl
from . import geometry as geo
from . import reference_frame as rf
from . import variations as va
from .anisotropy import wulff_samples
from .exceptions import (AnisoflowError, CollapseDetected, ConfigError, DegenerateMinimizer,
                         EnergyAtMinimum, InsufficientData, JunctionNewtonDivergence,
                         MaxStepsExceeded, NewtonDivergence, NonMonotoneReparametrization,
                         NotConverged, SingularFh, StepRejected)

EXIT_CODES = (
    (ConfigError, 1),
    (DegenerateMinimizer, 2),
    (CollapseDetected, 3),
    ((NewtonDivergence, JunctionNewtonDivergence, StepRejected, MaxStepsExceeded, SingularFh,
      NonMonotoneReparametrization), 4),
    ((InsufficientData, EnergyAtMinimum), 5),
    (AnisoflowError, 6),
)
WULFF_SAMPLES = 256
MAX_SVG = 10


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML experiment configuration")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="perturbation seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    parser = _Parser(prog="anisoflow", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("minimize", parents=[common], help="compute the reference frame")
    sub.add_parser("flow", parents=[common], help="run the flow from a perturbed frame")
    diag = sub.add_parser("diagnose", parents=[common], help="analyze a trajectory")
    diag.add_argument("--trajectory", help="trajectory CSV (default: OUT/trajectory.csv)")
    sub.add_parser("check", parents=[common], help="admissibility of the initial data")
    wulff = sub.add_parser("wulff", parents=[common], help="sample the Wulff shape")
    wulff.add_argument("--samples", type=int, default=WULFF_SAMPLES)
    return parser


class Run:
    """Shared state of one command invocation."""

    def __init__(self, config, quiet, command="flow"):
        self.config = config
        self.command = command
        self.quiet = quiet
        self.out = config.output
        self.files = []
        self.extra = {}
        self.start = time.perf_counter()
        os.makedirs(self.out, exist_ok=True)
        self.phi = config.anisotropy.build()
        self.phi_polar = self.phi.polar()

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def say(self, text):
        if not self.quiet:
            print(text)

    def frame(self):
        return rf.minimize(self.config.endpoints, self.phi_polar)

    def initial_height(self, frame):
        p = self.config.perturbation
        return rf.sine_perturbation(frame, self.config.n, p.amplitude, p.modes, p.seed,
                                    p.junction_shift)

    def finish(self, status="ok"):
        art.write_manifest(self.out, self.config.hash(), self.files,
                           time.perf_counter() - self.start, status, self.extra,
                           self.manifest_name)

    @property
    def manifest_name(self):
        if self.command in ("minimize", "flow"):
            return "manifest.json"
        return f"{self.command}_manifest.json"


def _frame_record(frame, phi_polar):
    d = frame.to_dict()
    d["energy"] = frame.energy
    d["herring_residual"] = float(np.linalg.norm(
        np.sum(phi_polar.grad(frame.nu), axis=0)))
    d["lengths"] = frame.lengths
    return d


def cmd_minimize(run):
    frame = run.frame()
    rec = _frame_record(frame, run.phi_polar)
    art.write_json(run.path("frame.json"), rec)
    art.write_csv(run.path("wulff.csv"), ("x", "y"), wulff_samples(run.phi, WULFF_SAMPLES))
    with open(run.path("frame.svg"), "w") as fh:
        fh.write(art.network_svg(frame.gamma_star(8),
                                 wulff_samples(run.phi, WULFF_SAMPLES), "reference frame"))
    run.extra["herring_residual"] = rec["herring_residual"]
    run.say(f"junction {rec['junction']} angles {rec['theta_star']} "
            f"herring {rec['herring_residual']:.3e}")
    return 0


def _initial_state(run, frame):
    h0 = run.initial_height(frame)
    compat = fl.check_h_compatibility(frame, h0, run.phi_polar)
    tol = run.config.flow.admissibility_tol
    bad = {k: compat[k] for k in ("h_at_0", "herring") if compat[k] > tol}
    if abs(compat["junction_sum"]) > tol:
        bad["junction_sum"] = compat["junction_sum"]
    if bad:
        raise ConfigError(f"perturbation: initial data not admissible {bad}")
    if run.config.flow.mode == "graph":
        state = fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, h0)
    else:
        state = fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, None)
    return state, compat


def _svg_indices(count):
    if count <= MAX_SVG:
        return list(range(count))
    return sorted(set(np.linspace(0, count - 1, MAX_SVG).round().astype(int).tolist()))


def cmd_flow(run):
    c = run.config
    frame = run.frame()
    state, compat = _initial_state(run, frame)
    traj = fl.run_flow(state, c.flow.t_end, c.flow.dt, mode=c.flow.mode,
                       phi_polar=run.phi_polar, newton_tol=c.flow.newton_tol,
                       snapshot_stride=c.flow.snapshot_stride)
    traj.to_csv(run.path("trajectory.csv"))
    art.save_snapshots(run.path("snapshots.npz"), traj)
    art.write_json(run.path("frame.json"), _frame_record(frame, run.phi_polar))
    final = traj.info["final_state"].network
    art.write_json(run.path("initial_network.json"), state.network.to_dict())
    art.write_json(run.path("final_network.json"), final.to_dict())
    for name in art.write_curve_tables(run.out, "final", final.curves, run.phi_polar):
        run.files.append(name)
    os.makedirs(os.path.join(run.out, "snapshots"), exist_ok=True)
    wulff = wulff_samples(run.phi, WULFF_SAMPLES)
    ref = frame.gamma_star(2)
    for k in _svg_indices(len(traj.snapshots)):
        t, curves, _ = traj.snapshots[k]
        with open(run.path(os.path.join("snapshots", f"snapshot_{k:05d}.svg")), "w") as fh:
            fh.write(art.network_svg(curves, wulff, f"t = {t:.6g}", reference=ref))
    energy = traj.energy
    run.extra.update({
        "stopped": traj.info["stopped"], "steps": traj.info["steps"],
        "rows": len(traj), "final_grad_W_norm": float(traj.grad_norm[-1]),
        "energy_monotone": bool(np.all(np.diff(energy) <= 1e-12 * (1.0 + abs(energy[0])))),
        "max_herring_per_step": max(traj.info["herring_per_step"], default=0.0),
        "max_concurrency_per_step": max(traj.info["concurrency_per_step"], default=0.0),
        "initial_compatibility": compat,
    })
    run.say(f"{traj.info['stopped']} after {traj.info['steps']} steps, t = {traj.t[-1]:.6g}, "
            f"grad {traj.grad_norm[-1]:.3e}")
    return 0


def _load_trajectory(run, path):
    path = path or os.path.join(run.out, "trajectory.csv")
    if not os.path.exists(path):
        raise ConfigError(f"trajectory: file {path} does not exist")
    try:
        traj = fl.Trajectory.from_csv(path)
    except ValueError as exc:
        raise ConfigError(f"trajectory: cannot parse {path} ({exc})") from None
    snap = os.path.join(os.path.dirname(path), "snapshots.npz")
    if os.path.exists(snap):
        snaps = art.load_snapshots(snap)
        if snaps and abs(snaps[-1][0] - traj.t[-1]) <= 1e-12 * (1.0 + abs(traj.t[-1])):
            traj.snapshots = snaps
    return traj


def cmd_diagnose(run, trajectory=None):
    d = run.config.diagnostics
    frame = run.frame()
    traj = _load_trajectory(run, trajectory)
    if d.ls:
        lin = dg.assemble_linearized(frame, run.phi_polar)
        ls = dg.lopatinskii_shapiro_check(lin, frame.alpha)
        art.write_csv(run.path("ls.csv"), ("re_lambda", "im_lambda", "abs_det"), ls["rows"])
        run.extra["ls"] = {k: v for k, v in ls.items() if k != "rows"}
    if d.spectrum:
        op = va.assemble_Mprime0(frame, run.phi_polar, d.spectrum_n)
        art.write_csv(run.path("spectrum.csv"), ("index", "real", "imag"), va.spectrum_rows(op))
    if d.convergence:
        try:
            rep = dg.convergence_report(traj, frame, run.phi_polar)
            rep["converged"] = True
        except NotConverged as exc:
            rep = {"converged": False, "reason": str(exc)}
        if any(h is not None for _, _, h in traj.snapshots):
            try:
                rep["smoothing"] = dg.smoothing_probe(traj)
            except InsufficientData as exc:
                rep["smoothing"] = {"error": str(exc)}
        art.write_json(run.path("convergence.json"), rep)
    if d.lsi:
        fit = dg.fit_lsi(traj, frame.energy)
        rec = fit.to_dict()
        sel = (traj.t >= fit.window[0]) & (traj.t <= fit.window[1])
        rec["fraction_satisfied"] = fit.holds(np.abs(traj.energy[sel] - frame.energy),
                                              traj.grad_norm[sel])
        art.write_json(run.path("lsi.json"), rec)
        run.say(f"theta {fit.theta:.4f} C {fit.C:.4g} over {fit.n_samples} samples")
    return 0


def cmd_check(run):
    frame = run.frame()
    h0 = run.initial_height(frame)
    net = rf.reconstruct(frame, h0)
    f, det_f = va.boundary_matrix_F(frame, run.phi_polar)
    rep = {
        "height": fl.check_h_compatibility(frame, h0, run.phi_polar),
        "network": fl.check_admissible(net, run.phi_polar, frame.endpoints),
        "frame": {
            "herring_residual": _frame_record(frame, run.phi_polar)["herring_residual"],
            "det_I": float(np.linalg.det(frame.I_matrix)),
            "F": f, "det_F": det_f,
            "junction_angles": frame.angles,
        },
    }
    art.write_json(run.path("check.json"), rep)
    run.say(json.dumps(art._plain(rep["height"]), sort_keys=True))
    return 0


def cmd_wulff(run, samples):
    if samples < 3:
        raise ConfigError("samples: need at least 3")
    art.write_csv(run.path("wulff.csv"), ("x", "y"), wulff_samples(run.phi, samples))
    run.say(f"wrote {samples} Wulff samples")
    return 0


def exit_code(exc):
    for kinds, code in EXIT_CODES:
        if isinstance(exc, kinds):
            return code
    return 6


def report_error(exc):
    code = exit_code(exc)
    print(f"error: code={code} type={type(exc).__name__} message={json.dumps(str(exc))}",
          file=sys.stderr)
    return code


def main(argv=None):
    run = None
    try:
        args = build_parser().parse_args(argv)
        config = cfg.load(args.config) if args.config else cfg.ExperimentConfig()
        config = config.with_overrides(seed=args.seed, output=args.out)
        run = Run(config, args.quiet, args.command)
        if args.command == "minimize":
            code = cmd_minimize(run)
        elif args.command == "flow":
            code = cmd_flow(run)
        elif args.command == "diagnose":
            code = cmd_diagnose(run, args.trajectory)
        elif args.command == "check":
            code = cmd_check(run)
        else:
            code = cmd_wulff(run, args.samples)
        run.finish("ok")
        return code
    except AnisoflowError as exc:
        code = report_error(exc)
        if run is not None:
            run.files = [f for f in run.files if os.path.exists(os.path.join(run.out, f))]
            run.finish(f"error: {type(exc).__name__}")
        return code


if __name__ == "__main__":
    sys.exit(main())
