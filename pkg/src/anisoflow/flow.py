"""Time stepping of the anisotropic curve shortening flow of a triple junction.

Two formulations are provided.

Parametric (``special_flow_step``)
    Every curve moves by ``u_t = m(nu) u_xx / |u_x|^2`` where
    ``m = phi_polar(nu) * (D^2 phi_polar(nu) tau . tau)``.  Coefficients are
    frozen at the old time and ``u_xx`` is implicit, which gives one
    tridiagonal solve per curve.  The new junction position is found by
    Newton's method on the angle condition ``sum_i D phi_polar(nu_i(1)) = 0``.

Graph (``h_flow_step``)
    The network is ``reconstruct(frame, h)`` and the height field solves
    ``F_h h_t = m kappa`` with ``F_h`` the pointwise 3x3 matrix relating normal
    velocities to ``h_t``.  The second derivative terms are implicit and the
    nonlinear angle condition is imposed through Newton on the end slopes.

Both steppers reject steps that raise the energy and retry with half the
time step.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from . import geometry as geo
from .anisotropy import mobility_weight
from .exceptions import (CollapseDetected, JunctionNewtonDivergence, MaxStepsExceeded,
                         NewtonDivergence, SingularFh, StepRejected)
from .reference_frame import graph_reparametrize, mu_of_h, reconstruct
from .variations import gradient_M, w_norm

NEWTON_TOL = 1e-12
NEWTON_MAX_ITERS = 50
MAX_HALVINGS = 10
ENERGY_TOL = 1e-10
STATIONARY_FACTOR = 1e-9
COLLAPSE_FRACTION = 1e-2
FH_FLOOR = 1e-8


@dataclass(frozen=True)
class FlowState:
    """Immutable state of a run.

    ``h`` is present only in graph mode; then ``network`` equals
    ``reconstruct(frame, h)``.
    """

    t: float
    network: geo.Network
    frame: object = None
    h: np.ndarray = None


# ----------------------------------------------------------------------------
# parametric formulation


def _tridiag_solve(r, rhs):
    """Solve ``(1 + 2 r_j) u_j - r_j (u_{j-1} + u_{j+1}) = rhs_j`` on interior nodes."""
    n = len(r)
    ab = np.zeros((3, n))
    ab[0, 1:] = -r[:-1]
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r[1:]
    return solve_banded((1, 1), ab, rhs)


def _herring_newton(p, q, sigma0, phi_polar, tol, max_iters=NEWTON_MAX_ITERS):
    """Find ``Sigma`` with ``sum_i D phi_polar(R (p_i + q_i Sigma)) = 0``."""

    def resid(s):
        slopes = p + q[:, None] * s[None, :]
        return np.sum(phi_polar.grad(geo.rot90(slopes)), axis=0), slopes

    sigma = np.array(sigma0, dtype=float)
    res, slopes = resid(sigma)
    err = float(np.linalg.norm(res))
    scale = float(np.max(np.linalg.norm(slopes, axis=1)))
    for it in range(max_iters):
        if err <= tol:
            return sigma, err, it
        hm = phi_polar.hess(geo.rot90(slopes))
        jac = np.einsum("nab,bc->ac", hm * q[:, None, None], geo.ROT)
        try:
            step = -np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as exc:
            raise JunctionNewtonDivergence("singular junction Jacobian") from exc
        t = 1.0
        for _ in range(30):
            trial = sigma + t * step
            r_t, s_t = resid(trial)
            e_t = float(np.linalg.norm(r_t))
            if e_t < err:
                break
            t *= 0.5
        else:
            if err <= 1e3 * tol:
                return sigma, err, it
            raise JunctionNewtonDivergence(f"junction residual stalled at {err:.3e}")
        sigma, res, slopes, err = trial, r_t, s_t, e_t
    if err <= 1e3 * tol * max(scale, 1.0):
        return sigma, err, max_iters
    raise JunctionNewtonDivergence(f"junction residual {err:.3e} after {max_iters} iterations")


def _special_step_once(curves, phi_polar, dt, tol):
    n = curves.shape[1]
    dx = 1.0 / (n - 1)
    tau, nu = geo.frames(curves)
    coef = mobility_weight(phi_polar, nu, tau) / np.sum(
        geo.diff1(curves, dx) ** 2, axis=-1)
    new = np.array(curves)
    p = np.empty((3, 2))
    q = np.empty(3)
    parts = []
    for i in range(3):
        r = dt * coef[i, 1:-1] / dx ** 2
        rhs = np.zeros((n - 2, 3))
        rhs[:, :2] = curves[i, 1:-1]
        rhs[0, :2] += r[0] * curves[i, 0]
        rhs[-1, 2] = r[-1]
        sol = _tridiag_solve(r, rhs)
        a, b = sol[:, :2], sol[:, 2]
        parts.append((a, b))
        p[i] = (-4.0 * a[-1] + a[-2]) / (2.0 * dx)
        q[i] = (3.0 - 4.0 * b[-1] + b[-2]) / (2.0 * dx)
    sigma0 = curves[:, -1].mean(axis=0)
    sigma, err, iters = _herring_newton(p, q, sigma0, phi_polar, tol)
    for i, (a, b) in enumerate(parts):
        new[i, 1:-1] = a + b[:, None] * sigma[None, :]
        new[i, -1] = sigma
    return new, {"herring": err, "newton_iters": iters}


def _accept_or_halve(step_fn, e_old, e_scale, dt):
    """Run ``step_fn(dt)`` and halve dt while the energy increases."""
    for _ in range(MAX_HALVINGS + 1):
        out, info, e_new = step_fn(dt)
        if e_new <= e_old + ENERGY_TOL * e_scale:
            info["dt"] = dt
            info["energy"] = e_new
            return out, info
        dt *= 0.5
    raise StepRejected(f"energy increased by {e_new - e_old:.3e} after {MAX_HALVINGS} halvings")


def special_flow_step(state, dt, phi_polar=None, newton_tol=NEWTON_TOL, energy_scale=None):
    """Advance a parametric state by one semi-implicit step.

    Parameters
    ----------
    state : FlowState
    dt : float
        Requested step; the accepted step may be smaller after halvings.
    phi_polar : Anisotropy, optional
        Defaults to the frame's anisotropy.
    energy_scale : float, optional
        Reference energy for the rejection tolerance; defaults to the
        current energy.

    Returns
    -------
    FlowState, dict
    """
    phi_polar = phi_polar or state.frame.phi_polar
    curves = state.network.curves
    e_old = geo.energy(curves, phi_polar)
    e_scale = e_old if energy_scale is None else energy_scale

    def attempt(h):
        new, info = _special_step_once(curves, phi_polar, h, newton_tol)
        return new, info, geo.energy(new, phi_polar)

    new, info = _accept_or_halve(attempt, e_old, e_scale, dt)
    return FlowState(state.t + info["dt"], geo.Network(new), state.frame, None), info


# ----------------------------------------------------------------------------
# graph formulation


def height_geometry(frame, h, phi_polar=None):
    """Geometric quantities of ``reconstruct(frame, h)`` expressed in frame coordinates.

    Returns a dict with the tangential and normal speed components ``A`` and
    ``B`` (so that ``gamma_x = A tau* + B nu*``), the speed, normals and
    tangents, the mobility weight ``m``, the curvature ``kappa`` and the
    matrix field ``F`` of shape (N, 3, 3).
    """
    phi_polar = phi_polar or frame.phi_polar
    h = np.asarray(h, dtype=float)
    n = h.shape[1]
    dx = 1.0 / (n - 1)
    imat = frame.I_matrix
    hx = geo.diff1(h[..., None], dx)[..., 0]
    hxx = geo.diff2(h[..., None], dx)[..., 0]
    mux = imat @ hx
    muxx = imat @ hxx
    a = frame.lengths[:, None] + mux
    b = hx
    spd = np.sqrt(a ** 2 + b ** 2)
    tau_h = (a[..., None] * frame.tau[:, None, :] + b[..., None] * frame.nu[:, None, :]) / spd[..., None]
    nu_h = geo.rot90(tau_h)
    m = mobility_weight(phi_polar, nu_h, tau_h)
    kappa = (a * hxx - b * muxx) / spd ** 3
    nn = a / spd
    nt = -b / spd
    fmat = np.einsum("in,ik->nik", nt, imat)
    fmat[:, np.arange(3), np.arange(3)] += nn.T
    return {"A": a, "B": b, "speed": spd, "tau": tau_h, "nu": nu_h, "m": m,
            "kappa": kappa, "F": fmat, "hxx": hxx}


def fh_matrix(frame, h, phi_polar=None):
    """Pointwise matrix ``diag(nu_h . nu*) + diag(nu_h . tau*) I``, shape (N, 3, 3)."""
    return height_geometry(frame, h, phi_polar)["F"]


def _slope_herring(frame, phi_polar, s):
    """Angle condition residual and its Jacobian in terms of the end slopes ``s``."""
    imat = frame.I_matrix
    lens = frame.lengths
    tang = lens + imat @ s
    gx = tang[:, None] * frame.tau + s[:, None] * frame.nu
    v = geo.rot90(gx)
    res = np.sum(phi_polar.grad(v), axis=0)
    hm = phi_polar.hess(v)
    # d gx_i / d s_k = I_ik tau_i + delta_ik nu_i, then rotate
    dg = imat[:, :, None] * frame.tau[:, None, :]
    dg[np.arange(3), np.arange(3)] += frame.nu
    dv = geo.rot90(dg)
    jac = np.einsum("iab,ikb->ak", hm, dv)
    return res, jac


def _h_step_once(frame, h, phi_polar, dt, tol):
    n = h.shape[1]
    dx = 1.0 / (n - 1)
    geom = height_geometry(frame, h, phi_polar)
    fmat = geom["F"]
    det = np.linalg.det(fmat)
    if np.min(np.abs(det)) < FH_FLOOR:
        raise SingularFh(f"min |det F_h| = {np.min(np.abs(det)):.3e}")
    imat = frame.I_matrix
    w = geom["m"] / geom["speed"] ** 3
    # K[j, i, k] multiplies h_k'' in the equation for curve i at node j
    kmat = -(w * geom["B"]).T[:, :, None] * imat[None, :, :]
    kmat[:, np.arange(3), np.arange(3)] += (w * geom["A"]).T
    rows, cols, vals = [], [], []
    rhs = np.zeros(3 * n)

    def idx(i, j):
        return i * n + j

    jj = np.arange(1, n - 1)
    for i in range(3):
        for k in range(3):
            fik = fmat[jj, i, k]
            kik = dt * kmat[jj, i, k] / dx ** 2
            r = idx(i, jj)
            rows += [r, r, r]
            cols += [idx(k, jj), idx(k, jj - 1), idx(k, jj + 1)]
            vals += [fik + 2.0 * kik, -kik, -kik]
            rhs[r] += fik * h[k, jj]
    for i in range(3):
        rows.append(np.array([idx(i, 0)]))
        cols.append(np.array([idx(i, 0)]))
        vals.append(np.array([1.0]))
    al = frame.alpha
    rows.append(np.full(3, idx(0, n - 1)))
    cols.append(np.array([idx(k, n - 1) for k in range(3)]))
    vals.append(al.copy())
    base = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(3 * n, 3 * n))
    stencil = np.array([3.0, -4.0, 1.0]) / (2.0 * dx)
    end_cols = np.array([[idx(k, n - 1), idx(k, n - 2), idx(k, n - 3)] for k in range(3)])

    x = np.array(h, dtype=float).ravel()
    err = np.inf
    for it in range(NEWTON_MAX_ITERS):
        s = x[end_cols] @ stencil
        res, jac = _slope_herring(frame, phi_polar, s)
        err = float(np.linalg.norm(res))
        if err <= tol and it > 0:
            break
        hr, hc, hv = [], [], []
        brhs = np.empty(2)
        for c in range(2):
            r = idx(c + 1, n - 1)
            for k in range(3):
                hr += [r] * 3
                hc += list(end_cols[k])
                hv += list(jac[c, k] * stencil)
            brhs[c] = jac[c] @ s - res[c]
        extra = sparse.csr_matrix((hv, (hr, hc)), shape=(3 * n, 3 * n))
        mat = base + extra
        full_rhs = rhs.copy()
        full_rhs[idx(1, n - 1)] = brhs[0]
        full_rhs[idx(2, n - 1)] = brhs[1]
        x_new = spsolve(mat.tocsc(), full_rhs)
        if not np.all(np.isfinite(x_new)):
            raise JunctionNewtonDivergence("non-finite height update")
        change = float(np.max(np.abs(x_new - x)))
        x = x_new
        if change <= 1e-15 * max(1.0, float(np.max(np.abs(x)))) and it > 0:
            s = x[end_cols] @ stencil
            err = float(np.linalg.norm(_slope_herring(frame, phi_polar, s)[0]))
            break
    else:
        raise JunctionNewtonDivergence(f"angle condition residual {err:.3e} after Newton")
    if err > 1e3 * tol:
        raise JunctionNewtonDivergence(f"angle condition residual {err:.3e}")
    out = x.reshape(3, n)
    out[:, 0] = 0.0
    out[2, -1] = -(al[0] * out[0, -1] + al[1] * out[1, -1]) / al[2]
    return out, {"herring": err, "newton_iters": it}


def h_flow_step(state, dt, phi_polar=None, newton_tol=NEWTON_TOL, energy_scale=None):
    """Advance a graph state by one semi-implicit step.

    Returns
    -------
    FlowState, dict
    """
    frame = state.frame
    phi_polar = phi_polar or frame.phi_polar
    h = np.asarray(state.h, dtype=float)
    e_old = geo.energy(state.network, phi_polar)
    e_scale = e_old if energy_scale is None else energy_scale

    def attempt(step):
        new, info = _h_step_once(frame, h, phi_polar, step, newton_tol)
        return new, info, geo.energy(reconstruct(frame, new), phi_polar)

    new, info = _accept_or_halve(attempt, e_old, e_scale, dt)
    net = reconstruct(frame, new)
    return FlowState(state.t + info["dt"], net, frame, new), info


# ----------------------------------------------------------------------------
# admissibility


def check_admissible(net, phi_polar, endpoints=None):
    """Residuals of the geometric compatibility conditions of an initial network.

    Parameters
    ----------
    endpoints : array_like, shape (3, 2), optional
        Prescribed endpoints; defaults to the network's own first nodes.

    Returns
    -------
    dict
        ``endpoints``, ``concurrency``, ``herring`` and ``kappa_phi_at_0``
        residuals plus ``lambda_balance = "not checkable"``.
    """
    curves = net.curves
    target = curves[:, 0] if endpoints is None else np.asarray(endpoints, dtype=float)
    kphi = geo.anisotropic_curvature(curves, phi_polar)
    return {
        "endpoints": float(np.max(np.linalg.norm(curves[:, 0] - target, axis=1))),
        "concurrency": net.concurrency_error(),
        "herring": float(np.linalg.norm(geo.herring_residual(net, phi_polar))),
        "kappa_phi_at_0": float(np.max(np.abs(kphi[:, 0]))),
        "lambda_balance": "not checkable",
    }


def check_h_compatibility(frame, h0, phi_polar=None):
    """Residuals of the compatibility conditions of an initial height field.

    Returns
    -------
    dict
        ``h_at_0`` (max |h_i(0)|), ``junction_sum`` (signed value of
        ``sum alpha_i h_i(1)``), ``herring``, ``kappa_at_0`` and
        ``velocity_sum`` (``sum alpha_i (F_h^{-1} m kappa)_i`` at x = 1).

    Raises
    ------
    SingularFh
        If ``F_h`` is singular at ``x = 1``.
    """
    phi_polar = phi_polar or frame.phi_polar
    h0 = np.asarray(h0, dtype=float)
    geom = height_geometry(frame, h0, phi_polar)
    f1 = geom["F"][-1]
    if abs(np.linalg.det(f1)) < FH_FLOOR:
        raise SingularFh("F_h is singular at the junction")
    vel = np.linalg.solve(f1, geom["m"][:, -1] * geom["kappa"][:, -1])
    herring = np.sum(phi_polar.grad(geom["nu"][:, -1]), axis=0)
    return {
        "h_at_0": float(np.max(np.abs(h0[:, 0]))),
        "junction_sum": float(frame.alpha @ h0[:, -1]),
        "herring": float(np.linalg.norm(herring)),
        "kappa_at_0": float(np.max(np.abs(geom["kappa"][:, 0]))),
        "velocity_sum": float(frame.alpha @ vel),
    }


# ----------------------------------------------------------------------------
# trajectories

TRAJECTORY_COLUMNS = ("t", "E", "grad_W_norm", "junction_x", "junction_y",
                      "max_kappa_phi", "h_c0", "h_c1", "h_c2")


@dataclass
class Trajectory:
    """Time series of a run plus optional snapshots.

    ``rows`` holds one tuple per accepted step in the order of
    :data:`TRAJECTORY_COLUMNS`.  ``snapshots`` holds ``(t, curves, h)``
    triples (``h`` may be None).
    """

    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def column(self, name):
        k = TRAJECTORY_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    @property
    def t(self):
        return self.column("t")

    @property
    def energy(self):
        return self.column("E")

    @property
    def grad_norm(self):
        return self.column("grad_W_norm")

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join(repr(float(v)) for v in r) + "\n")

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != TRAJECTORY_COLUMNS:
                raise ValueError(f"unexpected trajectory header {header}")
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(tuple(float(v) for v in line.split(",")))
        return cls(rows=rows)


def c_norms(h):
    """Cumulative discrete C^0, C^1, C^2 norms of a height field."""
    h = np.asarray(h, dtype=float)
    dx = 1.0 / (h.shape[1] - 1)
    c0 = float(np.max(np.abs(h)))
    c1 = c0 + float(np.max(np.abs(geo.diff1(h[..., None], dx))))
    c2 = c1 + float(np.max(np.abs(geo.diff2(h[..., None], dx))))
    return c0, c1, c2


def geometric_gradient_norm(net, phi_polar):
    """``(sum_i int kappa_phi^2 ds)^(1/2)`` with trapezoidal quadrature."""
    kphi = geo.anisotropic_curvature(net.curves, phi_polar)
    w = np.full(net.n, 1.0 / (net.n - 1))
    w[0] = w[-1] = 0.5 / (net.n - 1)
    return float(np.sqrt(np.sum(w * kphi ** 2 * geo.speed(net.curves))))


def _record(state, phi_polar, frame):
    net = state.network
    e = geo.energy(net, phi_polar)
    kphi = float(np.max(np.abs(geo.anisotropic_curvature(net.curves, phi_polar))))
    h = state.h
    if h is None and frame is not None:
        try:
            h, _ = graph_reparametrize(net, frame)
        except (NewtonDivergence, ValueError):
            h = None
    if frame is not None and h is not None:
        grad = w_norm(gradient_M(frame, h, phi_polar))
        norms = c_norms(h)
    else:
        grad = geometric_gradient_norm(net, phi_polar)
        norms = (math.nan, math.nan, math.nan)
    j = net.junction
    row = (state.t, e, grad, j[0], j[1], kphi) + tuple(norms)
    return row, h


def run_flow(initial, t_end, dt, mode="parametric", phi_polar=None, newton_tol=NEWTON_TOL,
             snapshot_stride=10, stationary_floor=None, collapse_fraction=COLLAPSE_FRACTION,
             max_steps=None):
    """Run the flow until ``t_end`` or stationarity.

    Parameters
    ----------
    initial : FlowState
        Graph mode needs ``frame`` and ``h``; parametric mode needs ``network``
        and uses ``frame`` (if present) for gradient norms and height records.
    mode : {"parametric", "graph"}
    stationary_floor : float, optional
        Stop once the W-gradient norm falls below it; defaults to
        ``1e-9 * (1 + E*)``.

    Returns
    -------
    Trajectory

    Raises
    ------
    CollapseDetected
        When a curve becomes shorter than ``collapse_fraction`` of its
        initial length.
    MaxStepsExceeded
    """
    if mode not in ("parametric", "graph"):
        raise ValueError(f"unknown mode {mode!r}")
    if dt <= 0 or t_end < 0:
        raise ValueError("dt must be positive and t_end non-negative")
    frame = initial.frame
    phi_polar = phi_polar or frame.phi_polar
    state = initial
    if mode == "graph":
        if frame is None or state.h is None:
            raise ValueError("graph mode needs a frame and a height field")
        state = FlowState(state.t, reconstruct(frame, state.h), frame, np.asarray(state.h, float))
        info = {"compatibility": check_h_compatibility(frame, state.h, phi_polar)}
        stepper = h_flow_step
    else:
        state = FlowState(state.t, state.network, frame, None)
        info = {"admissibility": check_admissible(state.network, phi_polar)}
        stepper = special_flow_step
    e_star = frame.energy if frame is not None else geo.energy(state.network, phi_polar)
    floor = STATIONARY_FACTOR * (1.0 + e_star) if stationary_floor is None else stationary_floor
    len_floor = collapse_fraction * float(np.min(geo.lengths(state.network)))
    e0 = geo.energy(state.network, phi_polar)
    traj = Trajectory(info=dict(info, mode=mode, dt=dt, t_end=t_end, E_star=e_star, floor=floor))
    traj.info["herring_per_step"] = []
    traj.info["concurrency_per_step"] = []
    row, h = _record(state, phi_polar, frame)
    traj.rows.append(row)
    traj.snapshots.append((state.t, state.network.curves.copy(), None if h is None else h.copy()))
    if max_steps is None:
        max_steps = 20 * int(math.ceil(t_end / dt)) + 10
    steps = 0
    t0 = state.t
    stopped = "t_end"
    while row[2] >= floor and state.t < t0 + t_end - 1e-12 * dt:
        if steps >= max_steps:
            raise MaxStepsExceeded(f"{steps} steps without reaching t_end")
        step = min(dt, t0 + t_end - state.t)
        state, _ = stepper(state, step, phi_polar, newton_tol, energy_scale=e0)
        steps += 1
        if np.min(geo.lengths(state.network)) < len_floor:
            raise CollapseDetected(f"a curve shrank below {len_floor:.3e} at t = {state.t:.6g}")
        row, h = _record(state, phi_polar, frame)
        traj.rows.append(row)
        traj.info["herring_per_step"].append(
            float(np.linalg.norm(geo.herring_residual(state.network, phi_polar))))
        traj.info["concurrency_per_step"].append(state.network.concurrency_error())
        if steps % snapshot_stride == 0:
            traj.snapshots.append((state.t, state.network.curves.copy(),
                                   None if h is None else h.copy()))
    if row[2] < floor:
        stopped = "stationary"
    if traj.snapshots[-1][0] != state.t:
        traj.snapshots.append((state.t, state.network.curves.copy(),
                               None if h is None else h.copy()))
    traj.info["stopped"] = stopped
    traj.info["steps"] = steps
    traj.info["final_state"] = state
    return traj
