"""Post-processing of flow runs and checks of the linearized junction problem.

* :func:`fit_lsi` fits the exponent of a gradient inequality
  ``|E - E*|^(1 - theta) <= C ||M||_W`` to a trajectory.
* :func:`assemble_linearized` and :func:`lopatinskii_shapiro_check` probe the
  linearized height system around a reference frame.
* :func:`smoothing_probe` and :func:`convergence_report` summarize the
  regularity and convergence of height-field snapshots.
"""
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import geometry as geo
from .exceptions import EnergyAtMinimum, InsufficientData, InvalidLambda, NotConverged

GAP_FLOOR = 1e-13
MIN_SAMPLES = 20


@dataclass(frozen=True)
class LsiFit:
    """Fitted exponent ``theta`` in (0, 1/2] and envelope constant ``C``."""

    theta: float
    C: float
    window: tuple
    residual: float
    n_samples: int
    slope: float

    def holds(self, gap, grad, rtol=1e-12):
        """Fraction of samples satisfying the fitted inequality."""
        lhs = np.asarray(gap) ** (1.0 - self.theta)
        return float(np.mean(lhs <= self.C * np.asarray(grad) * (1.0 + rtol)))

    def to_dict(self):
        return {"theta": self.theta, "C": self.C, "window": list(self.window),
                "residual": self.residual, "n_samples": self.n_samples}


def fit_lsi(traj=None, e_star=None, *, t=None, energy=None, grad=None, window=None):
    """Fit ``theta`` and ``C`` by log-log regression with a max-ratio envelope.

    Parameters
    ----------
    traj : Trajectory, optional
        Source of ``t``, ``E`` and ``grad_W_norm`` columns.
    e_star : float
        Energy of the limiting critical point.  Defaults to the value stored
        in ``traj.info``.
    window : (t0, t1), optional
        Time window.  By default all samples whose energy gap exceeds
        ``1e3`` times the floor ``1e-13 (1 + E*)`` are used.

    Raises
    ------
    InsufficientData
        Fewer than 20 samples in the window.
    EnergyAtMinimum
        Some gap in an explicit window is below the floor.
    """
    if traj is not None:
        t, energy, grad = traj.t, traj.energy, traj.grad_norm
        if e_star is None:
            e_star = traj.info.get("E_star")
    if e_star is None:
        raise ValueError("the minimal energy is required")
    t = np.asarray(t, dtype=float)
    energy = np.asarray(energy, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if len(t) < MIN_SAMPLES:
        raise InsufficientData(f"need at least {MIN_SAMPLES} samples, got {len(t)}")
    gap = np.abs(energy - e_star)
    floor = GAP_FLOOR * (1.0 + abs(e_star))
    if window is None:
        keep = (gap > 1e3 * floor) & (grad > 0.0)
        idx = np.nonzero(keep)[0]
        if len(idx) == 0:
            raise InsufficientData("no samples above the energy floor")
        # leading stretch only, so the window is an interval in time
        stop = idx[0]
        while stop + 1 < len(t) and keep[stop + 1]:
            stop += 1
        sel = np.arange(idx[0], stop + 1)
    else:
        sel = np.nonzero((t >= window[0]) & (t <= window[1]))[0]
        if len(sel) and np.any(gap[sel] <= floor):
            raise EnergyAtMinimum("energy gap below the floating point floor in the window")
    if len(sel) < MIN_SAMPLES:
        raise InsufficientData(f"need at least {MIN_SAMPLES} samples in the window, got {len(sel)}")
    x = np.log(gap[sel])
    y = np.log(grad[sel])
    slope, icpt = np.polyfit(x, y, 1)
    pred = slope * x + icpt
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    theta = float(np.clip(1.0 - slope, 1e-6, 0.5))
    c = float(np.max(gap[sel] ** (1.0 - theta) / grad[sel]))
    return LsiFit(theta, c, (float(t[sel[0]]), float(t[sel[-1]])), r2, int(len(sel)), float(slope))


@dataclass(frozen=True)
class LinearizedSystem:
    """Linearization of the height system at a reference frame.

    Attributes
    ----------
    d : ndarray, shape (3,)
        Diffusion coefficients ``m_i / L_i^2``.
    lot : ndarray, shape (3,)
        First-order coefficients; zero for straight frames.
    r1, r2 : float
        Junction slope ratios: ``h_2'(1) = -r1 h_3'(1)`` and ``h_1'(1) = -r2 h_3'(1)``.
    alpha : ndarray, shape (3,)
    """

    d: np.ndarray
    lot: np.ndarray
    r1: float
    r2: float
    alpha: np.ndarray


def assemble_linearized(frame, phi_polar=None):
    """Coefficients of the linearized height system around ``frame``.

    The slope ratios keep the ``1 / L_i`` factors of the end normal
    variation, which reduce to plain stiffness ratios on unit segments.
    """
    phi_polar = phi_polar or frame.phi_polar
    stiff = np.einsum("ni,nij,nj->n", frame.tau, phi_polar.hess(frame.nu), frame.tau)
    lens = frame.lengths
    d = phi_polar(frame.nu) * stiff / lens ** 2
    k = stiff / lens
    tau, nu = frame.tau, frame.nu
    r1 = k[2] * (tau[2] @ nu[0]) / (k[1] * (tau[1] @ nu[0]))
    r2 = k[2] * (tau[2] @ nu[1]) / (k[0] * (tau[0] @ nu[1]))
    lin = LinearizedSystem(d, np.zeros(3), float(r1), float(r2), frame.alpha.copy())
    if not (np.all(d > 0) and r1 < 0 and r2 < 0):
        raise AssertionError("linearization violates parabolicity or slope sign conditions")
    return lin


def linearized_step(lin, h, dt):
    """One implicit Euler step of the linearized height system."""
    h = np.asarray(h, dtype=float)
    n = h.shape[1]
    dx = 1.0 / (n - 1)
    size = 3 * n
    mat = sparse.lil_matrix((size, size))
    rhs = np.zeros(size)
    for i in range(3):
        r = dt * lin.d[i] / dx ** 2
        for j in range(1, n - 1):
            row = i * n + j
            mat[row, row] = 1.0 + 2.0 * r
            mat[row, row - 1] = -r
            mat[row, row + 1] = -r
            rhs[row] = h[i, j]
        mat[i * n, i * n] = 1.0
    st = np.array([3.0, -4.0, 1.0]) / (2.0 * dx)
    last = [[k * n + n - 1, k * n + n - 2, k * n + n - 3] for k in range(3)]
    row = n - 1
    for k in range(3):
        mat[row, k * n + n - 1] = lin.alpha[k]
    row = n + n - 1
    for c, s in zip(last[1], st):
        mat[row, c] += s
    for c, s in zip(last[2], st):
        mat[row, c] += lin.r1 * s
    row = 2 * n + n - 1
    for c, s in zip(last[0], st):
        mat[row, c] += s
    for c, s in zip(last[2], st):
        mat[row, c] += lin.r2 * s
    return spsolve(mat.tocsc(), rhs).reshape(3, n)


def default_lambda_grid():
    """``10^k exp(i psi)`` for k in -2..2 and nine psi strictly inside (-pi/2, pi/2)."""
    psi = np.linspace(-np.pi / 2, np.pi / 2, 11)[1:-1]
    return np.array([10.0 ** k * np.exp(1j * p) for k in range(-2, 3) for p in psi])


def ls_determinant(lin, alpha, lam):
    """Determinant of the junction boundary rows on decaying exponentials."""
    lam = complex(lam)
    if lam.real <= 0.0:
        raise InvalidLambda(f"Re(lambda) must be positive, got {lam}")
    rho = np.sqrt(lam / np.asarray(lin.d, dtype=complex))
    rho = np.where(rho.real < 0, -rho, rho)
    a = np.asarray(alpha, dtype=float)
    m = np.array([
        [a[0], a[1], a[2]],
        [0.0, -rho[1], -lin.r1 * rho[2]],
        [-rho[0], 0.0, -lin.r2 * rho[2]],
    ], dtype=complex)
    return complex(np.linalg.det(m))


def lopatinskii_shapiro_check(lin, alpha=None, lambdas=None):
    """Evaluate the complementing condition on a grid of spectral parameters.

    Returns
    -------
    dict
        ``rows`` of ``(re_lambda, im_lambda, abs_det)``, ``min_abs_det``,
        ``dirichlet_min_abs_det`` (the fixed-endpoint condition at x = 0),
        ``continuity_ok`` (neighboring grid values within a factor 10) and the
        sign checks of ``r1``, ``r2`` and ``d``.
    """
    alpha = lin.alpha if alpha is None else alpha
    lams = default_lambda_grid() if lambdas is None else np.asarray(lambdas, dtype=complex)
    dets = np.array([ls_determinant(lin, alpha, lam) for lam in lams])
    absd = np.abs(dets)
    # at x = 0 each curve has its own Dirichlet row, so the matrix is diagonal
    dirichlet = np.ones(len(lams))
    cont = True
    if lambdas is None:
        grid = absd.reshape(5, 9)
        cont = bool(np.all(grid[:, 1:] / grid[:, :-1] < 10.0)
                    and np.all(grid[:, :-1] / grid[:, 1:] < 10.0))
    return {
        "rows": [(float(l.real), float(l.imag), float(v)) for l, v in zip(lams, absd)],
        "min_abs_det": float(absd.min()),
        "dirichlet_min_abs_det": float(dirichlet.min()),
        "continuity_ok": cont,
        "r1": lin.r1,
        "r2": lin.r2,
        "d": np.asarray(lin.d).tolist(),
        "signs_ok": bool(lin.r1 < 0 and lin.r2 < 0 and np.all(np.asarray(lin.d) > 0)),
    }


def c3_proxy(h):
    """Sum of sup norms of divided differences of orders 0 to 3."""
    h = np.asarray(h, dtype=float)
    dx = 1.0 / (h.shape[1] - 1)
    total = float(np.max(np.abs(h)))
    d = h
    for _ in range(3):
        d = np.diff(d, axis=1) / dx
        total += float(np.max(np.abs(d)))
    return total


def _height_snapshots(traj):
    snaps = [(t, h) for t, _, h in traj.snapshots if h is not None]
    return snaps


def smoothing_probe(traj, window=(0.5, 1.0)):
    """Discrete C^3 proxies of the height snapshots in a late time window.

    ``window`` is given as fractions of the final snapshot time.

    Returns
    -------
    dict
        ``times`` and ``c3`` of the windowed snapshots, ``h0_c2`` (C^2 norm
        of the first snapshot), ``ratio`` (max proxy over ``1 + h0_c2``) and
        ``monotone_tail`` (proxies non-increasing in the window).
    """
    from .flow import c_norms
    snaps = _height_snapshots(traj)
    if len(snaps) < 2:
        raise InsufficientData("need at least two height snapshots")
    t_final = snaps[-1][0]
    sel = [(t, h) for t, h in snaps if window[0] * t_final <= t <= window[1] * t_final]
    if len(sel) < 2:
        raise InsufficientData("fewer than two snapshots in the window")
    h0_c2 = c_norms(snaps[0][1])[2]
    c3 = np.array([c3_proxy(h) for _, h in sel])
    return {
        "times": [float(t) for t, _ in sel],
        "c3": c3.tolist(),
        "h0_c2": h0_c2,
        "ratio": float(c3.max() / (1.0 + h0_c2)),
        "monotone_tail": bool(np.all(np.diff(c3) <= 1e-12 * (1.0 + c3.max()))),
    }


def tail_ratios(times, dists, t_final, levels=4, noise=1e-12):
    """Ratios ``q(T/2^j) / q(T/2^(j+1))`` of distances to the limit.

    Uses the snapshot nearest to each dyadic time; pairs whose numerator
    is below ``noise`` are skipped.
    """
    times = np.asarray(times)
    dists = np.asarray(dists)
    out = []
    for j in range(1, levels + 1):
        a = np.argmin(np.abs(times - t_final / 2 ** j))
        b = np.argmin(np.abs(times - t_final / 2 ** (j + 1)))
        if a == b or dists[a] < noise or dists[b] <= 0:
            continue
        out.append(float(dists[a] / dists[b]))
    return out


def convergence_report(traj, frame, phi_polar=None, floor=None):
    """Summary of how close the end of a run is to a stationary network.

    Works from the trajectory columns alone; snapshots, when present, add the
    final Herring residual and the C^0, C^1, C^2 distances to the last height
    field together with their dyadic tail ratios.

    Raises
    ------
    NotConverged
        If the final gradient norm is not below ``floor`` (default
        ``1e-9 (1 + E*)``).
    """
    from .flow import c_norms
    phi_polar = phi_polar or frame.phi_polar
    e_star = frame.energy
    floor = 1e-9 * (1.0 + e_star) if floor is None else floor
    grad = traj.grad_norm
    if grad[-1] >= floor:
        raise NotConverged(f"final gradient norm {grad[-1]:.3e} is above {floor:.3e}")
    report = {
        "final_grad_W_norm": float(grad[-1]),
        "energy_gap": float(abs(traj.energy[-1] - e_star)),
        "max_kappa_phi": float(traj.column("max_kappa_phi")[-1]),
        "floor": float(floor),
    }
    if traj.snapshots:
        curves = traj.snapshots[-1][1]
        net = geo.Network(curves)
        report["max_kappa"] = float(np.max(np.abs(geo.curvature(curves))))
        report["herring"] = float(np.linalg.norm(geo.herring_residual(net, phi_polar)))
    snaps = _height_snapshots(traj)
    if snaps:
        h_inf = snaps[-1][1]
        times = np.array([t for t, _ in snaps])
        dists = np.array([c_norms(h - h_inf) for _, h in snaps])
        report["times"] = times.tolist()
        report["c0_dist"] = dists[:, 0].tolist()
        report["c1_dist"] = dists[:, 1].tolist()
        report["c2_dist"] = dists[:, 2].tolist()
        report["c2_tail_ratios"] = tail_ratios(times, dists[:, 2], times[-1])
    return report
