"""Straight-line minimizing networks and height-field coordinates around them.

A reference frame is the energy minimizing network made of three straight
segments from fixed endpoints ``P^i`` to a junction ``Sigma*``.  Curve ``i``
is parametrized at constant speed ``L_i = |Sigma* - P^i|`` over ``[0, 1]``.

Nearby networks are described by a height field ``h`` of shape ``(3, N)``:
curve ``i`` is ``gamma*_i + h_i nu*_i + mu_i tau*_i`` where the tangential part
``mu = I h`` is fixed pointwise by the coupling matrix ``I``.  This choice
keeps the three curves concurrent at ``x = 1`` whenever
``sum_i alpha_i h_i(1) = 0``.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import geometry as geo
from .exceptions import (DegenerateMinimizer, NewtonDivergence,
                         NonMonotoneReparametrization)

NEWTON_TOL = 1e-12
MAX_ITERS = 50
MAX_HALVINGS = 30
CLOSENESS_GATE = 0.2
GRAD_ACCEPT = 1e-9


def _objective(sigma, endpoints, phi_polar):
    return float(np.sum(phi_polar(geo.rot90(sigma - endpoints))))


def _objective_grad_hess(sigma, endpoints, phi_polar):
    v = geo.rot90(sigma - endpoints)
    g = np.sum(-geo.rot90(phi_polar.grad(v)), axis=0)
    hm = phi_polar.hess(v)
    hsum = np.einsum("ai,nab,bj->ij", geo.ROT, hm, geo.ROT)
    return g, hsum


def _vertex_is_optimal(endpoints, phi_polar, phi):
    """True for vertices where the convex objective attains its minimum."""
    out = []
    for i in range(3):
        others = np.delete(endpoints, i, axis=0)
        g, _ = _objective_grad_hess(endpoints[i], others, phi_polar)
        out.append(float(phi(geo.rot90(g))) <= 1.0 + 1e-9)
    return out


def minimize_junction(endpoints, phi_polar, newton_tol=NEWTON_TOL, max_iters=MAX_ITERS):
    """Minimize ``Sigma -> sum_i phi_polar(R (Sigma - P^i))`` by damped Newton.

    Returns
    -------
    sigma : ndarray, shape (2,)
    info : dict
        Iteration count and final gradient norm.
    """
    p = np.asarray(endpoints, dtype=float)
    scale = max(np.max(np.linalg.norm(p - p.mean(axis=0), axis=1)), 1e-300)
    phi = phi_polar.polar()
    hits = _vertex_is_optimal(p, phi_polar, phi)
    if any(hits):
        raise DegenerateMinimizer(
            f"the minimizer sits on endpoint {hits.index(True)}; no interior junction")
    sigma = p.mean(axis=0)
    f = _objective(sigma, p, phi_polar)
    it = 0
    gnorm = np.inf
    for it in range(1, max_iters + 1):
        g, hm = _objective_grad_hess(sigma, p, phi_polar)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= newton_tol:
            break
        try:
            step = -np.linalg.solve(hm, g)
            if not np.all(np.isfinite(step)) or step @ g >= 0.0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = -g * scale
        # the objective has kinks at the endpoints; never jump past half the
        # distance to the nearest one
        reach = 0.5 * float(np.min(np.linalg.norm(sigma - p, axis=1)))
        length = float(np.linalg.norm(step))
        if length > reach:
            step *= reach / length
        slope = float(step @ g)
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            trial = sigma + t * step
            ft = _objective(trial, p, phi_polar)
            if ft <= f + 1e-4 * t * slope:
                accepted = True
                break
            # near the optimum energy differences drown in rounding; accept
            # steps that shrink the gradient without raising the energy
            if ft <= f + 1e-14 * abs(f) and np.linalg.norm(
                    _objective_grad_hess(trial, p, phi_polar)[0]) < 0.5 * gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        moved = np.linalg.norm(trial - sigma)
        sigma, f = trial, ft
        if moved <= 1e-16 * scale:
            break
    if np.min(np.linalg.norm(sigma - p, axis=1)) < 1e-8 * scale:
        raise DegenerateMinimizer("junction collapsed onto an endpoint")
    g, _ = _objective_grad_hess(sigma, p, phi_polar)
    if np.linalg.norm(g) > GRAD_ACCEPT:
        raise NewtonDivergence(f"junction Newton stalled with gradient {np.linalg.norm(g):.3e}")
    return sigma, {"iterations": it, "grad_norm": float(np.linalg.norm(g))}


def build_I(jd):
    """Coupling matrix that turns normal displacements into tangential ones.

    Entries follow the cyclic pattern ``[[0, c2/s1, -c3/s1], [-c1/s2, 0, c3/s2],
    [c1/s3, -c2/s3, 0]]`` with ``c = cos(angles)`` and ``s = sin(angles)``,
    multiplied by the junction orientation so that the formula holds for
    endpoints listed clockwise as well as anticlockwise.
    """
    th = np.asarray(jd.angles, dtype=float)
    c, s = np.cos(th), np.sin(th)
    m = np.array([
        [0.0, c[1] / s[0], -c[2] / s[0]],
        [-c[0] / s[1], 0.0, c[2] / s[1]],
        [c[0] / s[2], -c[1] / s[2], 0.0],
    ])
    return jd.orientation * m


@dataclass(frozen=True)
class ReferenceFrame:
    """Minimizing straight network with precomputed frames and coupling.

    Attributes
    ----------
    endpoints : ndarray, shape (3, 2)
    junction : ndarray, shape (2,)
    phi_polar : Anisotropy
        The energy density evaluated on normals.
    lengths : ndarray, shape (3,)
        Segment lengths, equal to the constant parametric speeds.
    tau, nu : ndarray, shape (3, 2)
        Constant unit tangents (pointing to the junction) and normals.
    junction_data : JunctionData
    I_matrix : ndarray, shape (3, 3)
    """

    endpoints: np.ndarray
    junction: np.ndarray
    phi_polar: object
    lengths: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    junction_data: geo.JunctionData
    I_matrix: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    @property
    def alpha(self):
        return self.junction_data.alpha

    @property
    def angles(self):
        return self.junction_data.angles

    @property
    def energy(self):
        return float(np.sum(self.phi_polar(self.nu) * self.lengths))

    @property
    def stiffness(self):
        """``D^2 phi_polar(nu*) tau* . tau*`` for each curve."""
        return np.einsum("ni,nij,nj->n", self.tau, self.phi_polar.hess(self.nu), self.tau)

    def gamma_star(self, n):
        x = geo.grid(n)
        return self.endpoints[:, None, :] + x[None, :, None] * (self.junction - self.endpoints)[:, None, :]

    def network(self, n):
        return geo.Network(self.gamma_star(n))

    def to_dict(self):
        return {
            "junction": self.junction.tolist(),
            "endpoints": self.endpoints.tolist(),
            "theta_star": self.angles.tolist(),
            "alpha_star": self.alpha.tolist(),
            "I_matrix": self.I_matrix.tolist(),
        }


def frame_from_junction(endpoints, junction, phi_polar, info=None):
    p = np.asarray(endpoints, dtype=float)
    sigma = np.asarray(junction, dtype=float)
    d = sigma - p
    lens = np.linalg.norm(d, axis=1)
    tau = d / lens[:, None]
    nu = geo.rot90(tau)
    jd = geo.junction_from_normals(nu, tau)
    return ReferenceFrame(p.copy(), sigma.copy(), phi_polar, lens, tau, nu, jd, build_I(jd),
                          info or {})


def minimize(endpoints, phi_polar, newton_tol=NEWTON_TOL, max_iters=MAX_ITERS):
    """Build the reference frame for the given endpoints.

    Parameters
    ----------
    endpoints : array_like, shape (3, 2)
        Pairwise distinct fixed endpoints.
    phi_polar : Anisotropy
        Energy density on normals.

    Raises
    ------
    DegenerateMinimizer
        If the minimizing junction coincides with an endpoint.
    """
    p = np.asarray(endpoints, dtype=float)
    if p.shape != (3, 2):
        raise ValueError("endpoints must have shape (3, 2)")
    for i in range(3):
        for j in range(i + 1, 3):
            if np.linalg.norm(p[i] - p[j]) == 0.0:
                raise ValueError(f"endpoints {i} and {j} coincide")
    sigma, info = minimize_junction(p, phi_polar, newton_tol, max_iters)
    return frame_from_junction(p, sigma, phi_polar, info)


def mu_of_h(frame, h):
    """Tangential part ``mu = I h`` evaluated pointwise; ``h`` has shape (3, N)."""
    return frame.I_matrix @ np.asarray(h, dtype=float)


def junction_residual(frame, h):
    """Violation of the linear junction constraint ``sum_i alpha_i h_i(1)``."""
    return float(frame.alpha @ np.asarray(h)[:, -1])


def project_admissible(frame, h):
    """Make ``h`` admissible without introducing kinks.

    Subtracts ``h(0)`` from each curve and removes the junction constraint
    violation from the third curve with a linear ramp in ``x``.
    """
    h = np.array(h, dtype=float)
    h -= h[:, :1]
    x = geo.grid(h.shape[1])
    a = frame.alpha
    h[2] -= (a @ h[:, -1]) / a[2] * x
    return h


def reconstruct(frame, h):
    """Network ``gamma* + h nu* + (I h) tau*`` built from a height field."""
    h = np.asarray(h, dtype=float)
    mu = mu_of_h(frame, h)
    pts = (frame.gamma_star(h.shape[1])
           + h[:, :, None] * frame.nu[:, None, :]
           + mu[:, :, None] * frame.tau[:, None, :])
    geo.frames(pts)  # raises DegenerateCurve on vanishing speed
    return geo.Network(pts)


@dataclass(frozen=True)
class Reparametrization:
    """Monotone maps ``Phi_i: [0,1] -> [0,1]`` sampled on the grid, shape (3, N)."""

    phi: np.ndarray


def graph_reparametrize(net, frame, newton_tol=NEWTON_TOL, max_iters=MAX_ITERS,
                        closeness_gate=CLOSENESS_GATE):
    """Write a nearby network as a height field over the frame.

    For every grid node ``x`` the three parameters ``Phi_i(x)`` are found by
    Newton's method so that the tangential offsets of ``gamma_i(Phi_i(x))``
    from ``gamma*_i(x)`` equal ``I`` times the normal offsets.  The curves are
    interpolated by cubic splines between nodes.

    Returns
    -------
    h : ndarray, shape (3, N)
    reparam : Reparametrization

    Raises
    ------
    NewtonDivergence
        If the network fails the closeness gate or Newton stalls.
    NonMonotoneReparametrization
        If some ``Phi_i`` is not strictly increasing.
    """
    curves = net.curves if isinstance(net, geo.Network) else np.asarray(net, dtype=float)
    n = curves.shape[1]
    x = geo.grid(n)
    star = frame.gamma_star(n)
    lmin = float(frame.lengths.min())
    scale = float(frame.lengths.max())
    if np.max(np.abs(curves[:, 0] - frame.endpoints)) > 1e-10 * scale:
        raise ValueError("network endpoints differ from the frame endpoints")
    dist = float(np.max(np.linalg.norm(curves - star, axis=-1)))
    if dist >= closeness_gate * lmin:
        raise NewtonDivergence(
            f"network is {dist:.3e} from the frame, gate is {closeness_gate * lmin:.3e}")
    splines = [CubicSpline(x, curves[i], axis=0) for i in range(3)]
    dsplines = [s.derivative() for s in splines]
    imat = frame.I_matrix
    inner = slice(1, n - 1)
    xs = x[inner]
    target = star[:, inner, :]
    phi = np.tile(xs, (3, 1))

    def residual(ph):
        d = np.stack([splines[i](ph[i]) for i in range(3)]) - target
        nrm = np.einsum("inj,ij->in", d, frame.nu)
        tan = np.einsum("inj,ij->in", d, frame.tau)
        return tan - imat @ nrm, nrm

    res, nrm = residual(phi)
    err = float(np.max(np.abs(res)))
    for _ in range(max_iters):
        if err <= newton_tol * scale:
            break
        dg = np.stack([dsplines[i](phi[i]) for i in range(3)])
        dt_ = np.einsum("inj,ij->in", dg, frame.tau)
        dn_ = np.einsum("inj,ij->in", dg, frame.nu)
        # jac[n, a, b] = delta_ab dt_b - I_ab dn_b
        jac = -imat[None, :, :] * dn_.T[:, None, :]
        jac[:, np.arange(3), np.arange(3)] += dt_.T
        try:
            step = -np.linalg.solve(jac, res.T[..., None])[..., 0].T
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence("singular reparametrization Jacobian") from exc
        t = 1.0
        for _ in range(MAX_HALVINGS):
            trial = np.clip(phi + t * step, 0.0, 1.0)
            r_t, n_t = residual(trial)
            e_t = float(np.max(np.abs(r_t)))
            if e_t < err or e_t <= newton_tol * scale:
                break
            t *= 0.5
        else:
            raise NewtonDivergence("line search failed in graph reparametrization")
        phi, res, nrm, err = trial, r_t, n_t, e_t
    if err > max(newton_tol, 1e-10) * scale:
        raise NewtonDivergence(f"reparametrization residual {err:.3e} above tolerance")
    full = np.empty((3, n))
    full[:, 0] = 0.0
    full[:, -1] = 1.0
    full[:, inner] = phi
    if np.any(np.diff(full, axis=1) <= 0.0):
        raise NonMonotoneReparametrization("reparametrization is not strictly increasing")
    h = np.empty((3, n))
    h[:, 0] = 0.0
    h[:, inner] = nrm
    h[:, -1] = np.einsum("ij,ij->i", curves[:, -1] - star[:, -1], frame.nu)
    return h, Reparametrization(full)


def smoothstep5(x):
    """Quintic ramp from 0 to 1 with vanishing first and second derivatives at both ends."""
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)


def sine_mode(x, k):
    """``sin(k pi x)`` corrected so value, slope and second derivative vanish at 1.

    The added harmonic ``-(-1)^k/2 sin(2 k pi x)`` cancels the end slope while
    keeping the zero value and zero second derivative at both ends.
    """
    return np.sin(k * np.pi * x) - 0.5 * (-1) ** k * np.sin(2 * k * np.pi * x)


def sine_perturbation(frame, n, amplitude, modes=(1, 2, 3), seed=0, junction_shift=True):
    """Compatible initial height field made of sine modes.

    Curve ``i`` receives ``c_i * sine_mode(x, modes[i % len(modes)])`` plus, optionally,
    a junction displacement ``b_i * smoothstep5(x)`` with ``sum alpha_i b_i = 0``.
    All pieces vanish with their second derivatives at ``x = 0`` and have zero
    slope and curvature at ``x = 1``, so the initial network satisfies the
    endpoint, concurrency, angle and curvature compatibility conditions.

    Parameters
    ----------
    amplitude : float
        Sup-norm of each sine piece relative to the shortest segment.
    seed : int
        Seed for the random signs and weights.
    """
    rng = np.random.default_rng(seed)
    x = geo.grid(n)
    lmin = float(frame.lengths.min())
    modes = list(modes)
    h = np.zeros((3, n))
    for i in range(3):
        s = sine_mode(x, modes[i % len(modes)])
        w = rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0])
        h[i] = amplitude * lmin * w * s / np.max(np.abs(s))
    if junction_shift:
        b = rng.normal(size=3)
        a = frame.alpha
        b = b - a * (a @ b) / (a @ a)
        b *= amplitude * lmin / np.max(np.abs(b))
        h += b[:, None] * smoothstep5(x)[None, :]
    return h
