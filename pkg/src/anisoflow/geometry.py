"""Discrete curves and triple junction networks.

A curve is an ``(N, 2)`` array of samples on the uniform grid
``x_j = j / (N - 1)``.  A network stacks three curves into an ``(3, N, 2)``
array; every curve runs from its fixed endpoint (node 0) to the common
junction (node N-1).  Normals are tangents rotated by +90 degrees.

Derivatives use central differences in the interior and second-order
one-sided stencils at the two ends.  The energy of a polyline is the exact
anisotropic length of its segments,
``sum_j phi_polar(R (p_{j+1} - p_j))``, which is the midpoint rule for
``int phi_polar((gamma_x)^perp) dx`` on the piecewise linear interpolant.
It is exact on straight lines and its node gradient is available in closed
form (see :func:`node_gradient`).
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateAngles, DegenerateCurve

SPEED_FLOOR = 1e-12
ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def rot90(v):
    """Rotate vectors of shape (..., 2) anticlockwise by 90 degrees."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def grid(n):
    return np.linspace(0.0, 1.0, n)


def diff1(f, dx):
    """First derivative along axis -2 (grid axis) of arrays shaped (..., N, k)."""
    return np.gradient(f, dx, axis=-2, edge_order=2)


def diff2(f, dx):
    """Second derivative along axis -2; 4-point one-sided stencils at the ends."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[..., 1:-1, :] = f[..., 2:, :] - 2.0 * f[..., 1:-1, :] + f[..., :-2, :]
    out[..., 0, :] = 2.0 * f[..., 0, :] - 5.0 * f[..., 1, :] + 4.0 * f[..., 2, :] - f[..., 3, :]
    out[..., -1, :] = (2.0 * f[..., -1, :] - 5.0 * f[..., -2, :]
                       + 4.0 * f[..., -3, :] - f[..., -4, :])
    return out / dx ** 2


def end_slope(f, dx):
    """Second-order one-sided derivative at the last node along axis -1."""
    return (3.0 * f[..., -1] - 4.0 * f[..., -2] + f[..., -3]) / (2.0 * dx)


def _spacing(pts):
    n = pts.shape[-2]
    if n < 4:
        raise ValueError("curves need at least 4 nodes")
    return 1.0 / (n - 1)


def frames(curve):
    """Unit tangents and normals at every node.

    Parameters
    ----------
    curve : ndarray, shape (..., N, 2)

    Returns
    -------
    tau, nu : ndarray, shape (..., N, 2)
    """
    curve = np.asarray(curve, dtype=float)
    dx = _spacing(curve)
    d = diff1(curve, dx)
    speed = np.linalg.norm(d, axis=-1)
    if np.any(speed < SPEED_FLOOR):
        raise DegenerateCurve("parametric speed vanishes at some node")
    tau = d / speed[..., None]
    return tau, rot90(tau)


def speed(curve):
    """Parametric speed ``|gamma'|`` at every node."""
    curve = np.asarray(curve, dtype=float)
    return np.linalg.norm(diff1(curve, _spacing(curve)), axis=-1)


def curvature(curve):
    """Signed curvature ``det(gamma', gamma'') / |gamma'|^3`` at every node."""
    curve = np.asarray(curve, dtype=float)
    dx = _spacing(curve)
    d1 = diff1(curve, dx)
    d2 = diff2(curve, dx)
    sp = np.linalg.norm(d1, axis=-1)
    if np.any(sp < SPEED_FLOOR):
        raise DegenerateCurve("parametric speed vanishes at some node")
    return cross2(d1, d2) / sp ** 3


def anisotropic_curvature(curve, phi_polar):
    """``(D^2 phi_polar(nu) tau . tau) * kappa`` at every node."""
    tau, nu = frames(curve)
    stiff = np.einsum("...i,...ij,...j->...", tau, phi_polar.hess(nu), tau)
    return stiff * curvature(curve)


def energy(curves, phi_polar):
    """Anisotropic length ``sum_i int phi_polar(nu) ds`` of a curve or network.

    Accepts a :class:`Network` or any array of shape (..., N, 2).
    """
    pts = curves.curves if isinstance(curves, Network) else np.asarray(curves, dtype=float)
    cells = np.diff(pts, axis=-2)
    return float(np.sum(phi_polar(rot90(cells))))


def node_gradient(curves, phi_polar):
    """Gradient of :func:`energy` with respect to every node position.

    For an interior node ``j`` this is ``R^T (N_{j-1/2} - N_{j+1/2})`` where
    ``N`` is the Cahn-Hoffmann vector of the adjacent segment normal; the last
    node only sees its left segment and the first node only its right one.
    """
    pts = np.asarray(curves, dtype=float)
    cells = np.diff(pts, axis=-2)
    ch = phi_polar.grad(rot90(cells))
    # R^T v = -R v
    back = -rot90(ch)
    g = np.zeros_like(pts)
    g[..., 1:, :] += back
    g[..., :-1, :] -= back
    return g


def lengths(curves):
    """Euclidean polyline length of each curve."""
    pts = curves.curves if isinstance(curves, Network) else np.asarray(curves, dtype=float)
    return np.sum(np.linalg.norm(np.diff(pts, axis=-2), axis=-1), axis=-1)


class Network:
    """Three curves sharing a junction.

    Parameters
    ----------
    curves : array_like, shape (3, N, 2)
        ``curves[i, 0]`` is the fixed endpoint and ``curves[i, -1]`` the
        junction.
    """

    def __init__(self, curves):
        c = np.array(curves, dtype=float)
        if c.ndim != 3 or c.shape[0] != 3 or c.shape[2] != 2:
            raise ValueError(f"network curves must have shape (3, N, 2), got {c.shape}")
        if c.shape[1] < 8:
            raise ValueError("curves need at least 8 nodes")
        c.setflags(write=False)
        self.curves = c

    @property
    def n(self):
        return self.curves.shape[1]

    @property
    def endpoints(self):
        return self.curves[:, 0, :]

    @property
    def junction(self):
        return self.curves[:, -1, :].mean(axis=0)

    def concurrency_error(self):
        ends = self.curves[:, -1, :]
        return float(np.max(np.linalg.norm(ends - ends.mean(axis=0), axis=-1)))

    def translated(self, shift):
        return Network(self.curves + np.asarray(shift, dtype=float))

    def to_dict(self):
        return {
            "curves": self.curves.tolist(),
            "endpoints": self.endpoints.tolist(),
            "junction": self.junction.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["curves"])

    def __repr__(self):
        return f"Network(N={self.n}, junction={self.junction.tolist()})"


@dataclass(frozen=True)
class JunctionData:
    """Angles, weights and frames at the junction.

    ``angles[k]`` is the angle between the normals of the two other curves,
    taken in cyclic order: ``angles[2]`` sits between curves 0 and 1.
    ``alpha`` solves ``sum_i alpha_i nu_i = 0`` with ``alpha[2] = 1``.
    ``orientation`` is +1 when the endpoints wind anticlockwise around the
    junction and -1 otherwise.
    """

    angles: np.ndarray
    alpha: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    orientation: int

    def to_dict(self):
        return {"angles": self.angles.tolist(), "alpha": self.alpha.tolist(),
                "orientation": self.orientation}


def junction_from_normals(normals, tangents=None, tol=1e-10):
    """Build :class:`JunctionData` from the three unit normals at the junction."""
    nu = np.asarray(normals, dtype=float)
    if tangents is None:
        tangents = -rot90(nu)
    angles = np.empty(3)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        angles[k] = np.arctan2(abs(cross2(nu[i], nu[j])), np.dot(nu[i], nu[j]))
    if np.any(angles <= tol) or np.any(angles >= np.pi - tol):
        raise DegenerateAngles(f"junction angles {angles.tolist()} leave (0, pi)")
    mat = np.column_stack([nu[0], nu[1]])
    a12 = np.linalg.solve(mat, -nu[2])
    alpha = np.array([a12[0], a12[1], 1.0])
    if np.any(alpha <= 0.0):
        raise DegenerateAngles("junction weights are not all positive")
    if abs(angles.sum() - 2.0 * np.pi) > 1e-8:
        raise DegenerateAngles("junction angles do not sum to 2 pi")
    orientation = 1 if cross2(nu[0], nu[1]) > 0 else -1
    return JunctionData(angles, alpha, nu.copy(), np.asarray(tangents, dtype=float).copy(),
                        orientation)


def junction_data(net, phi_polar=None):
    """Extract junction angles and force-balance weights from the last nodes."""
    curves = net.curves if isinstance(net, Network) else np.asarray(net, dtype=float)
    tau, nu = frames(curves)
    return junction_from_normals(nu[:, -1, :], tau[:, -1, :])


def herring_residual(net, phi_polar):
    """Sum of the Cahn-Hoffmann vectors of the three end normals."""
    curves = net.curves if isinstance(net, Network) else np.asarray(net, dtype=float)
    _, nu = frames(curves)
    return np.sum(phi_polar.grad(nu[:, -1, :]), axis=0)


def curve_table(curve, phi_polar):
    """Rows ``(x_param, px, py, kappa, kappa_phi)`` for CSV export."""
    curve = np.asarray(curve, dtype=float)
    x = grid(curve.shape[0])
    return np.column_stack([x, curve[:, 0], curve[:, 1], curvature(curve),
                            anisotropic_curvature(curve, phi_polar)])


def _point_segment_distance(p, a, b):
    # p: (M, 2); a, b: (S, 2) -> (M, S)
    ab = b - a
    l2 = np.maximum(np.sum(ab * ab, axis=-1), 1e-300)
    t = np.clip(np.einsum("msk,sk->ms", p[:, None, :] - a[None], ab) / l2, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - proj, axis=-1)


def hausdorff_distance(net_a, net_b):
    """Symmetric Hausdorff distance between two networks seen as polyline sets."""
    ca = net_a.curves if isinstance(net_a, Network) else np.asarray(net_a)
    cb = net_b.curves if isinstance(net_b, Network) else np.asarray(net_b)
    pa = ca.reshape(-1, 2)
    pb = cb.reshape(-1, 2)
    sa = (ca[:, :-1].reshape(-1, 2), ca[:, 1:].reshape(-1, 2))
    sb = (cb[:, :-1].reshape(-1, 2), cb[:, 1:].reshape(-1, 2))
    d_ab = _point_segment_distance(pa, *sb).min(axis=1).max()
    d_ba = _point_segment_distance(pb, *sa).min(axis=1).max()
    return float(max(d_ab, d_ba))


def diameter(net):
    pts = (net.curves if isinstance(net, Network) else np.asarray(net)).reshape(-1, 2)
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))
