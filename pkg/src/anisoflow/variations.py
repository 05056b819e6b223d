"""Energy of height fields, its gradient in W and the linearization at zero.

Height fields are arrays of shape ``(3, N)``.  The admissible set ``V``
requires ``h(0) = 0`` and ``sum_i alpha_i h_i(1) = 0``.  Gradients live in
``W = L^2(0,1)^3 x R^2`` and act on ``V`` through

    <v, (u, a)> = sum_i int u_i v_i dx + a_1 v_1(1) + a_2 v_2(1)

with trapezoidal quadrature.  The third end value is eliminated via
``v_3(1) = -(alpha_1 v_1(1) + alpha_2 v_2(1)) / alpha_3``.

The discrete gradient is the exact derivative of the discrete energy
(see :func:`anisoflow.geometry.energy`), so the pairing reproduces
directional derivatives up to rounding.  Interior densities ``u`` are nodal
derivatives divided by the grid spacing; end values are linearly
extrapolated and the boundary scalars ``a`` absorb the remainder.
"""
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .reference_frame import mu_of_h, reconstruct


def trapezoid_weights(n):
    dx = 1.0 / (n - 1)
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


@dataclass(frozen=True)
class GradientElement:
    """Element ``((u_1, u_2, u_3), a_1, a_2)`` of W."""

    u: np.ndarray
    a: np.ndarray

    def __mul__(self, s):
        return GradientElement(self.u * s, self.a * s)

    __rmul__ = __mul__


def w_norm(g, frame=None):
    """Norm of W: trapezoidal L2 norms of ``u`` plus the boundary scalars."""
    w = trapezoid_weights(g.u.shape[-1])
    return float(np.sqrt(np.sum(w * g.u ** 2) + np.sum(np.asarray(g.a) ** 2)))


def pairing(v, g):
    """Duality pairing of an admissible height field with an element of W."""
    v = np.asarray(v, dtype=float)
    w = trapezoid_weights(v.shape[-1])
    return float(np.sum(w * v * g.u) + g.a[0] * v[0, -1] + g.a[1] * v[1, -1])


def _displacement(frame, h):
    h = np.asarray(h, dtype=float)
    mu = mu_of_h(frame, h)
    return h[:, :, None] * frame.nu[:, None, :] + mu[:, :, None] * frame.tau[:, None, :]


def energy_of_h(frame, h, phi_polar=None):
    """Energy of the network reconstructed from ``h``."""
    phi_polar = phi_polar or frame.phi_polar
    return geo.energy(reconstruct(frame, h), phi_polar)


def first_variation_terms(frame, h0, h1, phi_polar=None):
    """Interior and junction contributions of ``E'(h0) h1``.

    The interior part pairs the discrete anisotropic curvature with the
    variation field; the junction part pairs the Cahn-Hoffmann vectors of
    the last segments with the common junction displacement and vanishes
    when those vectors balance.
    """
    phi_polar = phi_polar or frame.phi_polar
    net = reconstruct(frame, h0)
    g = geo.node_gradient(net.curves, phi_polar)
    z = _displacement(frame, h1)
    inner = float(np.sum(g[:, :-1] * z[:, :-1]))
    junction = float(np.sum(g[:, -1] * z[:, -1]))
    return inner, junction


def first_variation(frame, h0, h1, phi_polar=None):
    """Directional derivative of the energy at ``h0`` along ``h1``."""
    inner, junction = first_variation_terms(frame, h0, h1, phi_polar)
    return inner + junction


def _split_coefficients(frame, c):
    """Turn nodal coefficients ``c`` (3, N) into a GradientElement."""
    n = c.shape[-1]
    dx = 1.0 / (n - 1)
    u = np.empty_like(c)
    u[..., 1:-1] = c[..., 1:-1] / dx
    u[..., 0] = 2.0 * u[..., 1] - u[..., 2]
    u[..., -1] = 2.0 * u[..., -2] - u[..., -3]
    rest = c[..., -1] - 0.5 * dx * u[..., -1]
    al = frame.alpha
    a = np.stack([rest[..., 0] - al[0] / al[2] * rest[..., 2],
                  rest[..., 1] - al[1] / al[2] * rest[..., 2]], axis=-1)
    return GradientElement(u, a)


def gradient_M(frame, h0, phi_polar=None):
    """Gradient of the energy at ``h0`` as an element of W."""
    phi_polar = phi_polar or frame.phi_polar
    net = reconstruct(frame, h0)
    g = geo.node_gradient(net.curves, phi_polar)
    gn = np.einsum("inj,ij->in", g, frame.nu)
    gt = np.einsum("inj,ij->in", g, frame.tau)
    c = gn + frame.I_matrix.T @ gt
    return _split_coefficients(frame, c)


def junction_slope(h):
    """Derivative at ``x = 1`` consistent with the discrete second variation.

    Equals ``(h_N - h_{N-1})/dx + dx/2 * h''_N`` with the one-sided second
    difference, a second-order approximation of ``h'(1)``.
    """
    h = np.asarray(h, dtype=float)
    dx = 1.0 / (h.shape[-1] - 1)
    return (4.0 * h[..., -1] - 7.0 * h[..., -2] + 4.0 * h[..., -3] - h[..., -4]) / (2.0 * dx)


def second_derivative(h):
    """Grid second derivative of (..., N) arrays with one-sided end stencils."""
    h = np.asarray(h, dtype=float)
    return geo.diff2(h[..., None], 1.0 / (h.shape[-1] - 1))[..., 0]


def second_variation(frame, h0, h1, phi_polar=None):
    """Second variation of the energy at the reference frame.

    Evaluates ``-sum_i int D_i h0_i'' / L_i^2 * h1_i * L_i dx
    + sum_i D_i / L_i * h0_i'(1) h1_i(1)`` with trapezoidal quadrature, where
    ``D_i = D^2 phi_polar(nu*_i) tau*_i . tau*_i`` and ``L_i`` is the segment
    length.  The end slope uses :func:`junction_slope`, which makes the
    result an exact discrete integration by parts of the symmetric form
    ``sum_i D_i / L_i sum_cells (dh0)(dh1) / dx``.
    """
    phi_polar = phi_polar or frame.phi_polar
    d = np.einsum("ni,nij,nj->n", frame.tau, phi_polar.hess(frame.nu), frame.tau)
    h0 = np.asarray(h0, dtype=float)
    h1 = np.asarray(h1, dtype=float)
    w = trapezoid_weights(h0.shape[-1])
    k = d / frame.lengths
    inner = -np.sum(k[:, None] * second_derivative(h0) * h1 * w)
    bnd = np.sum(k * junction_slope(h0) * h1[:, -1])
    return float(inner + bnd)


def mprime0_apply(frame, h, phi_polar=None):
    """Linearized gradient at zero applied to ``h`` of shape (..., 3, N)."""
    phi_polar = phi_polar or frame.phi_polar
    d = np.einsum("ni,nij,nj->n", frame.tau, phi_polar.hess(frame.nu), frame.tau)
    k = d / frame.lengths
    h = np.asarray(h, dtype=float)
    u = -k[:, None] * second_derivative(h)
    s = k * junction_slope(h)
    al = frame.alpha
    a = np.stack([s[..., 0] - al[0] / al[2] * s[..., 2],
                  s[..., 1] - al[1] / al[2] * s[..., 2]], axis=-1)
    return GradientElement(u, a)


@dataclass(frozen=True)
class DiscreteOperator:
    """Matrix of the linearized gradient on the constrained space.

    Parameters are the interior values of the three curves followed by the
    end values of curves 1 and 2, ``m = 3 (N - 2) + 2`` in total.  The matrix
    maps them to ``(u_1, u_2, u_3, a_1, a_2)`` stacked into ``3 N + 2`` entries.
    """

    matrix: np.ndarray
    embedding: np.ndarray
    n: int
    alpha: np.ndarray

    def to_params(self, h):
        h = np.asarray(h, dtype=float)
        return np.concatenate([h[:, 1:-1].ravel(), h[:2, -1]])

    def from_params(self, q):
        return (self.embedding @ q).reshape(3, self.n)

    def apply(self, h):
        out = self.matrix @ self.to_params(h)
        return GradientElement(out[:3 * self.n].reshape(3, self.n), out[3 * self.n:])

    def pairing_matrix(self):
        """Row operator ``q1 -> <from_params(q1), .>`` acting on W vectors."""
        w = np.tile(trapezoid_weights(self.n), 3)
        m = self.embedding.shape[1]
        sel = np.zeros((2, m))
        sel[0, m - 2] = 1.0
        sel[1, m - 1] = 1.0
        return np.hstack([self.embedding.T * w[None, :], sel.T])

    def stiffness(self):
        return self.pairing_matrix() @ self.matrix

    def mass(self):
        w = np.tile(trapezoid_weights(self.n), 3)
        return self.embedding.T @ (w[:, None] * self.embedding)

    def spectrum(self):
        """Generalized eigenvalues of stiffness versus mass, sorted by real part."""
        from scipy.linalg import eig
        vals = eig(self.stiffness(), self.mass(), right=False)
        return vals[np.argsort(vals.real)]

    def singular_values(self):
        return np.linalg.svd(self.matrix, compute_uv=False)


def assemble_Mprime0(frame, phi_polar=None, n=64):
    """Dense matrix of the linearized gradient at zero on ``n`` grid points."""
    al = frame.alpha
    m = 3 * (n - 2) + 2
    emb = np.zeros((3 * n, m))
    for i in range(3):
        for j in range(1, n - 1):
            emb[i * n + j, i * (n - 2) + (j - 1)] = 1.0
    emb[0 * n + n - 1, m - 2] = 1.0
    emb[1 * n + n - 1, m - 1] = 1.0
    emb[2 * n + n - 1, m - 2] = -al[0] / al[2]
    emb[2 * n + n - 1, m - 1] = -al[1] / al[2]
    basis = emb.T.reshape(m, 3, n)
    g = mprime0_apply(frame, basis, phi_polar)
    mat = np.hstack([g.u.reshape(m, 3 * n), g.a]).T
    return DiscreteOperator(mat, emb, n, al.copy())


def boundary_matrix_F(frame, phi_polar=None):
    """Boundary matrix of the linearized junction charges and its determinant.

    Returns
    -------
    F : ndarray, shape (2, 2)
    det : float
        Computed from the closed-form three-term expansion.
    """
    phi_polar = phi_polar or frame.phi_polar
    d = np.einsum("ni,nij,nj->n", frame.tau, phi_polar.hess(frame.nu), frame.tau)
    r = frame.alpha[:2] / frame.alpha[2]
    f = np.array([
        [d[0] + r[0] ** 2 * d[2], r[0] * r[1] * d[2]],
        [r[0] * r[1] * d[2], d[1] + r[1] ** 2 * d[2]],
    ])
    det = d[0] * d[1] + d[0] * d[2] * r[1] ** 2 + d[1] * d[2] * r[0] ** 2
    return f, float(det)


def spectrum_rows(op):
    """Rows ``(index, real, imag)`` of the operator spectrum for CSV export."""
    vals = op.spectrum()
    return [(k, float(v.real), float(v.imag)) for k, v in enumerate(vals)]
