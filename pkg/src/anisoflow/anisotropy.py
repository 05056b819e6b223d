"""Smooth elliptic anisotropies and their polar norms.

An anisotropy is a norm on the plane.  Every evaluator here is vectorized
over leading axes: inputs have shape ``(..., 2)`` and scalar outputs have
shape ``(...)``.

Three families are provided:

* :class:`Euclidean` -- the standard norm, which is self-dual.
* :class:`Quadratic` -- ``sqrt(x . A x)`` for a symmetric positive definite
  ``A``.  Its polar is the quadratic norm of ``A^{-1}``.
* :class:`Custom` -- any user supplied vectorized norm.  Derivatives fall
  back to central finite differences and the polar is computed numerically
  by maximizing ``zeta . x`` over the unit circle of the norm.
"""
from functools import cached_property

import numpy as np

from .exceptions import DegenerateInput, NonOrthogonalFrame, NotElliptic

DEGENERATE_FLOOR = 1e-12
GRAD_STEP = 1e-6
HESS_STEP = 1e-4
POLAR_SAMPLES = 720
POLAR_GOLDEN_STEPS = 30
ELLIPTICITY_SAMPLES = 360
ELLIPTICITY_FLOOR = 1e-10
ORTHO_TOL = 1e-8

_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"expected trailing dimension 2, got shape {x.shape}")
    return x


def _check_nonzero(p):
    r = np.linalg.norm(p, axis=-1)
    if np.any(r < DEGENERATE_FLOOR):
        raise DegenerateInput("norm derivatives are undefined at the origin")
    return r


def unit_directions(m, offset=0.0):
    """Return ``m`` unit vectors at equally spaced angles, shape (m, 2)."""
    th = offset + 2.0 * np.pi * np.arange(m) / m
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


class Anisotropy:
    """Base class for planar norms.

    Subclasses implement :meth:`__call__` and may override :meth:`grad`,
    :meth:`hess` and :meth:`polar`.  The defaults use central finite
    differences with steps ``1e-6 * max(|p|, 1)`` for the gradient and
    ``1e-4 * max(|p|, 1)`` for the Hessian.
    """

    kind = "custom"

    def __call__(self, x):
        raise NotImplementedError

    def eval(self, x):
        """Evaluate the norm; returns exactly 0 at the origin."""
        return self(x)

    def grad(self, p):
        p = _as_points(p)
        r = _check_nonzero(p)
        h = (GRAD_STEP * np.maximum(r, 1.0))[..., None]
        out = np.empty_like(p)
        for a in range(2):
            e = np.zeros(2)
            e[a] = 1.0
            out[..., a] = (self(p + h * e) - self(p - h * e)) / (2.0 * h[..., 0])
        return out

    def hess(self, p):
        p = _as_points(p)
        r = _check_nonzero(p)
        h = (HESS_STEP * np.maximum(r, 1.0))[..., None]
        h2 = h[..., 0] ** 2
        e0, e1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        f0 = self(p)
        out = np.empty(p.shape + (2,))
        for a, e in enumerate((e0, e1)):
            out[..., a, a] = (self(p + h * e) - 2.0 * f0 + self(p - h * e)) / h2
        off = (self(p + h * (e0 + e1)) - self(p + h * (e0 - e1))
               - self(p + h * (e1 - e0)) + self(p - h * (e0 + e1))) / (4.0 * h2)
        out[..., 0, 1] = off
        out[..., 1, 0] = off
        return out

    def polar(self):
        """Return the polar norm ``x -> sup{zeta . x : phi(zeta) <= 1}``."""
        self.check_elliptic()
        return NumericPolar(self)

    @cached_property
    def ellipticity_constant(self):
        """Smallest eigenvalue of ``D^2(phi^2)`` over sampled unit directions."""
        e = unit_directions(ELLIPTICITY_SAMPLES)
        f = self(e)
        g = self.grad(e)
        hmat = self.hess(e)
        d2 = 2.0 * (g[:, :, None] * g[:, None, :] + f[:, None, None] * hmat)
        return float(np.min(np.linalg.eigvalsh(d2)))

    def check_elliptic(self):
        c = self.ellipticity_constant
        if not np.isfinite(c) or c <= ELLIPTICITY_FLOOR:
            raise NotElliptic(f"ellipticity constant {c:.3e} is not positive")
        return c

    def to_dict(self):
        return {"kind": self.kind}


class Quadratic(Anisotropy):
    """Quadratic norm ``sqrt(x . A x)`` with closed-form derivatives.

    Parameters
    ----------
    matrix : array_like, shape (2, 2)
        Symmetric positive definite matrix.
    """

    kind = "quadratic"

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float)
        if a.shape != (2, 2) or not np.all(np.isfinite(a)):
            raise ValueError("matrix must be a finite 2x2 array")
        if abs(a[0, 1] - a[1, 0]) > 1e-12 * max(1.0, np.abs(a).max()):
            raise ValueError("matrix must be symmetric")
        a = 0.5 * (a + a.T)
        if np.linalg.eigvalsh(a)[0] <= 0.0:
            raise NotElliptic("matrix must be positive definite")
        self.matrix = a

    def __call__(self, x):
        x = _as_points(x)
        q = np.einsum("...i,ij,...j->...", x, self.matrix, x)
        return np.sqrt(np.maximum(q, 0.0))

    def grad(self, p):
        p = _as_points(p)
        _check_nonzero(p)
        ap = p @ self.matrix
        return ap / self(p)[..., None]

    def hess(self, p):
        p = _as_points(p)
        _check_nonzero(p)
        f = self(p)[..., None, None]
        ap = p @ self.matrix
        return (self.matrix - ap[..., :, None] * ap[..., None, :] / f ** 2) / f

    def polar(self):
        return Quadratic(np.linalg.inv(self.matrix))

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}

    def __repr__(self):
        return f"Quadratic({self.matrix.tolist()})"


class Euclidean(Quadratic):
    """The Euclidean norm; it is its own polar."""

    kind = "euclidean"

    def __init__(self):
        super().__init__(np.eye(2))

    def __call__(self, x):
        return np.linalg.norm(_as_points(x), axis=-1)

    def polar(self):
        return Euclidean()

    def to_dict(self):
        return {"kind": self.kind}

    def __repr__(self):
        return "Euclidean()"


class Custom(Anisotropy):
    """User supplied norm.

    Parameters
    ----------
    func : callable
        Vectorized evaluator taking ``(..., 2)`` arrays.
    grad, hess : callable, optional
        Analytic derivatives with the same broadcasting convention.
    """

    kind = "custom"

    def __init__(self, func, grad=None, hess=None):
        self._func = func
        self._grad = grad
        self._hess = hess

    def __call__(self, x):
        x = _as_points(x)
        return np.asarray(self._func(x), dtype=float)

    def grad(self, p):
        if self._grad is None:
            return super().grad(p)
        p = _as_points(p)
        _check_nonzero(p)
        return np.asarray(self._grad(p), dtype=float)

    def hess(self, p):
        if self._hess is None:
            return super().hess(p)
        p = _as_points(p)
        _check_nonzero(p)
        return np.asarray(self._hess(p), dtype=float)


class NumericPolar(Custom):
    """Polar of a norm computed by sampling plus golden-section refinement.

    The unit circle of ``base`` is parametrized by angle as
    ``zeta(t) = e(t) / base(e(t))``.  For each query point the best of
    720 equally spaced angles brackets the maximizer of ``zeta(t) . x``,
    which is then refined by 30 golden-section steps.
    """

    def __init__(self, base):
        super().__init__(self._evaluate)
        self.base = base
        self._step = 2.0 * np.pi / POLAR_SAMPLES
        self._angles = np.arange(POLAR_SAMPLES) * self._step
        e = unit_directions(POLAR_SAMPLES)
        self._zeta = e / base(e)[:, None]

    def _zeta_at(self, t):
        e = np.stack([np.cos(t), np.sin(t)], axis=-1)
        return e / self.base(e)[..., None]

    def _evaluate(self, x):
        shape = x.shape[:-1]
        xf = x.reshape(-1, 2)
        dots = xf @ self._zeta.T
        k = np.argmax(dots, axis=1)
        best = dots[np.arange(len(xf)), k]
        a = self._angles[k] - self._step
        b = self._angles[k] + self._step

        def f(t):
            return np.einsum("ij,ij->i", self._zeta_at(t), xf)

        c = b - _GOLD * (b - a)
        d = a + _GOLD * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(POLAR_GOLDEN_STEPS):
            # keep [a, d] where f(c) wins, otherwise [c, b]
            left = fc > fd
            a, b = np.where(left, a, c), np.where(left, d, b)
            c, d = (np.where(left, b - _GOLD * (b - a), d),
                    np.where(left, c, a + _GOLD * (b - a)))
            fnew = f(np.where(left, c, d))
            fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        val = np.maximum(best, np.maximum(fc, fd))
        val = np.where(np.linalg.norm(xf, axis=1) == 0.0, 0.0, val)
        return val.reshape(shape)

    def polar(self):
        self.check_elliptic()
        return NumericPolar(self)


def evaluate(phi, x):
    """Evaluate ``phi`` at ``x``."""
    return phi(x)


def grad(phi, p):
    return phi.grad(p)


def hess(phi, p):
    return phi.hess(p)


def polar(phi):
    return phi.polar()


def cahn_hoffmann(phi_polar, nu):
    """Cahn-Hoffmann vector ``D phi_polar(nu)``; lies on the unit sphere of phi."""
    return phi_polar.grad(nu)


def tangential_stiffness(phi_polar, nu, tau):
    """Second derivative ``D^2 phi_polar(nu) tau . tau``."""
    hmat = phi_polar.hess(nu)
    return np.einsum("...i,...ij,...j->...", tau, hmat, tau)


def mobility_weight(phi_polar, nu, tau):
    """Weight ``phi_polar(nu) * (D^2 phi_polar(nu) tau . tau)`` of the flow.

    Raises
    ------
    NonOrthogonalFrame
        If ``nu`` and ``tau`` are not orthonormal within 1e-8.
    """
    nu = _as_points(nu)
    tau = _as_points(tau)
    bad = (np.abs(np.sum(nu * tau, axis=-1)) > ORTHO_TOL) \
        | (np.abs(np.linalg.norm(nu, axis=-1) - 1.0) > ORTHO_TOL) \
        | (np.abs(np.linalg.norm(tau, axis=-1) - 1.0) > ORTHO_TOL)
    if np.any(bad):
        raise NonOrthogonalFrame("normal and tangent must be orthonormal")
    return phi_polar(nu) * tangential_stiffness(phi_polar, nu, tau)


def wulff_samples(phi, m):
    """Return ``m`` boundary points of the unit ball ``{phi <= 1}`` ordered by angle."""
    if m < 3:
        raise ValueError("need at least 3 samples")
    e = unit_directions(m)
    return e / phi(e)[:, None]


def from_config(spec):
    """Build an anisotropy from a ``{kind, matrix}`` mapping."""
    kind = str(spec.get("kind", "euclidean")).lower()
    if kind == "euclidean":
        return Euclidean()
    if kind == "quadratic":
        if "matrix" not in spec:
            raise ValueError("quadratic anisotropy needs a matrix")
        return Quadratic(spec["matrix"])
    raise ValueError(f"unknown anisotropy kind {kind!r}")
