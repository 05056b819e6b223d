import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisoflow import anisotropy as an
from anisoflow.exceptions import DegenerateInput, NonOrthogonalFrame, NotElliptic

finite = st.floats(-10.0, 10.0, allow_nan=False)
nonzero_points = st.tuples(finite, finite).filter(lambda p: np.hypot(*p) > 1e-3)
matrices = st.tuples(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(-0.9, 0.9)).map(
    lambda t: np.array([[t[0], t[2] * np.sqrt(t[0] * t[1])],
                        [t[2] * np.sqrt(t[0] * t[1]), t[1]]]))


def crystal_norm(x):
    return (np.abs(x[..., 0]) ** 4 + np.abs(x[..., 1]) ** 4) ** 0.25 \
        + 0.5 * np.linalg.norm(x, axis=-1)


@given(matrices, nonzero_points, st.floats(0.01, 100.0))
def test_quadratic_homogeneity(m, p, lam):
    phi = an.Quadratic(m)
    p = np.array(p)
    assert abs(phi(lam * p) - lam * phi(p)) <= 1e-12 * lam * phi(p)


@given(matrices, nonzero_points)
def test_quadratic_euler_and_kernel(m, p):
    phi = an.Quadratic(m)
    p = np.array(p)
    assert abs(phi.grad(p) @ p - phi(p)) <= 1e-8 * phi(p)
    h = phi.hess(p)
    assert np.linalg.norm(h @ p) <= 1e-6 * max(np.linalg.norm(h), 1.0)


@given(matrices, st.floats(0.0, 2 * np.pi))
def test_duality_pairing(m, angle):
    """For unit nu the Cahn-Hoffmann vector lies on the boundary of the Wulff ball."""
    phi = an.Quadratic(m)
    nu = np.array([np.cos(angle), np.sin(angle)])
    assert abs(phi(phi.polar().grad(nu)) - 1.0) <= 1e-6


def test_quadratic_polar_is_inverse_matrix():
    m = np.array([[4.0, 1.0], [1.0, 2.0]])
    x = np.array([0.3, -1.7])
    assert an.Quadratic(m).polar()(x) == pytest.approx(np.sqrt(x @ np.linalg.solve(m, x)),
                                                      rel=1e-14)


def test_numeric_polar_matches_closed_form():
    m = np.diag([4.0, 1.0])
    numeric = an.NumericPolar(an.Custom(lambda x: np.sqrt(np.einsum("...i,ij,...j->...", x, m,
                                                                    x))))
    e = an.unit_directions(50, 0.3)
    assert np.max(np.abs(numeric(e) - an.Quadratic(m).polar()(e))) < 1e-10


def test_numeric_bipolar_crystal_norm():
    phi = an.Custom(crystal_norm)
    e = an.unit_directions(64, 0.1)
    assert np.max(np.abs(phi.polar().polar()(e) - phi(e))) < 1e-6


def test_fd_derivatives_of_custom_norm():
    phi = an.Custom(crystal_norm)
    p = np.array([[0.7, -0.2], [-1.5, 2.0]])
    assert np.allclose(np.sum(phi.grad(p) * p, axis=1), phi(p), rtol=1e-5)
    kernel = np.einsum("nij,nj->ni", phi.hess(p), p)
    assert np.max(np.abs(kernel)) < 1e-5


def test_euclidean_wulff_samples_on_unit_circle():
    pts = an.wulff_samples(an.Euclidean(), 4)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)


def test_quadratic_wulff_samples_on_boundary_and_convex():
    phi = an.Quadratic(np.diag([4.0, 1.0]))
    pts = an.wulff_samples(phi, 90)
    assert np.max(np.abs(phi(pts) - 1.0)) < 1e-10
    mid = 0.5 * (pts + np.roll(pts, 7, axis=0))
    assert np.all(phi(mid) <= 1.0 + 1e-12)


def test_mobility_weight_positive_and_requires_orthonormal_frame():
    phi_polar = an.Quadratic(np.diag([4.0, 1.0])).polar()
    nu = an.unit_directions(36)
    tau = -np.stack([-nu[:, 1], nu[:, 0]], axis=-1)
    assert np.min(an.mobility_weight(phi_polar, nu, tau)) > 0.1
    with pytest.raises(NonOrthogonalFrame):
        an.mobility_weight(phi_polar, nu, nu)


def test_mobility_weight_closed_form():
    """For phi_polar(x) = |Bx| in 2D, phi_polar * stiffness = det(B)^2 / phi_polar^2."""
    b = np.diag([0.5, 1.0])
    phi_polar = an.Quadratic(b @ b)
    nu = an.unit_directions(12, 0.2)
    tau = np.stack([nu[:, 1], -nu[:, 0]], axis=-1)
    expected = np.linalg.det(b) ** 2 / phi_polar(nu) ** 2
    assert np.allclose(an.mobility_weight(phi_polar, nu, tau), expected, rtol=1e-12)


def test_errors():
    with pytest.raises(DegenerateInput):
        an.Euclidean().grad(np.zeros(2))
    with pytest.raises(ValueError):
        an.Quadratic(np.array([[1.0, 0.0], [0.0, -1.0]]))
    flat = an.Custom(lambda x: np.abs(x[..., 0]) + np.abs(x[..., 1]))
    with pytest.raises(NotElliptic):
        flat.polar()


def test_from_config_and_to_dict():
    phi = an.from_config({"kind": "quadratic", "matrix": [[2.0, 0.0], [0.0, 1.0]]})
    assert isinstance(phi, an.Quadratic)
    assert an.from_config({"kind": "euclidean"})(np.array([3.0, 4.0])) == pytest.approx(5.0)
    assert phi.to_dict()["kind"] == "quadratic"
    with pytest.raises(ValueError):
        an.from_config({"kind": "hexagonal"})
