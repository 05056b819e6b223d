import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisoflow import geometry as geo
from anisoflow.anisotropy import Euclidean, Quadratic
from anisoflow.exceptions import DegenerateAngles, DegenerateCurve


def circle_arc(radius, n, span=1.0):
    t = np.linspace(0.0, span, n)
    return radius * np.stack([np.cos(t), np.sin(t)], axis=-1)


def straight_network(n=16):
    ends = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])
    sigma = ends.mean(axis=0)
    x = geo.grid(n)
    return geo.Network(ends[:, None] + x[None, :, None] * (sigma - ends)[:, None])


@given(st.floats(0.2, 5.0))
def test_circle_curvature(radius):
    kappa = geo.curvature(circle_arc(radius, 400))
    assert np.max(np.abs(kappa - 1.0 / radius)) < 1e-4 / radius


def test_diff2_exact_on_cubics():
    x = geo.grid(11)[:, None]
    f = 2.0 * x ** 3 - x ** 2 + 3.0 * x
    assert np.allclose(geo.diff2(f, 0.1), 12.0 * x - 2.0, atol=1e-10)


def test_energy_is_exact_on_straight_lines():
    net = straight_network()
    phi_polar = Quadratic(np.diag([4.0, 1.0])).polar()
    nu = geo.frames(net.curves)[1][:, 0]
    lens = np.linalg.norm(net.curves[:, -1] - net.curves[:, 0], axis=1)
    assert geo.energy(net, phi_polar) == pytest.approx(np.sum(phi_polar(nu) * lens), rel=1e-14)


def test_node_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    curves = straight_network().curves + 0.01 * rng.normal(size=(3, 16, 2))
    phi_polar = Quadratic(np.array([[2.0, 0.3], [0.3, 1.0]]))
    g = geo.node_gradient(curves, phi_polar)
    fd = np.zeros_like(curves)
    eps = 1e-6
    for idx in np.ndindex(curves.shape):
        d = np.zeros_like(curves)
        d[idx] = eps
        fd[idx] = (geo.energy(curves + d, phi_polar) - geo.energy(curves - d, phi_polar)) / (2 * eps)
    assert np.max(np.abs(g - fd)) < 1e-8


def test_network_properties_and_round_trip():
    net = straight_network()
    assert net.concurrency_error() < 1e-15
    assert np.allclose(net.junction, [0.5, np.sqrt(3.0) / 6.0])
    back = geo.Network.from_dict(net.to_dict())
    assert np.array_equal(back.curves, net.curves)
    assert net.translated([1.0, 2.0]).junction == pytest.approx(net.junction + [1.0, 2.0])
    with pytest.raises(ValueError):
        geo.Network(np.zeros((3, 4, 2)))


def test_junction_data_of_symmetric_network():
    jd = geo.junction_data(straight_network())
    assert np.allclose(jd.angles, 2.0 * np.pi / 3.0)
    assert np.allclose(jd.alpha, 1.0)
    assert np.linalg.norm(jd.alpha @ jd.normals) < 1e-14
    assert np.linalg.norm(geo.herring_residual(straight_network(), Euclidean())) < 1e-14


def test_junction_orientation_flips_with_reflection():
    net = straight_network()
    mirrored = geo.Network(net.curves * np.array([1.0, -1.0]))
    assert geo.junction_data(net).orientation == -geo.junction_data(mirrored).orientation


def test_degenerate_inputs():
    c = np.zeros((8, 2))
    with pytest.raises(DegenerateCurve):
        geo.frames(c)
    nu = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DegenerateAngles):
        geo.junction_from_normals(nu)


def test_hausdorff_distance():
    a = straight_network()
    assert geo.hausdorff_distance(a, a) == 0.0
    assert geo.hausdorff_distance(a, a.translated([0.0, 0.01])) == pytest.approx(0.01, rel=1e-9)
    assert geo.diameter(a) == pytest.approx(1.0)


def test_curve_table_columns():
    table = geo.curve_table(circle_arc(2.0, 64), Euclidean())
    assert table.shape == (64, 5)
    assert np.allclose(table[:, 3], table[:, 4])
