import math

import numpy as np
import pytest

from weyl_lab.errors import DomainError
from weyl_lab.manifolds import (
    FlatTorus,
    RoundSphere,
    injectivity_radius,
    manifold_from_descriptor,
    sphere_geodesic,
    theta_density,
    torus_geodesic,
)

PI = math.pi


@pytest.fixture
def square():
    return FlatTorus()


def test_dual_basis_identity():
    for torus in (FlatTorus(), FlatTorus.hexagonal(), FlatTorus([[2 * PI, 0], [0, 4 * PI]])):
        assert np.allclose(torus.dual_basis @ torus.basis.T, 2 * PI * np.eye(2), atol=1e-12)


def test_torus_rejects_bad_bases():
    with pytest.raises(DomainError):
        FlatTorus([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(DomainError):
        FlatTorus([[1.0, 0.9], [0.0, 0.1]])  # not reduced


def test_torus_geodesic_examples(square):
    g = torus_geodesic(square, [0, 0], [PI / 2, 0])
    assert g.distance == pytest.approx(PI / 2) and np.allclose(g.log_vector, [PI / 2, 0]) and g.unique
    g = torus_geodesic(square, [0, 0], [3 * PI / 2, 0])
    assert g.distance == pytest.approx(PI / 2) and np.allclose(g.log_vector, [-PI / 2, 0])
    g = torus_geodesic(square, [0, 0], [PI, PI])
    assert g.distance == pytest.approx(PI * math.sqrt(2)) and not g.unique


def test_sphere_geodesic_examples():
    s = RoundSphere(2)
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    g = sphere_geodesic(s, e1, -e1)
    assert g.distance == pytest.approx(PI) and not g.unique
    assert sphere_geodesic(s, e1, e2).distance == pytest.approx(PI / 2)
    g = sphere_geodesic(s, e1, e1)
    assert g.distance == 0 and np.all(g.log_vector == 0)


def test_sphere_rejects_non_unit_points():
    with pytest.raises(DomainError):
        sphere_geodesic(RoundSphere(2), [1, 1, 0], [1, 0, 0])


def test_injectivity_radius_examples():
    assert injectivity_radius(FlatTorus()) == pytest.approx(PI)
    assert injectivity_radius(RoundSphere(3)) == PI
    assert injectivity_radius(FlatTorus([[2 * PI, 0], [0, 4 * PI]])) == pytest.approx(PI)


def test_theta_examples():
    t = FlatTorus()
    assert theta_density(t, [0.1, 0.2], [1.0, -0.5]) == 1.0
    s = RoundSphere(2)
    x = np.array([0, 0, 1.0])
    assert theta_density(s, x, s.exp(x, [PI / 2, 0])) == pytest.approx(2 / PI, rel=1e-12)
    assert theta_density(s, x, x) == 1.0
    with pytest.raises(DomainError):
        theta_density(t, [0, 0], [PI, 0])
    with pytest.raises(DomainError):
        theta_density(s, x, -x)


def _fd_jacobian_det(sphere, x, v, h=1e-6):
    cols = []
    for i in range(sphere.n):
        e = np.zeros(sphere.n)
        e[i] = h
        cols.append((sphere.exp(x, v + e) - sphere.exp(x, v - e)) / (2 * h))
    jac = np.stack(cols, axis=1)
    return math.sqrt(np.linalg.det(jac.T @ jac))


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("r", [0.1, 0.5, 1.0, 2.0, 3.0])
def test_theta_matches_finite_difference_jacobian(n, r):
    s = RoundSphere(n)
    x = np.zeros(n + 1)
    x[0] = 1.0
    v = np.zeros(n)
    v[-1] = r
    y = s.exp(x, v)
    assert theta_density(s, x, y) == pytest.approx(_fd_jacobian_det(s, x, v), rel=1e-6)


def _random_sphere_points(rng, count, n):
    g = rng.normal(size=(count, n + 1))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@pytest.mark.parametrize("manifold", [FlatTorus(), FlatTorus.hexagonal(), RoundSphere(2), RoundSphere(3)])
def test_distance_symmetry_and_triangle(manifold):
    rng = np.random.default_rng(3)
    if isinstance(manifold, FlatTorus):
        pts = [manifold.sample_points(rng.uniform(size=(1000, 2))) for _ in range(3)]
    else:
        pts = [_random_sphere_points(rng, 1000, manifold.n) for _ in range(3)]
    x, y, z = pts
    assert np.max(np.abs(manifold.distance(x, y) - manifold.distance(y, x))) <= 1e-12
    slack = manifold.distance(x, y) + manifold.distance(y, z) - manifold.distance(x, z)
    assert slack.min() >= -1e-10


@pytest.mark.parametrize("torus", [FlatTorus(), FlatTorus.hexagonal()])
def test_torus_log_exp_consistency(torus):
    rng = np.random.default_rng(4)
    for _ in range(200):
        x, y = torus.sample_points(rng.uniform(size=(2, 2)))
        g = torus.geodesic(x, y)
        if not g.unique:
            continue
        assert abs(np.linalg.norm(g.log_vector) - g.distance) <= 1e-12
        s = torus.lattice_coordinates(torus.exp(x, g.log_vector) - y)
        assert np.max(np.abs(s - np.round(s))) <= 1e-10


def test_sphere_log_matches_exp():
    s = RoundSphere(2)
    rng = np.random.default_rng(5)
    for x, y in zip(_random_sphere_points(rng, 50, 2), _random_sphere_points(rng, 50, 2)):
        g = s.geodesic(x, y)
        assert abs(np.linalg.norm(g.log_vector) - g.distance) <= 1e-12
        assert np.allclose(s.exp(x, g.log_vector), y, atol=1e-12)


def test_descriptor_round_trip():
    for m in (FlatTorus.hexagonal(), RoundSphere(4)):
        back = manifold_from_descriptor(m.descriptor())
        assert back.descriptor() == m.descriptor()
