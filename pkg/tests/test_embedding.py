import math

import numpy as np
import pytest

from weyl_lab.embedding import (
    build_window_basis,
    dist_lambda_sq,
    dist_lambda_sq_pairs,
    distance_asymptotics_residual,
    hessian_report,
    hessian_second_moment,
    injectivity_scan,
    near_diagonal_target,
    psi,
    scaled_pair_set,
)
from weyl_lab.errors import DomainError
from weyl_lab.kernels import projector
from weyl_lab.manifolds import FlatTorus
from weyl_lab.spectra import SpectralWindow
from weyl_lab.specfun import embedding_profile, fourier_bessel_sphere_integral, sphere_area

PI = math.pi


@pytest.fixture
def square():
    return FlatTorus()


@pytest.fixture
def basis60(square):
    return build_window_basis(square, SpectralWindow(60.0, 61.0))


def test_basis_examples(square):
    b = build_window_basis(square, SpectralWindow(1.0, 2.0))
    assert b.m_lambda == 8
    assert b.kinds == ["cos", "sin"] * 4
    const = build_window_basis(square, SpectralWindow(0.0, 0.5, closed_below=True))
    assert const.m_lambda == 1 and const.kinds == ["const"]
    assert const.norms[0] == pytest.approx(1 / (2 * PI), rel=1e-15)
    empty = build_window_basis(square, SpectralWindow(1.5, 1.9))
    assert empty.m_lambda == 0 and empty.empty
    with pytest.raises(DomainError):
        psi(empty, [0, 0])
    with pytest.raises(DomainError):
        dist_lambda_sq(empty, [0, 0], [1, 1])


def test_basis_representatives_are_lex_positive(basis60):
    for row in basis60.coords[::2]:
        first = row[np.flatnonzero(row)[0]]
        assert first > 0
    assert basis60.m_lambda == len(basis60.all_coords)


def test_basis_is_orthonormal(square):
    # exact orthonormality checked by quadrature on a grid that resolves all modes
    b = build_window_basis(square, SpectralWindow(0.0, 3.0, closed_below=True))
    g = 16
    axis = 2 * PI * np.arange(g) / g
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    values = np.stack([psi(b, p).coordinates for p in pts]) / math.sqrt(b.prefactor)
    gram = values.T @ values * (square.volume / len(pts))
    assert np.allclose(gram, np.eye(b.m_lambda), atol=1e-12)


def test_parseval_against_kernel_diagonal(square, basis60):
    diag = projector(square, basis60.window).diagonal()
    rng = np.random.default_rng(0)
    for x in rng.uniform(0, 2 * PI, (100, 2)):
        assert np.sum(psi(basis60, x).coordinates ** 2) == pytest.approx(basis60.prefactor * diag, abs=1e-10)


def test_psi_periodic_bit_exact():
    # side 8 torus: dyadic points and lattice shifts are exact in floating point
    torus = FlatTorus.square(2, 8.0)
    b = build_window_basis(torus, SpectralWindow(6.0, 7.0))
    x = np.array([3.375, 0.8125])
    assert np.array_equal(psi(b, x).coordinates, psi(b, x + np.array([24.0, -16.0])).coordinates)


def test_psi_periodic_general(square, basis60):
    x = np.array([0.7, 2.9])
    shifted = x + square.basis @ np.array([3.0, -2.0])
    assert np.allclose(psi(basis60, x).coordinates, psi(basis60, shifted).coordinates, rtol=0, atol=1e-12)


def test_psi_constant_basis(square):
    b = build_window_basis(square, SpectralWindow(0.0, 0.5, closed_below=True))
    assert psi(b, [0.1, 3.0]).coordinates.tolist() == psi(b, [5.0, 1.0]).coordinates.tolist()


def test_dist_matches_coordinate_form(basis60):
    rng = np.random.default_rng(1)
    for x, y in rng.uniform(0, 2 * PI, (20, 2, 2)):
        coords = psi(basis60, x).coordinates - psi(basis60, y).coordinates
        assert dist_lambda_sq(basis60, x, y) == pytest.approx(np.sum(coords**2), abs=1e-9)


def test_dist_basic_properties(basis60):
    x, y = np.array([0.4, 1.1]), np.array([2.0, 5.0])
    assert dist_lambda_sq(basis60, x, x) == 0.0
    assert dist_lambda_sq(basis60, x, y) == dist_lambda_sq(basis60, y, x)


def test_dist_triangle_inequality(basis60):
    rng = np.random.default_rng(2)
    x, y, z = rng.uniform(0, 2 * PI, (3, 1000, 2))
    dxy = np.sqrt(dist_lambda_sq_pairs(basis60, x, y))
    dyz = np.sqrt(dist_lambda_sq_pairs(basis60, y, z))
    dxz = np.sqrt(dist_lambda_sq_pairs(basis60, x, z))
    assert (dxy + dyz - dxz).min() >= -1e-8


def test_injectivity_scan(square, basis60):
    rep = injectivity_scan(basis60, 0.1, 10_000, seed=0)
    assert rep.pair_count == 10_000
    assert rep.min_dist_sq >= 1.0
    target = near_diagonal_target(2)
    assert target == pytest.approx(PI / 2)
    assert target * 0.5 <= rep.near_diag_ratio_min <= rep.near_diag_ratio_max <= target * 1.5
    with pytest.raises(DomainError):
        injectivity_scan(basis60, 0.1, 0)


def test_injectivity_scan_is_seeded(basis60):
    a = injectivity_scan(basis60, 0.1, 500, seed=3)
    b = injectivity_scan(basis60, 0.1, 500, seed=3)
    assert a.min_dist_sq == b.min_dist_sq and a.argmin_pair == b.argmin_pair


def test_residual_skips_coincident_pairs(square, basis60):
    xs = np.array([[0.0, 0.0], [1.0, 1.0]])
    ys = np.array([[0.0, 0.0], [1.05, 1.0]])
    with pytest.warns(RuntimeWarning):
        rep = distance_asymptotics_residual(basis60, (xs, ys))
    assert rep.skipped == 1 and len(rep.rows) == 1


def test_residual_far_pair_is_small(square):
    b = build_window_basis(square, SpectralWindow(400.0, 401.0))
    x, y = np.array([[0.0, 0.0]]), np.array([[2.5, 0.0]])
    rep = distance_asymptotics_residual(b, (x, y))
    scaled = 400.0 * 2.5
    assert scaled >= 1e3
    assert rep.sup_residual == pytest.approx(abs(dist_lambda_sq(b, x[0], y[0]) - embedding_profile(2, scaled)) / scaled**2)
    assert rep.sup_residual < 1e-4


def test_profile_equals_sigma_minus_bessel():
    r = np.linspace(0.5, 20, 50)
    assert np.max(np.abs(embedding_profile(2, r) - (sphere_area(2) - fourier_bessel_sphere_integral(2, r)))) <= 1e-12


def test_scaled_pair_set_is_fixed_in_scaled_units(square):
    xa, ya = scaled_pair_set(square, 50.0, 64)
    xb, yb = scaled_pair_set(square, 100.0, 64)
    assert np.array_equal(xa, xb)
    assert np.allclose(50.0 * (ya - xa), 100.0 * (yb - xb), atol=1e-12)
    d = 50.0 * square.distance(xa, ya)
    assert d.min() >= 0.5 - 1e-12 and d.max() <= 50 + 1e-12


def test_hessian_properties(square):
    b = build_window_basis(square, SpectralWindow(100.0, 101.0))
    h = hessian_second_moment(b)
    assert np.array_equal(h, h.T)
    assert np.linalg.eigvalsh(h).min() >= 0
    assert abs(h[0, 1]) / np.trace(h) <= 1e-2
    assert np.trace(h) / 2 == pytest.approx(100.0**3 / (4 * PI), rel=0.05)


def test_hessian_single_class():
    # on this rectangle the window (0.5, 1.5] holds only the class +-(1, 0)
    rect = FlatTorus([[2 * PI, 0], [0, PI]])
    single = build_window_basis(rect, SpectralWindow(0.5, 1.5))
    assert len(single.all_coords) == 2
    mu = single.modes[0]
    assert np.allclose(hessian_second_moment(single), 2 * np.outer(mu, mu) / rect.volume, rtol=0, atol=1e-15)


def test_hessian_report_at_200(square):
    rep = hessian_report(build_window_basis(square, SpectralWindow(200.0, 201.0)))
    assert rep.model_rel_error <= 0.05
    assert rep.fd_rel_error <= 1e-3
