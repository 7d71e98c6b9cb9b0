import json
import math

import numpy as np
import pytest

from weyl_lab.errors import DomainError, ResourceError
from weyl_lab.manifolds import FlatTorus, RoundSphere
from weyl_lab.oracles import lattice_count
from weyl_lab.spectra import (
    FORMAT_VERSION,
    SpectralWindow,
    cache_load,
    cache_store,
    counting_function,
    counting_remainder,
    load_or_compute,
    manifold_hash,
    off_spectrum,
    sphere_frequency,
    sphere_levels,
    torus_modes,
)


@pytest.fixture
def square():
    return FlatTorus()


def _as_set(modes):
    return {tuple(row) for row in modes.coords.tolist()}


def test_window_validation():
    with pytest.raises(DomainError):
        SpectralWindow(2.0, 1.0)
    with pytest.raises(DomainError):
        SpectralWindow(1.0, 1.0)
    w = SpectralWindow(1.0, 2.0)
    assert list(w.contains([1.0, 1.5, 2.0])) == [False, True, True]
    assert SpectralWindow.ball(3.0).contains(0.0)


def test_torus_mode_examples(square):
    assert _as_set(torus_modes(square, SpectralWindow.ball(1.0))) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    assert len(torus_modes(square, SpectralWindow.ball(10.0))) == 317
    window = torus_modes(square, SpectralWindow(1.0, 2.0))
    assert len(window) == 8
    assert sorted(set(window.squared_frequencies.tolist())) == [2.0, 4.0]


def test_modes_lexicographic_and_symmetric(square):
    for torus in (square, FlatTorus.hexagonal(), FlatTorus([[2 * math.pi, 0], [0, math.pi]])):
        modes = torus_modes(torus, SpectralWindow(5.0, 9.0))
        rows = [tuple(r) for r in modes.coords.tolist()]
        assert rows == sorted(rows)
        assert modes.is_symmetric()


def test_runs_cover_modes_exactly(square):
    modes = torus_modes(square, SpectralWindow(50.0, 51.0))
    prefix, lo, hi = modes.runs
    rebuilt = [(int(p[0]), j) for p, a, b in zip(prefix, lo, hi) for j in range(a, b + 1)]
    assert rebuilt == [tuple(r) for r in modes.coords.tolist()]


def test_boundary_eigenvalue_included(square):
    # |mu| = 5 exactly for (3, 4) and (5, 0)
    assert (5, 0) in _as_set(torus_modes(square, SpectralWindow.ball(5.0)))
    assert (5, 0) not in _as_set(torus_modes(square, SpectralWindow(5.0, 6.0)))


def test_window_enumeration_matches_ball_difference(square):
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b = np.sort(rng.uniform(0, 40, 2))
        if a == b:
            continue
        n0, n1 = counting_function(square, [a, b])
        assert n1 - n0 == len(torus_modes(square, SpectralWindow(a, b)))


def test_counting_against_brute_force(square):
    for lam in (0.5, 1.0, 7.3, 10.0, 31.0):
        assert counting_function(square, [lam])[0] == lattice_count(1, lam)


def test_counting_remainder_examples(square):
    assert counting_remainder(square, 10.0) == pytest.approx(317 - 100 * math.pi, abs=1e-12)
    assert counting_remainder(square, 1e-3) == pytest.approx(1.0, abs=1e-5)
    assert abs(counting_remainder(square, 100.0)) <= 150


def test_gauss_circle_behaviour(square):
    lams = np.arange(1, 501, dtype=float)
    rem = np.abs(counting_remainder(square, lams)) / lams
    assert rem.max() <= 4
    assert rem[399:].mean() <= 1


def test_resource_budget(square):
    with pytest.raises(ResourceError) as info:
        torus_modes(square, SpectralWindow.ball(1000.0), budget=1000)
    assert info.value.estimated_count > 1000


def test_parallel_enumeration_is_canonical(square):
    w = SpectralWindow(20.0, 30.0)
    ref = torus_modes(square, w).coords
    for workers in (2, 8):
        assert np.array_equal(torus_modes(square, w, workers=workers).coords, ref)


def test_off_spectrum_sits_between_frequencies(square):
    for lam in (50.0, 100.0, 400.0):
        mid = off_spectrum(square, lam)
        below = counting_function(square, [lam])[0]
        assert counting_function(square, [mid])[0] == below
        assert lam <= mid < lam + 1


def test_sphere_level_examples():
    ball = sphere_levels(2, SpectralWindow.ball(2.0))
    assert ball.levels == [(0, 1, 0.0), (1, 3, math.sqrt(2))]
    win = sphere_levels(2, SpectralWindow(10.0, 11.0))
    assert [(k, m) for k, m, _ in win.levels] == [(10, 21)]
    assert len(sphere_levels(2, SpectralWindow(0.1, 0.5))) == 0


def test_sphere_multiplicities_sum_to_square():
    levels = sphere_levels(2, SpectralWindow.ball(sphere_frequency(2, 1000)))
    assert levels.degrees[-1] == 1000
    assert np.all(np.diff(levels.frequencies) > 0)
    cumulative = np.cumsum(levels.multiplicities)
    assert np.array_equal(cumulative, (np.arange(1001) + 1) ** 2)


def test_sphere_frequency_includes_its_level():
    for n in (2, 3):
        for k in (1, 7, 200, 999):
            lam = sphere_frequency(n, k)
            assert k in sphere_levels(n, SpectralWindow.ball(lam)).degrees


def test_cache_round_trip(tmp_path, square):
    modes = torus_modes(square, SpectralWindow.ball(10.0))
    cache_store(modes, tmp_path)
    back = cache_load(square, SpectralWindow.ball(10.0), tmp_path)
    assert np.array_equal(back.coords, modes.coords)
    assert back.coords.dtype == np.int64
    levels = sphere_levels(2, SpectralWindow(3.0, 30.0))
    cache_store(levels, tmp_path)
    assert np.array_equal(cache_load(RoundSphere(2), SpectralWindow(3.0, 30.0), tmp_path).degrees, levels.degrees)


def _meta_path(root, torus, window):
    (meta,) = (root / manifold_hash(torus)).glob("*.meta.json")
    return meta


def test_cache_version_mismatch_is_miss(tmp_path, square):
    w = SpectralWindow.ball(10.0)
    cache_store(torus_modes(square, w), tmp_path)
    meta = _meta_path(tmp_path, square, w)
    data = json.loads(meta.read_text())
    data["format_version"] = FORMAT_VERSION + 1
    meta.write_text(json.dumps(data))
    assert cache_load(square, w, tmp_path) is None


def test_cache_corruption_warns_and_misses(tmp_path, square):
    w = SpectralWindow.ball(10.0)
    cache_store(torus_modes(square, w), tmp_path)
    (blob,) = (tmp_path / manifold_hash(square)).glob("*.modes")
    raw = bytearray(blob.read_bytes())
    raw[5] ^= 0xFF
    blob.write_bytes(bytes(raw))
    with pytest.warns(RuntimeWarning):
        assert cache_load(square, w, tmp_path) is None
    # load_or_compute recovers by recomputing
    with pytest.warns(RuntimeWarning):
        assert len(load_or_compute(square, w, tmp_path)) == 317
    assert len(cache_load(square, w, tmp_path)) == 317


def test_cache_miss_on_missing_files(tmp_path, square):
    assert cache_load(square, SpectralWindow.ball(3.0), tmp_path) is None
