"""Projector kernels, Weyl remainders and scaling-limit errors.

Torus kernels are evaluated two ways:

``direct``
    ``(1/vol) sum_mu cos <mu, x - y>`` over the mode list in canonical
    order.  Fixed blocks of 4096 modes are summed pairwise and the block
    partials are combined with ``math.fsum``.
``runs``
    The modes form runs ``(*prefix, j)``, ``lo <= j <= hi`` in integer
    coordinates, and each run is a Dirichlet sum with the closed form
    ``cos(a + (lo+hi) b / 2) sin(L b / 2) / sin(b / 2)``.  The cost is the
    number of runs, about ``lambda^{n-1}``, instead of ``lambda^n``.

Evaluation points are split into fixed-size chunks; workers only change which
thread handles a chunk, so results are bit-identical for any worker count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError
from .manifolds import FlatTorus, RoundSphere
from .spectra import SpectralWindow, load_or_compute, sphere_frequency
from .specfun import model_window_kernel, weyl_leading_term, zonal_kernel_sum

MODE_BLOCK = 4096
POINT_CHUNK = 256


def _chunked(func, points, workers=1):
    chunks = [points[i : i + POINT_CHUNK] for i in range(0, len(points), POINT_CHUNK)]
    if not chunks:
        return np.zeros(0)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, chunks))
    else:
        parts = [func(c) for c in chunks]
    return np.concatenate(parts)


def _fsum_rows(partials):
    return np.array([math.fsum(row) for row in partials])


def _direct_cos_sum(modes, diffs):
    if len(modes) == 0:
        return np.zeros(len(diffs))
    partials = []
    for start in range(0, len(modes), MODE_BLOCK):
        block = modes[start : start + MODE_BLOCK]
        phase = diffs[:, 0:1] * block[:, 0]
        for axis in range(1, diffs.shape[1]):
            phase = phase + diffs[:, axis : axis + 1] * block[:, axis]
        partials.append(np.cos(phase).sum(axis=1))
    return _fsum_rows(np.stack(partials, axis=1))


def _run_cos_sum(torus, runs, diffs):
    prefix, lo, hi = runs
    if len(lo) == 0:
        return np.zeros(len(diffs))
    s = torus.lattice_coordinates(diffs)
    s = s - np.round(s)
    beta = 2.0 * math.pi * s[:, -1:]
    alpha = np.zeros((len(diffs), len(lo)))
    for axis in range(prefix.shape[1]):
        alpha = alpha + (2.0 * math.pi * s[:, axis : axis + 1]) * prefix[:, axis]
    length = (hi - lo + 1).astype(float)
    centre = 0.5 * (lo + hi).astype(float)
    half = np.sin(0.5 * beta)
    flat = half == 0.0
    safe = np.where(flat, 1.0, half)
    dirichlet = np.where(flat, length, np.sin(0.5 * length * beta) / safe)
    terms = dirichlet * np.cos(alpha + centre * beta)
    partials = [terms[:, i : i + MODE_BLOCK].sum(axis=1) for i in range(0, terms.shape[1], MODE_BLOCK)]
    return _fsum_rows(np.stack(partials, axis=1))


class TorusProjector:
    """Kernel of the projector onto torus modes in a window."""

    def __init__(self, torus: FlatTorus, window: SpectralWindow, *, method="runs", modes=None, cache_dir=None, workers=1):
        if method not in ("runs", "direct"):
            raise ValueError(f"unknown method {method!r}")
        self.manifold = torus
        self.window = window
        self.method = method
        self.workers = workers
        self.modes = modes if modes is not None else load_or_compute(torus, window, cache_dir)

    def at_differences(self, diffs):
        diffs = np.atleast_2d(np.asarray(diffs, dtype=float))
        torus = self.manifold
        if self.method == "direct":
            mu = self.modes.modes
            func = lambda chunk: _direct_cos_sum(mu, chunk)
        else:
            runs = self.modes.runs
            func = lambda chunk: _run_cos_sum(torus, runs, chunk)
        return _chunked(func, diffs, self.workers) / torus.volume

    def __call__(self, x, y):
        d = np.asarray(x, float) - np.asarray(y, float)
        out = self.at_differences(d.reshape(-1, self.manifold.n))
        return float(out[0]) if d.ndim == 1 else out.reshape(d.shape[:-1])

    def diagonal(self):
        return len(self.modes) / self.manifold.volume


class SphereProjector:
    """Kernel of the projector onto the spherical-harmonic levels in a window."""

    def __init__(self, sphere: RoundSphere, window: SpectralWindow, *, levels=None, cache_dir=None, workers=1):
        self.manifold = sphere
        self.window = window
        self.workers = workers
        self.levels = levels if levels is not None else load_or_compute(sphere, window, cache_dir)

    def at_cosines(self, t):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        degrees = self.levels.degrees
        flat = t.reshape(-1)
        out = _chunked(lambda c: np.atleast_1d(zonal_kernel_sum(self.manifold.n, degrees, c)), flat, self.workers)
        return float(out[0]) if t.ndim == 0 else out.reshape(t.shape)

    def at_distances(self, r):
        return self.at_cosines(np.cos(np.asarray(r, dtype=float)))

    def __call__(self, x, y):
        return self.at_cosines(np.sum(np.asarray(x, float) * np.asarray(y, float), axis=-1))

    def diagonal(self):
        return float(self.at_cosines(1.0))


def projector(manifold, window, **kwargs):
    if isinstance(manifold, FlatTorus):
        return TorusProjector(manifold, window, **kwargs)
    if isinstance(manifold, RoundSphere):
        kwargs.pop("method", None)
        return SphereProjector(manifold, window, **kwargs)
    raise TypeError(f"unsupported manifold {manifold!r}")


@dataclass(frozen=True)
class KernelSample:
    x: tuple
    y: tuple
    lam: float
    value: float
    manifold: dict


def torus_kernel(modes, x, y) -> float:
    """``E(x, y) = (1/vol) sum_mu cos <mu, x - y>`` by direct summation in
    canonical mode order."""
    d = (np.asarray(x, float) - np.asarray(y, float)).reshape(1, -1)
    return float(_direct_cos_sum(modes.modes, d)[0] / modes.torus.volume)


def sphere_kernel(levels, x, y) -> float:
    """Sum of zonal kernels over the levels at ``x . y``."""
    t = float(np.clip(np.dot(x, y), -1.0, 1.0))
    return float(zonal_kernel_sum(levels.n, levels.degrees, t))


def sample_kernel(manifold, window, x, y, **kwargs) -> KernelSample:
    value = projector(manifold, window, **kwargs)(x, y)
    return KernelSample(tuple(np.ravel(x)), tuple(np.ravel(y)), window.lambda1, float(value), manifold.descriptor())


# -- remainders --------------------------------------------------------------


def remainder(manifold, lam, x, y, **kwargs) -> float:
    """``R(x, y, lam) = E_lam(x, y) - weyl_leading_term(n, lam, dist(x, y))``."""
    dist = float(manifold.distance(x, y))
    if dist >= manifold.injectivity_radius:
        raise DomainError(f"distance {dist} is not below the injectivity radius")
    kernel = projector(manifold, SpectralWindow.ball(lam), **kwargs)(x, y)
    return float(kernel - weyl_leading_term(manifold.n, lam, dist))


@dataclass
class RemainderRecord:
    lam: float
    ball_radius: float
    sup_abs_R: float
    normalized: float
    sample_count: int
    base_point: tuple
    argmax_distance: float = 0.0
    kernel_value: float = 0.0
    weyl_value: float = 0.0
    grid_offsets: int = 1
    refinements: int = 0

    def __post_init__(self):
        if self.normalized < 0 or self.sample_count < 1:
            raise ValueError("invalid remainder record")


def _odd_at_least(value):
    k = max(1, int(math.ceil(value)))
    return k if k % 2 else k + 1


def _ball_difference_set(n, offsets, radius):
    """Distinct index differences between tensor-grid points inside a ball,
    one representative per +-pair.  Returns ``(differences, point_count)``."""
    half = (offsets - 1) // 2
    axes = np.meshgrid(*[np.arange(-half, half + 1)] * n, indexing="ij")
    sq = sum(a.astype(np.int64) ** 2 for a in axes)
    inside = sq * (radius / half) ** 2 <= radius**2 * (1 + 1e-12)
    conv = fftconvolve(inside.astype(float), inside[(slice(None, None, -1),) * n].astype(float))
    idx = np.argwhere(conv > 0.5) - 2 * half
    # lexicographically non-negative half
    keep = np.zeros(len(idx), dtype=bool)
    decided = np.zeros(len(idx), dtype=bool)
    for axis in range(n):
        c = idx[:, axis]
        keep |= ~decided & (c > 0)
        decided |= c != 0
    keep |= ~decided
    return idx[keep], int(inside.sum())


def _torus_ball_sup(proj, lam, radius, offsets):
    n = proj.manifold.n
    if radius == 0.0:
        diffs, points = np.zeros((1, n), dtype=np.int64), 1
        step = 0.0
    else:
        diffs, points = _ball_difference_set(n, offsets, radius)
        step = 2.0 * radius / (offsets - 1)
    vecs = diffs * step
    dist = np.linalg.norm(vecs, axis=1)
    kern = proj.at_differences(vecs)
    weyl = np.asarray(weyl_leading_term(n, lam, dist))
    rem = np.abs(kern - weyl)
    best = int(np.argmax(rem))
    return rem[best], points * points, dist[best], kern[best], weyl[best]


def _sphere_ball_sup(proj, base, lam, radius, offsets):
    sphere = proj.manifold
    n = sphere.n
    if radius == 0.0:
        t = np.zeros(1)
    else:
        t = np.linspace(0.0, 2.0 * radius, offsets)
    direction = np.zeros(n)
    direction[0] = 1.0
    xs = sphere.exp(base, -0.5 * t[:, None] * direction)
    ys = sphere.exp(base, 0.5 * t[:, None] * direction)
    dist = sphere.distance(xs, ys)
    kern = proj(xs, ys)
    weyl = np.asarray(weyl_leading_term(n, lam, dist))
    rem = np.abs(kern - weyl)
    best = int(np.argmax(rem))
    return rem[best], len(t), dist[best], kern[best], weyl[best]


def remainder_sweep(
    manifold,
    base_point,
    lambdas,
    ball_exponent,
    *,
    min_offsets=9,
    resolution=0.25,
    rtol=0.02,
    max_doublings=4,
    workers=1,
    cache_dir=None,
):
    """Sup of ``|R(x, y, lam)|`` over pairs in ``B(base_point, lam^-ball_exponent)``.

    The torus ball is sampled by a tensor grid (at least ``min_offsets`` per
    axis, spacing at most ``resolution / lam``) and all grid pairs are
    reduced to their distinct differences.  On the sphere ``R`` depends only
    on the distance, so pairs on a geodesic through the base point with
    separations in ``[0, 2 r]`` cover every value.  The grid doubles until
    the sup changes by less than ``rtol`` (at most ``max_doublings`` times).
    ``ball_exponent = inf`` means radius 0, i.e. the on-diagonal value.
    """
    if not (ball_exponent == math.inf or 0 < ball_exponent <= 1):
        raise DomainError("ball_exponent must lie in (0, 1] or be inf")
    records = []
    base = np.asarray(base_point, dtype=float)
    for lam in lambdas:
        lam = float(lam)
        radius = 0.0 if ball_exponent == math.inf else lam ** (-ball_exponent)
        if 2 * radius >= manifold.injectivity_radius:
            raise DomainError("ball diameter exceeds the injectivity radius")
        proj = projector(manifold, SpectralWindow.ball(lam), cache_dir=cache_dir, workers=workers)
        if isinstance(manifold, FlatTorus):
            offsets = _odd_at_least(max(min_offsets, 2.0 * radius * lam / resolution + 1))
            evaluate = lambda g: _torus_ball_sup(proj, lam, radius, g)
        else:
            offsets = _odd_at_least(max(min_offsets, 2.0 * radius * lam / resolution + 1))
            evaluate = lambda g: _sphere_ball_sup(proj, base, lam, radius, g)
        result = evaluate(offsets)
        doublings = 0
        while radius > 0 and doublings < max_doublings:
            finer = evaluate(2 * offsets - 1)
            offsets = 2 * offsets - 1
            doublings += 1
            change = abs(finer[0] - result[0])
            result = finer
            if change <= rtol * max(result[0], 1e-300):
                break
        sup, count, where, kern, weyl = result
        records.append(
            RemainderRecord(
                lam=lam,
                ball_radius=radius,
                sup_abs_R=float(sup),
                normalized=float(sup) / lam ** (manifold.n - 1),
                sample_count=int(count),
                base_point=tuple(base.tolist()),
                argmax_distance=float(where),
                kernel_value=float(kern),
                weyl_value=float(weyl),
                grid_offsets=offsets,
                refinements=doublings,
            )
        )
    return records


# -- scaling limit -------------------------------------------------------------


def default_direction(n):
    """A fixed direction with rationally independent components."""
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    v = np.sqrt(np.array(primes[:n], dtype=float))
    return v / np.linalg.norm(v)


@dataclass
class ScalingLimitResult:
    lam: float
    delta: float
    n: int
    sup_normalized: float
    scaled_dist: np.ndarray = field(repr=False)
    value: np.ndarray = field(repr=False)
    model: np.ndarray = field(repr=False)

    @property
    def abs_error(self):
        return np.abs(self.value - self.model)

    @property
    def normalized_error(self):
        return self.abs_error / self.lam ** (self.n - 1)


def scaling_limit_error(
    manifold,
    window,
    base_point,
    max_scaled_dist,
    *,
    lam=None,
    delta=None,
    samples=201,
    direction=None,
    workers=1,
    cache_dir=None,
    method="runs",
):
    """Normalised sup error between the window kernel and the Bessel model.

    Pairs are ``(x0, exp_x0(s / lam * e))`` for ``samples`` values of ``s``
    uniform in ``[0, max_scaled_dist]``.  ``lam`` and ``delta`` default to
    the window's lower end and width.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    lam = window.lambda0 if lam is None else float(lam)
    delta = window.width if delta is None else float(delta)
    n = manifold.n
    if direction is None:
        direction = default_direction(n)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    s = np.linspace(0.0, float(max_scaled_dist), samples)
    t = s / lam
    if t[-1] >= manifold.injectivity_radius:
        raise DomainError("scaled distances leave the injectivity radius")
    base = np.asarray(base_point, dtype=float)
    ys = manifold.exp(base, t[:, None] * direction)
    xs = np.broadcast_to(base, ys.shape)
    proj = projector(manifold, window, cache_dir=cache_dir, workers=workers, method=method)
    value = np.asarray(proj(xs, ys), dtype=float)
    dist = manifold.distance(xs, ys)
    model = np.asarray(model_window_kernel(n, lam, delta, dist), dtype=float)
    sup = float(np.max(np.abs(value - model)) / lam ** (n - 1))
    return ScalingLimitResult(lam, delta, n, sup, lam * dist, value, model)


def mehler_heine_window(k, n=2):
    """Window isolating degree ``k`` on ``S^n`` (level spacing exceeds 1)."""
    lam = math.sqrt(k * (k + n - 1))
    return SpectralWindow(max(0.0, lam - 0.5), lam + 0.5), lam


def mehler_heine_error(k, max_scaled_dist=10.0, samples=401, n=2):
    """``max_{r <= R} |Z_k(cos(r / lam_k)) - lam_k^{n-1} model(r)| / lam_k^{n-1}``."""
    window, lam = mehler_heine_window(k, n)
    sphere = RoundSphere(n)
    base = np.zeros(n + 1)
    base[-1] = 1.0
    return scaling_limit_error(sphere, window, base, max_scaled_dist, lam=lam, delta=1.0, samples=samples)


def cluster_lambdas(n, degrees):
    """Frequencies of the given sphere levels, rounded up so ``E_lam`` includes them."""
    return [sphere_frequency(n, int(k)) for k in degrees]
