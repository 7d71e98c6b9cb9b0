"""Eigenfunction embeddings of flat tori and the distances they induce.

A window ``(lambda, lambda + delta]`` on a torus is spanned by the real
functions ``1/sqrt(vol)`` (frequency 0) and ``sqrt(2/vol) cos <mu, x>``,
``sqrt(2/vol) sin <mu, x>`` with one ``mu`` per ``+-mu`` class.  The map

    psi(x) = sqrt((2 pi)^n / (2 lambda^{n-1})) (phi_1(x), ..., phi_m(x))

induces ``dist^2(x, y) = |psi(x) - psi(y)|^2``.  Because the basis is
orthonormal, this equals ``(2 pi)^n / (2 lambda^{n-1}) (E(x,x) + E(y,y) -
2 E(x,y))``, evaluated here as ``(4 / vol) sum_mu sin^2(<mu, x - y> / 2)``
over all window modes, which avoids cancellation for close points.

Phases are computed as ``2 pi m . s`` from lattice coordinates ``s`` reduced
into ``[0, 1)``, so ``psi`` is periodic exactly whenever the translated
lattice coordinates are exact in floating point.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DomainError
from .kernels import default_direction
from .manifolds import FlatTorus
from .spectra import SpectralWindow, load_or_compute
from .specfun import embedding_profile, hessian_constant, sphere_area

DEFAULT_NEAR_PAIRS = 1000


@dataclass(eq=False)
class WindowBasis:
    """Real orthonormal eigenbasis of a torus window.

    ``kinds[i]`` is ``"const"``, ``"cos"`` or ``"sin"``; ``coords[i]`` is the
    integer dual-lattice coordinate of the mode and ``norms[i]`` the
    normalising factor.  ``all_coords`` keeps every window mode (both signs).
    """

    torus: FlatTorus
    window: SpectralWindow
    kinds: list
    coords: np.ndarray
    norms: np.ndarray
    all_coords: np.ndarray = field(repr=False)

    @property
    def m_lambda(self):
        return len(self.kinds)

    @property
    def empty(self):
        return self.m_lambda == 0

    @property
    def scale_lambda(self):
        """The ``lambda`` in the normalisation: the lower window end, or the
        upper one for windows starting at 0."""
        return self.window.lambda0 if self.window.lambda0 > 0 else self.window.lambda1

    @property
    def prefactor(self):
        n = self.torus.n
        return (2.0 * math.pi) ** n / (2.0 * self.scale_lambda ** (n - 1))

    @property
    def modes(self):
        return self.all_coords.astype(float) @ self.torus.dual_basis.T

    def functions(self):
        return list(zip(self.kinds, [tuple(c) for c in self.coords.tolist()], self.norms.tolist()))


def _lex_positive(coords):
    sign = np.zeros(len(coords), dtype=np.int64)
    for axis in range(coords.shape[1]):
        undecided = sign == 0
        sign[undecided] = np.sign(coords[undecided, axis])
    return sign > 0


def build_window_basis(torus: FlatTorus, window: SpectralWindow, cache_dir=None) -> WindowBasis:
    modes = load_or_compute(torus, window, cache_dir)
    coords = modes.coords
    vol = torus.volume
    kinds, reps, norms = [], [], []
    if len(coords) and np.any(np.all(coords == 0, axis=1)):
        kinds.append("const")
        reps.append(np.zeros(torus.n, dtype=np.int64))
        norms.append(1.0 / math.sqrt(vol))
    trig = math.sqrt(2.0 / vol)
    for row in coords[_lex_positive(coords)] if len(coords) else []:
        kinds += ["cos", "sin"]
        reps += [row, row]
        norms += [trig, trig]
    rep_arr = np.array(reps, dtype=np.int64).reshape(-1, torus.n)
    return WindowBasis(torus, window, kinds, rep_arr, np.array(norms), coords)


@dataclass(frozen=True)
class EmbeddingPoint:
    coordinates: np.ndarray

    def __len__(self):
        return len(self.coordinates)


def _reduced_lattice_coords(torus, x):
    s = torus.lattice_coordinates(x)
    return s - np.floor(s)


def _require_nonempty(basis):
    if basis.empty:
        raise DomainError("window basis is empty")


def psi(basis: WindowBasis, x) -> EmbeddingPoint:
    """Scaled values of the basis functions at ``x``."""
    _require_nonempty(basis)
    s = _reduced_lattice_coords(basis.torus, x)
    phase = 2.0 * math.pi * (basis.coords @ s)
    values = np.where(
        np.array([k == "sin" for k in basis.kinds]),
        np.sin(phase),
        np.where(np.array([k == "cos" for k in basis.kinds]), np.cos(phase), 1.0),
    )
    return EmbeddingPoint(math.sqrt(basis.prefactor) * basis.norms * values)


def _dist_sq_many(basis, diffs):
    s = basis.torus.lattice_coordinates(np.atleast_2d(diffs))
    s = s - np.round(s)
    m = basis.all_coords.astype(float)
    out = np.empty(len(s))
    step = 512
    for i in range(0, len(s), step):
        phase = np.pi * (s[i : i + step] @ m.T)
        out[i : i + step] = np.sum(np.sin(phase) ** 2, axis=1)
    return basis.prefactor * 4.0 / basis.torus.volume * out


def dist_lambda_sq(basis: WindowBasis, x, y) -> float:
    """Squared induced distance via the kernel identity."""
    _require_nonempty(basis)
    d = np.asarray(x, float) - np.asarray(y, float)
    return float(_dist_sq_many(basis, d.reshape(1, -1))[0])


def dist_lambda_sq_pairs(basis: WindowBasis, xs, ys):
    _require_nonempty(basis)
    return _dist_sq_many(basis, np.asarray(xs, float) - np.asarray(ys, float))


# -- pair sampling -------------------------------------------------------------


def _sobol(dim, count, seed):
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = max(1, math.ceil(math.log2(max(count, 2))))
    return sampler.random_base2(m)[:count]


@dataclass
class InjectivityReport:
    min_dist_sq: float
    argmin_pair: tuple
    argmin_geodesic: float
    near_diag_ratio_min: float
    near_diag_ratio_max: float
    pair_count: int
    near_pair_count: int
    rows: list = field(repr=False, default_factory=list)


def separated_pairs(torus, separation, pair_count, seed):
    """``pair_count`` Sobol pairs in the fundamental domain at geodesic distance
    at least ``separation``."""
    n = torus.n
    draw = 2 * pair_count + 64
    while True:
        u = _sobol(2 * n, draw, seed)
        xs = torus.sample_points(u[:, :n])
        ys = torus.sample_points(u[:, n:])
        d = torus.distance(xs, ys)
        keep = np.flatnonzero(d >= separation)
        if len(keep) >= pair_count:
            keep = keep[:pair_count]
            return xs[keep], ys[keep], d[keep]
        draw *= 2


def near_diagonal_pairs(torus, lam, count, seed, scaled_range=(0.05, 1.0)):
    """Pairs with ``lam * dist`` spread over ``scaled_range`` (upper end open)."""
    n = torus.n
    u = _sobol(2 * n + 1, count, seed + 1)
    xs = torus.sample_points(u[:, :n])
    lo, hi = scaled_range
    t = (lo + (hi - lo) * u[:, n]) / lam
    g = ndtri(np.clip(u[:, n + 1 :], 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    dirs = np.where(norms > 1e-9, g / np.where(norms > 1e-9, norms, 1.0), default_direction(n))
    ys = xs + t[:, None] * dirs
    return xs, ys, torus.distance(xs, ys)


def injectivity_scan(basis: WindowBasis, separation, pair_count, seed=0, near_count=DEFAULT_NEAR_PAIRS):
    """Search for near-collisions of the embedding.

    Reports the minimum of ``dist_lambda^2`` over separated pairs and the range
    of ``dist_lambda^2 / (lambda dist)^2`` over pairs with ``lambda dist < 1``.
    """
    _require_nonempty(basis)
    if pair_count < 1:
        raise DomainError("pair_count must be positive")
    if separation <= 0:
        raise DomainError("separation must be positive")
    torus = basis.torus
    lam = basis.scale_lambda
    xs, ys, d = separated_pairs(torus, separation, int(pair_count), seed)
    dsq = dist_lambda_sq_pairs(basis, xs, ys)
    best = int(np.argmin(dsq))
    nx, ny, nd = near_diagonal_pairs(torus, lam, int(near_count), seed)
    ratio = dist_lambda_sq_pairs(basis, nx, ny) / (lam * nd) ** 2
    rows = [(i, d[i], lam * d[i], dsq[i]) for i in range(len(d))]
    return InjectivityReport(
        min_dist_sq=float(dsq[best]),
        argmin_pair=(tuple(xs[best].tolist()), tuple(ys[best].tolist())),
        argmin_geodesic=float(d[best]),
        near_diag_ratio_min=float(ratio.min()),
        near_diag_ratio_max=float(ratio.max()),
        pair_count=len(d),
        near_pair_count=len(nd),
        rows=rows,
    )


def near_diagonal_target(n):
    """Leading coefficient of ``dist_lambda^2 / (lambda dist)^2`` at the diagonal."""
    return sphere_area(n) / (2.0 * n)


# -- distance asymptotics -----------------------------------------------------


def scaled_pair_set(torus, lam, count, seed=0, scaled_range=(0.5, 50.0)):
    """A pair set fixed in scaled units: base points and directions do not
    depend on ``lam``; separations are ``s / lam`` with ``s`` in ``scaled_range``."""
    n = torus.n
    u = _sobol(n + 2, count, seed)
    xs = torus.sample_points(u[:, :n])
    lo, hi = scaled_range
    s = lo + (hi - lo) * u[:, n]
    angle = 2.0 * math.pi * u[:, n + 1]
    if n == 2:
        dirs = np.stack([np.cos(angle), np.sin(angle)], axis=1)
    else:
        dirs = np.broadcast_to(default_direction(n), (count, n))
    return xs, xs + (s / lam)[:, None] * dirs


@dataclass
class ResidualReport:
    sup_residual: float
    skipped: int
    rows: list = field(repr=False, default_factory=list)


def distance_asymptotics_residual(basis: WindowBasis, pairs) -> ResidualReport:
    """``sup |dist_lambda^2 - f(lambda d)| / (lambda d)^2`` over ``pairs``.

    ``pairs`` is ``(xs, ys)``; pairs with ``d = 0`` are skipped with a warning.
    """
    _require_nonempty(basis)
    xs, ys = (np.atleast_2d(np.asarray(p, dtype=float)) for p in pairs)
    torus = basis.torus
    lam = basis.scale_lambda
    d = torus.distance(xs, ys)
    zero = d == 0.0
    if np.any(zero):
        warnings.warn(f"skipping {int(zero.sum())} pair(s) at distance 0", RuntimeWarning, stacklevel=2)
    xs, ys, d = xs[~zero], ys[~zero], d[~zero]
    if len(d) == 0:
        raise DomainError("no pairs at positive distance")
    dsq = dist_lambda_sq_pairs(basis, xs, ys)
    scaled = lam * d
    model = np.asarray(embedding_profile(torus.n, scaled))
    residual = np.abs(dsq - model) / scaled**2
    rows = [(i, d[i], scaled[i], dsq[i], model[i], residual[i]) for i in range(len(d))]
    return ResidualReport(float(residual.max()), int(zero.sum()), rows)


# -- Hessian -----------------------------------------------------------------


def hessian_second_moment(basis: WindowBasis):
    """``(1/vol) sum_mu mu mu^T`` over the window modes: the mixed second
    derivative of the window kernel on the diagonal."""
    mu = basis.modes
    if len(mu) == 0:
        return np.zeros((basis.torus.n, basis.torus.n))
    n = basis.torus.n
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = math.fsum(mu[:, i] * mu[:, j])
    return out / basis.torus.volume


def _window_kernel_at(basis, d):
    mu = basis.modes
    return math.fsum(np.cos(mu @ np.asarray(d, float))) / basis.torus.volume


def finite_difference_hessian(basis: WindowBasis, step=None):
    """Central mixed difference of ``E(x, y)`` at ``x = y``, step ``1e-4 / lambda``."""
    n = basis.torus.n
    h = 1e-4 / basis.scale_lambda if step is None else step
    eye = np.eye(n)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            # E(x, y) = K(x - y); stencil in (x_i, y_j)
            pp = _window_kernel_at(basis, h * eye[i] - h * eye[j])
            pm = _window_kernel_at(basis, h * eye[i] + h * eye[j])
            mp = _window_kernel_at(basis, -h * eye[i] - h * eye[j])
            mm = _window_kernel_at(basis, -h * eye[i] + h * eye[j])
            out[i, j] = (pp - pm - mp + mm) / (4.0 * h * h)
    return out


@dataclass
class HessianReport:
    exact: np.ndarray
    model: np.ndarray
    finite_difference: np.ndarray
    model_rel_error: float
    fd_rel_error: float
    off_diagonal_over_trace: float


def hessian_report(basis: WindowBasis) -> HessianReport:
    """Compare the exact second moment with ``C_n lambda^{n+1} I`` and with a
    finite difference.  Entry errors are relative to the largest entry of the
    reference matrix, so vanishing off-diagonal entries are measured on the
    scale of the diagonal."""
    exact = hessian_second_moment(basis)
    n = basis.torus.n
    model = hessian_constant(n) * basis.scale_lambda ** (n + 1) * np.eye(n)
    fd = finite_difference_hessian(basis)
    off = exact - np.diag(np.diag(exact))
    return HessianReport(
        exact=exact,
        model=model,
        finite_difference=fd,
        model_rel_error=float(np.max(np.abs(exact - model)) / np.max(np.abs(model))),
        fd_rel_error=float(np.max(np.abs(fd - exact)) / np.max(np.abs(exact))),
        off_diagonal_over_trace=float(np.max(np.abs(off)) / np.trace(exact)),
    )
