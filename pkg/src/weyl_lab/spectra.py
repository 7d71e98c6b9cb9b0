"""Exact eigendata for the model manifolds.

Torus modes are dual-lattice vectors ``mu = 2 pi B^{-T} m`` (``m`` integer),
with eigenvalue ``|mu|^2`` and eigenfunction ``exp(i <mu, x>) / sqrt(vol)``.
Sphere levels are harmonic degrees ``k`` with eigenvalue ``k (k + n - 1)``.

Window membership ``lambda0 < frequency <= lambda1`` is decided exactly
whenever the squared frequencies are rational with a small denominator (the
square and rectangular tori, the sphere): the float endpoints are converted
to exact fractions and compared with integer squared norms.  Otherwise the
floating ``|mu|^2`` is compared with ``lambda**2`` with no tolerance.
"""

import hashlib
import json
import logging
import math
import os
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DomainError, ResourceError
from .manifolds import FlatTorus, RoundSphere
from .specfun import ball_volume, harmonic_dimension

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_MODE_BUDGET = 20_000_000
_MAX_DENOMINATOR = 1000


@dataclass(frozen=True)
class SpectralWindow:
    """Half-open frequency interval ``(lambda0, lambda1]``.

    ``closed_below`` turns it into ``[lambda0, lambda1]``; :meth:`ball` uses it
    so that frequency 0 (the constants) is part of ``E_lambda``.
    """

    lambda0: float
    lambda1: float
    closed_below: bool = False

    def __post_init__(self):
        lo, hi = float(self.lambda0), float(self.lambda1)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise DomainError("window endpoints must be finite")
        if lo < 0:
            raise DomainError("lambda0 must be non-negative")
        if hi < lo or (hi == lo and not self.closed_below):
            raise DomainError(f"empty window ({lo}, {hi}]")
        object.__setattr__(self, "lambda0", lo)
        object.__setattr__(self, "lambda1", hi)

    @classmethod
    def ball(cls, lam):
        return cls(0.0, lam, closed_below=True)

    @property
    def width(self):
        return self.lambda1 - self.lambda0

    def contains(self, freq):
        freq = np.asarray(freq, dtype=float)
        above = freq >= self.lambda0 if self.closed_below else freq > self.lambda0
        return above & (freq <= self.lambda1)

    def integer_bounds(self, scale):
        """Bounds ``(lo, hi)`` with ``lo < scale * f^2 <= hi`` equivalent to
        membership, for integer ``scale * f^2``."""
        lo2 = Fraction(self.lambda0) ** 2 * scale
        hi = math.floor(Fraction(self.lambda1) ** 2 * scale)
        lo = math.ceil(lo2) - 1 if self.closed_below else math.floor(lo2)
        return lo, hi

    def key(self):
        return {
            "lambda0": str(Decimal(self.lambda0)),
            "lambda1": str(Decimal(self.lambda1)),
            "closed_below": self.closed_below,
        }

    def filename(self):
        return f"{self.lambda0!r}_{self.lambda1!r}" + ("_closed" if self.closed_below else "")


# -- torus -------------------------------------------------------------------


def _rational_gram(torus):
    """Return ``(integer Gram matrix, scale)`` if ``scale * D^T D`` is integral."""
    gram = torus.dual_basis.T @ torus.dual_basis
    fracs = []
    for g in gram.ravel():
        f = Fraction(float(g)).limit_denominator(_MAX_DENOMINATOR)
        if abs(float(f) - g) > 1e-10 * max(1.0, abs(g)):
            return None
        fracs.append(f)
    scale = 1
    for f in fracs:
        scale = scale * f.denominator // math.gcd(scale, f.denominator)
    ints = np.array([int(f * scale) for f in fracs], dtype=np.int64).reshape(gram.shape)
    return ints, scale


def squared_norms(torus, coords):
    """Squared dual-lattice norms of integer mode coordinates.

    Returns ``(values, scale)``: integer ``scale * |mu|^2`` when the dual Gram
    matrix is rational (``scale`` an int), else float ``|mu|^2`` and ``None``.
    """
    coords = np.asarray(coords, dtype=np.int64)
    rational = _rational_gram(torus)
    if rational is not None:
        gram, scale = rational
        return np.einsum("ij,ij->i", coords @ gram, coords), scale
    mu = coords @ torus.dual_basis.T
    return np.einsum("ij,ij->i", mu, mu), None


def _member_mask(values, scale, window):
    if scale is not None:
        lo, hi = window.integer_bounds(scale)
        return (values > lo) & (values <= hi)
    lo2, hi2 = window.lambda0**2, window.lambda1**2
    above = values >= lo2 if window.closed_below else values > lo2
    return above & (values <= hi2)


def estimated_mode_count(torus, lam):
    return lam**torus.n * ball_volume(torus.n) * torus.volume / (2.0 * math.pi) ** torus.n


@dataclass(eq=False)
class TorusModeSet:
    """Dual-lattice modes of a torus inside a window, in lexicographic order
    of their integer coordinates."""

    torus: FlatTorus
    window: SpectralWindow
    coords: np.ndarray
    sq_values: np.ndarray = field(repr=False)
    sq_scale: object = None

    def __len__(self):
        return len(self.coords)

    @cached_property
    def modes(self):
        return self.coords.astype(float) @ self.torus.dual_basis.T

    @cached_property
    def squared_frequencies(self):
        if self.sq_scale is None:
            return self.sq_values.astype(float)
        return self.sq_values / self.sq_scale

    @cached_property
    def runs(self):
        """Maximal runs of consecutive last coordinates sharing a prefix.

        Returns ``(prefix, lo, hi)``: the modes are exactly the integer vectors
        ``(*prefix[r], j)`` with ``lo[r] <= j <= hi[r]``.
        """
        c = self.coords
        if len(c) == 0:
            return np.zeros((0, self.torus.n - 1), np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
        starts = np.ones(len(c), dtype=bool)
        starts[1:] = np.any(c[1:, :-1] != c[:-1, :-1], axis=1) | (c[1:, -1] != c[:-1, -1] + 1)
        first = np.flatnonzero(starts)
        last = np.append(first[1:] - 1, len(c) - 1)
        return c[first, :-1], c[first, -1], c[last, -1]

    def is_symmetric(self):
        key = {tuple(row) for row in self.coords.tolist()}
        return all(tuple(-v for v in row) in key for row in key)


def _enumerate_slice(torus, window, first, rest_bounds):
    grids = np.meshgrid(*[np.arange(-b, b + 1, dtype=np.int64) for b in rest_bounds], indexing="ij")
    rest = np.stack([g.ravel() for g in grids], axis=1)
    coords = np.concatenate([np.full((len(rest), 1), first, dtype=np.int64), rest], axis=1)
    values, scale = squared_norms(torus, coords)
    keep = _member_mask(values, scale, window)
    return coords[keep], values[keep]


def torus_modes(torus: FlatTorus, window: SpectralWindow, budget=DEFAULT_MODE_BUDGET, workers=1):
    """Enumerate all dual-lattice modes with ``window.lambda0 < |mu| <= window.lambda1``.

    The integer coordinates are scanned over the bounding box of the ball of
    radius ``lambda1``; the output order is lexicographic in those
    coordinates whatever the worker count.
    """
    estimate = estimated_mode_count(torus, window.lambda1)
    if estimate > budget:
        raise ResourceError(
            f"window needs about {estimate:.3g} modes, above the budget of {budget}", estimated_count=estimate
        )
    # |m_i| <= lambda1 * |row i of D^{-1}|, and D^{-1} = B^T / (2 pi)
    rows = np.linalg.norm(torus.basis.T, axis=1) / (2.0 * math.pi)
    bounds = [int(math.floor(window.lambda1 * r * (1 + 1e-12))) + 1 for r in rows]
    firsts = range(-bounds[0], bounds[0] + 1)

    def work(m1):
        return _enumerate_slice(torus, window, m1, bounds[1:])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, firsts))
    else:
        parts = [work(m1) for m1 in firsts]
    coords = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, torus.n), np.int64)
    values = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    scale = _rational_gram(torus)
    return TorusModeSet(torus, window, coords, values, None if scale is None else scale[1])


def counting_function(torus: FlatTorus, lams):
    """``N(lambda) = #{modes with |mu| <= lambda}`` for one or many lambdas.

    The ball of the largest lambda is enumerated once.
    """
    lam_arr = np.atleast_1d(np.asarray(lams, dtype=float))
    biggest = torus_modes(torus, SpectralWindow.ball(float(lam_arr.max())))
    values = np.sort(biggest.sq_values)
    counts = []
    for lam in lam_arr:
        w = SpectralWindow.ball(float(lam))
        if biggest.sq_scale is not None:
            _, hi = w.integer_bounds(biggest.sq_scale)
            counts.append(int(np.searchsorted(values, hi, side="right")))
        else:
            counts.append(int(np.searchsorted(values, float(lam) ** 2, side="right")))
    return counts[0] if np.ndim(lams) == 0 else counts


def weyl_count(torus: FlatTorus, lam):
    return estimated_mode_count(torus, lam)


def counting_remainder(torus: FlatTorus, lam):
    """``N(lambda) - lambda^n vol omega_n / (2 pi)^n``."""
    counts = np.asarray(counting_function(torus, lam), dtype=float)
    out = counts - weyl_count(torus, np.asarray(lam, dtype=float))
    return float(out) if np.ndim(lam) == 0 else out


def off_spectrum(torus: FlatTorus, lam):
    """Midpoint between the largest torus frequency ``<= lam`` and the next one.

    Any lambda strictly between two consecutive frequencies selects the same
    modes, so the midpoint keeps the remainder away from eigenvalue jumps.
    """
    spread = 1.0
    while True:
        w = SpectralWindow(max(0.0, lam - spread), lam + spread, closed_below=True)
        freqs = np.unique(np.sqrt(torus_modes(torus, w).squared_frequencies))
        below, above = freqs[freqs <= lam], freqs[freqs > lam]
        if len(below) and len(above):
            return 0.5 * (below[-1] + above[0])
        spread *= 2.0


# -- sphere ------------------------------------------------------------------


def sphere_frequency(n: int, k: int) -> float:
    """Smallest float ``lam`` with ``lam^2 >= k (k + n - 1)`` exactly, i.e. the
    frequency of level ``k`` rounded so that ``E_lam`` includes the level."""
    q = k * (k + n - 1)
    lam = math.sqrt(q)
    while Fraction(lam) ** 2 < q:
        lam = math.nextafter(lam, math.inf)
    return lam


@dataclass(eq=False)
class SphereLevelSet:
    n: int
    window: SpectralWindow
    degrees: np.ndarray

    def __len__(self):
        return len(self.degrees)

    @cached_property
    def multiplicities(self):
        return np.array([harmonic_dimension(self.n, int(k)) for k in self.degrees], dtype=np.int64)

    @cached_property
    def frequencies(self):
        return np.sqrt((self.degrees * (self.degrees + self.n - 1)).astype(float))

    @property
    def levels(self):
        return list(zip(self.degrees.tolist(), self.multiplicities.tolist(), self.frequencies.tolist()))


def sphere_levels(n: int, window: SpectralWindow) -> SphereLevelSet:
    """All degrees ``k`` with ``lambda0 < sqrt(k (k + n - 1)) <= lambda1``."""
    if int(n) != n or n < 2:
        raise DomainError("sphere dimension must be >= 2")
    lo, hi = window.integer_bounds(1)
    start = max(0, int(window.lambda0) - n)
    ks = []
    k = start
    while k * (k + n - 1) <= hi:
        if k * (k + n - 1) > lo:
            ks.append(k)
        k += 1
    return SphereLevelSet(int(n), window, np.array(ks, dtype=np.int64))


# -- disk cache --------------------------------------------------------------


def manifold_hash(manifold):
    blob = json.dumps(manifold.descriptor(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _paths(root, manifold, window):
    base = Path(root) / manifold_hash(manifold)
    stem = window.filename()
    return base / f"{stem}.modes", base / f"{stem}.meta.json"


def _atomic_write(path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cache_store(obj, root):
    """Persist a mode or level set; returns the path of the binary file."""
    if isinstance(obj, TorusModeSet):
        manifold, kind, array = obj.torus, "torus-modes", obj.coords
    elif isinstance(obj, SphereLevelSet):
        manifold, kind, array = RoundSphere(obj.n), "sphere-levels", obj.degrees.reshape(-1, 1)
    else:
        raise TypeError(f"cannot cache {type(obj).__name__}")
    blob = np.ascontiguousarray(array, dtype="<i8").tobytes()
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "manifold": manifold.descriptor(),
        "window": obj.window.key(),
        "shape": [int(s) for s in array.shape],
        "dtype": "<i8",
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    data_path, meta_path = _paths(root, manifold, obj.window)
    _atomic_write(data_path, blob)
    _atomic_write(meta_path, json.dumps(meta, indent=2, sort_keys=True).encode())
    return data_path


def cache_load(manifold, window, root):
    """Load a cached mode/level set, or return None on any kind of miss.

    Checksum failures and unreadable files warn before reporting the miss.
    """
    data_path, meta_path = _paths(root, manifold, window)
    if not (data_path.exists() and meta_path.exists()):
        return None
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, ValueError):
        warnings.warn(f"unreadable cache metadata {meta_path}", RuntimeWarning)
        return None
    if meta.get("format_version") != FORMAT_VERSION:
        return None
    if meta.get("manifold") != manifold.descriptor() or meta.get("window") != window.key():
        return None
    blob = data_path.read_bytes()
    if hashlib.sha256(blob).hexdigest() != meta.get("sha256"):
        warnings.warn(f"checksum mismatch in {data_path}; ignoring cached entry", RuntimeWarning)
        return None
    array = np.frombuffer(blob, dtype="<i8").reshape(meta["shape"]).astype(np.int64)
    if meta["kind"] == "sphere-levels":
        return SphereLevelSet(manifold.n, window, array[:, 0].copy())
    values, scale = squared_norms(manifold, array)
    return TorusModeSet(manifold, window, array, values, scale)


def load_or_compute(manifold, window, cache_dir=None, budget=DEFAULT_MODE_BUDGET, workers=1):
    """Mode set (torus) or level set (sphere), going through the cache if given."""
    if cache_dir is not None:
        hit = cache_load(manifold, window, cache_dir)
        if hit is not None:
            return hit
    if isinstance(manifold, FlatTorus):
        result = torus_modes(manifold, window, budget=budget, workers=workers)
    else:
        result = sphere_levels(manifold.n, window)
    if cache_dir is not None:
        cache_store(result, cache_dir)
        log.debug("cached %s %s", manifold, window)
    return result
