"""Exact geodesic geometry of flat tori and round unit spheres.

Both models expose the same small surface used by the kernel code:
``n``, ``kind``, ``volume``, ``injectivity_radius``, ``distance(x, y)``,
``exp(x, v)`` (``v`` in an orthonormal tangent frame at ``x``),
``geodesic(x, y)`` and ``descriptor()``.

On the torus every point is non self-focal and every pair mutually non-focal
(loop directions are the rational ones), and there are no conjugate points.
On the sphere every point is self-focal, which makes it the negative control.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .specfun import sphere_area

_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class GeodesicData:
    distance: float
    log_vector: np.ndarray
    unique: bool = True


class FlatTorus:
    """The flat torus ``R^n / L`` where ``L`` is spanned by the columns of ``basis``.

    The basis must be reduced: no combination with coefficients in
    ``{-1, 0, 1}`` may be shorter than the shortest column.
    """

    kind = "torus"

    def __init__(self, basis=None, n=2):
        if basis is None:
            basis = 2.0 * math.pi * np.eye(n)
        basis = np.array(basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1] or basis.shape[0] < 2:
            raise DomainError("basis must be a square matrix of size >= 2")
        det = float(np.linalg.det(basis))
        if not np.isfinite(det) or abs(det) < 1e-300:
            raise DomainError("basis is singular")
        basis.setflags(write=False)
        self.basis = basis
        self.n = basis.shape[0]
        self.volume = abs(det)
        self._inverse = np.linalg.inv(basis)
        dual = 2.0 * math.pi * self._inverse.T
        dual.setflags(write=False)
        self.dual_basis = dual

        self._shifts = np.array(list(itertools.product((-1, 0, 1), repeat=self.n)), dtype=float)
        shortest_col = float(np.min(np.linalg.norm(basis, axis=0)))
        combos = self._shifts[np.any(self._shifts != 0, axis=1)] @ basis.T
        if float(np.min(np.linalg.norm(combos, axis=1))) < shortest_col * (1 - _TIE_RTOL):
            raise DomainError("lattice basis is not reduced")
        self.injectivity_radius = 0.5 * shortest_col

    @classmethod
    def square(cls, n=2, side=2.0 * math.pi):
        return cls(side * np.eye(n))

    @classmethod
    def hexagonal(cls, side=2.0 * math.pi):
        return cls(side * np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]))

    def descriptor(self):
        return {"kind": self.kind, "n": self.n, "basis": [[float.hex(float(v)) for v in row] for row in self.basis]}

    def __repr__(self):
        return f"FlatTorus(basis={self.basis.tolist()!r})"

    def lattice_coordinates(self, v):
        return np.asarray(v, dtype=float) @ self._inverse.T

    def minimal_image(self, d):
        """Shortest representatives of displacement vectors modulo the lattice.

        Returns ``(vectors, unique)`` where ``unique`` is False where two
        translates are equally short (cut-locus ties).
        """
        d = np.asarray(d, dtype=float)
        s = self.lattice_coordinates(d)
        s = s - np.round(s)
        base = s @ self.basis.T
        cand = base[..., None, :] + (self._shifts @ self.basis.T)
        lengths = np.linalg.norm(cand, axis=-1)
        best = np.argmin(lengths, axis=-1)
        shortest = np.take_along_axis(lengths, best[..., None], axis=-1)
        ties = np.sum(lengths <= shortest * (1 + _TIE_RTOL) + 1e-300, axis=-1)
        vec = np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]
        return vec, ties == 1

    def geodesic(self, x, y):
        vec, unique = self.minimal_image(np.asarray(y, float) - np.asarray(x, float))
        return GeodesicData(float(np.linalg.norm(vec)), vec, bool(unique))

    def distance(self, x, y):
        vec, _ = self.minimal_image(np.asarray(y, float) - np.asarray(x, float))
        return np.linalg.norm(vec, axis=-1)

    def exp(self, x, v):
        return np.asarray(x, float) + np.asarray(v, float)

    def theta(self, x, y):
        if self.distance(x, y) >= self.injectivity_radius:
            raise DomainError("points are not within the injectivity radius")
        return 1.0

    def sample_points(self, unit):
        """Map points of the unit cube to the fundamental domain."""
        return np.asarray(unit, float) @ self.basis.T


class RoundSphere:
    """The unit sphere ``S^n`` in ``R^{n+1}``; points are unit vectors."""

    kind = "sphere"
    injectivity_radius = math.pi

    def __init__(self, n=2):
        if int(n) != n or n < 2:
            raise DomainError("sphere dimension must be >= 2")
        self.n = int(n)
        self.volume = sphere_area(self.n + 1)

    def descriptor(self):
        return {"kind": self.kind, "n": self.n}

    def __repr__(self):
        return f"RoundSphere(n={self.n})"

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n + 1 or np.any(np.abs(np.linalg.norm(x, axis=-1) - 1.0) > 1e-12):
            raise DomainError("sphere points must be unit vectors in R^{n+1}")
        return x

    def tangent_frame(self, x):
        """Orthonormal basis of the tangent space at ``x``, as columns."""
        x = self.check_point(x)
        sign = 1.0 if x[0] >= 0 else -1.0
        v = x.copy()
        v[0] += sign
        reflect = np.eye(self.n + 1) - 2.0 * np.outer(v, v) / (v @ v)
        return reflect[:, 1:]

    def exp(self, x, v):
        """Exponential map at ``x``; ``v`` holds tangent-frame coordinates."""
        x = self.check_point(x)
        v = np.asarray(v, dtype=float)
        w = v @ self.tangent_frame(x).T
        t = np.linalg.norm(w, axis=-1, keepdims=True)
        safe = np.where(t > 0, t, 1.0)
        return np.cos(t) * x + np.sin(t) * w / safe

    def distance(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        c = np.sum(x * y, axis=-1)
        perp = y - c[..., None] * x
        return np.arctan2(np.linalg.norm(perp, axis=-1), c)

    def geodesic(self, x, y):
        x = self.check_point(x)
        y = self.check_point(y)
        c = float(np.clip(x @ y, -1.0, 1.0))
        perp = y - c * x
        s = float(np.linalg.norm(perp))
        dist = math.atan2(s, c)
        frame = self.tangent_frame(x)
        if s <= 1e-15:
            if c > 0:
                return GeodesicData(0.0, np.zeros(self.n))
            return GeodesicData(math.pi, math.pi * np.eye(self.n)[0], unique=False)
        return GeodesicData(dist, dist * (frame.T @ perp) / s)

    def theta(self, x, y):
        r = float(self.distance(x, y))
        if r >= self.injectivity_radius:
            raise DomainError("points are not within the injectivity radius")
        return 1.0 if r == 0.0 else (math.sin(r) / r) ** (self.n - 1)

    def sample_points(self, unit):
        """Map points of the unit cube ``[0,1)^{n+1}`` to the sphere (Gaussian
        inverse-CDF trick)."""
        from scipy.special import ndtri

        u = np.clip(np.asarray(unit, float), 1e-12, 1 - 1e-12)
        g = ndtri(u)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)


def torus_geodesic(torus: FlatTorus, x, y) -> GeodesicData:
    return torus.geodesic(x, y)


def sphere_geodesic(sphere: RoundSphere, x, y) -> GeodesicData:
    return sphere.geodesic(x, y)


def theta_density(manifold, x, y) -> float:
    """Volume density ``|det D exp_x|`` at ``exp_x^{-1}(y)``."""
    return manifold.theta(x, y)


def injectivity_radius(manifold) -> float:
    return manifold.injectivity_radius


def manifold_from_descriptor(desc):
    if desc["kind"] == "torus":
        return FlatTorus([[float.fromhex(v) for v in row] for row in desc["basis"]])
    if desc["kind"] == "sphere":
        return RoundSphere(desc["n"])
    raise DomainError(f"unknown manifold kind {desc['kind']!r}")
