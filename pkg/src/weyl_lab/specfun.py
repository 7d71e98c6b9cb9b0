"""Closed-form special functions behind every kernel formula.

Bessel functions of the first kind (integer and half-integer order), sphere
measures, the Weyl ball integral, the universal window kernel, the embedding
profile ``f`` and zonal spherical-harmonic kernels.  Everything is vectorised
over the real argument and has no hidden state.

Bessel regimes
--------------
* ``x <= 8`` (or ``x <= nu`` for half-integer orders): ascending power series.
* integer order, ``8 < x < max(35, nu**2)``: Miller backward recurrence
  normalised by ``J_0 + 2 sum J_2k = 1``.
* integer order, larger ``x``: Hankel asymptotic expansion, at least 8 terms
  and continued until the terms drop below 1e-17.
* half-integer order outside the series range: spherical-Bessel closed forms
  ``sin``/``cos`` with upward recurrence (stable for ``x > l``).
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError

SERIES_MAX_X = 8.0
HANKEL_MIN_X = 35.0
TAYLOR_SWITCH = 1e-4
_PROFILE_SERIES_MAX = 2.0


@dataclass(frozen=True)
class BesselOrder:
    """Order ``nu`` of a Bessel function, stored as ``2 * nu``."""

    twice_order: int

    def __post_init__(self):
        if int(self.twice_order) != self.twice_order or self.twice_order < 0:
            raise DomainError(f"twice_order must be a non-negative integer, got {self.twice_order!r}")
        object.__setattr__(self, "twice_order", int(self.twice_order))

    @property
    def nu(self) -> float:
        return self.twice_order / 2

    @property
    def is_integer(self) -> bool:
        return self.twice_order % 2 == 0

    @classmethod
    def of(cls, value) -> "BesselOrder":
        """Coerce an order given as a number (integer or half-integer)."""
        if isinstance(value, BesselOrder):
            return value
        twice = Fraction(value) * 2
        if twice.denominator != 1:
            raise DomainError(f"order {value!r} is not an integer or half-integer")
        return cls(int(twice))

    @classmethod
    def for_dimension(cls, n: int) -> "BesselOrder":
        """The order ``(n - 2) / 2`` of the sphere Fourier transform in R^n."""
        return cls(n - 2)


@dataclass(frozen=True)
class DimensionParams:
    n: int
    sigma_n: float
    omega_n: float

    @classmethod
    def for_dimension(cls, n: int) -> "DimensionParams":
        _check_dimension(n)
        sigma = sphere_area(n)
        return cls(n, sigma, sigma / n)


def _check_dimension(n, minimum=2):
    if int(n) != n or n < minimum:
        raise DomainError(f"dimension must be an integer >= {minimum}, got {n!r}")


def _as_float_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(arr < 0):
        raise DomainError(f"{name} must be non-negative")
    return arr


def _restore(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


# -- Bessel J ---------------------------------------------------------------


def _series(nu, x):
    half = 0.5 * x
    term = half**nu / math.gamma(nu + 1.0)
    total = term.copy()
    scale = np.abs(term)
    q = -half * half
    hmax = float(np.max(half * half)) if half.size else 0.0
    k = 0
    while True:
        k += 1
        term = term * q / (k * (k + nu))
        total += term
        # past k(k+nu) > (x/2)^2 the terms shrink monotonically and alternate,
        # so the first omitted term bounds the tail
        if k * (k + nu) > hmax and np.all(np.abs(term) <= 1e-17 * scale):
            return total


def _miller(order, x):
    top = max(order, float(np.max(x)))
    start = 2 * ((int(1.5 * top) + 40) // 2)
    nxt = np.zeros_like(x)
    cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    result = np.zeros_like(x)
    for k in range(start, 0, -1):
        if k == order:
            result = cur.copy()
        if k % 2 == 0:
            norm += 2.0 * cur
        prev = (2.0 * k / x) * cur - nxt
        nxt, cur = cur, prev
        big = np.abs(cur) > 1e250
        if np.any(big):
            for arr in (nxt, cur, norm, result):
                arr[big] *= 1e-250
    if order == 0:
        result = cur
    norm += cur
    return result / norm


def _hankel(nu, x):
    mu = 4.0 * nu * nu
    p = np.ones_like(x)
    q = np.zeros_like(x)
    coeff = 1.0
    xpow = np.ones_like(x)
    for k in range(1, 80):
        coeff *= (mu - (2 * k - 1) ** 2) / (8.0 * k)
        xpow = xpow * x
        term = coeff / xpow
        if k % 2:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += term if (k // 2) % 2 == 0 else -term
        if coeff == 0.0 or (k >= 8 and np.all(np.abs(term) < 1e-17)):
            break
    phase = (0.5 * nu + 0.25) * math.pi
    s, c = np.sin(x), np.cos(x)
    cos_chi = c * math.cos(phase) + s * math.sin(phase)
    sin_chi = s * math.cos(phase) - c * math.sin(phase)
    return np.sqrt(2.0 / (math.pi * x)) * (p * cos_chi - q * sin_chi)


def _half_integer_closed(ell, x):
    s, c = np.sin(x), np.cos(x)
    prev = s / x
    if ell == 0:
        cur = prev
    else:
        cur = s / (x * x) - c / x
        for i in range(1, ell):
            prev, cur = cur, (2 * i + 1) / x * cur - prev
    return np.sqrt(2.0 * x / math.pi) * cur


def bessel_j(order, x):
    """Bessel function of the first kind ``J_nu(x)`` for ``x >= 0``.

    ``order`` may be a :class:`BesselOrder` or a number that is an integer or
    a half-integer.  ``x`` may be a scalar or an array; the result has the
    same shape.  Absolute error is below 1e-12 for ``x <= 50``.
    """
    order = BesselOrder.of(order)
    arr = _as_float_array(x)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    nu = order.nu

    zero = flat == 0.0
    out[zero] = 1.0 if order.twice_order == 0 else 0.0

    if order.is_integer:
        series = ~zero & (flat <= SERIES_MAX_X)
        hankel = ~zero & ~series & (flat >= max(HANKEL_MIN_X, nu * nu))
        miller = ~zero & ~series & ~hankel
        if np.any(miller):
            out[miller] = _miller(order.twice_order // 2, flat[miller])
        if np.any(hankel):
            out[hankel] = _hankel(nu, flat[hankel])
    else:
        series = ~zero & (flat <= max(SERIES_MAX_X, nu))
        closed = ~zero & ~series
        if np.any(closed):
            out[closed] = _half_integer_closed(order.twice_order // 2, flat[closed])
    if np.any(series):
        out[series] = _series(nu, flat[series])
    return _restore(out.reshape(np.shape(arr)), arr)


def bessel_j_over_power(order, x):
    """``J_nu(x) / x**nu`` with the removable singularity at 0 filled in."""
    order = BesselOrder.of(order)
    arr = _as_float_array(x)
    flat = np.atleast_1d(arr).ravel()
    nu = order.nu
    lead = 1.0 / (2.0**nu * math.gamma(nu + 1.0))
    out = np.empty_like(flat)
    tiny = flat < TAYLOR_SWITCH
    out[tiny] = lead * (1.0 - flat[tiny] ** 2 / (4.0 * (nu + 1.0)))
    if np.any(~tiny):
        rest = flat[~tiny]
        out[~tiny] = bessel_j(order, rest) / rest**nu
    return _restore(out.reshape(np.shape(arr)), arr)


# -- sphere measures and kernels ---------------------------------------------


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere ``S^{n-1}`` in ``R^n``."""
    _check_dimension(n, minimum=1)
    # sigma_{n+2} = 2 pi sigma_n / n keeps sigma_2, sigma_3, sigma_4 exact
    area = 2.0 if n % 2 else 2.0 * math.pi
    for m in range(2 - n % 2, n - 1, 2):
        area *= 2.0 * math.pi / m
    return area


def ball_volume(n: int) -> float:
    """Volume of the unit ball in ``R^n``."""
    return sphere_area(n) / n


def hessian_constant(n: int) -> float:
    """``C_n = sigma_n / (n (2 pi)^n)``, the diagonal Hessian coefficient of
    the unit-width window kernel divided by ``lambda**(n+1)``."""
    _check_dimension(n)
    return sphere_area(n) / (n * (2.0 * math.pi) ** n)


def fourier_bessel_sphere_integral(n: int, r):
    """``int_{S^{n-1}} exp(i <v, w>) dw`` for ``|v| = r``.

    Equal to ``(2 pi)^{n/2} J_{(n-2)/2}(r) / r^{(n-2)/2}``; below ``r = 1e-4``
    the two-term Taylor form ``sigma_n (1 - r^2 / (2n))`` is used.
    """
    _check_dimension(n)
    arr = _as_float_array(r, "r")
    flat = np.atleast_1d(arr).ravel()
    sigma = sphere_area(n)
    out = np.empty_like(flat)
    tiny = flat < TAYLOR_SWITCH
    out[tiny] = sigma * (1.0 - flat[tiny] ** 2 / (2.0 * n))
    if np.any(~tiny):
        out[~tiny] = (2.0 * math.pi) ** (n / 2) * bessel_j_over_power(
            BesselOrder.for_dimension(n), flat[~tiny]
        )
    return _restore(out.reshape(np.shape(arr)), arr)


def weyl_leading_term(n: int, lam: float, r):
    """Leading term of the pointwise Weyl law at geodesic distance ``r``.

    The cotangent ball integral reduces by rotation invariance to
    ``lam^n (2 pi)^{-n/2} J_{n/2}(lam r) / (lam r)^{n/2}``; at ``r = 0`` it is
    ``lam^n omega_n / (2 pi)^n``.
    """
    _check_dimension(n)
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    arr = _as_float_array(r, "r")
    flat = np.atleast_1d(arr).ravel()
    s = lam * flat
    out = np.empty_like(flat)
    tiny = s < TAYLOR_SWITCH
    out[tiny] = lam**n * ball_volume(n) / (2.0 * math.pi) ** n * (1.0 - s[tiny] ** 2 / (2.0 * (n + 2)))
    if np.any(~tiny):
        out[~tiny] = lam**n * (2.0 * math.pi) ** (-n / 2) * bessel_j_over_power(BesselOrder(n), s[~tiny])
    return _restore(out.reshape(np.shape(arr)), arr)


def model_window_kernel(n: int, lam: float, delta: float, r):
    """Universal scaling-limit kernel for the window ``(lam, lam + delta]``:
    ``delta lam^{n-1} (2 pi)^{-n/2} J_{(n-2)/2}(lam r) / (lam r)^{(n-2)/2}``."""
    if not lam > 0 or not delta > 0:
        raise DomainError("lambda and delta must be positive")
    arr = _as_float_array(r, "r")
    value = delta * lam ** (n - 1) / (2.0 * math.pi) ** n * fourier_bessel_sphere_integral(n, lam * arr)
    return _restore(np.asarray(value), arr)


def embedding_profile(n: int, r):
    """``f(r) = int_{S^{n-1}} (1 - exp(i r w_1)) dw``.

    For small ``r`` the difference ``sigma_n - (sphere integral)`` cancels, so
    ``r < 2`` is summed directly from the series of ``1 - Gamma(nu+1)(2/r)^nu
    J_nu(r)`` (``r < 1e-4``: the Taylor form ``r^2 sigma_n / (2n)``).
    """
    _check_dimension(n)
    arr = _as_float_array(r, "r")
    flat = np.atleast_1d(arr).ravel()
    sigma = sphere_area(n)
    nu = (n - 2) / 2
    out = np.empty_like(flat)

    tiny = flat < TAYLOR_SWITCH
    out[tiny] = flat[tiny] ** 2 * sigma / (2.0 * n)

    mid = ~tiny & (flat < _PROFILE_SERIES_MAX)
    if np.any(mid):
        q = 0.25 * flat[mid] ** 2
        term = q / (nu + 1.0)
        total = term.copy()
        for k in range(1, 40):
            term = -term * q / ((k + 1) * (k + 1 + nu))
            total += term
        out[mid] = sigma * total

    far = ~tiny & ~mid
    if np.any(far):
        out[far] = sigma - fourier_bessel_sphere_integral(n, flat[far])
    return _restore(out.reshape(np.shape(arr)), arr)


def harmonic_dimension(n: int, k: int) -> int:
    """Dimension ``N_{k,n}`` of degree-``k`` spherical harmonics on ``S^n``."""
    _check_dimension(n)
    if k < 0:
        raise DomainError("degree must be non-negative")
    return math.comb(n + k, n) - (math.comb(n + k - 2, n) if k >= 2 else 0)


def _check_cosine(cos_theta):
    t = np.asarray(cos_theta, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(np.abs(t) > 1.0):
        raise DomainError("cos_theta must lie in [-1, 1]")
    return t


def _normalized_gegenbauer(n, kmax, t):
    """Yield ``C_k^{(n-1)/2}(t) / C_k^{(n-1)/2}(1)`` for k = 0..kmax."""
    alpha = (n - 1) / 2
    prev = np.ones_like(t)
    yield prev
    if kmax == 0:
        return
    cur = t.copy()
    yield cur
    for k in range(1, kmax):
        prev, cur = cur, (2.0 * (k + alpha) * t * cur - k * prev) / (k + 2.0 * alpha)
        yield cur


def zonal_kernel(n: int, k: int, cos_theta):
    """Reproducing kernel of degree-``k`` harmonics on ``S^n`` at ``x.y``.

    ``Z_k(t) = N_{k,n} / sigma_{n+1} * C_k(t) / C_k(1)`` with the Gegenbauer
    index ``(n-1)/2``; on ``S^2`` this is ``(2k+1)/(4 pi) P_k(t)``.
    """
    t = _check_cosine(cos_theta)
    weight = harmonic_dimension(n, k) / sphere_area(n + 1)
    for value in _normalized_gegenbauer(n, k, t):
        pass
    return _restore(weight * value, t)


def zonal_kernel_sum(n: int, degrees, cos_theta):
    """Sum of :func:`zonal_kernel` over a collection of degrees, one recurrence pass."""
    t = _check_cosine(cos_theta)
    wanted = sorted(set(int(k) for k in degrees))
    total = np.zeros_like(t)
    if not wanted:
        return _restore(total, t)
    area = sphere_area(n + 1)
    want = set(wanted)
    for k, value in enumerate(_normalized_gegenbauer(n, wanted[-1], t)):
        if k in want:
            total = total + (harmonic_dimension(n, k) / area) * value
    return _restore(total, t)
