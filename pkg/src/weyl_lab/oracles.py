"""Independent reference computations used to check the fast paths.

None of these share code with the production routines: Bessel values come
from an interval-arithmetic power series, sphere integrals from Gauss-Legendre
quadrature in the polar angle, and lattice counts from a plain integer loop.
"""

import functools
import math
from fractions import Fraction

import numpy as np
from mpmath import iv

from .specfun import sphere_area


def bessel_series_enclosure(nu, x, min_terms=30, dps=60):
    """Interval enclosure of ``J_nu(x)`` from its power series.

    At least ``min_terms`` terms are summed, continuing until the terms are
    below ``1e-40`` and decreasing with ratio below one half; the tail is
    then bounded by twice the next term.  Returns ``(midpoint, radius)``.
    """
    old = iv.dps
    iv.dps = dps
    try:
        xv = iv.mpf(repr(float(x)))
        nuv = iv.mpf(Fraction(nu).numerator) / Fraction(nu).denominator
        if float(x) == 0.0:
            return (1.0 if nu == 0 else 0.0), 0.0
        q = -(xv / 2) ** 2
        term = (xv / 2) ** nuv / iv.gamma(nuv + 1)
        total = term
        k = 0
        while True:
            k += 1
            term = term * q / (k * (k + nuv))
            total += term
            ratio = float(((xv / 2) ** 2 / ((k + 1) * (k + 1 + nuv))).b)
            if k >= min_terms and ratio < 0.5 and float(abs(term).b) < 1e-40:
                nxt = abs(term) * ratio
                tail = 2 * float(nxt.b)
                break
        lo, hi = float(total.a), float(total.b)
        return 0.5 * (lo + hi), 0.5 * (hi - lo) + tail
    finally:
        iv.dps = old


def bessel_series(nu, x, **kwargs):
    return bessel_series_enclosure(nu, x, **kwargs)[0]


@functools.lru_cache(maxsize=8)
def _gauss_legendre(nodes):
    return np.polynomial.legendre.leggauss(nodes)


def sphere_fourier_quadrature(n, r, nodes=400):
    """``int_{S^{n-1}} exp(i r w_1) dw`` as a polar-angle integral,
    ``sigma_{n-1} int_0^pi cos(r cos t) sin^{n-2} t dt`` (``sigma_1 = 2``)."""
    t, w = _gauss_legendre(nodes)
    theta = 0.5 * math.pi * (t + 1.0)
    weights = 0.5 * math.pi * w
    integrand = np.cos(float(r) * np.cos(theta)) * np.sin(theta) ** (n - 2)
    return sphere_area(n - 1) * math.fsum(weights * integrand)


def lattice_count(side_ratio_sq, lam):
    """Count integer vectors ``m`` in Z^2 with ``side_ratio_sq * |m|^2 <= lam^2``
    by a plain loop (``side_ratio_sq = (2 pi / side)^2``, rational)."""
    bound = Fraction(lam) ** 2 / Fraction(side_ratio_sq)
    r = math.isqrt(math.floor(bound)) + 1
    count = 0
    for a in range(-r, r + 1):
        for b in range(-r, r + 1):
            if a * a + b * b <= bound:
                count += 1
    return count
