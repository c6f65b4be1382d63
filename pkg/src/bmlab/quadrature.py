"""Midpoint-grid Fourier quadrature on [-pi, pi] with singular-point corrections.

Long-memory spectral densities behave like ``g0 |lam|^(-beta)`` at the
origin.  The midpoint grid never samples ``lam = 0`` but the plain rule then
converges only like ``h^(1-beta)``.  The generalized Euler-Maclaurin
expansion (Navot) for an algebraic endpoint singularity gives the missing
terms in closed form through Hurwitz zeta values at offset 1/2, which is
exactly the node offset of a midpoint grid.  Same story for ``log|lam|``,
where the derivative of the Hurwitz zeta appears instead.
"""
from __future__ import annotations

from functools import lru_cache
from math import factorial

import mpmath
import numpy as np

_SERIES_TERMS = 40


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def midpoint_grid(grid_size: int) -> np.ndarray:
    """Nodes ``-pi + (2m + 1) pi / N``; symmetric, never touches 0 or +-pi."""
    m = np.arange(grid_size)
    return -np.pi + (2 * m + 1) * np.pi / grid_size


def cosine_moments(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Midpoint approximation of ``int values(lam) cos(k lam) dlam`` for k = 0..max_lag.

    ``values`` are samples on :func:`midpoint_grid` of length N and are
    assumed even in lambda.
    """
    n = len(values)
    k = np.arange(max_lag + 1)
    spec = np.fft.fft(values)[: max_lag + 1]
    # exp(i k lam_m) = exp(i k (pi/N - pi)) exp(2 pi i k m / N)
    phase = np.exp(1j * k * (np.pi / n - np.pi))
    return (np.conj(spec) * phase).real * (2 * np.pi / n)


@lru_cache(maxsize=64)
def _hurwitz_half(beta: float, derivative: int) -> np.ndarray:
    return np.array(
        [float(mpmath.zeta(beta - 2 * m, 0.5, derivative)) for m in range(_SERIES_TERMS)]
    )


def _even_series(k: np.ndarray, h: float, zvals: np.ndarray) -> np.ndarray:
    """``sum_m (-1)^m (k h)^(2m) / (2m)! * zvals[m]``."""
    m = np.arange(len(zvals))
    coef = (-1.0) ** m / np.array([float(factorial(2 * i)) for i in m]) * zvals
    x2 = (np.asarray(k, dtype=float) * h) ** 2
    # Horner in (k h)^2
    out = np.zeros_like(x2)
    for c in coef[::-1]:
        out = out * x2 + c
    return out


def algebraic_singularity_correction(beta: float, g0: float, grid_size: int, max_lag: int) -> np.ndarray:
    """Midpoint-rule excess for ``g0 |lam|^(-beta) cos(k lam)`` near the origin.

    Subtract the result from :func:`cosine_moments` output.  ``beta < 1``;
    negative ``beta`` (a zero of the density) is also handled.
    """
    if beta == 0.0 or g0 == 0.0:
        return np.zeros(max_lag + 1)
    h = 2 * np.pi / grid_size
    k = np.arange(max_lag + 1)
    series = _even_series(k, h, _hurwitz_half(float(beta), 0))
    return 2.0 * g0 * h ** (1.0 - beta) * series


def log_singularity_correction(weight: float, grid_size: int, max_lag: int) -> np.ndarray:
    """Midpoint-rule excess for ``weight * log|lam| * cos(k lam)`` near the origin.

    Only ``zeta'(-2m, 1/2)`` terms survive because ``zeta(-2m, 1/2) = 0``.
    """
    if weight == 0.0:
        return np.zeros(max_lag + 1)
    h = 2 * np.pi / grid_size
    k = np.arange(max_lag + 1)
    series = _even_series(k, h, _hurwitz_half(0.0, 1))
    return -2.0 * weight * h * series
