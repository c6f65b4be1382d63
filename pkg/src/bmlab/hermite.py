"""Probabilists' Hermite polynomials and finite Hermite combinations.

Convention: ``H_q(x) = (-1)^q exp(x^2/2) d^q/dx^q exp(-x^2/2)``, so that
``H_0 = 1, H_1 = x, H_2 = x^2 - 1, H_3 = x^3 - 3x``.  These are orthogonal
under the standard Gaussian measure with ``E[H_p(Z) H_q(Z)] = q! 1{p=q}``.
The physicists' polynomials (``2x H_k - 2k H_{k-1}``) are a different family
and are never used here.
"""
from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .errors import InvalidParameterError, UnsupportedOrderError

MAX_ORDER = 60


def _check_order(order: int) -> None:
    if order < 0 or int(order) != order:
        raise InvalidParameterError(f"Hermite order must be a non-negative integer, got {order!r}")
    if order > MAX_ORDER:
        raise UnsupportedOrderError(f"Hermite order {order} exceeds the supported maximum {MAX_ORDER}")


def hermite_eval(order: int, x):
    """Evaluate ``H_order(x)`` by the three-term recurrence.

    ``x`` may be a scalar or an array; the result has the same shape.
    """
    _check_order(order)
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if order == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for k in range(1, order):
        h_prev, h = h, x * h - k * h_prev
    return h if h.ndim else float(h)


class HermiteSeries:
    """Finite linear combination ``sum_j a_j H_j`` with no rank constraint."""

    def __init__(self, coeffs: Mapping[int, float]):
        clean = {}
        for j, a in coeffs.items():
            j = int(j)
            _check_order(j)
            a = float(a)
            if not math.isfinite(a):
                raise InvalidParameterError(f"coefficient a_{j} is not finite")
            if a != 0.0:
                clean[j] = clean.get(j, 0.0) + a
        self.coeffs = dict(sorted(clean.items()))

    @property
    def orders(self):
        return list(self.coeffs)

    def __call__(self, x):
        return combination_eval(self, x)

    def __eq__(self, other):
        return isinstance(other, HermiteSeries) and self.coeffs == other.coeffs

    def __repr__(self):
        return f"{type(self).__name__}({self.coeffs!r})"

    def scaled(self, c: float) -> "HermiteSeries":
        return type(self)({j: c * a for j, a in self.coeffs.items()})

    def to_spec(self) -> str:
        """Render as the ``order:coef,...`` text used on the command line."""
        return ",".join(f"{j}:{a!r}" for j, a in self.coeffs.items())


class HermiteCombination(HermiteSeries):
    """``f = sum_{j=d}^{q} a_j H_j`` with Hermite rank ``d >= 2``.

    Zero coefficients are dropped, so ``rank_d`` and ``top_q`` are the lowest
    and highest orders actually present.
    """

    def __init__(self, coeffs: Mapping[int, float]):
        super().__init__(coeffs)
        if not self.coeffs:
            raise InvalidParameterError("Hermite combination needs at least one non-zero coefficient")
        if min(self.coeffs) < 2:
            raise InvalidParameterError(
                f"Hermite rank must be at least 2, got a non-zero a_{min(self.coeffs)}"
            )

    @property
    def rank_d(self) -> int:
        return min(self.coeffs)

    @property
    def top_q(self) -> int:
        return max(self.coeffs)

    @classmethod
    def parse(cls, text: str) -> "HermiteCombination":
        """Parse ``"2:1.0,3:0.5"`` into ``{2: 1.0, 3: 0.5}``."""
        coeffs: dict[int, float] = {}
        for item in text.replace(" ", "").split(","):
            if not item:
                continue
            try:
                j, a = item.split(":")
                coeffs[int(j)] = coeffs.get(int(j), 0.0) + float(a)
            except ValueError as exc:
                raise InvalidParameterError(f"bad Hermite term {item!r}; expected order:coef") from exc
        return cls(coeffs)


def combination_eval(f: HermiteSeries, x):
    """Evaluate ``sum_j a_j H_j(x)`` in a single recurrence sweep."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if not f.coeffs:
        return out if out.ndim else float(out)
    top = max(f.coeffs)
    h_prev = np.ones_like(x)
    out = out + f.coeffs.get(0, 0.0) * h_prev
    h = x.copy()
    if 1 in f.coeffs:
        out = out + f.coeffs[1] * h
    for k in range(1, top):
        h_prev, h = h, x * h - k * h_prev
        a = f.coeffs.get(k + 1)
        if a is not None:
            out = out + a * h
    return out if out.ndim else float(out)


def combination_derivative(f: HermiteSeries) -> HermiteSeries:
    """``f' = sum_j j a_j H_{j-1}``, using ``H_j' = j H_{j-1}``."""
    return HermiteSeries({j - 1: j * a for j, a in f.coeffs.items() if j >= 1})


def hermite_split_table(order: int, a: float, b: float) -> dict[int, float]:
    """Coefficients ``l -> C(q, l) a^(q-l) b^l`` of the two-variable split."""
    _check_order(order)
    return {l: math.comb(order, l) * a ** (order - l) * b ** l for l in range(order + 1)}


def hermite_split(order: int, a: float, b: float, y, z, tol: float = 1e-12):
    """Evaluate ``H_q(a y + b z)`` as ``sum_l C(q,l) a^(q-l) b^l H_{q-l}(y) H_l(z)``.

    Requires ``a^2 + b^2 = 1``.
    """
    if abs(a * a + b * b - 1.0) > tol:
        raise InvalidParameterError(f"split requires a^2 + b^2 = 1, got {a * a + b * b!r}")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    table = hermite_split_table(order, a, b)
    hy = [np.ones_like(y), y.copy()]
    hz = [np.ones_like(z), z.copy()]
    for k in range(1, order):
        hy.append(y * hy[k] - k * hy[k - 1])
        hz.append(z * hz[k] - k * hz[k - 1])
    total = sum(c * hy[order - l] * hz[l] for l, c in table.items())
    total = np.asarray(total, dtype=float)
    return total if total.ndim else float(total)


def conditional_expectation_factor(order: int, a: float) -> float:
    """Factor ``a^q`` in ``E[H_q(aY + bZ) | Y] = a^q H_q(Y)``."""
    if abs(a) > 1.0:
        raise InvalidParameterError(f"|a| must be at most 1, got {a!r}")
    _check_order(order)
    return float(a) ** order


def hermite_covariance(order_p: int, order_q: int, rho: float) -> float:
    """``E[H_p(X) H_q(Y)]`` for standard Gaussians with correlation ``rho``."""
    if abs(rho) > 1.0:
        raise InvalidParameterError(f"|rho| must be at most 1, got {rho!r}")
    _check_order(order_p)
    _check_order(order_q)
    if order_p != order_q:
        return 0.0
    return math.factorial(order_p) * float(rho) ** order_p
