"""Unit-variance stationary Gaussian laws given by covariance and spectral density.

Densities follow the convention ``rho(k) = int_{-pi}^{pi} f(lam) e^{ik lam} dlam``,
so a unit-variance law has ``int f = 1`` and white noise has ``f = 1/(2 pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import (
    FormatError,
    InvalidModelError,
    InvalidParameterError,
    SingularPointError,
)
from .quadrature import (
    algebraic_singularity_correction,
    cosine_moments,
    is_power_of_two,
    log_singularity_correction,
    midpoint_grid,
    next_power_of_two,
)

FGN_J_CUTOFF = 20


# --------------------------------------------------------------------------
# fractional Gaussian noise


def _check_hurst(H: float) -> None:
    if not 0.0 < H < 1.0:
        raise InvalidParameterError(f"Hurst parameter must lie in (0, 1), got {H!r}")


def fgn_covariance(H: float, k):
    """``rho(k) = ((k+1)^2H - 2 k^2H + |k-1|^2H) / 2``; ``rho(0) = 1``."""
    _check_hurst(H)
    k = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * H
    out = 0.5 * ((k + 1.0) ** two_h - 2.0 * k ** two_h + np.abs(k - 1.0) ** two_h)
    return out if out.ndim else float(out)


def fgn_constant(H: float) -> float:
    """``c_f = sin(pi H) Gamma(2H + 1) / (2 pi)``, the limit of ``|lam|^(2H-1) f(lam)`` at 0."""
    _check_hurst(H)
    return math.sin(math.pi * H) * gamma(2 * H + 1) / (2 * math.pi)


def fgn_spectral_density(H: float, lam, j_cutoff: int = FGN_J_CUTOFF):
    """``f(lam) = 2 c_f (1 - cos lam) sum_j |2 pi j + lam|^(-2H-1)``.

    The sum runs over ``|j| <= j_cutoff``; the remainder on each side is
    replaced by its Euler-Maclaurin integral with two correction terms.
    """
    _check_hurst(H)
    if j_cutoff < 1:
        raise InvalidParameterError("j_cutoff must be at least 1")
    lam = np.asarray(lam, dtype=float)
    if H > 0.5 and np.any(lam == 0.0):
        raise SingularPointError("fGn density with H > 1/2 is infinite at lambda = 0")
    a = 2.0 * H
    j = np.arange(-j_cutoff, j_cutoff + 1).reshape((-1,) + (1,) * lam.ndim)
    with np.errstate(divide="ignore"):
        s = np.sum(np.abs(2 * np.pi * j + lam) ** (-a - 1.0), axis=0)
    for sign in (1.0, -1.0):
        x = 2 * np.pi * j_cutoff + sign * lam
        s = s + x ** (-a) / (2 * np.pi * a) - 0.5 * x ** (-a - 1.0) + (a + 1.0) * 2 * np.pi * x ** (-a - 2.0) / 12.0
    one_minus_cos = 2.0 * np.sin(lam / 2.0) ** 2
    out = 2.0 * fgn_constant(H) * one_minus_cos * s
    if H <= 0.5:
        out = np.where(lam == 0.0, fgn_constant(H) if H == 0.5 else 0.0, out)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class CovarianceSequence:
    """Covariances ``rho(0..L_max)`` of a unit-variance stationary sequence."""

    values: np.ndarray
    model_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 1:
            raise InvalidParameterError("covariance sequence must be a non-empty 1-D array")
        if abs(v[0] - 1.0) > 1e-9:
            raise InvalidModelError(f"rho(0) must be 1, got {v[0]!r}")
        if np.any(np.abs(v) > 1.0 + 1e-9):
            raise InvalidModelError("|rho(v)| exceeds 1")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def L_max(self) -> int:
        return len(self.values) - 1

    def __len__(self):
        return len(self.values)

    def __getitem__(self, item):
        return self.values[item]

    def circulant_spectrum(self, n: int | None = None) -> np.ndarray:
        """Eigenvalues of the size-``2n`` circulant embedding of ``rho(0..n)``.

        Uses ``n = L_max`` by default.
        """
        n = self.L_max if n is None else n
        if n > self.L_max:
            raise InvalidParameterError(f"need rho up to lag {n}, have {self.L_max}")
        if n == 0:
            return np.array([1.0])
        r = self.values[: n + 1]
        row = np.concatenate([r, r[-2:0:-1]])
        return np.fft.rfft(row).real

    def is_psd(self, tol: float = 1e-8) -> bool:
        return bool(self.circulant_spectrum().min() >= -tol)


class SpectralModel:
    """Stationary unit-variance Gaussian law.

    Subclasses supply ``raw_density`` (any positive multiple of the true
    density) and ``_raw_variance``; the public :meth:`density` is rescaled to
    integrate to one.  ``singularity`` reports ``(beta, g0)`` with
    ``f(lam) ~ g0 |lam|^(-beta)`` at the origin (``beta = 0`` if smooth).
    """

    kind = "abstract"

    def raw_density(self, lam):
        raise NotImplementedError

    def _raw_variance(self) -> float:
        raise NotImplementedError

    @property
    def model_id(self) -> str:
        raise NotImplementedError

    @property
    def normalization(self) -> float:
        """Factor that multiplies ``raw_density`` to give unit variance."""
        cached = self.__dict__.get("_norm")
        if cached is None:
            cached = 1.0 / self._raw_variance()
            self.__dict__["_norm"] = cached
        return cached

    @property
    def singularity(self) -> tuple[float, float]:
        return 0.0, 0.0

    def density(self, lam):
        return np.asarray(self.raw_density(lam)) * self.normalization

    def covariance(self, L_max: int) -> CovarianceSequence:
        """``rho(0..L_max)``; closed form where available, numerical otherwise."""
        grid = next_power_of_two(max(8 * L_max, 1 << 12))
        return covariance_from_density(self, L_max, grid)

    def __repr__(self):
        return f"<{type(self).__name__} {self.model_id}>"

    def __eq__(self, other):
        return isinstance(other, SpectralModel) and self.model_id == other.model_id

    def __hash__(self):
        return hash(self.model_id)


class FGNModel(SpectralModel):
    kind = "fgn"

    def __init__(self, hurst: float, j_cutoff: int = FGN_J_CUTOFF):
        _check_hurst(hurst)
        self.hurst = float(hurst)
        self.j_cutoff = j_cutoff

    @property
    def model_id(self):
        return f"fgn:H={self.hurst!r}"

    def raw_density(self, lam):
        return fgn_spectral_density(self.hurst, lam, self.j_cutoff)

    def _raw_variance(self):
        return 1.0

    @property
    def singularity(self):
        if self.hurst == 0.5:
            return 0.0, 0.0
        return 2.0 * self.hurst - 1.0, fgn_constant(self.hurst)

    def covariance(self, L_max: int) -> CovarianceSequence:
        return CovarianceSequence(fgn_covariance(self.hurst, np.arange(L_max + 1)), self.model_id)


def _poly_on_circle(coeffs: np.ndarray, lam) -> np.ndarray:
    """``|p(e^{-i lam})|^2`` for coefficients in increasing powers."""
    z = np.exp(-1j * np.asarray(lam, dtype=float))
    return np.abs(np.polynomial.polynomial.polyval(z, coeffs)) ** 2


class ARFIMAModel(SpectralModel):
    """``phi(B) X = (1 - B)^(-d) theta(B) w`` with polynomial coefficient lists.

    ``ar_poly`` and ``ma_poly`` are full coefficient lists in increasing
    powers of ``z``, e.g. ``ma_poly=(1, 0.5)`` for ``theta(z) = 1 + 0.5 z``.
    """

    kind = "arfima"

    def __init__(self, frac_d: float = 0.0, ar_poly=(1.0,), ma_poly=(1.0,), name: str | None = None):
        if not -1.0 < frac_d < 0.5:
            raise InvalidParameterError(f"fractional d must lie in (-1, 0.5), got {frac_d!r}")
        self.frac_d = float(frac_d)
        self.ar_poly = np.trim_zeros(np.asarray(ar_poly, dtype=float), "b")
        self.ma_poly = np.trim_zeros(np.asarray(ma_poly, dtype=float), "b")
        if len(self.ar_poly) == 0 or len(self.ma_poly) == 0 or self.ar_poly[0] == 0 or self.ma_poly[0] == 0:
            raise InvalidModelError("phi and theta need a non-zero constant term")
        self._name = name
        ar_roots = np.polynomial.polynomial.polyroots(self.ar_poly) if len(self.ar_poly) > 1 else np.array([])
        ma_roots = np.polynomial.polynomial.polyroots(self.ma_poly) if len(self.ma_poly) > 1 else np.array([])
        if np.any(np.abs(ar_roots) <= 1.0 + 1e-10):
            raise InvalidModelError(
                f"autoregressive polynomial has a zero inside the closed unit disk: {ar_roots}"
            )
        for r in ar_roots:
            if np.any(np.abs(ma_roots - r) < 1e-8):
                raise InvalidModelError(f"phi and theta share the zero {r}")

    @property
    def model_id(self):
        if self._name:
            return self._name
        parts = [f"d={self.frac_d!r}"]
        if len(self.ar_poly) > 1 or self.ar_poly[0] != 1.0:
            parts.append("ar=" + "/".join(repr(float(c)) for c in self.ar_poly))
        if len(self.ma_poly) > 1 or self.ma_poly[0] != 1.0:
            parts.append("ma=" + "/".join(repr(float(c)) for c in self.ma_poly))
        return "arfima:" + ",".join(parts)

    def raw_density(self, lam):
        return arfima_spectral_density(self, lam, normalized=False)

    def _raw_variance(self):
        d = self.frac_d
        if d == 0.0:
            val, _ = integrate.quad(self.raw_density, 0.0, np.pi, epsabs=1e-14, epsrel=1e-13, limit=200)
            return 2.0 * val

        def smooth_part(lam):
            return self.raw_density(lam) * lam ** (2 * d) if lam > 0 else self.singularity_raw_g0

        val, _ = integrate.quad(smooth_part, 0.0, np.pi, weight="alg", wvar=(-2 * d, 0.0),
                                epsabs=1e-14, epsrel=1e-13, limit=200)
        return 2.0 * val

    @property
    def singularity_raw_g0(self) -> float:
        theta1 = np.polynomial.polynomial.polyval(1.0, self.ma_poly)
        phi1 = np.polynomial.polynomial.polyval(1.0, self.ar_poly)
        return float(theta1 ** 2 / phi1 ** 2 / (2 * np.pi))

    @property
    def singularity(self):
        if self.frac_d == 0.0:
            return 0.0, 0.0
        return 2.0 * self.frac_d, self.singularity_raw_g0 * self.normalization


def arfima_spectral_density(model: ARFIMAModel, lam, normalized: bool = True):
    """``(1/2pi) [2 sin(lam/2)]^(-2d) |theta(e^-i lam)|^2 / |phi(e^-i lam)|^2``."""
    lam = np.asarray(lam, dtype=float)
    d = model.frac_d
    if d > 0 and np.any(lam == 0.0):
        raise SingularPointError("ARFIMA density with d > 0 is infinite at lambda = 0")
    with np.errstate(divide="ignore"):
        frac = (2.0 * np.abs(np.sin(lam / 2.0))) ** (-2.0 * d) if d != 0.0 else np.ones_like(lam)
    out = frac * _poly_on_circle(model.ma_poly, lam) / _poly_on_circle(model.ar_poly, lam) / (2 * np.pi)
    if normalized:
        out = out * model.normalization
    return out if out.ndim else float(out)


def white_noise() -> ARFIMAModel:
    return ARFIMAModel(0.0, name="white")


class TabulatedModel(SpectralModel):
    """Density given on nodes in [-pi, pi], linearly interpolated.

    Evaluation symmetrizes, ``(g(lam) + g(-lam)) / 2``, so the model is even
    even if the table is not; values outside the table are held constant.
    """

    kind = "tabulated"

    def __init__(self, lam_nodes, values, source: str = "inline"):
        lam_nodes = np.asarray(lam_nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if lam_nodes.ndim != 1 or lam_nodes.shape != values.shape or len(lam_nodes) < 2:
            raise InvalidModelError("tabulated density needs matching 1-D node and value arrays")
        if np.any(np.diff(lam_nodes) <= 0):
            raise InvalidModelError("tabulated frequencies must be strictly increasing")
        if lam_nodes[0] < -np.pi - 1e-12 or lam_nodes[-1] > np.pi + 1e-12:
            raise InvalidModelError("tabulated frequencies must lie in [-pi, pi]")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidModelError("tabulated density values must be finite and non-negative")
        self.lam_nodes = lam_nodes
        self.values = values
        self.source = source

    @classmethod
    def from_file(cls, path) -> "TabulatedModel":
        path = Path(path)
        try:
            data = np.loadtxt(path, ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        if data.shape[1] != 2:
            raise FormatError(f"{path}: expected two whitespace-separated columns, got {data.shape[1]}")
        return cls(data[:, 0], data[:, 1], source=str(path))

    @property
    def model_id(self):
        return f"tabulated:file={self.source}"

    def raw_density(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = 0.5 * (np.interp(lam, self.lam_nodes, self.values) + np.interp(-lam, self.lam_nodes, self.values))
        return out if out.ndim else float(out)

    def _raw_variance(self):
        # exact integral of the symmetrized interpolant over [-pi, pi]
        nodes = np.union1d(np.concatenate([self.lam_nodes, -self.lam_nodes]), [-np.pi, np.pi])
        nodes = nodes[(nodes >= -np.pi) & (nodes <= np.pi)]
        total = np.trapezoid(self.raw_density(nodes), nodes)
        if total <= 0:
            raise InvalidModelError("tabulated density integrates to zero")
        return float(total)


def parse_model(text: str) -> SpectralModel:
    """Build a model from ``white``, ``fgn:H=0.7``, ``arfima:d=0.2,ar=1/-0.5,ma=1/0.5``
    or ``tabulated:file=path``."""
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidParameterError(f"bad model parameter {item!r} in {text!r}")
        params[key.strip().lower()] = value.strip()
    try:
        if kind == "white":
            return white_noise()
        if kind == "fgn":
            return FGNModel(float(params["h"]))
        if kind == "arfima":
            ar = [float(c) for c in params["ar"].split("/")] if "ar" in params else [1.0]
            ma = [float(c) for c in params["ma"].split("/")] if "ma" in params else [1.0]
            return ARFIMAModel(float(params.get("d", 0.0)), ar, ma)
        if kind == "ma1":
            return ARFIMAModel(0.0, ma_poly=(1.0, float(params["theta"])))
        if kind == "tabulated":
            return TabulatedModel.from_file(params["file"])
    except KeyError as exc:
        raise InvalidParameterError(f"model {text!r} is missing parameter {exc}") from exc
    raise InvalidParameterError(f"unknown model kind {kind!r}")


# --------------------------------------------------------------------------
# operations on models


def density_on_grid(model: SpectralModel, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    lam = midpoint_grid(grid_size)
    return lam, np.asarray(model.density(lam), dtype=float)


def covariance_from_density(model: SpectralModel, L_max: int, grid_size: int) -> CovarianceSequence:
    """Invert ``rho(k) = int f(lam) cos(k lam) dlam`` on a midpoint grid.

    The origin singularity of long-memory densities is removed analytically,
    then the result is rescaled so that ``rho(0) = 1``.
    """
    if not is_power_of_two(grid_size) or grid_size < 8 * max(L_max, 1):
        raise InvalidParameterError(f"grid_size must be a power of two >= 8 * L_max, got {grid_size}")
    _, f = density_on_grid(model, grid_size)
    if f.min() < -1e-10:
        raise InvalidModelError(f"density takes negative values (min {f.min():.3g})")
    rho = cosine_moments(f, L_max)
    beta, g0 = model.singularity
    rho = rho - algebraic_singularity_correction(beta, g0, grid_size, L_max)
    rho = rho / rho[0]
    return CovarianceSequence(np.clip(rho, -1.0, 1.0), model.model_id)


@dataclass
class LogIntegrability:
    integral_of_abs_log: float
    satisfied: bool
    refinements: list = field(default_factory=list)
    reason: str = ""


def check_log_integrability(model: SpectralModel, grid_size: int = 1 << 14,
                            levels: int = 4, rtol: float = 1e-3) -> LogIntegrability:
    """Midpoint estimates of ``int |log f|`` on ``grid_size / 2^(levels-1) .. grid_size``.

    The error of the midpoint rule at a logarithmic singularity is O(h), so
    successive levels are Richardson-extrapolated with factor 2; the
    hypothesis counts as satisfied when the last two extrapolants agree to
    ``rtol``.  A density that vanishes on more than a 1e-6 fraction of the
    grid is reported as unsatisfied (its log is infinite on a set of
    positive measure).
    """
    if not is_power_of_two(grid_size) or grid_size >> (levels - 1) < 4:
        raise InvalidParameterError("grid_size must be a power of two large enough for the refinement levels")
    _, f = density_on_grid(model, grid_size)
    bad = np.count_nonzero(f <= 0.0)
    if bad > 1e-6 * grid_size:
        return LogIntegrability(math.inf, False, [],
                                f"density is non-positive on {bad} of {grid_size} grid points")
    estimates = []
    for level in range(levels - 1, -1, -1):
        N = grid_size >> level
        _, fl = density_on_grid(model, N)
        with np.errstate(divide="ignore"):
            estimates.append(float(np.sum(np.abs(np.log(fl))) * 2 * np.pi / N))
    if not all(math.isfinite(e) for e in estimates):
        return LogIntegrability(math.inf, False, estimates, "log density is infinite on the grid")
    extrap = [2 * b - a for a, b in zip(estimates, estimates[1:])]
    last, prev = extrap[-1], extrap[-2]
    ok = abs(last - prev) <= rtol * max(abs(last), 1e-300)
    reason = "" if ok else f"refinements not Cauchy: {prev!r} vs {last!r}"
    return LogIntegrability(last, ok, estimates, reason)


def log_density_cepstrum(model: SpectralModel, grid_size: int, max_lag: int) -> np.ndarray:
    """Fourier coefficients ``(1/2pi) int log(2 pi f) cos(k lam) dlam`` for k = 0..max_lag."""
    _, f = density_on_grid(model, grid_size)
    if f.min() <= 0.0:
        raise InvalidModelError("log cepstrum needs a strictly positive density on the grid")
    c = cosine_moments(np.log(2 * np.pi * f), max_lag) / (2 * np.pi)
    beta, _ = model.singularity
    # log f = -beta log|lam| + smooth near the origin
    c -= log_singularity_correction(-beta, grid_size, max_lag) / (2 * np.pi)
    return c
