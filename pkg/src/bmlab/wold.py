"""Causal moving-average coefficients from a spectral density (cepstral method).

If ``c_k`` are the Fourier coefficients of ``log(2 pi f)``, the minimal-phase
transfer function is ``Psi(z) = exp(c_0/2 + sum_{k>=1} c_k z^k)``, whose
power series coefficients are the ``psi_j`` of ``X_k = sum_j psi_j w_{k-j}``.
``|Psi(e^{-i lam})|^2 = 2 pi f(lam)`` and ``psi_0 = exp(c_0 / 2) > 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidParameterError, LogIntegrabilityError, TruncationError
from .hermite import HermiteCombination
from .quadrature import is_power_of_two, next_power_of_two
from .spectral import SpectralModel, check_log_integrability, density_on_grid, log_density_cepstrum

RESIDUAL_TOL = 1e-3
MAX_PROBE_L = 1 << 16


@dataclass(frozen=True)
class CausalCoefficients:
    psi: np.ndarray
    residual_mass: float
    model_id: str = ""

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float).copy()
        if psi.ndim != 1 or len(psi) == 0:
            raise InvalidParameterError("psi must be a non-empty 1-D array")
        if not psi[0] > 0:
            raise InvalidParameterError(f"psi_0 must be positive, got {psi[0]!r}")
        if np.sum(psi ** 2) > 1.0 + 1e-8:
            raise InvalidParameterError(f"sum psi_j^2 = {np.sum(psi ** 2)!r} exceeds 1")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def truncation_L(self) -> int:
        return len(self.psi) - 1

    def save(self, path) -> None:
        lines = [f"psi0_positive=true L={self.truncation_L} residual={self.residual_mass!r}"]
        lines += [repr(float(v)) for v in self.psi]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "CausalCoefficients":
        text = Path(path).read_text().splitlines()
        if not text:
            raise FormatError(f"{path}: empty file")
        header = dict(item.split("=", 1) for item in text[0].split())
        try:
            L = int(header["L"])
            residual = float(header["residual"])
            if header["psi0_positive"] != "true":
                raise FormatError(f"{path}: header must declare psi0_positive=true")
            psi = np.array([float(v) for v in text[1:] if v.strip()])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: malformed coefficient file ({exc})") from exc
        if len(psi) != L + 1:
            raise FormatError(f"{path}: header says L={L} but found {len(psi)} coefficients")
        return cls(psi, residual)


def _minimal_phase_series(cepstrum: np.ndarray, grid_size: int) -> np.ndarray:
    """Coefficients of ``exp(c_0/2 + sum_{k>=1} c_k z^k)`` on a length-N FFT grid."""
    half = grid_size // 2
    e = np.zeros(grid_size)
    e[0] = 0.5 * cepstrum[0]
    e[1:half] = cepstrum[1:half]
    e[half] = 0.5 * cepstrum[half]
    return np.fft.ifft(np.exp(np.fft.fft(e))).real


def factorize(model: SpectralModel, truncation_L: int | None = None, grid_size: int | None = None,
              residual_tol: float = RESIDUAL_TOL) -> CausalCoefficients:
    """Truncated causal coefficients ``psi_0..psi_L`` of a unit-variance model.

    Raises :class:`LogIntegrabilityError` when ``log f`` is not integrable and
    :class:`TruncationError` when ``1 - sum psi_j^2`` exceeds ``residual_tol``.
    """
    if grid_size is None:
        grid_size = next_power_of_two(max(16 * (truncation_L or 256), 1 << 12))
    if truncation_L is None:
        truncation_L = grid_size // 16
    if not is_power_of_two(grid_size) or grid_size < 16 * truncation_L:
        raise InvalidParameterError(f"grid_size must be a power of two >= 16 * L, got {grid_size} for L={truncation_L}")

    gate = check_log_integrability(model, grid_size)
    if not gate.satisfied:
        raise LogIntegrabilityError(
            f"log f is not integrable on [-pi, pi] for {model.model_id}: {gate.reason}; "
            "no causal representation exists"
        )

    cep = log_density_cepstrum(model, grid_size, grid_size // 2)
    full = _minimal_phase_series(cep, grid_size)
    psi = full[: truncation_L + 1].copy()
    # exact value of the leading coefficient
    psi[0] = math.exp(0.5 * cep[0])
    residual = float(1.0 - np.sum(psi ** 2))
    if residual > residual_tol:
        suggestion = _probe_truncation(model, truncation_L, residual_tol)
        hint = (f"smallest adequate L found by doubling is {suggestion}" if suggestion
                else f"no L up to {MAX_PROBE_L} suffices")
        raise TruncationError(
            f"truncation L={truncation_L} leaves residual mass {residual:.3g} > {residual_tol}; {hint}",
            suggested_L=suggestion, residual=residual,
        )
    return CausalCoefficients(psi, residual, model.model_id)


def _probe_truncation(model, L, residual_tol):
    while L < MAX_PROBE_L:
        L *= 2
        grid = 16 * L
        cep = log_density_cepstrum(model, grid, grid // 2)
        psi = _minimal_phase_series(cep, grid)[: L + 1]
        if 1.0 - np.sum(psi ** 2) <= residual_tol:
            return L
    return None


def covariance_from_psi(psi: CausalCoefficients, lag: int) -> float:
    """``sum_{j=0}^{L-lag} psi_j psi_{j+lag}``."""
    L = psi.truncation_L
    if lag < 0 or lag > L:
        raise InvalidParameterError(f"lag {lag} outside 0..{L}")
    p = psi.psi
    return float(np.dot(p[: L + 1 - lag], p[lag:]))


def covariances_from_psi(psi: CausalCoefficients, max_lag: int) -> np.ndarray:
    """Vectorized :func:`covariance_from_psi` for lags ``0..max_lag``."""
    if max_lag > psi.truncation_L:
        raise InvalidParameterError(f"max_lag {max_lag} beyond truncation {psi.truncation_L}")
    p = psi.psi
    n = next_power_of_two(2 * len(p))
    spec = np.fft.rfft(p, n)
    return np.fft.irfft(np.abs(spec) ** 2, n)[: max_lag + 1]


def transfer_function(psi: CausalCoefficients, grid_size: int) -> np.ndarray:
    """``Psi(lam_m) = sum_j psi_j e^{-i j lam_m}`` on the midpoint grid."""
    p = psi.psi
    if len(p) > grid_size:
        folded = np.zeros(grid_size, dtype=complex)
        j = np.arange(len(p))
        np.add.at(folded, j % grid_size, p * np.exp(1j * np.pi * j * (1 - 1 / grid_size)))
        return np.fft.fft(folded)
    j = np.arange(len(p))
    return np.fft.fft(p * np.exp(1j * np.pi * j * (1 - 1 / grid_size)), grid_size)


def spectral_match(psi: CausalCoefficients, model: SpectralModel, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid and ratios ``|Psi(lam)|^2 / (2 pi f(lam))``."""
    lam, f = density_on_grid(model, grid_size)
    ratio = np.abs(transfer_function(psi, grid_size)) ** 2 / (2 * np.pi * f)
    return lam, ratio


def proof_constant(f: HermiteCombination, psi: CausalCoefficients) -> float:
    """``q q! a_q^2 psi_0^(2q)`` with ``q`` the top order of ``f``."""
    q = f.top_q
    return q * math.factorial(q) * f.coeffs[q] ** 2 * float(psi.psi[0]) ** (2 * q)
