"""Kernel density estimates of normalized statistics and distances to N(0, 1)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DegenerateSampleError, GridError, InvalidParameterError
from .plotting import line_plot_svg

DEFAULT_GRID = (-6.0, 6.0, 1201)
MIN_KDE_SAMPLES = 1000
MIN_KS_SAMPLES = 100
_CHUNK = 4096
# exp(-KERNEL_REACH^2 / 2) ~ 2.6e-18: contributions beyond are below double rounding
KERNEL_REACH = 9.0


def gaussian_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def silverman_bandwidth(samples) -> float:
    samples = np.asarray(samples, dtype=float)
    return 1.06 * float(np.std(samples, ddof=1)) * len(samples) ** (-0.2)


@dataclass
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    sample_count: int

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "p_hat", "phi"])
            for x, p, g in zip(self.grid, self.values, gaussian_pdf(self.grid)):
                w.writerow([repr(float(x)), repr(float(p)), repr(float(g))])

    def to_svg(self, path, title: str = "density estimate vs standard normal") -> None:
        Path(path).write_text(line_plot_svg(
            [("estimate", self.grid, self.values), ("N(0,1)", self.grid, gaussian_pdf(self.grid))],
            title=title, xlabel="x", ylabel="density"))


def _kernel_sums(samples, grid, h):
    """``sum_i exp(-(x - s_i)^2 / 2h^2)`` at every grid point."""
    step = grid[1] - grid[0]
    reach = int(math.ceil(KERNEL_REACH * h / step))
    acc = np.zeros_like(grid)
    if 2 * reach + 2 >= len(grid):
        for start in range(0, len(samples), _CHUNK):
            u = (grid[:, None] - samples[None, start:start + _CHUNK]) / h
            acc += np.exp(-0.5 * u * u).sum(axis=1)
        return acc
    base = np.floor((samples - grid[0]) / step).astype(np.int64)
    for offset in range(-reach, reach + 2):
        idx = base + offset
        ok = (idx >= 0) & (idx < len(grid))
        u = (grid[idx[ok]] - samples[ok]) / h
        acc += np.bincount(idx[ok], np.exp(-0.5 * u * u), minlength=len(grid))
    return acc


def kde(samples, grid_spec=DEFAULT_GRID, bandwidth: float | None = None) -> DensityEstimate:
    """Gaussian-kernel density estimate on ``linspace(lo, hi, count)``.

    The bandwidth defaults to Silverman's rule ``1.06 s M^(-1/5)``.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    lo, hi, count = grid_spec
    if not lo < hi or count < 2:
        raise InvalidParameterError(f"bad grid specification {grid_spec!r}")
    if len(samples) < MIN_KDE_SAMPLES:
        raise InvalidParameterError(f"KDE needs at least {MIN_KDE_SAMPLES} samples, got {len(samples)}")
    if np.std(samples) == 0:
        raise DegenerateSampleError("samples have zero variance")
    h = silverman_bandwidth(samples) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise InvalidParameterError("bandwidth must be positive")
    grid = np.linspace(lo, hi, int(count))
    acc = _kernel_sums(samples, grid, h)
    values = acc / (len(samples) * h * math.sqrt(2 * math.pi))
    return DensityEstimate(grid, values, h, len(samples))


def sup_distance_to_gaussian(est: DensityEstimate) -> float:
    """``max_x |p_hat(x) - phi(x)|`` over the estimate's grid (must cover [-4, 4])."""
    if est.grid.min() > -4.0 or est.grid.max() < 4.0:
        raise GridError("evaluation grid must cover at least [-4, 4]")
    return float(np.max(np.abs(est.values - gaussian_pdf(est.grid))))


def ks_distance_to_gaussian(samples) -> float:
    """Kolmogorov-Smirnov statistic against the standard normal CDF."""
    samples = np.asarray(samples, dtype=float).ravel()
    if len(samples) < MIN_KS_SAMPLES:
        raise InvalidParameterError(f"KS distance needs at least {MIN_KS_SAMPLES} samples, got {len(samples)}")
    return float(stats.kstest(samples, "norm").statistic)
