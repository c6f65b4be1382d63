"""Breuer-Major statistics, their variances, and Malliavin-derivative norms.

For a path ``X_0..X_{n-1}`` and ``f = sum_{j=d}^{q} a_j H_j``::

    V_n = n^{-1/2} sum_k f(X_k)
    sigma^2 = sum_j j! a_j^2 sum_{v in Z} rho(v)^j
    ||D V_n||^2 = (1/n) sum_{k1,k2} f'(X_k1) rho(k1 - k2) f'(X_k2)
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateSampleError, DivergenceError, InvalidParameterError, NonPSDError
from .hermite import HermiteCombination, combination_derivative, combination_eval
from .simulation import PathBatch
from .spectral import CovarianceSequence
from .wold import CausalCoefficients, proof_constant

ANOMALY_FLOOR = 1e-300
BOOTSTRAP_RESAMPLES = 400
BOOTSTRAP_BLOCK = 1 << 22  # indices drawn per block of resamples
MIN_MOMENT_BATCH = 100
MIN_MALLIAVIN_BATCH = 1000


# --------------------------------------------------------------------------
# the statistic


def v_statistic(path, f: HermiteCombination) -> float:
    path = np.asarray(path, dtype=float)
    if path.ndim != 1 or len(path) < 1:
        raise InvalidParameterError("path must be a non-empty 1-D array")
    return math.fsum(combination_eval(f, path)) / math.sqrt(len(path))


def v_statistics(paths, f: HermiteCombination) -> np.ndarray:
    """:func:`v_statistic` for every row of ``paths``."""
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    return combination_eval(f, paths).sum(axis=1) / math.sqrt(paths.shape[1])


# --------------------------------------------------------------------------
# variances


@dataclass
class Summability:
    converged: bool
    estimate: float
    cutoffs: list
    partial_sums: list
    ratio: float


def summability(rho: CovarianceSequence, power: float, cutoff: int | None = None,
                rtol: float = 1e-6) -> Summability:
    """Decide whether ``sum_v |rho(v)|^power`` converges from dyadic partial sums.

    Increments between successive dyadic cutoffs shrink geometrically for a
    summable power-law tail and stay flat or grow otherwise.  The tail past
    the last cutoff is extrapolated from the increment ratio (Richardson),
    and the series counts as convergent when the extrapolated totals of the
    last two levels agree to ``rtol``.
    """
    cutoff = rho.L_max if cutoff is None else min(cutoff, rho.L_max)
    terms = np.abs(rho.values[1: cutoff + 1]) ** power
    running = 1.0 + 2.0 * np.cumsum(terms)
    cutoffs = [1 << k for k in range(3, cutoff.bit_length()) if (1 << k) <= cutoff]
    if len(cutoffs) < 4:
        raise InvalidParameterError(f"cutoff {cutoff} too small to assess summability; need at least 64")
    sums = [float(running[c - 1]) for c in cutoffs]
    diffs = np.diff(sums)
    if np.all(diffs[-3:] == 0.0):
        return Summability(True, sums[-1], cutoffs, sums, 0.0)
    ratios = diffs[1:] / np.where(diffs[:-1] == 0.0, np.inf, diffs[:-1])
    r_last, r_prev = float(ratios[-1]), float(ratios[-2])
    if not (0.0 <= r_last < 1.0 and 0.0 <= r_prev < 1.0):
        return Summability(False, math.inf, cutoffs, sums, r_last)
    extrap_last = sums[-1] + diffs[-1] * r_last / (1.0 - r_last)
    extrap_prev = sums[-2] + diffs[-2] * r_prev / (1.0 - r_prev)
    ok = bool(abs(extrap_last - extrap_prev) <= rtol * abs(extrap_last))
    return Summability(ok, extrap_last if ok else math.inf, cutoffs, sums, r_last)


def _dyadic_tail(terms: np.ndarray) -> float:
    """Geometric extrapolation of ``sum_{v > K} terms`` from the last two dyadic blocks."""
    K = len(terms)
    if K < 8:
        return 0.0
    b1 = math.fsum(terms[K // 4: K // 2])
    b2 = math.fsum(terms[K // 2:])
    if b1 == 0.0 or b2 == 0.0:
        return 0.0
    r = b2 / b1
    return b2 * r / (1.0 - r) if 0.0 < r < 1.0 else 0.0


def sigma_sq_asymptotic(f: HermiteCombination, rho: CovarianceSequence, tail_cutoff: int | None = None,
                        rtol: float = 1e-6) -> float:
    """``sum_j j! a_j^2 (1 + 2 sum_{v>=1} rho(v)^j)``.

    Lags past ``tail_cutoff`` enter through a geometric extrapolation of the
    last two dyadic blocks of terms.

    Raises :class:`DivergenceError` when ``sum |rho|^d`` is not numerically
    summable up to ``tail_cutoff`` (defaults to every lag ``rho`` carries).
    """
    cutoff = rho.L_max if tail_cutoff is None else tail_cutoff
    if cutoff > rho.L_max:
        raise InvalidParameterError(f"tail_cutoff {cutoff} beyond available lag {rho.L_max}")
    check = summability(rho, f.rank_d, cutoff, rtol)
    if not check.converged:
        raise DivergenceError(
            f"sum_v |rho(v)|^{f.rank_d} does not settle up to lag {cutoff} "
            f"(dyadic increment ratio {check.ratio:.3f}); the Breuer-Major summability hypothesis fails",
            partial_sums=check.partial_sums,
        )
    r = rho.values[1: cutoff + 1]
    total = 0.0
    for j, a in f.coeffs.items():
        terms = r ** j
        total += math.factorial(j) * a * a * (1.0 + 2.0 * (math.fsum(terms) + _dyadic_tail(terms)))
    if not total > 0:
        raise RuntimeError(f"sigma^2 = {total!r} is not positive although rho(0) = 1 and a_d != 0")
    return total


def sigma_n_sq_exact(f: HermiteCombination, rho: CovarianceSequence, n: int) -> float:
    """``E[V_n^2] = sum_j j! a_j^2 sum_{|v|<n} (1 - |v|/n) rho(v)^j``."""
    if n < 1:
        raise InvalidParameterError("n must be positive")
    if rho.L_max < n - 1:
        raise InvalidParameterError(f"need rho up to lag {n - 1}, have {rho.L_max}")
    r = rho.values[1:n]
    w = 1.0 - np.arange(1, n) / n
    total = 0.0
    for j, a in f.coeffs.items():
        total += math.factorial(j) * a * a * (1.0 + 2.0 * math.fsum(w * r ** j))
    return total


# --------------------------------------------------------------------------
# Malliavin derivative norm


class _ToeplitzOperator:
    """Matrix-vector products with ``[rho(|i - j|)]_{i,j<n}`` via a size-2n circulant."""

    def __init__(self, rho: CovarianceSequence, n: int):
        if rho.L_max < n - 1:
            raise InvalidParameterError(f"need rho up to lag {n - 1}, have {rho.L_max}")
        r = rho.values[:n]
        row = np.concatenate([r, [0.0], r[:0:-1]])
        self.n = n
        self.spec = np.fft.rfft(row)

    def __matmul__(self, g: np.ndarray) -> np.ndarray:
        gh = np.fft.rfft(g, 2 * self.n, axis=-1)
        return np.fft.irfft(gh * self.spec, 2 * self.n, axis=-1)[..., : self.n]


def malliavin_norms_sq(paths, rho: CovarianceSequence, f: HermiteCombination,
                       tol: float = 1e-10) -> tuple[np.ndarray, int]:
    """Squared derivative norms for each row, plus the count of clipped tiny negatives."""
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    n = paths.shape[1]
    g = combination_eval(combination_derivative(f), paths)
    if n == 1:
        out = g[:, 0] ** 2 * rho.values[0]
    else:
        out = np.einsum("ij,ij->i", g, _ToeplitzOperator(rho, n) @ g) / n
    low = out.min()
    if low < -tol:
        raise NonPSDError(f"quadratic form is negative ({low:.3g}); covariance is not positive semidefinite")
    clipped = int(np.count_nonzero(out < 0))
    return np.maximum(out, 0.0), clipped


def malliavin_norm_sq(path, rho: CovarianceSequence, f: HermiteCombination) -> float:
    """``(1/n) sum_{k1,k2} f'(X_k1) rho(k1-k2) f'(X_k2)`` in O(n log n)."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 1:
        raise InvalidParameterError("path must be 1-D")
    return float(malliavin_norms_sq(path[None, :], rho, f)[0][0])


# --------------------------------------------------------------------------
# Monte Carlo reports


def _jackknife_se(loo: np.ndarray) -> float:
    M = len(loo)
    return float(math.sqrt((M - 1) / M * np.sum((loo - loo.mean()) ** 2)))


@dataclass
class MomentReport:
    n: int
    M: int
    mean: float
    variance: float
    fourth_moment: float
    fourth_moment_gap: float
    mean_se: float
    variance_se: float
    fourth_moment_se: float
    fourth_moment_gap_se: float
    sigma_n_sq_exact: float
    sigma_sq_asymptotic: float
    F_variance: float
    F_fourth_moment: float
    F_fourth_moment_se: float
    F_fourth_moment_gap: float

    def as_row(self) -> dict:
        return asdict(self)


def moment_report_from_values(v, f: HermiteCombination, rho: CovarianceSequence, n: int,
                              sigma_sq: float | None = None) -> MomentReport:
    """Moments of ``V_n`` samples with jackknife standard errors.

    ``sigma_sq`` short-circuits the asymptotic variance; otherwise it is
    computed from ``rho`` and set to NaN (with a warning) if ``sum |rho|^d``
    diverges.
    """
    v = np.asarray(v, dtype=float)
    M = len(v)
    if M < MIN_MOMENT_BATCH:
        raise InvalidParameterError(f"moment report needs at least {MIN_MOMENT_BATCH} samples, got {M}")
    s1, s2, s4 = math.fsum(v), math.fsum(v * v), math.fsum(v ** 4)
    mean = s1 / M
    var = (s2 - s1 * s1 / M) / (M - 1)
    if not var > 0:
        raise DegenerateSampleError("batch of V_n has zero variance")
    m4 = s4 / M
    # leave-one-out versions
    l1 = (s1 - v) / (M - 1)
    l2 = (s2 - v * v - (s1 - v) ** 2 / (M - 1)) / (M - 2)
    l4 = (s4 - v ** 4) / (M - 1)
    sig_n = sigma_n_sq_exact(f, rho, n)
    if sigma_sq is None:
        try:
            sigma_sq = sigma_sq_asymptotic(f, rho)
        except DivergenceError as exc:
            warnings.warn(str(exc), RuntimeWarning, stacklevel=2)
            sigma_sq = math.nan
    return MomentReport(
        n=n, M=M, mean=mean, variance=var, fourth_moment=m4, fourth_moment_gap=m4 - 3 * var * var,
        mean_se=_jackknife_se(l1), variance_se=_jackknife_se(l2), fourth_moment_se=_jackknife_se(l4),
        fourth_moment_gap_se=_jackknife_se(l4 - 3 * l2 * l2),
        sigma_n_sq_exact=sig_n, sigma_sq_asymptotic=sigma_sq,
        F_variance=var / sig_n, F_fourth_moment=m4 / sig_n ** 2,
        F_fourth_moment_se=_jackknife_se(l4) / sig_n ** 2, F_fourth_moment_gap=m4 / sig_n ** 2 - 3.0,
    )


def moment_report(batch: PathBatch, f: HermiteCombination, rho: CovarianceSequence,
                  sigma_sq: float | None = None) -> MomentReport:
    return moment_report_from_values(v_statistics(batch.paths, f), f, rho, batch.n, sigma_sq)


@dataclass
class MalliavinReport:
    n: int
    M: int
    norms_sq: np.ndarray = field(repr=False)
    p_list: list
    estimates: list
    standard_errors: list
    min_norm_sq: float
    median_norm_sq: float
    anomalies: int
    clipped: int = 0
    proof_constant: float | None = None

    def rows(self) -> list[dict]:
        return [
            {"n": self.n, "M": self.M, "p": p, "estimate": est, "se": se,
             "min_norm_sq": self.min_norm_sq, "median_norm_sq": self.median_norm_sq,
             "anomalies": self.anomalies,
             "proof_constant": "" if self.proof_constant is None else self.proof_constant}
            for p, est, se in zip(self.p_list, self.estimates, self.standard_errors)
        ]


def negative_moments(norms_sq: np.ndarray, p_list, seed: int = 0,
                     resamples: int = BOOTSTRAP_RESAMPLES) -> tuple[list, list, int]:
    """Estimates of ``E[||DV||^{-p}]`` and their bootstrap standard errors.

    Values below :data:`ANOMALY_FLOOR` are dropped and counted instead of
    being raised to a negative power.
    """
    norms_sq = np.asarray(norms_sq, dtype=float)
    keep = norms_sq >= ANOMALY_FLOOR
    anomalies = int(np.count_nonzero(~keep))
    s = norms_sq[keep]
    powers = np.array([s ** (-p / 2.0) for p in p_list])
    estimates = [math.fsum(row) / len(row) for row in powers]
    rng = np.random.default_rng([seed, 0xB007])
    boot = np.empty((len(p_list), resamples))
    block = max(1, BOOTSTRAP_BLOCK // max(len(s), 1))
    for start in range(0, resamples, block):
        stop = min(resamples, start + block)
        idx = rng.integers(0, len(s), size=(stop - start, len(s)))
        for i, row in enumerate(powers):
            boot[i, start:stop] = row[idx].mean(axis=1)
    ses = [float(b.std(ddof=1)) for b in boot]
    return estimates, ses, anomalies


def malliavin_report_from_norms(norms_sq, n: int, p_list, seed: int = 0, psi: CausalCoefficients | None = None,
                                f: HermiteCombination | None = None, clipped: int = 0) -> MalliavinReport:
    norms_sq = np.asarray(norms_sq, dtype=float)
    M = len(norms_sq)
    if M < MIN_MALLIAVIN_BATCH:
        raise InvalidParameterError(f"Malliavin report needs at least {MIN_MALLIAVIN_BATCH} samples, got {M}")
    if any(p <= 0 for p in p_list):
        raise InvalidParameterError("negative-moment orders p must be positive")
    estimates, ses, anomalies = negative_moments(norms_sq, p_list, seed)
    const = proof_constant(f, psi) if psi is not None and f is not None else None
    return MalliavinReport(n, M, norms_sq, list(p_list), estimates, ses, float(norms_sq.min()),
                           float(np.median(norms_sq)), anomalies, clipped, const)


def malliavin_report(batch: PathBatch, f: HermiteCombination, rho: CovarianceSequence, p_list,
                     psi: CausalCoefficients | None = None) -> MalliavinReport:
    """Negative moments of ``||DV_n||`` over a batch (bootstrap seeded from the batch seed)."""
    norms, clipped = malliavin_norms_sq(batch.paths, rho, f)
    return malliavin_report_from_norms(norms, batch.n, p_list, batch.seed, psi, f, clipped)
