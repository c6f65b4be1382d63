"""End-to-end experiment runners: model -> factorization -> paths -> reports.

Each runner writes its artifacts into ``cfg.out`` and returns a result whose
``passed`` attribute says whether every configured threshold was met.
Large batches are streamed in chunks so only per-path scalars are kept.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .density import DensityEstimate, kde, ks_distance_to_gaussian, sup_distance_to_gaussian
from .errors import InvalidParameterError
from .hermite import HermiteCombination
from .plotting import line_plot_svg
from .simulation import Method, iter_batches, simulate_causal, simulate_circulant, worker_count
from .spectral import CovarianceSequence, SpectralModel
from .stats import (
    MalliavinReport,
    MomentReport,
    malliavin_norms_sq,
    malliavin_report_from_norms,
    moment_report_from_values,
    sigma_n_sq_exact,
    sigma_sq_asymptotic,
    v_statistics,
)
from .wold import CausalCoefficients, factorize, spectral_match

MIN_CLT_BATCH = 1000
_CHUNK_DOUBLES = 1 << 21

CLT_COLUMNS = [
    "model", "f", "method", "n", "M", "seed", "mean", "mean_se", "variance", "variance_se",
    "sigma_n_sq_exact", "sigma_sq_asymptotic", "fourth_moment", "fourth_moment_se",
    "fourth_moment_gap", "fourth_moment_gap_se", "F_fourth_moment", "F_fourth_moment_se",
    "F_fourth_moment_gap", "ks", "sup_density", "bandwidth",
    "pass_variance", "pass_fourth_moment", "pass_ks", "pass_sup_density",
]
MALLIAVIN_COLUMNS = [
    "model", "f", "method", "n", "M", "seed", "p", "estimate", "se",
    "min_norm_sq", "median_norm_sq", "anomalies", "proof_constant",
]
REPORT_VERSION = 1


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, kind: str, columns: list[str], rows: list[dict]) -> None:
    """RFC-4180 CSV preceded by a ``#`` line naming the report kind, version and columns."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# bmlab {kind} v{REPORT_VERSION} columns={';'.join(columns)}\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write_manifest(cfg: ExperimentConfig, command: str, started: float) -> None:
    out = Path(cfg.out)
    (out / "config.txt").write_text(cfg.serialize())
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "software_version": __version__,
        "wall_time_s": time.time() - started,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# shared plumbing


def covariance_for(model: SpectralModel, max_lag: int) -> CovarianceSequence:
    return model.covariance(max_lag)


def causal_for(model: SpectralModel, cfg: ExperimentConfig) -> CausalCoefficients:
    grid = cfg.grid or 16 * cfg.L
    return factorize(model, cfg.L, grid)


def stream_statistics(method: Method, rho: CovarianceSequence, psi: CausalCoefficients | None,
                      f: HermiteCombination, n: int, M: int, seed: int, want_norms: bool = False):
    """``V_n`` (and optionally ``||DV_n||^2``) for ``M`` paths, generated chunk by chunk."""
    rows = max(1, _CHUNK_DOUBLES // n)
    source = rho if method is Method.CIRCULANT else psi
    vs, norms, clipped = [], [], 0
    for batch in iter_batches(method, source, n, M, seed, chunk=rows,
                              workers=worker_count()):
        vs.append(v_statistics(batch.paths, f))
        if want_norms:
            ns, c = malliavin_norms_sq(batch.paths, rho, f)
            norms.append(ns)
            clipped += c
    v = np.concatenate(vs)
    return (v, np.concatenate(norms), clipped) if want_norms else v


# --------------------------------------------------------------------------
# factorize


@dataclass
class FactorizeResult:
    psi: CausalCoefficients
    max_ratio_error: float
    passed: bool = True


def run_factorize(cfg: ExperimentConfig) -> FactorizeResult:
    model = cfg.spectral_model()
    psi = causal_for(model, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    psi.save(out / "psi.txt")
    grid = max(cfg.grid or 16 * cfg.L, 1024)
    lam, ratio = spectral_match(psi, model, grid)
    write_csv(out / "spectral_match.csv", "spectral-match", ["lambda", "ratio"],
              [{"lambda": a, "ratio": b} for a, b in zip(lam, ratio)])
    return FactorizeResult(psi, float(np.max(np.abs(ratio - 1.0))))


# --------------------------------------------------------------------------
# simulate


def run_simulate(cfg: ExperimentConfig):
    if len(cfg.n) != 1:
        raise InvalidParameterError("simulate takes a single n")
    n = cfg.n[0]
    model = cfg.spectral_model()
    method = cfg.sim_method()
    if method is Method.CIRCULANT:
        batch = simulate_circulant(covariance_for(model, n), n, cfg.M, cfg.seed)
    else:
        batch = simulate_causal(causal_for(model, cfg), n, cfg.M, cfg.seed)
    batch.model_id = model.model_id
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    batch.save(out / "paths.bmpb")
    return batch


# --------------------------------------------------------------------------
# clt


@dataclass
class CLTRow:
    n: int
    moments: MomentReport
    ks: float
    sup_density: float
    density: DensityEstimate
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass
class CLTResult:
    sigma_sq: float
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def clt_row(v: np.ndarray, f: HermiteCombination, rho: CovarianceSequence, n: int, sigma_sq: float,
            cfg: ExperimentConfig) -> CLTRow:
    rep = moment_report_from_values(v, f, rho, n, sigma_sq)
    F = v / math.sqrt(rep.sigma_n_sq_exact)
    est = kde(F, bandwidth=cfg.bandwidth or None)
    ks = ks_distance_to_gaussian(F)
    sup = sup_distance_to_gaussian(est)
    t = cfg.thresholds
    checks = {
        "variance": abs(rep.variance - rep.sigma_n_sq_exact) <= t["variance_se"] * rep.variance_se,
        "fourth_moment": t["fourth_moment_lo"] <= rep.F_fourth_moment <= t["fourth_moment_hi"],
        "ks": ks < t["ks"],
        "sup_density": sup < t["sup_density"],
    }
    return CLTRow(n, rep, ks, sup, est, checks)


def run_clt(cfg: ExperimentConfig) -> CLTResult:
    """Moments, KS and KDE distances of ``V_n`` for every ``n`` in the grid."""
    if cfg.M < MIN_CLT_BATCH:
        raise InvalidParameterError(f"clt needs M >= {MIN_CLT_BATCH}, got {cfg.M}")
    model = cfg.spectral_model()
    f = cfg.hermite()
    method = cfg.sim_method()
    rho = covariance_for(model, max(cfg.tail_cutoff, max(cfg.n)))
    sigma_sq = sigma_sq_asymptotic(f, rho, cfg.tail_cutoff)
    psi = causal_for(model, cfg) if method is Method.CAUSAL_MA else None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    result = CLTResult(sigma_sq)
    for n in cfg.n:
        v = stream_statistics(method, rho, psi, f, n, cfg.M, cfg.seed)
        row = clt_row(v, f, rho, n, sigma_sq, cfg)
        result.rows.append(row)
        row.density.to_csv(out / f"density_n{n}.csv")
        row.density.to_svg(out / f"density_n{n}.svg", title=f"F_n density, n = {n}")

    records = []
    for row in result.rows:
        rec = {"model": model.model_id, "f": f.to_spec(), "method": method.name, "seed": cfg.seed,
               "ks": row.ks, "sup_density": row.sup_density, "bandwidth": row.density.bandwidth}
        rec.update(row.moments.as_row())
        rec.update({f"pass_{k}": ok for k, ok in row.checks.items()})
        records.append(rec)
    write_csv(out / "clt_report.csv", "clt-report", CLT_COLUMNS, records)
    ns = [r.n for r in result.rows]
    (out / "fourth_moment.svg").write_text(line_plot_svg(
        [("|E[F_n^4] - 3|", ns, [abs(r.moments.F_fourth_moment_gap) for r in result.rows]),
         ("sup density distance", ns, [r.sup_density for r in result.rows])],
        title="convergence diagnostics", xlabel="n", ylabel="distance", logx=True))
    return result


# --------------------------------------------------------------------------
# malliavin


@dataclass
class MalliavinResult:
    reports: list
    spread: dict
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def relative_spread(values) -> float:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)) or values.min() <= 0:
        return math.inf
    return float(values.max() / values.min() - 1.0)


def run_malliavin(cfg: ExperimentConfig) -> MalliavinResult:
    """Negative moments of ``||DV_n||`` across the n grid."""
    model = cfg.spectral_model()
    f = cfg.hermite()
    method = cfg.sim_method()
    rho = covariance_for(model, max(cfg.n))
    try:
        psi = causal_for(model, cfg)
    except Exception:
        if method is Method.CAUSAL_MA:
            raise
        psi = None
    reports: list[MalliavinReport] = []
    for n in cfg.n:
        _, norms, clipped = stream_statistics(method, rho, psi, f, n, cfg.M, cfg.seed, want_norms=True)
        reports.append(malliavin_report_from_norms(norms, n, cfg.p, cfg.seed, psi, f, clipped))

    t = cfg.thresholds
    spread = {p: relative_spread([r.estimates[i] for r in reports]) for i, p in enumerate(cfg.p)}
    checks = {f"spread_p{p:g}": s < t["malliavin_spread"] for p, s in spread.items()}
    checks["min_norm"] = all(r.min_norm_sq > t["malliavin_min_ratio"] * r.median_norm_sq for r in reports)
    checks["no_anomalies"] = all(r.anomalies == 0 for r in reports)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in reports:
        for rec in r.rows():
            rec.update({"model": model.model_id, "f": f.to_spec(), "method": method.name, "seed": cfg.seed})
            rows.append(rec)
    write_csv(out / "malliavin_report.csv", "malliavin-report", MALLIAVIN_COLUMNS, rows)
    (out / "malliavin.svg").write_text(line_plot_svg(
        [(f"p = {p:g}", cfg.n, [r.estimates[i] for r in reports]) for i, p in enumerate(cfg.p)],
        title="E[||DV_n||^-p] across n", xlabel="n", ylabel="estimate", logx=True))
    return MalliavinResult(reports, spread, checks)


# --------------------------------------------------------------------------
# density


@dataclass
class DensityResult:
    estimate: DensityEstimate
    sup_distance: float
    ks: float
    passed: bool


def run_density(cfg: ExperimentConfig, samples: np.ndarray | None = None) -> DensityResult:
    """KDE of the given samples, or of simulated ``F_n`` at the single configured ``n``."""
    if samples is None:
        if len(cfg.n) != 1:
            raise InvalidParameterError("density without --samples takes a single n")
        n = cfg.n[0]
        model = cfg.spectral_model()
        f = cfg.hermite()
        method = cfg.sim_method()
        rho = covariance_for(model, n)
        psi = causal_for(model, cfg) if method is Method.CAUSAL_MA else None
        v = stream_statistics(method, rho, psi, f, n, cfg.M, cfg.seed)
        samples = v / math.sqrt(sigma_n_sq_exact(f, rho, n))
    est = kde(samples, bandwidth=cfg.bandwidth or None)
    sup = sup_distance_to_gaussian(est)
    ks = ks_distance_to_gaussian(samples)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    est.to_csv(out / "density.csv")
    est.to_svg(out / "density.svg")
    return DensityResult(est, sup, ks, sup < cfg.thresholds["sup_density"])
