"""``bmlab`` command line.

Exit codes: 0 thresholds met, 2 thresholds violated, 3 precondition or
hypothesis failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .config import ExperimentConfig
from .errors import BMError, FormatError, HypothesisError, InvalidParameterError
from .experiment import run_clt, run_density, run_factorize, run_malliavin, run_simulate, write_manifest

EXIT_OK, EXIT_THRESHOLD, EXIT_PRECONDITION, EXIT_IO = 0, 2, 3, 4

_OVERRIDES = {
    "model": "model", "f": "f", "n": "n", "M": "M", "seed": "seed", "method": "method",
    "p": "p", "out": "out", "L": "L", "grid": "grid", "tail_cutoff": "tail_cutoff",
    "bandwidth": "bandwidth",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file; flags override it")
    common.add_argument("--model", help="white | fgn:H=0.7 | arfima:d=0.2,ar=1/-0.5,ma=1/0.5 | tabulated:file=PATH")
    common.add_argument("--f", help="Hermite coefficients, e.g. 2:1.0,3:0.5")
    common.add_argument("--n", help="path length(s), comma separated, 2^k allowed")
    common.add_argument("--M", help="number of paths")
    common.add_argument("--seed")
    common.add_argument("--method", choices=["circulant", "causal_ma"])
    common.add_argument("--p", help="negative-moment orders, comma separated")
    common.add_argument("--out", help="output directory")
    common.add_argument("--L", help="causal truncation length")
    common.add_argument("--grid", help="frequency grid size (power of two, default 16 L)")
    common.add_argument("--tail-cutoff", dest="tail_cutoff", help="lag cutoff for sigma^2 summability")
    common.add_argument("--bandwidth", help="KDE bandwidth (default Silverman)")
    common.add_argument("--threshold", action="append", default=[], metavar="NAME=VALUE",
                        help="override an acceptance threshold")

    parser = argparse.ArgumentParser(prog="bmlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("factorize", parents=[common], help="causal MA coefficients of a spectral model")
    sub.add_parser("simulate", parents=[common], help="write a binary batch of sample paths")
    sub.add_parser("clt", parents=[common], help="moments, KS and density distances of V_n")
    sub.add_parser("malliavin", parents=[common], help="negative moments of the derivative norm")
    dens = sub.add_parser("density", parents=[common], help="KDE of F_n or of a sample file vs N(0,1)")
    dens.add_argument("--samples", help="text file with one sample per line")
    return parser


def build_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {key: getattr(args, attr) for attr, key in _OVERRIDES.items()}
    for item in args.threshold:
        name, sep, value = item.partition("=")
        if not sep:
            raise InvalidParameterError(f"--threshold expects NAME=VALUE, got {item!r}")
        overrides[f"threshold.{name}"] = value
    return cfg.updated(overrides).validate()


def _say(msg: str) -> None:
    print(msg, flush=True)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    started = time.time()
    try:
        cfg = build_config(args)
        if args.command == "factorize":
            res = run_factorize(cfg)
            _say(f"psi_0 = {res.psi.psi[0]:.6f}  L = {res.psi.truncation_L}  "
                 f"residual = {res.psi.residual_mass:.3g}  max |ratio - 1| = {res.max_ratio_error:.3g}")
            passed = res.passed
        elif args.command == "simulate":
            batch = run_simulate(cfg)
            _say(f"wrote {batch.M} paths of length {batch.n} ({batch.method.name}, seed {batch.seed})")
            passed = True
        elif args.command == "clt":
            res = run_clt(cfg)
            _say(f"sigma^2 = {res.sigma_sq:.6f}")
            for row in res.rows:
                m = row.moments
                flags = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in row.checks.items())
                _say(f"n={row.n:<7d} var={m.variance:.5f}±{m.variance_se:.5f} sigma_n^2={m.sigma_n_sq_exact:.5f} "
                     f"E[F^4]={m.F_fourth_moment:.4f}±{m.F_fourth_moment_se:.4f} ks={row.ks:.4f} "
                     f"sup={row.sup_density:.4f}  {flags}")
            passed = res.passed
        elif args.command == "malliavin":
            res = run_malliavin(cfg)
            for rep in res.reports:
                est = " ".join(f"p={p:g}:{e:.4g}±{s:.2g}" for p, e, s in
                               zip(rep.p_list, rep.estimates, rep.standard_errors))
                _say(f"n={rep.n:<7d} {est} min/median={rep.min_norm_sq / rep.median_norm_sq:.3g}")
            _say(" ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in res.checks.items()))
            passed = res.passed
        else:
            samples = np.loadtxt(args.samples, ndmin=1) if args.samples else None
            res = run_density(cfg, samples)
            _say(f"sup |p - phi| = {res.sup_distance:.5f}  KS = {res.ks:.5f}  bandwidth = {res.estimate.bandwidth:.4g}")
            passed = res.passed
        write_manifest(cfg, args.command, started)
    except (OSError, FormatError) as exc:
        print(f"bmlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HypothesisError as exc:
        print(f"bmlab: hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (BMError, ValueError) as exc:
        print(f"bmlab: precondition failure: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK if passed else EXIT_THRESHOLD


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
