"""Numerical laboratory for the Breuer-Major theorem on Gaussian stationary sequences."""

__version__ = "0.1.0"

from .hermite import (  # noqa: E402
    HermiteCombination,
    HermiteSeries,
    combination_derivative,
    combination_eval,
    conditional_expectation_factor,
    hermite_covariance,
    hermite_eval,
    hermite_split,
    hermite_split_table,
)
from .spectral import (  # noqa: E402
    ARFIMAModel,
    CovarianceSequence,
    FGNModel,
    SpectralModel,
    TabulatedModel,
    arfima_spectral_density,
    check_log_integrability,
    covariance_from_density,
    fgn_covariance,
    fgn_spectral_density,
    parse_model,
    white_noise,
)
from .wold import CausalCoefficients, covariance_from_psi, factorize, proof_constant  # noqa: E402
from .simulation import Method, NoiseStream, PathBatch, simulate_causal, simulate_circulant  # noqa: E402
from .stats import (  # noqa: E402
    malliavin_norm_sq,
    malliavin_report,
    moment_report,
    sigma_n_sq_exact,
    sigma_sq_asymptotic,
    v_statistic,
)
from .density import DensityEstimate, kde, ks_distance_to_gaussian, sup_distance_to_gaussian  # noqa: E402
