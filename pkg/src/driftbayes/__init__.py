"""Nonparametric Bayesian drift estimation for one-dimensional diffusions."""

from .augment import (AugmentConfig, AugmentedState, bridge_mh_update, impute_full_path,
                      run_augmented_gibbs, segment_log_weight)
from .basis import (DriftSpec, Fourier, IndicatorPartition, eval_basis, orthonormality_gram,
                    parse_family, synthesize)
from .hierarchical import (HierPrior, HierState, gibbs_s2, gibbs_theta, log_model_marginal, rj_step,
                           run_chain)
from .likelihood import (OccupationFields, SufficientStats, log_girsanov, occupation_fields,
                         stats_from_occupation, sufficient_statistics)
from .paths import (ObservationSet, SamplePath, quadratic_variation, sample_brownian_bridge,
                    simulate_path, unit_diffusion_transform)
from .posterior import (GaussianPosterior, GaussianPrior, credible_bands, posterior, sample_coeffs,
                        spectral_prior)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "AugmentedState", "bridge_mh_update", "impute_full_path", "run_augmented_gibbs",
    "segment_log_weight", "DriftSpec", "Fourier", "IndicatorPartition", "eval_basis",
    "orthonormality_gram", "parse_family", "synthesize", "HierPrior", "HierState", "gibbs_s2",
    "gibbs_theta", "log_model_marginal", "rj_step", "run_chain", "OccupationFields", "SufficientStats",
    "log_girsanov", "occupation_fields", "stats_from_occupation", "sufficient_statistics",
    "ObservationSet", "SamplePath", "quadratic_variation", "sample_brownian_bridge", "simulate_path",
    "unit_diffusion_transform", "GaussianPosterior", "GaussianPrior", "credible_bands", "posterior",
    "sample_coeffs", "spectral_prior",
]
