"""Bayesian symbolic regression.

Evolves free-form analytic equations from noisy tabular data, quantifying
per-equation parameter uncertainty with a Sequential Monte Carlo sampler
and steering the evolution by Bayesian model evidence (fractional Bayes
factors) rather than raw error.  A conventional RMSE-driven mode is
included for comparison.
"""

from .datasets import (
    Dataset,
    DatasetError,
    galileo_no_shelf,
    galileo_shelf,
    generate_no_shelf_synthetic,
    generate_sine,
    load_csv,
    save_csv,
)
from .evolution import (
    EvolutionConfig,
    EvolutionResult,
    GenerationLog,
    bloat_metrics,
    evolve,
)
from .expressions import (
    EquationGenome,
    EvalResult,
    Op,
    complexity,
    distance,
    evaluate,
    evaluate_with_gradient,
    polynomial_genome,
    render,
)
from .fitting import LocalFit, MultistartResult, estimate_covariance, fit_constants
from .inference import (
    FBFConfig,
    InferenceError,
    Particle,
    ParticleEnsemble,
    PosteriorSummary,
    ensemble_from_samples,
    fractional_bayes_factor,
    log_likelihood,
    posterior_summaries,
    smc_sample,
)
from .prediction import PredictionBand, predict_bands
from .selection import (
    FitnessRecord,
    deterministic_replacement,
    pair_offspring,
    probabilistic_replacement,
    replacement_probability,
)
from .variation import VariationConfig, crossover, mutate, random_genome

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DatasetError",
    "EquationGenome",
    "EvalResult",
    "EvolutionConfig",
    "EvolutionResult",
    "FBFConfig",
    "FitnessRecord",
    "GenerationLog",
    "InferenceError",
    "LocalFit",
    "MultistartResult",
    "Op",
    "Particle",
    "ParticleEnsemble",
    "PosteriorSummary",
    "PredictionBand",
    "VariationConfig",
    "bloat_metrics",
    "complexity",
    "crossover",
    "deterministic_replacement",
    "distance",
    "ensemble_from_samples",
    "estimate_covariance",
    "evaluate",
    "evaluate_with_gradient",
    "evolve",
    "fit_constants",
    "fractional_bayes_factor",
    "galileo_no_shelf",
    "galileo_shelf",
    "generate_no_shelf_synthetic",
    "generate_sine",
    "load_csv",
    "log_likelihood",
    "mutate",
    "pair_offspring",
    "polynomial_genome",
    "posterior_summaries",
    "predict_bands",
    "probabilistic_replacement",
    "random_genome",
    "render",
    "replacement_probability",
    "save_csv",
    "smc_sample",
]
