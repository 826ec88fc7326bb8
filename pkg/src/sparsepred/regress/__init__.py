"""Spike-and-slab prediction for sparse linear regression."""

from .audit import (bound_lemma13, uniform_slab_bound, log_Lambda, marginal_bound_audit, mu_n,
                    rate_trend, strong_signal_problem, theorem7_rate_check)
from .diagnostics import DesignDiagnostics, compatibility_number, design_diagnostics, phi_tilde
from .marginal import log_orthant_mass, subset_log_marginal
from .posterior import SubsetPosterior, max_feasible_R, point_posterior, subset_posterior
from .predictive import (GaussianMixture, direct_log_predictive, point_mass_predictive,
                         regression_predictive)
from .problem import (LaplaceSlab, ModelSizePrior, RegressionPrior, RegressionProblem,
                      UniformSlab, load_design_csv, normalize_design, random_problem)
from .risk import evaluate_draw, kl_pred_regression, kl_moment_bound, tv_distance_1d, tv_risk

__all__ = [
    "DesignDiagnostics", "GaussianMixture", "LaplaceSlab", "ModelSizePrior", "RegressionPrior",
    "RegressionProblem", "SubsetPosterior", "UniformSlab", "bound_lemma13", "compatibility_number",
    "design_diagnostics", "direct_log_predictive", "evaluate_draw", "kl_pred_regression",
    "kl_moment_bound", "uniform_slab_bound", "load_design_csv", "log_Lambda", "log_orthant_mass",
    "marginal_bound_audit", "max_feasible_R", "mu_n", "normalize_design", "phi_tilde",
    "point_mass_predictive", "point_posterior", "random_problem", "rate_trend",
    "regression_predictive", "strong_signal_problem", "subset_log_marginal", "subset_posterior",
    "theorem7_rate_check", "tv_distance_1d", "tv_risk",
]
