"""Recovery of bounded low-rank tensors from 1-bit measurements.

The estimator maximizes the likelihood of sign observations over CP factors
whose rows have bounded Euclidean norm, a convex upper bound on the tensor
max-qnorm. See ``README.md`` for a walkthrough.
"""

from .likelihood import nll, nll_grad_entry, nll_grad_factor, sample_losses
from .metrics import (BoundConstants, hellinger_sq, kl_div, mae, pi_weighted_mse,
                      rademacher_bounds, rank_norm_bounds, rse, sign_accuracy,
                      theorem1_rhs)
from .observations import (Link, LinkConstants, ObservationSet, SamplingDistribution,
                           link_constants, link_eval, logistic, probit, quantize,
                           sample_indices)
from .solver import (FitResult, SolverConfig, cross_validate_radius, fit_matricized,
                     fit_max_qnorm, project_row_norm)
from .tensor import cp_eval, cp_expand, factor_max_qnorm, frobenius_norm, infinity_norm

__version__ = "0.1.0"

__all__ = [
    "BoundConstants", "FitResult", "Link", "LinkConstants", "ObservationSet",
    "SamplingDistribution", "SolverConfig", "cp_eval", "cp_expand",
    "cross_validate_radius", "factor_max_qnorm", "fit_matricized", "fit_max_qnorm",
    "frobenius_norm", "hellinger_sq", "infinity_norm", "kl_div", "link_constants",
    "link_eval", "logistic", "mae", "nll", "nll_grad_entry", "nll_grad_factor",
    "pi_weighted_mse", "probit", "project_row_norm", "quantize", "rademacher_bounds",
    "rank_norm_bounds", "rse", "sample_indices", "sample_losses", "sign_accuracy",
    "theorem1_rhs",
]
