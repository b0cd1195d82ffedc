"""D-vine copula mixed models for joint meta-analysis of two diagnostic tests."""

from .copulas import (CopulaFamily, CopulaParam, copula_density, hfunc, hinv,
                      tau_of_theta, tau_range, theta_of_tau, transpose_family)
from .dvine import (CorrelationMatrix4, VineParams, VineSpec, partial_to_full,
                    vine_density, vine_simulate, vine_transform)
from .errors import (DataValidationError, NumericalFailure, ParameterError,
                     UnsupportedModelError)
from .estimate import (DiscretenessReport, FitResult, PairFitResult,
                       ScanReport, default_init, discreteness_diagnostic, fit,
                       fit_bivariate, fit_hk, fit_independent_pairs, scan)
from .likelihood import (ModelParams, ModelSpec, QuadratureRule, StudyRecord,
                         gauss_legendre, hk_loglik, loglik, study_pmf)
from .margins import (BetaBinomialParams, LinkFunction, MarginFamily,
                      MarginParams, MarginSpec, betabinomial_cdf,
                      betabinomial_pmf, binomial_pmf, link_apply, link_invert,
                      margin_cdf, margin_pdf, margin_quantile)
from .simstudy import SimConfig, SimReport, generate_dataset, mimic_presets, run_study
from .sroc import (ContourGrid, SrocCurve, median_srocs, quantile_curve,
                   re_density_contour, summary_point)

__version__ = "0.1.0"
