"""Planning and analysis of step-stress accelerated degradation tests with
gamma-process degradation and threshold-triggered stress elevation."""

from .design import (DesignReport, SensitivityRow, StabilityRow, feasible_grid, optimize_design, optimize_designs,
                     phi_of_omega1, sensitivity_study, stability_study)
from .errors import (ConditioningError, ConfigError, DomainError, InfeasibleBudgetError, NumericalError,
                     OptimizationFailure, SsadtError, UnsupportedConfigurationError)
from .firstpassage import (BsParams, KappaPmf, bs_cdf, bs_pdf, kappa1_pmf, kappa_joint_pmf_m3, min_crossing_cdf,
                           unit_joint_survival_m3)
from .fisher import AvarResult, FisherMatrix, avar_quantile, fisher_info, helper_terms, verify_fisher
from .inference import FitResult, fit_mle, log_likelihood, observed_information
from .lifetime import LifetimeBs, h_vector, lifetime_cdf, lifetime_pdf, lifetime_quantile
from .model import (Config, CostModel, ModelParams, StressSpec, TestPlan, arrhenius_rate, case_study_config,
                    load_config, total_cost)
from .simulate import ObservationSet, simulate_batch, simulate_test

__version__ = "0.1.0"
