"""Subgroup and overall treatment effects from right-censored survival
data when the subgroup-defining biomarker is observed through a
diagnostic test with known, imperfect sensitivity and specificity.

The observed test groups follow mixtures of proportional-hazards models
with mixing weights given by the test's predictive values.  The package
estimates the subgroup log hazard ratios, the biomarker prevalence and
the baseline hazard by EM, builds profile-likelihood and simultaneous
confidence intervals, summarizes overall efficacy as concordance odds,
and regenerates the accompanying simulation study at desk scale.
"""

from .cox import (
    CoxFit,
    ExpandedRow,
    RowData,
    breslow_baseline,
    cumulative_hazard,
    fit_weighted_cox,
    weighted_partial_loglik,
)
from .em import (
    EmConfig,
    FitResult,
    PosteriorWeights,
    e_step,
    fit,
    m_step,
    observed_log_likelihood,
    update_prevalence,
)
from .errors import (
    ConditioningError,
    DatasetError,
    DegenerateDataError,
    MixcoxError,
    SeparationError,
)
from .inference import (
    InferenceConfig,
    Interval,
    SimultaneousReport,
    bvn_rect_prob,
    concordance_prob,
    fd_profile_information,
    lr_test,
    overall_concordance_report,
    profile_ci,
    profile_loglik,
    simultaneous_cis,
    simultaneous_scale,
    subgroup_cov,
)
from .model import (
    BaselineHazard,
    Dataset,
    DiagnosticModel,
    EffectParams,
    Subject,
    linear_predictor,
    log_component_likelihood,
    mixture_survival,
    npv,
    ppv,
)
from .simulate import (
    RenderedTable,
    RngStream,
    ScenarioConfig,
    ScenarioSummary,
    draw_survival_time,
    emit_table,
    generate_trial,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineHazard", "ConditioningError", "CoxFit", "Dataset",
    "DatasetError", "DegenerateDataError", "DiagnosticModel", "EffectParams",
    "EmConfig", "ExpandedRow", "FitResult", "InferenceConfig", "Interval",
    "MixcoxError", "PosteriorWeights", "RenderedTable", "RngStream",
    "RowData", "ScenarioConfig", "ScenarioSummary", "SeparationError",
    "SimultaneousReport", "Subject", "breslow_baseline", "bvn_rect_prob",
    "concordance_prob", "cumulative_hazard", "draw_survival_time", "e_step",
    "emit_table", "fd_profile_information", "fit", "fit_weighted_cox",
    "generate_trial", "linear_predictor", "log_component_likelihood",
    "lr_test", "m_step", "mixture_survival", "npv", "observed_log_likelihood",
    "overall_concordance_report", "ppv", "profile_ci", "profile_loglik",
    "run_scenario", "simultaneous_cis", "simultaneous_scale", "subgroup_cov",
    "update_prevalence", "weighted_partial_loglik",
]
