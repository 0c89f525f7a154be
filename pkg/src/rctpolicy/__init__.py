"""Causal treatment-assignment toolkit for two-arm randomized trials."""

__version__ = "0.1.0"

from .cohort import (
    Cohort,
    CohortFormat,
    FeatureSchema,
    PatientRecord,
    load_cohort,
    outcome_deltas,
    remission_label,
    save_cohort,
    standardize,
)
from .errors import (
    ComputationError,
    EstimationError,
    FitError,
    FoldError,
    ParseError,
    RctPolicyError,
    UnsupportedOperation,
    ValidationError,
)
from .evaluation import (
    TrialData,
    ate,
    constant_policy,
    cross_validated_policy,
    cross_validated_threshold_policy,
    make_fold_plan,
    policy_value,
    random_policy,
    random_policy_distribution,
    threshold_policy,
    threshold_policy_sweep,
)
from .learners import LearnerSpec, fit, importance, predict
from .meta import MetaSpec, Policy, assign, export_policy, fit_meta
from .synthetic import ScenarioSpec, generate, true_effectiveness, true_policy_value

__all__ = [
    "Cohort", "CohortFormat", "FeatureSchema", "PatientRecord", "load_cohort", "outcome_deltas",
    "remission_label", "save_cohort", "standardize",
    "ComputationError", "EstimationError", "FitError", "FoldError", "ParseError", "RctPolicyError",
    "UnsupportedOperation", "ValidationError",
    "TrialData", "ate", "constant_policy", "cross_validated_policy",
    "cross_validated_threshold_policy", "make_fold_plan", "policy_value", "random_policy",
    "random_policy_distribution", "threshold_policy", "threshold_policy_sweep",
    "LearnerSpec", "fit", "importance", "predict",
    "MetaSpec", "Policy", "assign", "export_policy", "fit_meta",
    "ScenarioSpec", "generate", "true_effectiveness", "true_policy_value",
]
