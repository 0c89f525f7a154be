from .ate import AteResult, ate, bootstrap_ate, difference_in_means, permutation_ate
from .crossval import (
    STANDARDIZE_MODES,
    FoldPlan,
    cross_validated_policy,
    cross_validated_scores,
    cross_validated_threshold_policy,
    make_fold_plan,
)
from .policy import (
    PolicyValueResult,
    RandomPolicyDistribution,
    ThresholdSweep,
    TrialData,
    constant_policy,
    policy_value,
    random_policy,
    random_policy_distribution,
    threshold_candidates,
    threshold_policy,
    threshold_policy_sweep,
)

__all__ = [
    "AteResult", "ate", "bootstrap_ate", "difference_in_means", "permutation_ate",
    "STANDARDIZE_MODES", "FoldPlan", "cross_validated_policy", "cross_validated_scores",
    "cross_validated_threshold_policy", "make_fold_plan", "PolicyValueResult",
    "RandomPolicyDistribution", "ThresholdSweep", "TrialData", "constant_policy",
    "policy_value", "random_policy", "random_policy_distribution", "threshold_candidates",
    "threshold_policy", "threshold_policy_sweep",
]
